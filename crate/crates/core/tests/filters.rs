mod common;

use common::oracle;
use common::{gauss, invariant, random_step, records, rel_diff, rel_diff_v, rng};
use rand::Rng;
use sise_core::benchmarks::{fault_model, fault_scenario};
use sise_core::filter::{kalman_init, kalman_step, AnyFilter, StepOutput};
use sise_core::sim::{run_filter_with, simulate_truth};
use sise_core::{Error, FilterKind, GammaPolicy, Mat, SystemModel, Tolerance, Vector};

fn tol() -> Tolerance {
    Tolerance::default()
}

fn run(
    kind: FilterKind,
    model: &SystemModel,
    x0: &Vector,
    p0: &Mat,
    y: &[Vector],
    u: &[Vector],
    gamma: GammaPolicy,
) -> Vec<StepOutput> {
    let mut f = AnyFilter::init(kind, model, x0, p0, &y[0], &u[0], &tol()).unwrap();
    (1..y.len()).map(|k| f.step(&y[k], &u[k], &u[k - 1], model, gamma, &tol()).unwrap()).collect()
}

const STEPS: usize = 30;

/// Random systems on which the reference recursion stays bounded. Some draws make the
/// input-decoupled dynamics unstable, and then every comparison only measures conditioning.
/// Draws with a badly conditioned input path are skipped for the same reason.
fn bounded(want: &[oracle::OracleStep]) -> bool {
    want.len() == STEPS && want.iter().all(|o| o.px.amax() < 1e3)
}

#[test]
fn no_unknown_input_collapses_to_kalman() {
    let mut r = rng(11);
    for trial in 0..100 {
        let n = r.random_range(1..=5);
        let l = r.random_range(1..=4);
        let s = random_step(&mut r, n, l, Mat::zeros(n, 0), Mat::zeros(l, 0));
        let model = invariant(s.clone());
        let (y, u) = records(&mut r, l, 1, STEPS);
        let x0 = common::gauss_vec(&mut r, n);
        let p0 = common::spd(&mut r, n, 0.5);

        let mut kf = kalman_init(&model, &x0, &p0, &u[0], &tol()).unwrap();
        let mut reference = Vec::new();
        for k in 1..=STEPS {
            let (next, out) = kalman_step(&kf, &y[k], &u[k], &model, &tol()).unwrap();
            kf = next;
            reference.push(out);
        }
        let textbook = oracle::kalman(&s, &x0, &p0, &y, &u);
        for (a, b) in reference.iter().zip(&textbook) {
            assert!(rel_diff_v(&a.xhat_filt, &b.x) < 1e-9, "trial {trial}");
            assert!(rel_diff(&a.px, &b.px) < 1e-9, "trial {trial}");
        }
        for kind in [FilterKind::Ulise, FilterKind::Plise] {
            let outs = run(kind, &model, &x0, &p0, &y, &u, GammaPolicy::default());
            for (a, b) in outs.iter().zip(&reference) {
                assert!(rel_diff_v(&a.xhat_filt, &b.xhat_filt) < 1e-10, "trial {trial} {kind} k={}", a.k);
                assert!(rel_diff(&a.px, &b.px) < 1e-10, "trial {trial} {kind} k={}", a.k);
            }
        }
    }
}

#[test]
fn kalman_rejects_unknown_inputs() {
    let model = fault_model(1);
    let err = kalman_init(&model, &Vector::zeros(5), &Mat::identity(5, 5), &Vector::zeros(1), &tol());
    assert!(matches!(err, Err(Error::InvalidUsage(_))));
}

#[test]
fn no_feedthrough_matches_direct_recursion() {
    let mut r = rng(12);
    let mut used = 0;
    for trial in 0..200 {
        let n = r.random_range(2..=5);
        let p = r.random_range(1..=2);
        let l = r.random_range(p..=4);
        let g = gauss(&mut r, n, p);
        let s = random_step(&mut r, n, l, g, Mat::zeros(l, p));
        let model = invariant(s.clone());
        let x0 = common::gauss_vec(&mut r, n);
        let p0 = common::spd(&mut r, n, 0.5);
        let (y, u) = common::simulated(&mut r, &s, &x0, STEPS);
        let want = oracle::no_feedthrough(&s, &x0, &p0, &y, &u);
        if !bounded(&want) || common::cond(&(&s.c * &s.g)) > 1e2 {
            continue;
        }
        used += 1;
        for kind in [FilterKind::Ulise, FilterKind::Plise] {
            let got = run(kind, &model, &x0, &p0, &y, &u, GammaPolicy::default());
            for (a, b) in got.iter().zip(&want) {
                let k = a.k;
                assert!(rel_diff_v(&a.xhat_filt, &b.x) < 1e-9, "trial {trial} {kind} k={k} x");
                assert!(rel_diff(&a.px, &b.px) < 1e-9, "trial {trial} {kind} k={k} Px");
                assert!(rel_diff(&a.gain_l, &b.gain) < 1e-9, "trial {trial} {kind} k={k} L");
                assert!(rel_diff_v(&a.dhat_prev, b.d_prev.as_ref().unwrap()) < 1e-9, "trial {trial} {kind} k={k} d");
            }
        }
    }
    assert!(used >= 100, "only {used} bounded systems");
}

#[test]
fn full_column_rank_feedthrough_matches_closed_form() {
    let mut r = rng(13);
    let mut used = 0;
    for trial in 0..200 {
        let n = r.random_range(2..=5);
        let p = r.random_range(1..=2);
        let l = r.random_range(p + 1..=4);
        let g = gauss(&mut r, n, p);
        let h = gauss(&mut r, l, p);
        let s = random_step(&mut r, n, l, g, h);
        let model = invariant(s.clone());
        let x0 = common::gauss_vec(&mut r, n);
        let p0 = common::spd(&mut r, n, 0.5);
        let (y, u) = common::simulated(&mut r, &s, &x0, STEPS);

        let want = oracle::full_rank_feedthrough(&s, &x0, &p0, &y, &u);
        if !bounded(&want) || common::cond(&s.h) > 1e2 {
            continue;
        }
        used += 1;
        let got = run(FilterKind::Ulise, &model, &x0, &p0, &y, &u, GammaPolicy::default());
        // Gains to 1e-9; the estimates pick up the conditioning of the innovation covariance.
        for (a, b) in got.iter().zip(&want) {
            let k = a.k;
            assert!(rel_diff(&a.gain_l, &b.gain) < 1e-9, "trial {trial} k={k} L");
            assert!(rel_diff_v(&a.xhat_filt, &b.x) < 1e-8, "trial {trial} k={k} x");
            assert!(rel_diff(&a.px, &b.px) < 1e-9, "trial {trial} k={k} Px");
            assert!(rel_diff_v(&a.dhat_prev, b.d_prev.as_ref().unwrap()) < 1e-8, "trial {trial} k={k} d");
        }

        // The propagated-estimate variant uses its own P*, so compare the gain step by step.
        let mut f = AnyFilter::init(FilterKind::Plise, &model, &x0, &p0, &y[0], &u[0], &tol()).unwrap();
        for k in 1..=STEPS {
            let out = f.step(&y[k], &u[k], &u[k - 1], &model, GammaPolicy::default(), &tol()).unwrap();
            let AnyFilter::Plise(st) = &f else { unreachable!() };
            // This variant diverges on some draws that the other one tracks.
            if st.pstar.amax() > 1e2 {
                break;
            }
            let closed = oracle::full_rank_gain(&s, &st.pstar);
            assert!(rel_diff(&out.gain_l, &closed) < 1e-9, "trial {trial} PLISE k={k}");
        }
    }
    assert!(used >= 100, "only {used} bounded systems");
}

#[test]
fn invertible_feedthrough_needs_no_measurement_update() {
    let mut r = rng(14);
    for trial in 0..100 {
        let n = r.random_range(2..=5);
        let p = r.random_range(1..=3);
        let g = gauss(&mut r, n, p);
        let h = gauss(&mut r, p, p) + Mat::identity(p, p);
        let s = random_step(&mut r, n, p, g, h);
        let model = invariant(s);
        let (y, u) = records(&mut r, p, 1, STEPS);
        let x0 = common::gauss_vec(&mut r, n);
        let p0 = common::spd(&mut r, n, 0.5);
        for kind in [FilterKind::Ulise, FilterKind::Plise] {
            for out in run(kind, &model, &x0, &p0, &y, &u, GammaPolicy::default()) {
                assert_eq!(out.gain_l, Mat::zeros(n, p), "trial {trial} {kind}");
                assert!(rel_diff_v(&out.xhat_filt, &out.xhat_star) < 1e-9);
            }
        }
    }
}

// Only the unbiased-filtered variant: the propagated variant's innovation covariance
// is not of the form N R_hat N^T, so its two policies legitimately differ.
#[test]
fn gamma_policies_give_the_same_estimates() {
    for sys in 1..=6 {
        let sc = fault_scenario(sys, &[], 5);
        let t = simulate_truth(&sc).unwrap();
        let a = run(FilterKind::Ulise, &sc.model, &sc.x0_mean, &sc.p0, &t.y, &t.u, GammaPolicy::DarouachReduction);
        let b = run(FilterKind::Ulise, &sc.model, &sc.x0_mean, &sc.p0, &t.y, &t.u, GammaPolicy::PseudoInverse);
        for (x, y) in a.iter().zip(&b) {
            assert!(rel_diff_v(&x.xhat_filt, &y.xhat_filt) < 1e-8, "system {sys} k={}", x.k);
            assert!(rel_diff(&x.px, &y.px) < 1e-8, "system {sys} k={}", x.k);
        }
    }
    let mut r = rng(15);
    for trial in 0..50 {
        let n = r.random_range(2..=5);
        let l = r.random_range(3..=5);
        let g = gauss(&mut r, n, 2);
        let h = gauss(&mut r, l, 1) * gauss(&mut r, 1, 2);
        let s = random_step(&mut r, n, l, g, h);
        let model = invariant(s);
        let (y, u) = records(&mut r, l, 1, STEPS);
        let x0 = common::gauss_vec(&mut r, n);
        let p0 = common::spd(&mut r, n, 0.5);
        let a = run(FilterKind::Ulise, &model, &x0, &p0, &y, &u, GammaPolicy::DarouachReduction);
        let b = run(FilterKind::Ulise, &model, &x0, &p0, &y, &u, GammaPolicy::PseudoInverse);
        for (x, y) in a.iter().zip(&b) {
            assert!(rel_diff_v(&x.xhat_filt, &y.xhat_filt) < 1e-8, "trial {trial} k={}", x.k);
            assert!(rel_diff(&x.px, &y.px) < 1e-8, "trial {trial} k={}", x.k);
        }
    }
}

#[test]
fn gains_forget_the_initial_covariance() {
    let sc = fault_scenario(1, &[], 9);
    let t = simulate_truth(&sc).unwrap();
    let big = &sc.p0 * 100.0;
    let a = run(FilterKind::Ulise, &sc.model, &sc.x0_mean, &sc.p0, &t.y, &t.u, GammaPolicy::default());
    let b = run(FilterKind::Ulise, &sc.model, &sc.x0_mean, &big, &t.y, &t.u, GammaPolicy::default());
    let early = (&a[0].gain_l - &b[0].gain_l).norm();
    assert!(early > 1e-6);
    for (x, y) in a.iter().zip(&b).filter(|(x, _)| x.k >= 200) {
        assert!((&x.gain_l - &y.gain_l).norm() < 1e-8, "k={}", x.k);
    }
}

#[test]
fn unbiasedness_constraints_hold_every_step() {
    for sys in 1..=6 {
        let sc = fault_scenario(sys, &[], 2);
        let t = simulate_truth(&sc).unwrap();
        for kind in [FilterKind::Ulise, FilterKind::Plise, FilterKind::Cywz] {
            let mut worst = 0.0f64;
            let s = run_filter_with(kind, &sc, &t, |o| worst = worst.max(o.residuals.max()));
            assert!(s.failure.is_none());
            assert!(worst < 1e-10, "system {sys} {kind}: {worst}");
        }
    }
}

#[test]
fn rank_deficient_input_path_is_reported() {
    // d enters a state no output sees: C2 G2 = 0.
    let s = sise_core::SystemStep {
        a: Mat::identity(2, 2) * 0.5,
        b: Mat::zeros(2, 0),
        c: Mat::from_row_slice(1, 2, &[1.0, 0.0]),
        d: Mat::zeros(1, 0),
        g: Mat::from_row_slice(2, 1, &[0.0, 1.0]),
        h: Mat::zeros(1, 1),
        q: Mat::identity(2, 2),
        r: Mat::identity(1, 1),
    };
    let model = invariant(s);
    let y = Vector::zeros(1);
    let u = Vector::zeros(0);
    for kind in [FilterKind::Ulise, FilterKind::Plise, FilterKind::Cywz] {
        let mut f = AnyFilter::init(kind, &model, &Vector::zeros(2), &Mat::identity(2, 2), &y, &u, &tol()).unwrap();
        let err = f.step(&y, &u, &u, &model, GammaPolicy::default(), &tol()).unwrap_err();
        assert!(matches!(err, Error::Estimability { k: 1, rank: 0, required: 1 }), "{err:?}");
    }
}

#[test]
fn time_varying_feed_of_invariant_model_is_identical() {
    let sc = fault_scenario(4, &[], 8);
    let t = simulate_truth(&sc).unwrap();
    let tv = sc.model.as_time_varying();
    for kind in [FilterKind::Ulise, FilterKind::Plise, FilterKind::Cywz] {
        let a = run(kind, &sc.model, &sc.x0_mean, &sc.p0, &t.y[..60], &t.u[..60], GammaPolicy::default());
        let b = run(kind, &tv, &sc.x0_mean, &sc.p0, &t.y[..60], &t.u[..60], GammaPolicy::default());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.xhat_filt, y.xhat_filt);
            assert_eq!(x.px, y.px);
        }
    }
}

#[test]
fn feedthrough_rank_may_change_over_time() {
    // H alternates between rank one and zero; both unknown inputs stay estimable
    // through the dynamics because C G has full column rank.
    let base = sise_core::benchmarks::fault_system(1);
    let mut g = Mat::zeros(5, 2);
    g[(0, 0)] = 1.0;
    g[(1, 1)] = 1.0;
    let dims = sise_core::Dims { n: 5, m: 1, p: 2, l: 5 };
    let model = SystemModel::time_varying(
        dims,
        move |k| {
            let mut s = base.clone();
            s.g = g.clone();
            s.h = Mat::zeros(5, 2);
            if k % 2 == 0 {
                s.h[(2, 1)] = 1.0;
            }
            s
        },
        None,
    );
    let mut r = rng(16);
    let (y, u) = records(&mut r, 5, 1, 40);
    for kind in [FilterKind::Ulise, FilterKind::Plise] {
        let outs = run(kind, &model, &Vector::zeros(5), &Mat::identity(5, 5), &y, &u, GammaPolicy::default());
        assert!(outs.iter().any(|o| o.rank_changed));
        for o in &outs {
            assert!(o.residuals.max() < 1e-10);
            assert_eq!(o.dhat_prev.len(), 2);
            assert!(o.px.iter().all(|v| v.is_finite()));
        }
    }
}
