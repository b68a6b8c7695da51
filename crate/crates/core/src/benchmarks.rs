//! Reference systems: a five-state fault-identification plant with six
//! feedthrough variants, and a two-vehicle tracking model in continuous time.

use crate::filter::{FilterKind, GammaPolicy};
use crate::model::{c2d_zoh, C2dOptions, ContinuousModel, SystemModel, SystemStep};
use crate::numeric::{Mat, Tolerance, Vector};
use crate::sim::{Scenario, SignalSpec};
use crate::error::Result;

/// Nonzero (row, column) entries, all equal to one, of each feedthrough variant.
const FEEDTHROUGH: [&[(usize, usize)]; 6] = [
    &[(0, 2), (2, 1)],
    &[(0, 2), (2, 1), (4, 0)],
    &[(2, 1), (4, 0)],
    &[(1, 0), (2, 1)],
    &[(2, 1), (3, 2)],
    &[(1, 0), (2, 1), (3, 2)],
];

pub const FAULT_HORIZON: usize = 1000;

pub fn fault_feedthrough(variant: usize) -> Mat {
    assert!((1..=6).contains(&variant), "fault system variants are 1..=6");
    let mut h = Mat::zeros(5, 3);
    for &(i, j) in FEEDTHROUGH[variant - 1] {
        h[(i, j)] = 1.0;
    }
    h
}

/// Fault-identification plant with feedthrough variant 1..=6.
pub fn fault_system(variant: usize) -> SystemStep {
    #[rustfmt::skip]
    let a = Mat::from_row_slice(5, 5, &[
        0.5, 2.0, 0.0, 0.0, 0.0,
        0.0, 0.2, 1.0, 0.0, 1.0,
        0.0, 0.0, 0.3, 0.0, 1.0,
        0.0, 0.0, 0.0, 0.7, 1.0,
        0.0, 0.0, 0.0, 0.0, 0.1,
    ]);
    #[rustfmt::skip]
    let g = Mat::from_row_slice(5, 3, &[
        1.0, 0.0, -0.3,
        1.0, 0.0, 0.0,
        0.0, 0.0, 0.0,
        0.0, 0.0, 0.0,
        0.0, 0.0, 0.0,
    ]);
    #[rustfmt::skip]
    let q = Mat::from_row_slice(5, 5, &[
        1.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 0.5, 0.0, 0.0,
        0.0, 0.5, 1.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 1.0,
    ]) * 1e-4;
    #[rustfmt::skip]
    let r = Mat::from_row_slice(5, 5, &[
        1.0, 0.0, 0.0, 0.5, 0.0,
        0.0, 1.0, 0.0, 0.0, 0.3,
        0.0, 0.0, 1.0, 0.0, 0.0,
        0.5, 0.0, 0.0, 1.0, 0.0,
        0.0, 0.3, 0.0, 0.0, 1.0,
    ]) * 1e-2;
    SystemStep {
        a,
        b: Mat::zeros(5, 1),
        c: Mat::identity(5, 5),
        d: Mat::zeros(5, 1),
        g,
        h: fault_feedthrough(variant),
        q,
        r,
    }
}

pub fn fault_model(variant: usize) -> SystemModel {
    SystemModel::time_invariant(fault_system(variant)).expect("benchmark shapes are consistent")
}

/// Third fault input: +3 / -3 alternating in 50-step blocks over [500, 799].
pub fn fault_d3_samples() -> Vec<f64> {
    (0..=800)
        .map(|k| match k {
            500..=549 | 600..=649 | 700..=749 => 3.0,
            550..=599 | 650..=699 | 750..=799 => -3.0,
            _ => 0.0,
        })
        .collect()
}

pub fn fault_signals() -> Vec<SignalSpec> {
    vec![
        SignalSpec::Step { amplitude: 1.0, k_on: 500, k_off: 700 },
        SignalSpec::Ramp { slope: 1.0 / 700.0, k_on: 100, k_off: 800 },
        SignalSpec::Samples { values: fault_d3_samples() },
    ]
}

pub fn fault_scenario(variant: usize, filters: &[FilterKind], seed: u64) -> Scenario {
    Scenario {
        model: fault_model(variant),
        horizon: FAULT_HORIZON,
        d_signals: fault_signals(),
        u_signals: vec![SignalSpec::Constant { value: 0.0 }],
        x0_true: Vector::zeros(5),
        x0_mean: Vector::zeros(5),
        p0: Mat::identity(5, 5),
        noise_seed: seed,
        filters: filters.to_vec(),
        monte_carlo: 1,
        gamma: GammaPolicy::default(),
        tol: Tolerance::default(),
    }
}

/// Uncontrolled vehicle (p, pdot) and controlled vehicle (q, qdot); the velocity
/// measurement of the uncontrolled vehicle is relative and the controlled vehicle's
/// velocity sensor carries an unknown bias.
pub fn vehicle_continuous() -> ContinuousModel {
    #[rustfmt::skip]
    let a = Mat::from_row_slice(4, 4, &[
        0.0, 1.0, 0.0, 0.0,
        0.0, -0.1, 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, 0.0, -0.1,
    ]);
    #[rustfmt::skip]
    let c = Mat::from_row_slice(4, 4, &[
        1.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 0.0, -1.0,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    ]);
    let mut g = Mat::zeros(4, 2);
    g[(1, 0)] = 1.0;
    let mut h = Mat::zeros(4, 2);
    h[(3, 1)] = 1.0;
    ContinuousModel {
        a,
        b: Mat::from_row_slice(4, 1, &[0.0, 0.0, 0.0, 1.0]),
        g,
        c,
        d: Mat::zeros(4, 1),
        h,
        q: Mat::from_diagonal(&Vector::from_vec(vec![0.0, 1.6, 0.0, 0.9])) * 1e-4,
        r: Mat::from_diagonal(&Vector::from_vec(vec![1.0, 0.16, 0.9, 2.5])) * 1e-4,
        dt: 0.01,
    }
}

pub const VEHICLE_HORIZON: usize = 1000;

/// Vehicle input: accelerate, coast, brake. Bias: slow drift that later resets.
pub fn vehicle_signals() -> (Vec<SignalSpec>, Vec<SignalSpec>) {
    let d = vec![
        SignalSpec::SquareWave { amplitude: 0.5, half_period: 150, k_on: 100, k_off: 699 },
        SignalSpec::Ramp { slope: 0.001, k_on: 200, k_off: 800 },
    ];
    let u = vec![SignalSpec::Step { amplitude: 0.2, k_on: 50, k_off: 400 }];
    (d, u)
}

pub fn vehicle_scenario(filters: &[FilterKind], seed: u64) -> Result<Scenario> {
    let model = c2d_zoh(&vehicle_continuous(), C2dOptions::default())?;
    let (d, u) = vehicle_signals();
    Ok(Scenario {
        model,
        horizon: VEHICLE_HORIZON,
        d_signals: d,
        u_signals: u,
        x0_true: Vector::from_vec(vec![0.0, 1.0, -5.0, 1.0]),
        x0_mean: Vector::from_vec(vec![0.0, 1.0, -5.0, 1.0]),
        p0: Mat::identity(4, 4),
        noise_seed: seed,
        filters: filters.to_vec(),
        monte_carlo: 1,
        gamma: GammaPolicy::default(),
        tol: Tolerance::default(),
    })
}
