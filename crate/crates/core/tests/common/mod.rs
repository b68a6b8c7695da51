#![allow(dead_code)]

pub mod oracle;

use sise_core::FilterKind;

/// Reference steady-state diagonals (Px 1..5, Pd 1..3) for the six fault systems,
/// rows in the order CYWZ, ULISE, PLISE.
pub const STEADY_TABLE: [[[f64; 8]; 3]; 6] = [
    [
        [0.1843, 0.0091, 0.0002, 0.0004, 0.0001, 0.0099, 0.0102, 0.1923],
        [0.1843, 0.0091, 0.0002, 0.0004, 0.0001, 0.0099, 0.0102, 0.1923],
        [0.1843, 0.0091, 0.0002, 0.0004, 0.0001, 0.0099, 0.0102, 0.1923],
    ],
    [
        [0.1494, 0.0052, 0.0002, 0.0004, 0.0001, 0.0097, 0.0102, 0.1574],
        [0.1494, 0.0052, 0.0002, 0.0004, 0.0001, 0.0097, 0.0102, 0.1574],
        [0.1614, 0.0053, 0.0002, 0.0004, 0.0001, 0.0102, 0.0102, 0.1889],
    ],
    [
        [0.0076, 0.0052, 0.0002, 0.0004, 0.0001, 0.0097, 0.0102, 0.3906],
        [0.0076, 0.0052, 0.0002, 0.0004, 0.0001, 0.0097, 0.0102, 0.3906],
        [0.0076, 0.0053, 0.0002, 0.0004, 0.0001, 0.0102, 0.0102, 0.3961],
    ],
    [
        [0.0076, 0.0257, 0.0002, 0.0004, 0.0001, 0.0348, 0.0102, 0.4925],
        [0.0076, 0.0257, 0.0002, 0.0004, 0.0001, 0.0348, 0.0102, 0.4925],
        [0.0076, 0.0258, 0.0002, 0.0004, 0.0001, 0.0349, 0.0102, 0.4925],
    ],
    [
        [0.0079, 0.0074, 0.0002, 0.0004, 0.0001, 0.0089, 0.0102, 0.0099],
        [0.0079, 0.0074, 0.0002, 0.0004, 0.0001, 0.0089, 0.0102, 0.0099],
        [0.0079, 0.0074, 0.0002, 0.0004, 0.0001, 0.0089, 0.0102, 0.0150],
    ],
    [
        [0.0076, 0.0218, 0.0002, 0.0004, 0.0001, 0.0309, 0.0102, 0.0097],
        [0.0076, 0.0218, 0.0002, 0.0004, 0.0001, 0.0309, 0.0102, 0.0097],
        [0.0078, 0.0257, 0.0002, 0.0004, 0.0001, 0.0368, 0.0102, 0.0165],
    ],
];

pub const TABLE_FILTERS: [FilterKind; 3] = [FilterKind::Cywz, FilterKind::Ulise, FilterKind::Plise];

/// Reference invariant-zero lists for the six fault systems.
pub const REFERENCE_ZEROS: [&[f64]; 6] = [
    &[0.3, 0.8],
    &[0.1, 0.3, 0.5, 0.7, 0.8],
    &[],
    &[0.3, -0.8],
    &[],
    &[0.1, 0.7, 0.3, -0.8, 0.35],
];

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sise_core::{Mat, SystemModel, SystemStep, Vector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

pub fn gauss_vec(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Random symmetric positive definite matrix with eigenvalues >= floor.
pub fn spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> Mat {
    let m = gauss(rng, n, n);
    &m * m.transpose() / n as f64 + Mat::identity(n, n) * floor
}

/// Random A with spectral radius scaled to `radius`.
pub fn dynamics(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Mat {
    let a = gauss(rng, n, n);
    let rho = sise_core::numeric::eigenvalues(&a).unwrap().iter().map(|z| z.norm()).fold(0.0, f64::max);
    if rho > 0.0 {
        a * (radius / rho)
    } else {
        a
    }
}

/// Random system with the given feedthrough; B and D have one column.
pub fn random_step(rng: &mut ChaCha8Rng, n: usize, l: usize, g: Mat, h: Mat) -> SystemStep {
    SystemStep {
        a: dynamics(rng, n, 0.95),
        b: gauss(rng, n, 1),
        c: gauss(rng, l, n),
        d: gauss(rng, l, 1),
        g,
        h,
        q: spd(rng, n, 0.05),
        r: spd(rng, l, 0.1),
    }
}

pub fn invariant(step: SystemStep) -> SystemModel {
    SystemModel::time_invariant(step).unwrap()
}

/// Random measurement and input records y_0..=N, u_0..=N.
pub fn records(rng: &mut ChaCha8Rng, l: usize, m: usize, len: usize) -> (Vec<Vector>, Vec<Vector>) {
    let y = (0..=len).map(|_| gauss_vec(rng, l)).collect();
    let u = (0..=len).map(|_| gauss_vec(rng, m)).collect();
    (y, u)
}

/// Records generated by the system itself from x_0 = x0, with Gaussian unknown
/// inputs, known inputs and noise, so innovations stay at the noise scale.
pub fn simulated(rng: &mut ChaCha8Rng, s: &SystemStep, x0: &Vector, len: usize) -> (Vec<Vector>, Vec<Vector>) {
    let (n, l, p) = (s.a.nrows(), s.c.nrows(), s.g.ncols());
    let lq = s.q.clone().cholesky().unwrap().unpack();
    let lr = s.r.clone().cholesky().unwrap().unpack();
    let mut x = x0.clone();
    let (mut y, mut u) = (Vec::new(), Vec::new());
    for _ in 0..=len {
        let uk = gauss_vec(rng, s.b.ncols());
        let dk = gauss_vec(rng, p);
        y.push(&s.c * &x + &s.d * &uk + &s.h * &dk + &lr * gauss_vec(rng, l));
        x = &s.a * &x + &s.b * &uk + &s.g * &dk + &lq * gauss_vec(rng, n);
        u.push(uk);
    }
    (y, u)
}

/// Largest entrywise difference scaled by max(1, |reference|).
pub fn rel_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let scale = b.amax().max(1.0);
    (a - b).amax() / scale
}

pub fn rel_diff_v(a: &Vector, b: &Vector) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.amax().max(1.0);
    (a - b).amax() / scale
}

/// Ratio of extreme singular values; infinite for a rank-deficient matrix.
pub fn cond(m: &Mat) -> f64 {
    let s = sise_core::numeric::singular_values(m).unwrap();
    s.max() / s.min()
}
