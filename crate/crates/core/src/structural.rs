//! Rank tests for strong observability and detectability, invariant zeros of
//! the reduced system pencil, and the unit-circle conditions under which the
//! filters converge (ULISE) or stay bounded (PLISE).

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::decomposition::{decompose, OutputDecomposition};
use crate::error::{Error, Result};
use crate::model::{SystemModel, SystemStep};
use crate::numeric::{
    block, complex_singular_values, generalized_eigenvalues, inverse, pinv, rank, sym_eig, to_complex, Mat, Tolerance,
};

/// Stacked response of z2 over a window of r + 1 steps to the initial state
/// (`o2`) and to d2 at steps 0..r-1 (`i22`), after d1 is eliminated through z1.
#[derive(Debug, Clone)]
pub struct ObservabilityMatrices {
    pub r: usize,
    pub o2: Mat,
    pub i22: Mat,
    /// A_i - G1_i Sigma_i^{-1} C1_i for i = 0..=r.
    pub a_hat: Vec<Mat>,
    /// Row count of each block row (l - p_H,k).
    pub row_blocks: Vec<usize>,
    /// Column count of each block column of `i22` (p - p_H,j), j = 0..r-1.
    pub col_blocks: Vec<usize>,
    /// rk(H_k) for k = 0..=r.
    pub p_h: Vec<usize>,
}

impl ObservabilityMatrices {
    /// Block column j of `i22` (response to d2 at step j).
    pub fn column_block(&self, j: usize) -> Mat {
        let start: usize = self.col_blocks[..j].iter().sum();
        self.i22.columns(start, self.col_blocks[j]).into_owned()
    }

    pub fn joint(&self) -> Mat {
        crate::numeric::hstack(&[&self.o2, &self.i22])
    }

    /// Rank that makes x0 and d2 at 0..r-1 recoverable: n + sum_{j<r} (p - p_H,j).
    pub fn required_rank(&self) -> usize {
        self.o2.ncols() + self.i22.ncols()
    }
}

fn frames(model: &SystemModel, r: usize, tol: &Tolerance) -> Result<Vec<(SystemStep, OutputDecomposition)>> {
    (0..=r)
        .map(|k| {
            let s = (*model.step(k)).clone();
            let dec = decompose(&s, tol)?;
            Ok((s, dec))
        })
        .collect()
}

pub fn build_observability_matrices(model: &SystemModel, r: usize, tol: &Tolerance) -> Result<ObservabilityMatrices> {
    tol.validate()?;
    let n = model.dims().n;
    let fr = frames(model, r, tol)?;
    let a_hat: Vec<Mat> = fr.iter().map(|(s, d)| d.a_hat(&s.a)).collect();
    let row_blocks: Vec<usize> = fr.iter().map(|(_, d)| d.c2.nrows()).collect();
    let col_blocks: Vec<usize> = fr[..r].iter().map(|(_, d)| d.g2.ncols()).collect();
    let rows: usize = row_blocks.iter().sum();
    let cols: usize = col_blocks.iter().sum();

    let mut o2 = Mat::zeros(rows, n);
    let mut i22 = Mat::zeros(rows, cols);
    let mut row = 0;
    // phi[j] holds A_hat_{k-1} ... A_hat_{j} for the current k (identity when j = k).
    let mut phi: Vec<Mat> = Vec::with_capacity(r + 1);
    for k in 0..=r {
        if k > 0 {
            for p in phi.iter_mut() {
                *p = &a_hat[k - 1] * &*p;
            }
        }
        phi.push(Mat::identity(n, n));
        let c2 = &fr[k].1.c2;
        let h = row_blocks[k];
        o2.rows_mut(row, h).copy_from(&(c2 * &phi[0]));
        let mut col = 0;
        for j in 0..k {
            let w = col_blocks[j];
            let blk = c2 * &phi[j + 1] * &fr[j].1.g2;
            i22.view_mut((row, col), (h, w)).copy_from(&blk);
            col += w;
        }
        row += h;
    }
    Ok(ObservabilityMatrices {
        r,
        o2,
        i22,
        a_hat,
        row_blocks,
        col_blocks,
        p_h: fr.iter().map(|(_, d)| d.p_h).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockRank {
    pub index: usize,
    pub rank: usize,
    pub required: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowObservability {
    pub observable: bool,
    pub r: usize,
    pub rank: usize,
    pub required: usize,
    /// Smallest window satisfying the row-count bound, when l > p.
    pub r0: Option<i64>,
    /// Enough independent rows: r >= r0 with l >= p + 1, or l = p = n with p_H,r = 0.
    pub window_ok: bool,
    pub o2_rank: usize,
    pub o2_full: bool,
    /// Ranks of block columns 1..=r of the invertibility matrix.
    pub column_blocks: Vec<BlockRank>,
    pub column_blocks_full: bool,
}

/// ceil((n - l + p_H) / (l - p)); None when l <= p.
fn window_lower_bound(n: usize, l: usize, p: usize, p_h: usize) -> Option<i64> {
    if l <= p {
        return None;
    }
    let num = n as i64 - l as i64 + p_h as i64;
    let den = (l - p) as i64;
    Some(num.div_euclid(den) + i64::from(num.rem_euclid(den) != 0))
}

fn window_ok(n: usize, l: usize, p: usize, p_h_last: usize, r: usize) -> (Option<i64>, bool) {
    let r0 = window_lower_bound(n, l, p, p_h_last);
    let ok = match r0 {
        Some(r0) => r as i64 >= r0,
        None => l == p && p == n && p_h_last == 0,
    };
    (r0, ok)
}

/// Input and state observability over the window 0..=r of a possibly time-varying model.
pub fn strong_observability_tv(model: &SystemModel, r: usize, tol: &Tolerance) -> Result<WindowObservability> {
    let dims = model.dims();
    let om = build_observability_matrices(model, r, tol)?;
    let rank_joint = rank(&om.joint(), tol)?;
    let required = om.required_rank();
    let o2_rank = rank(&om.o2, tol)?;
    let mut column_blocks = Vec::with_capacity(r);
    for j in 0..r {
        column_blocks.push(BlockRank { index: j + 1, rank: rank(&om.column_block(j), tol)?, required: om.col_blocks[j] });
    }
    let (r0, window_ok) = window_ok(dims.n, dims.l, dims.p, om.p_h[r], r);
    Ok(WindowObservability {
        observable: rank_joint == required,
        r,
        rank: rank_joint,
        required,
        r0,
        window_ok,
        o2_rank,
        o2_full: o2_rank == dims.n,
        column_blocks_full: column_blocks.iter().all(|b| b.rank == b.required),
        column_blocks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRank {
    pub n_tilde: usize,
    pub rank: usize,
    pub required: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantObservability {
    pub observable: bool,
    /// Smallest window length at which the rank test passes.
    pub witness: Option<usize>,
    pub windows: Vec<WindowRank>,
    pub r0: Option<i64>,
    /// rk(O2 over n steps) = n, i.e. (A_hat, C) observable.
    pub a_hat_c_observable: bool,
    pub c2g2_rank: usize,
    pub c2g2_required: usize,
}

/// Input and state observability of a time-invariant model: the windowed rank
/// test over n_tilde = 0..=n.
pub fn strong_observability_ti(model: &SystemModel, tol: &Tolerance) -> Result<InvariantObservability> {
    let step = model
        .invariant_step()
        .ok_or_else(|| Error::InvalidInput("time-invariant test called on a time-varying model".into()))?;
    let dims = model.dims();
    let n = dims.n;
    let om = build_observability_matrices(model, n, tol)?;
    let dec = decompose(step, tol)?;
    let q = dims.p - dec.p_h;
    let h2 = dims.l - dec.p_h;
    let mut windows = Vec::with_capacity(n + 1);
    let mut witness = None;
    for nt in 0..=n {
        let rows = (nt + 1) * h2;
        let sub = crate::numeric::hstack(&[
            &om.o2.rows(0, rows).into_owned(),
            &om.i22.view((0, 0), (rows, nt * q)).into_owned(),
        ]);
        let rk = rank(&sub, tol)?;
        let required = n + nt * q;
        if witness.is_none() && rk == required {
            witness = Some(nt);
        }
        windows.push(WindowRank { n_tilde: nt, rank: rk, required });
    }
    let o_rows = n * h2;
    let a_hat_c_observable = n == 0 || rank(&om.o2.rows(0, o_rows).into_owned(), tol)? == n;
    let c2g2_rank = rank(&(&dec.c2 * &dec.g2), tol)?;
    Ok(InvariantObservability {
        observable: witness.is_some(),
        witness,
        windows,
        r0: window_lower_bound(n, dims.l, dims.p, dec.p_h),
        a_hat_c_observable,
        c2g2_rank,
        c2g2_required: q,
    })
}

const ZERO_MATCH: f64 = 1e-6;
const ZERO_CONFIRM: f64 = 1e-7;
const PROJECTION_SEED: u64 = 0x5EED_2E40;

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// z E - F evaluated at a complex point.
fn pencil_at(e: &Mat, f: &Mat, z: Complex64) -> crate::numeric::CMat {
    to_complex(e) * z - to_complex(f)
}

fn normal_rank(e: &Mat, f: &Mat, tol: &Tolerance) -> usize {
    [Complex64::new(0.5377, 0.8622), Complex64::new(-1.3077, 0.3426)]
        .iter()
        .map(|&z| {
            let m = pencil_at(e, f, z);
            let s = complex_singular_values(&m);
            if s.is_empty() || s[0] == 0.0 {
                return 0;
            }
            let cut = tol.sv_cutoff(m.nrows(), m.ncols(), s[0]);
            s.iter().filter(|&&x| x > cut).count()
        })
        .max()
        .unwrap_or(0)
}

/// Finite spectrum of the pencil squared down to nr x nr by random projections.
fn squared_down(e: &Mat, f: &Mat, nr: usize, rng: &mut ChaCha8Rng, tol: &Tolerance) -> Result<Option<Vec<Complex64>>> {
    let kl = if e.nrows() == nr { Mat::identity(nr, nr) } else { gaussian(rng, nr, e.nrows()) };
    let kr = if e.ncols() == nr { Mat::identity(nr, nr) } else { gaussian(rng, e.ncols(), nr) };
    let g = generalized_eigenvalues(&(&kl * e * &kr), &(&kl * f * &kr), tol)?;
    Ok(if g.singular { None } else { Some(g.finite) })
}

/// Pairs each candidate in `a` with an unused candidate of `b` within the match radius.
fn intersect(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut used = vec![false; b.len()];
    let mut out = Vec::new();
    for &z in a {
        let best = b
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, w)| (i, (w - z).norm()))
            .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap());
        if let Some((i, d)) = best {
            if d <= ZERO_MATCH * z.norm().max(1.0) {
                used[i] = true;
                out.push(z);
            }
        }
    }
    out
}

/// Finite points where the pencil zE - F drops below its normal rank.
/// Returns (zeros, normal rank). A pencil whose normal rank is below its
/// column count has every z as a zero; that case is left to the caller.
pub fn pencil_zeros(e: &Mat, f: &Mat, tol: &Tolerance) -> Result<(Vec<Complex64>, usize)> {
    let nr = normal_rank(e, f, tol);
    if nr == 0 {
        return Ok((vec![], 0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED);
    let square = e.nrows() == nr && e.ncols() == nr;
    let mut sets = Vec::new();
    for _ in 0..8 {
        if let Some(s) = squared_down(e, f, nr, &mut rng, tol)? {
            sets.push(s);
        }
        if sets.len() == 2 || (square && sets.len() == 1) {
            break;
        }
    }
    let candidates = match sets.len() {
        0 => return Err(Error::Numerical { k: 0, what: "no regular squared-down pencil found".into() }),
        1 => sets.pop().unwrap(),
        _ => intersect(&sets[0], &sets[1]),
    };
    let mut zeros: Vec<Complex64> = candidates
        .into_iter()
        .filter(|&z| {
            let s = complex_singular_values(&pencil_at(e, f, z));
            s.len() < nr || s[nr - 1] <= ZERO_CONFIRM * s[0].max(f64::MIN_POSITIVE)
        })
        .collect();
    zeros.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
    Ok((zeros, nr))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantZeros {
    pub zeros: Vec<Complex64>,
    pub normal_rank: usize,
    /// n + p - p_H; a normal rank below this means the pencil is degenerate.
    pub columns: usize,
}

impl InvariantZeros {
    pub fn degenerate(&self) -> bool {
        self.normal_rank < self.columns
    }
}

/// Zeros of [zI - A_hat, -G2; C2, 0].
pub fn invariant_zeros_of(a_hat: &Mat, g2: &Mat, c2: &Mat, tol: &Tolerance) -> Result<InvariantZeros> {
    let n = a_hat.nrows();
    let q = g2.ncols();
    let h2 = c2.nrows();
    let e = block(&[&[&Mat::identity(n, n), &Mat::zeros(n, q)], &[&Mat::zeros(h2, n), &Mat::zeros(h2, q)]]);
    let f = block(&[&[a_hat, g2], &[&(-c2), &Mat::zeros(h2, q)]]);
    let (zeros, normal_rank) = pencil_zeros(&e, &f, tol)?;
    Ok(InvariantZeros { zeros, normal_rank, columns: n + q })
}

pub fn invariant_zeros(step: &SystemStep, tol: &Tolerance) -> Result<InvariantZeros> {
    let dec = decompose(step, tol)?;
    invariant_zeros_of(&dec.a_hat(&step.a), &dec.g2, &dec.c2, tol)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detectability {
    pub detectable: bool,
    pub zeros: InvariantZeros,
    /// Zeros on or outside the unit circle.
    pub unstable: Vec<Complex64>,
}

fn detectability_of(zeros: InvariantZeros, tol: &Tolerance) -> Detectability {
    let unstable: Vec<Complex64> =
        zeros.zeros.iter().copied().filter(|z| z.norm() >= 1.0 - tol.unit_circle_eps).collect();
    Detectability { detectable: !zeros.degenerate() && unstable.is_empty(), zeros, unstable }
}

/// Every invariant zero strictly inside the unit circle.
pub fn strong_detectability(step: &SystemStep, tol: &Tolerance) -> Result<Detectability> {
    Ok(detectability_of(invariant_zeros(step, tol)?, tol))
}

pub const UNIT_CIRCLE_GRID: usize = 720;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitCircleRank {
    pub full_rank: bool,
    /// Smallest ratio sigma_rows / sigma_max over all points tested.
    pub min_ratio: f64,
    /// Angle at which `min_ratio` occurred.
    pub worst_omega: f64,
    pub points_tested: usize,
}

/// Tests that F + zE keeps full row rank at every z = e^{jw}: a 720-point grid
/// plus unit-modulus roots of the pencil squared down from the right.
pub fn row_rank_on_unit_circle(f: &Mat, e: &Mat, tol: &Tolerance) -> Result<UnitCircleRank> {
    let rows = f.nrows();
    if rows == 0 {
        return Ok(UnitCircleRank { full_rank: true, min_ratio: 1.0, worst_omega: 0.0, points_tested: 0 });
    }
    let mut omegas: Vec<f64> =
        (0..UNIT_CIRCLE_GRID).map(|i| 2.0 * std::f64::consts::PI * i as f64 / UNIT_CIRCLE_GRID as f64).collect();
    if f.ncols() >= rows {
        let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED ^ 0xC1C1);
        for _ in 0..2 {
            let k = gaussian(&mut rng, f.ncols(), rows);
            // (F + zE) K v = 0  <=>  z (E K) v = (-F K) v
            let g = generalized_eigenvalues(&(e * &k), &(-(f * &k)), tol)?;
            for z in g.finite {
                if (z.norm() - 1.0).abs() <= 1e-3 {
                    omegas.push(z.arg().rem_euclid(2.0 * std::f64::consts::PI));
                }
            }
        }
    }
    let fc = to_complex(f);
    let ec = to_complex(e);
    let mut min_ratio = f64::INFINITY;
    let mut worst = 0.0;
    for &w in &omegas {
        let z = Complex64::from_polar(1.0, w);
        let m = &fc + &ec * z;
        let s = complex_singular_values(&m);
        let ratio = if s.len() < rows || s[0] == 0.0 { 0.0 } else { s[rows - 1] / s[0] };
        if ratio < min_ratio {
            min_ratio = ratio;
            worst = w;
        }
    }
    let cut = tol.sv_cutoff(f.nrows(), f.ncols(), 1.0);
    Ok(UnitCircleRank { full_rank: min_ratio > cut, min_ratio, worst_omega: worst, points_tested: omegas.len() })
}

/// Factor with the same range as a symmetric matrix: V |Lambda|^{1/2} V^T.
fn range_factor(s: &Mat) -> Mat {
    if s.is_empty() {
        return s.clone();
    }
    let (vals, vecs) = sym_eig(&((s + s.transpose()) * 0.5)).expect("finite symmetric matrix");
    let d = vals.map(|x| x.abs().sqrt());
    &vecs * Mat::from_diagonal(&d) * vecs.transpose()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UliseConvergence {
    pub convergent: bool,
    /// rk(C2 G2) = p - p_H fails; the theorem does not apply.
    pub precondition_failed: Option<String>,
    pub detectable: bool,
    pub unit_circle: Option<UnitCircleRank>,
}

fn c2g2_precondition(dec: &OutputDecomposition, tol: &Tolerance) -> Result<Option<String>> {
    let q = dec.g2.ncols();
    let rk = rank(&(&dec.c2 * &dec.g2), tol)?;
    Ok((rk != q).then(|| format!("rk(C2 G2) = {rk}, required {q}")))
}

/// Gains of ULISE converge iff strongly detectable and
/// rk [A_hat - zI, G2, Q_hat^{1/2}, 0; z C2, 0, 0, R2^{1/2}] = n + l - p_H on |z| = 1.
pub fn ulise_convergence_check(step: &SystemStep, tol: &Tolerance) -> Result<UliseConvergence> {
    let dec = decompose(step, tol)?;
    if let Some(msg) = c2g2_precondition(&dec, tol)? {
        return Ok(UliseConvergence { convergent: false, precondition_failed: Some(msg), detectable: false, unit_circle: None });
    }
    let a_hat = dec.a_hat(&step.a);
    let det = detectability_of(invariant_zeros_of(&a_hat, &dec.g2, &dec.c2, tol)?, tol);
    let n = a_hat.nrows();
    let q = dec.g2.ncols();
    let h2 = dec.c2.nrows();
    let qh = range_factor(&dec.q_hat(&step.q));
    let r2 = range_factor(&dec.r2);
    let f = block(&[
        &[&a_hat, &dec.g2, &qh, &Mat::zeros(n, h2)],
        &[&Mat::zeros(h2, n), &Mat::zeros(h2, q), &Mat::zeros(h2, n), &r2],
    ]);
    let e = block(&[
        &[&(-Mat::identity(n, n)), &Mat::zeros(n, q + n + h2)],
        &[&dec.c2, &Mat::zeros(h2, q + n + h2)],
    ]);
    let uc = row_rank_on_unit_circle(&f, &e, tol)?;
    Ok(UliseConvergence {
        convergent: det.detectable && uc.full_rank,
        precondition_failed: None,
        detectable: det.detectable,
        unit_circle: Some(uc),
    })
}

/// Closed-loop quantities of the suboptimal PLISE that uses the ordinary
/// least-squares input gain pinv(C2 G2).
#[derive(Debug, Clone)]
pub struct PliseParts {
    pub m2_tilde: Mat,
    pub n_hat: Mat,
    pub s_hat: Mat,
    pub theta: Mat,
    pub f_s: Mat,
    pub q_s: Mat,
}

/// Builds F^s and Q^s; Err(message) when Theta is singular.
pub fn plise_parts(
    a_hat: &Mat,
    q_hat: &Mat,
    c2: &Mat,
    g2: &Mat,
    r2: &Mat,
    tol: &Tolerance,
) -> Result<std::result::Result<PliseParts, String>> {
    let n = a_hat.nrows();
    let m2 = pinv(&(c2 * g2), tol)?;
    let g2m2 = g2 * &m2;
    let n_hat = Mat::identity(n, n) - &g2m2 * c2;
    let s_hat = -(&n_hat * a_hat * &g2m2 * r2);
    let c2g2m2r2 = c2 * &g2m2 * r2;
    let theta = r2 - &c2g2m2r2 - c2g2m2r2.transpose();
    let theta_rank = rank(&theta, tol)?;
    if theta_rank < theta.nrows() {
        return Ok(Err(format!("Theta is singular (rank {theta_rank} of {})", theta.nrows())));
    }
    let theta_inv = inverse(&theta).ok_or_else(|| Error::Numerical { k: 0, what: "Theta inverse".into() })?;
    let f_s = &n_hat * a_hat - &s_hat * &theta_inv * c2;
    let mut q_s = &g2m2 * r2 * g2m2.transpose() + &n_hat * q_hat * n_hat.transpose()
        - &s_hat * &theta_inv * s_hat.transpose();
    crate::numeric::symmetrize(&mut q_s);
    Ok(Ok(PliseParts { m2_tilde: m2, n_hat, s_hat, theta, f_s, q_s }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PliseStability {
    pub bounded: bool,
    /// Theta singular or rk(C2 G2) deficient; the sufficient condition cannot be evaluated.
    pub precondition_failed: Option<String>,
    pub detectable: bool,
    pub unit_circle: Option<UnitCircleRank>,
}

/// Sufficient condition for bounded PLISE errors, from reduced-system parts.
pub fn plise_stability_from_parts(
    a_hat: &Mat,
    q_hat: &Mat,
    c2: &Mat,
    g2: &Mat,
    r2: &Mat,
    tol: &Tolerance,
) -> Result<PliseStability> {
    let q = g2.ncols();
    let rk = rank(&(c2 * g2), tol)?;
    if rk != q {
        return Ok(PliseStability {
            bounded: false,
            precondition_failed: Some(format!("rk(C2 G2) = {rk}, required {q}")),
            detectable: false,
            unit_circle: None,
        });
    }
    let det = detectability_of(invariant_zeros_of(a_hat, g2, c2, tol)?, tol);
    let parts = match plise_parts(a_hat, q_hat, c2, g2, r2, tol)? {
        Ok(p) => p,
        Err(msg) => {
            return Ok(PliseStability {
                bounded: false,
                precondition_failed: Some(msg),
                detectable: det.detectable,
                unit_circle: None,
            })
        }
    };
    let n = a_hat.nrows();
    let f = crate::numeric::hstack(&[&(-&parts.f_s), &range_factor(&parts.q_s)]);
    let e = crate::numeric::hstack(&[&Mat::identity(n, n), &Mat::zeros(n, n)]);
    let uc = row_rank_on_unit_circle(&f, &e, tol)?;
    Ok(PliseStability {
        bounded: det.detectable && uc.full_rank,
        precondition_failed: None,
        detectable: det.detectable,
        unit_circle: Some(uc),
    })
}

pub fn plise_stability_check(step: &SystemStep, tol: &Tolerance) -> Result<PliseStability> {
    let dec = decompose(step, tol)?;
    plise_stability_from_parts(&dec.a_hat(&step.a), &dec.q_hat(&step.q), &dec.c2, &dec.g2, &dec.r2, tol)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructuralReport {
    pub p_h: usize,
    pub strong_observability: InvariantObservability,
    pub strong_detectability: Detectability,
    pub ulise: UliseConvergence,
    pub plise: PliseStability,
}

impl StructuralReport {
    pub fn strongly_observable(&self) -> bool {
        self.strong_observability.observable
    }

    pub fn strongly_detectable(&self) -> bool {
        self.strong_detectability.detectable
    }

    pub fn zeros(&self) -> &[Complex64] {
        &self.strong_detectability.zeros.zeros
    }
}

pub fn analyze(step: &SystemStep, tol: &Tolerance) -> Result<StructuralReport> {
    let model = SystemModel::time_invariant(step.clone())?;
    let dec = decompose(step, tol)?;
    Ok(StructuralReport {
        p_h: dec.p_h,
        strong_observability: strong_observability_ti(&model, tol)?,
        strong_detectability: strong_detectability(step, tol)?,
        ulise: ulise_convergence_check(step, tol)?,
        plise: plise_stability_check(step, tol)?,
    })
}
