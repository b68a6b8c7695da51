//! Three-step recursive filters for simultaneous input and state estimation.
//!
//! Each step k consumes y_k and produces x_{k|k} together with the delayed
//! input estimate d_{k-1}. Matrices indexed k-1 come from the frame stored in
//! the state, matrices indexed k from the frame built for the current step.
//!
//! Index conventions: the time-update covariance and
//! both innovation cross terms use G_{2,k-1} throughout, the last cross term
//! of the innovation covariance carries C_k^T, and both variants use the
//! general gain L = K (I - U1 Sigma M1*)^T R_check.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::decomposition::{decompose, transform_measurement, OutputDecomposition};
use crate::error::{Error, Result};
use crate::model::{SystemModel, SystemStep};
use crate::numeric::{
    block, hstack, inverse, pinv, rank, spd_inverse, svd_full, symmetrize, Mat, Tolerance, Vector,
};

/// How the singular innovation covariance is made invertible before forming L.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaPolicy {
    /// Gamma spans the left null space of C G2.
    #[default]
    DarouachReduction,
    /// R_check = pinv(R_tilde_star).
    PseudoInverse,
}

impl FromStr for GammaPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "darouach" | "darouach_reduction" => Ok(GammaPolicy::DarouachReduction),
            "pinv" | "pseudo_inverse" | "pseudoinverse" => Ok(GammaPolicy::PseudoInverse),
            _ => Err(Error::InvalidInput(format!("unknown gamma policy '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Ulise,
    Plise,
    Cywz,
    Kalman,
}

impl FilterKind {
    pub fn name(&self) -> &'static str {
        match self {
            FilterKind::Ulise => "ULISE",
            FilterKind::Plise => "PLISE",
            FilterKind::Cywz => "CYWZ",
            FilterKind::Kalman => "KALMAN",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ulise" => Ok(FilterKind::Ulise),
            "plise" => Ok(FilterKind::Plise),
            "cywz" => Ok(FilterKind::Cywz),
            "kalman" => Ok(FilterKind::Kalman),
            _ => Err(Error::InvalidInput(format!("unknown filter '{s}'"))),
        }
    }
}

/// System matrices and their output decomposition at one time index.
#[derive(Debug, Clone)]
pub struct Frame {
    pub k: usize,
    pub step: Arc<SystemStep>,
    pub dec: Arc<OutputDecomposition>,
}

impl Frame {
    pub fn new(model: &SystemModel, k: usize, tol: &Tolerance) -> Result<Frame> {
        let step = model.step(k);
        let dec = Arc::new(decompose(&step, tol)?);
        Ok(Frame { k, step, dec })
    }

    /// Frame for k+1; time-invariant models reuse the cached decomposition.
    pub fn next(&self, model: &SystemModel, tol: &Tolerance) -> Result<Frame> {
        if model.is_time_invariant() {
            Ok(Frame { k: self.k + 1, step: self.step.clone(), dec: self.dec.clone() })
        } else {
            Frame::new(model, self.k + 1, tol)
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ConstraintResiduals {
    /// ||M1 Sigma - I||_F
    pub m1_sigma: f64,
    /// ||M2 C2 G2 - I||_F, worst over the gains used in the step.
    pub m2_c2g2: f64,
    /// ||L U1||_F
    pub l_u1: f64,
}

impl ConstraintResiduals {
    pub fn max(&self) -> f64 {
        self.m1_sigma.max(self.m2_c2g2).max(self.l_u1)
    }
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub k: usize,
    pub xhat_filt: Vector,
    pub xhat_star: Vector,
    /// V1 d1 + V2 d2 at time k-1.
    pub dhat_prev: Vector,
    pub pd_prev: Mat,
    pub px: Mat,
    pub gain_l: Mat,
    pub gain_m1: Mat,
    pub gain_m2: Mat,
    pub residuals: ConstraintResiduals,
    /// rank(H) differs between k-1 and k.
    pub rank_changed: bool,
}

#[derive(Debug, Clone)]
pub struct UliseState {
    pub xhat: Vector,
    pub px: Mat,
    pub d1hat: Vector,
    pub pd1: Mat,
    pub ahat: Mat,
    pub qhat: Mat,
    pub k: usize,
    frame: Frame,
}

impl UliseState {
    pub fn frame(&self) -> &Frame {
        &self.frame
    }
}

#[derive(Debug, Clone)]
pub struct PliseState {
    pub xhat: Vector,
    pub px: Mat,
    pub d1hat: Vector,
    pub pd1: Mat,
    pub pxd1: Mat,
    pub pstar: Mat,
    pub ahat: Mat,
    pub qhat: Mat,
    pub k: usize,
    frame: Frame,
}

impl PliseState {
    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    /// Joint covariance of (x_{k|k}, d1_k) errors.
    pub fn joint_covariance(&self) -> Mat {
        block(&[&[&self.px, &self.pxd1], &[&self.pxd1.transpose(), &self.pd1]])
    }
}

#[derive(Debug, Clone)]
pub struct KalmanState {
    pub xhat: Vector,
    pub px: Mat,
    pub k: usize,
    pub u_last: Vector,
    frame: Frame,
}

fn check_len(v: &Vector, n: usize, what: &str) -> Result<()> {
    if v.len() == n {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has length {}, expected {n}", v.len())))
    }
}

fn check_p0(p0: &Mat, n: usize, tol: &Tolerance) -> Result<()> {
    if p0.shape() != (n, n) {
        return Err(Error::InvalidInput(format!("P0 is {:?}, expected ({n}, {n})", p0.shape())));
    }
    crate::numeric::psd_sqrt(p0, tol).map(|_| ())
}

struct InitCommon {
    frame: Frame,
    d1hat: Vector,
    pd1: Mat,
    ahat: Mat,
    qhat: Mat,
}

fn init_common(
    model: &SystemModel,
    x0_mean: &Vector,
    p0: &Mat,
    y0: &Vector,
    u0: &Vector,
    tol: &Tolerance,
) -> Result<InitCommon> {
    let dims = model.dims();
    check_len(x0_mean, dims.n, "x0_mean")?;
    check_len(y0, dims.l, "y0")?;
    check_len(u0, dims.m, "u0")?;
    check_p0(p0, dims.n, tol)?;
    let frame = Frame::new(model, 0, tol)?;
    let dec = &frame.dec;
    let (z1, _) = transform_measurement(dec, y0)?;
    let d1hat = &dec.sigma_inv * (z1 - &dec.c1 * x0_mean - &dec.d1 * u0);
    let mut pd1 = &dec.sigma_inv * (&dec.c1 * p0 * dec.c1.transpose() + &dec.r1) * &dec.sigma_inv;
    symmetrize(&mut pd1);
    let ahat = dec.a_hat(&frame.step.a);
    let qhat = dec.q_hat(&frame.step.q);
    Ok(InitCommon { frame, d1hat, pd1, ahat, qhat })
}

pub fn ulise_init(
    model: &SystemModel,
    x0_mean: &Vector,
    p0: &Mat,
    y0: &Vector,
    u0: &Vector,
    tol: &Tolerance,
) -> Result<UliseState> {
    let c = init_common(model, x0_mean, p0, y0, u0, tol)?;
    Ok(UliseState {
        xhat: x0_mean.clone(),
        px: p0.clone(),
        d1hat: c.d1hat,
        pd1: c.pd1,
        ahat: c.ahat,
        qhat: c.qhat,
        k: 0,
        frame: c.frame,
    })
}

pub fn plise_init(
    model: &SystemModel,
    x0_mean: &Vector,
    p0: &Mat,
    y0: &Vector,
    u0: &Vector,
    tol: &Tolerance,
) -> Result<PliseState> {
    let c = init_common(model, x0_mean, p0, y0, u0, tol)?;
    let pxd1 = -(p0 * c.frame.dec.c1.transpose() * &c.frame.dec.sigma_inv);
    Ok(PliseState {
        xhat: x0_mean.clone(),
        px: p0.clone(),
        d1hat: c.d1hat,
        pd1: c.pd1,
        pxd1,
        pstar: p0.clone(),
        ahat: c.ahat,
        qhat: c.qhat,
        k: 0,
        frame: c.frame,
    })
}

pub fn kalman_init(
    model: &SystemModel,
    x0_mean: &Vector,
    p0: &Mat,
    u0: &Vector,
    tol: &Tolerance,
) -> Result<KalmanState> {
    let dims = model.dims();
    check_len(x0_mean, dims.n, "x0_mean")?;
    check_len(u0, dims.m, "u0")?;
    check_p0(p0, dims.n, tol)?;
    let frame = Frame::new(model, 0, tol)?;
    check_no_unknown_input(&frame.step, tol)?;
    Ok(KalmanState { xhat: x0_mean.clone(), px: p0.clone(), k: 0, u_last: u0.clone(), frame })
}

fn check_no_unknown_input(step: &SystemStep, tol: &Tolerance) -> Result<()> {
    let p = step.g.ncols();
    if p == 0 || (step.g.amax() <= tol.zero_abs && step.h.amax() <= tol.zero_abs) {
        Ok(())
    } else {
        Err(Error::InvalidUsage(format!("Kalman filter needs p = 0 or G = H = 0, got p = {p}")))
    }
}

/// Estimation of d2_{k-1}: the shared first stage of every variant.
struct InputStage {
    p_tilde: Mat,
    m2: Mat,
    pd2: Mat,
    x_pred: Vector,
    d2hat: Vector,
    z1: Vector,
    z2: Vector,
    c2g2: Mat,
}

#[allow(clippy::too_many_arguments)]
fn input_stage(
    prev: &Frame,
    cur: &Frame,
    xhat: &Vector,
    d1hat: &Vector,
    px: &Mat,
    ahat: &Mat,
    qhat: &Mat,
    y: &Vector,
    u: &Vector,
    u_prev: &Vector,
    tol: &Tolerance,
) -> Result<InputStage> {
    let k = cur.k;
    let (pd, cd) = (&prev.dec, &cur.dec);
    let g2 = &pd.g2;
    let c2g2 = &cd.c2 * g2;
    let required = g2.ncols();
    let rk = rank(&c2g2, tol)?;
    if rk != required {
        return Err(Error::Estimability { k, rank: rk, required });
    }
    let mut p_tilde = ahat * px * ahat.transpose() + qhat;
    symmetrize(&mut p_tilde);
    let r2t = &cd.c2 * &p_tilde * cd.c2.transpose() + &cd.r2;
    // Only invertibility is needed: PLISE's recursion can pass through an
    // indefinite transient from a poor P0, which Cholesky would reject.
    let r2t_inv = inverse(&r2t).ok_or_else(|| Error::Numerical { k, what: "R2_tilde".into() })?;
    let mut info = c2g2.transpose() * &r2t_inv * &c2g2;
    symmetrize(&mut info);
    let pd2 = inverse(&info).ok_or_else(|| Error::Numerical { k, what: "G2^T C2^T R2_tilde^-1 C2 G2".into() })?;
    let m2 = &pd2 * c2g2.transpose() * &r2t_inv;
    let s = &prev.step;
    let x_pred = &s.a * xhat + &s.b * u_prev + &pd.g1 * d1hat;
    let (z1, z2) = transform_measurement(cd, y)?;
    let d2hat = &m2 * (&z2 - &cd.c2 * &x_pred - &cd.d2 * u);
    Ok(InputStage { p_tilde, m2, pd2, x_pred, d2hat, z1, z2, c2g2 })
}

fn eye_residual(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    (m - Mat::identity(m.nrows(), m.ncols())).norm()
}

/// Closed form of Gamma^T (Gamma R_tilde_star Gamma^T)^{-1} Gamma for the Darouach Gamma,
/// valid when R_tilde_star = N R_hat N^T with N = I - C G2 M2 U2^T:
/// R_hat^{-1} - R_hat^{-1} CG (CG^T R_hat^{-1} CG)^{-1} CG^T R_hat^{-1}.
fn r_check_closed(r_hat: &Mat, cg2: &Mat, k: usize) -> Result<Mat> {
    let ri = spd_inverse(r_hat).ok_or_else(|| Error::Numerical { k, what: "R_hat".into() })?;
    if cg2.ncols() == 0 {
        return Ok(ri);
    }
    let rcg = &ri * cg2;
    let inner = spd_inverse(&(cg2.transpose() * &rcg))
        .ok_or_else(|| Error::Gain("C G2 is column-rank deficient in the R_hat metric".into()))?;
    Ok(&ri - &rcg * inner * rcg.transpose())
}

/// Darouach Gamma built explicitly as a basis of the left null space of C G2.
/// R_check depends only on that row space, so no metric is needed to pick the basis.
fn r_check_explicit(r_tilde_star: &Mat, cg2: &Mat) -> Result<Mat> {
    let q = cg2.ncols();
    let inv = |m: &Mat| inverse(m).ok_or_else(|| Error::Gain("Gamma R_tilde_star Gamma^T is singular".into()));
    if q == 0 {
        return inv(r_tilde_star);
    }
    let svd = svd_full(cg2)?;
    let l = cg2.nrows();
    let gamma = svd.u.columns(q, l - q).transpose();
    let mut inner = &gamma * r_tilde_star * gamma.transpose();
    symmetrize(&mut inner);
    Ok(gamma.transpose() * inv(&inner)? * gamma)
}

fn r_check_pinv(r_tilde_star: &Mat, tol: &Tolerance) -> Result<Mat> {
    let mut s = r_tilde_star.clone();
    symmetrize(&mut s);
    pinv(&s, tol)
}

/// L = K (I - U1 Sigma M1*)^T R_check with M1* = Sigma^{-1} (U1^T R_check U1)^{-1} U1^T R_check.
fn gain_from_r_check(k_mat: &Mat, r_check: &Mat, dec: &OutputDecomposition) -> Result<(Mat, Mat)> {
    if dec.p_h == 0 {
        return Ok((k_mat * r_check, Mat::zeros(0, dec.l())));
    }
    let ru1 = r_check * &dec.u1;
    let inner = inverse(&(dec.u1.transpose() * &ru1))
        .ok_or_else(|| Error::Gain("U1^T R_check U1 is singular".into()))?;
    let m1_star = &dec.sigma_inv * inner * ru1.transpose();
    let l = dec.l();
    let proj = Mat::identity(l, l) - &dec.u1 * &dec.sigma * &m1_star;
    Ok((k_mat * proj.transpose() * r_check, m1_star))
}

pub struct GainInputs<'a> {
    pub p_star: &'a Mat,
    pub step: &'a SystemStep,
    pub dec: &'a OutputDecomposition,
    /// G2 of the previous time step.
    pub g2_prev: &'a Mat,
    /// Input gain used in the state path.
    pub m2: &'a Mat,
    /// R_hat = C P C^T + R for the predicted covariance P; only the closed-form Darouach path reads it.
    pub r_hat: &'a Mat,
}

#[derive(Debug, Clone)]
pub struct Gain {
    pub l: Mat,
    pub k: Mat,
    pub r_tilde_star: Mat,
    pub r_check: Mat,
    pub m1_star: Mat,
}

/// With an invertible feedthrough every output is spent on d, so there is nothing left to
/// correct the state with: L = 0 and M1* = Sigma^{-1} U1^T.
fn gain_without_z2(inp: &GainInputs<'_>, rts: Mat, k: Mat) -> Option<Gain> {
    let dec = inp.dec;
    (dec.p_h == dec.l()).then(|| Gain {
        l: Mat::zeros(k.nrows(), dec.l()),
        k,
        r_tilde_star: rts,
        r_check: Mat::zeros(dec.l(), dec.l()),
        m1_star: &dec.sigma_inv * dec.u1.transpose(),
    })
}

fn innovation_terms(inp: &GainInputs<'_>) -> (Mat, Mat) {
    let s = inp.step;
    let g2m2u2r = inp.g2_prev * inp.m2 * inp.dec.u2.transpose() * &s.r;
    let cross = &s.c * &g2m2u2r;
    let mut rts = &s.c * inp.p_star * s.c.transpose() + &s.r - &cross - cross.transpose();
    symmetrize(&mut rts);
    let k = inp.p_star * s.c.transpose() - g2m2u2r;
    (rts, k)
}

/// Minimum-variance gain L_k for an admissible Gamma. DarouachReduction forms Gamma explicitly here.
pub fn compute_gain_l(inp: &GainInputs<'_>, gamma: GammaPolicy, tol: &Tolerance) -> Result<Gain> {
    let (rts, k) = innovation_terms(inp);
    if let Some(g) = gain_without_z2(inp, rts.clone(), k.clone()) {
        return Ok(g);
    }
    let cg2 = &inp.step.c * inp.g2_prev;
    let r_check = match gamma {
        GammaPolicy::DarouachReduction => r_check_explicit(&rts, &cg2)?,
        GammaPolicy::PseudoInverse => r_check_pinv(&rts, tol)?,
    };
    let (l, m1_star) = gain_from_r_check(&k, &r_check, inp.dec)?;
    Ok(Gain { l, k, r_tilde_star: rts, r_check, m1_star })
}

/// Same as `compute_gain_l` but with the SVD-free closed form for the Darouach policy.
fn compute_gain_l_closed(inp: &GainInputs<'_>, gamma: GammaPolicy, tol: &Tolerance, k_idx: usize) -> Result<Gain> {
    let (rts, k) = innovation_terms(inp);
    if let Some(g) = gain_without_z2(inp, rts.clone(), k.clone()) {
        return Ok(g);
    }
    let r_check = match gamma {
        GammaPolicy::DarouachReduction => r_check_closed(inp.r_hat, &(&inp.step.c * inp.g2_prev), k_idx)?,
        GammaPolicy::PseudoInverse => r_check_pinv(&rts, tol)?,
    };
    let (l, m1_star) = gain_from_r_check(&k, &r_check, inp.dec)?;
    Ok(Gain { l, k, r_tilde_star: rts, r_check, m1_star })
}

/// Px = X + X^T + (I - LC) P* (I - LC)^T + L R L^T, X = (I - LC) G2 M2 U2^T R L^T.
fn measurement_covariance(gain: &Mat, step: &SystemStep, p_star: &Mat, g2m2u2t: &Mat) -> Mat {
    let n = p_star.nrows();
    let ilc = Mat::identity(n, n) - gain * &step.c;
    let x = &ilc * g2m2u2t * &step.r * gain.transpose();
    let mut px = &x + x.transpose() + &ilc * p_star * ilc.transpose() + gain * &step.r * gain.transpose();
    symmetrize(&mut px);
    px
}

fn assemble_pd(prev: &OutputDecomposition, pd1: &Mat, pd12: &Mat, pd2: &Mat) -> Mat {
    let inner = block(&[&[pd1, pd12], &[&pd12.transpose(), pd2]]);
    let mut pd = &prev.v * inner * prev.v.transpose();
    symmetrize(&mut pd);
    pd
}

fn ulise_like(
    state: &UliseState,
    y: &Vector,
    u: &Vector,
    u_prev: &Vector,
    model: &SystemModel,
    gamma: GammaPolicy,
    tol: &Tolerance,
    ols: bool,
) -> Result<(UliseState, StepOutput)> {
    let dims = model.dims();
    check_len(y, dims.l, "y")?;
    check_len(u, dims.m, "u")?;
    check_len(u_prev, dims.m, "u_prev")?;
    let prev = &state.frame;
    let cur = prev.next(model, tol)?;
    let k = cur.k;
    let (pdec, cdec) = (&*prev.dec, &*cur.dec);
    let (ps, cs) = (&*prev.step, &*cur.step);

    let st = input_stage(
        prev, &cur, &state.xhat, &state.d1hat, &state.px, &state.ahat, &state.qhat, y, u, u_prev, tol,
    )?;
    let dhat_prev = &pdec.v1 * &state.d1hat + &pdec.v2 * &st.d2hat;
    let c2m2t = cdec.c2.transpose() * st.m2.transpose();
    let pd12 = &pdec.sigma_inv * &pdec.c1 * &state.px * ps.a.transpose() * &c2m2t
        - &state.pd1 * pdec.g1.transpose() * &c2m2t;
    let pd_prev = assemble_pd(pdec, &state.pd1, &pd12, &st.pd2);

    // State path gain: GLS for ULISE, OLS (C2 G2)^+ for the CYWZ variant.
    let (m2s, d2s) = if ols {
        let m = pinv(&st.c2g2, tol)?;
        let d = &m * (&st.z2 - &cdec.c2 * &st.x_pred - &cdec.d2 * u);
        (m, d)
    } else {
        (st.m2.clone(), st.d2hat.clone())
    };
    let g2 = &pdec.g2;
    let xstar = &st.x_pred + g2 * &d2s;
    let n = dims.n;
    let ngm = Mat::identity(n, n) - g2 * &m2s * &cdec.c2;
    let mut pstar = g2 * &m2s * &cdec.r2 * m2s.transpose() * g2.transpose() + &ngm * &st.p_tilde * ngm.transpose();
    symmetrize(&mut pstar);

    let mut r_hat = &cs.c * &st.p_tilde * cs.c.transpose() + &cs.r;
    symmetrize(&mut r_hat);
    let gi = GainInputs { p_star: &pstar, step: cs, dec: cdec, g2_prev: g2, m2: &m2s, r_hat: &r_hat };
    let gain = compute_gain_l_closed(&gi, gamma, tol, k)?;
    let xhat = &xstar + &gain.l * (y - &cs.c * &xstar - &cs.d * u);
    let g2m2u2t = g2 * &m2s * cdec.u2.transpose();
    let px = measurement_covariance(&gain.l, cs, &pstar, &g2m2u2t);

    let mut pd1 = &cdec.sigma_inv * (&cdec.c1 * &px * cdec.c1.transpose() + &cdec.r1) * &cdec.sigma_inv;
    symmetrize(&mut pd1);
    let d1hat = &cdec.sigma_inv * (&st.z1 - &cdec.c1 * &xhat - &cdec.d1 * u);

    let mut m2_res = eye_residual(&(&st.m2 * &st.c2g2));
    if ols {
        m2_res = m2_res.max(eye_residual(&(&m2s * &st.c2g2)));
    }
    let residuals = ConstraintResiduals {
        m1_sigma: eye_residual(&(&cdec.sigma_inv * &cdec.sigma)),
        m2_c2g2: m2_res,
        l_u1: (&gain.l * &cdec.u1).norm(),
    };
    let out = StepOutput {
        k,
        xhat_filt: xhat.clone(),
        xhat_star: xstar,
        dhat_prev,
        pd_prev,
        px: px.clone(),
        gain_l: gain.l,
        gain_m1: cdec.sigma_inv.clone(),
        gain_m2: st.m2,
        residuals,
        rank_changed: pdec.p_h != cdec.p_h,
    };
    let next = UliseState {
        xhat,
        px,
        d1hat,
        pd1,
        ahat: cdec.a_hat(&cs.a),
        qhat: cdec.q_hat(&cs.q),
        k,
        frame: cur,
    };
    Ok((next, out))
}

pub fn ulise_step(
    state: &UliseState,
    y: &Vector,
    u: &Vector,
    u_prev: &Vector,
    model: &SystemModel,
    gamma: GammaPolicy,
    tol: &Tolerance,
) -> Result<(UliseState, StepOutput)> {
    ulise_like(state, y, u, u_prev, model, gamma, tol, false)
}

/// ULISE with the ordinary least squares gain (C2 G2)^+ in the state path.
/// Reported input estimates and their covariance stay generalized least squares.
pub fn cywz_step(
    state: &UliseState,
    y: &Vector,
    u: &Vector,
    u_prev: &Vector,
    model: &SystemModel,
    tol: &Tolerance,
) -> Result<(UliseState, StepOutput)> {
    ulise_like(state, y, u, u_prev, model, GammaPolicy::default(), tol, true)
}

pub fn plise_step(
    state: &PliseState,
    y: &Vector,
    u: &Vector,
    u_prev: &Vector,
    model: &SystemModel,
    gamma: GammaPolicy,
    tol: &Tolerance,
) -> Result<(PliseState, StepOutput)> {
    let dims = model.dims();
    check_len(y, dims.l, "y")?;
    check_len(u, dims.m, "u")?;
    check_len(u_prev, dims.m, "u_prev")?;
    let prev = &state.frame;
    let cur = prev.next(model, tol)?;
    let k = cur.k;
    let (pdec, cdec) = (&*prev.dec, &*cur.dec);
    let (ps, cs) = (&*prev.step, &*cur.step);

    let st = input_stage(
        prev, &cur, &state.xhat, &state.d1hat, &state.px, &state.ahat, &state.qhat, y, u, u_prev, tol,
    )?;
    let m2 = &st.m2;
    let c2m2t = cdec.c2.transpose() * m2.transpose();
    let pxd2 = -(&state.px * ps.a.transpose() * &c2m2t) - &state.pxd1 * pdec.g1.transpose() * &c2m2t;
    let pd12 = -(state.pxd1.transpose() * ps.a.transpose() * &c2m2t) - &state.pd1 * pdec.g1.transpose() * &c2m2t;
    let dhat_prev = &pdec.v1 * &state.d1hat + &pdec.v2 * &st.d2hat;
    let pd_prev = assemble_pd(pdec, &state.pd1, &pd12, &st.pd2);

    // Time update from the joint covariance of (x, d1, d2) errors.
    let g2 = &pdec.g2;
    let xstar = &st.x_pred + g2 * &st.d2hat;
    let ag = hstack(&[&ps.a, &pdec.g1, g2]);
    let joint = block(&[
        &[&state.px, &state.pxd1, &pxd2],
        &[&state.pxd1.transpose(), &state.pd1, &pd12],
        &[&pxd2.transpose(), &pd12.transpose(), &st.pd2],
    ]);
    let qc = g2 * m2 * &cdec.c2 * &ps.q;
    let mut pstar = &ag * joint * ag.transpose() + &ps.q - &qc - qc.transpose();
    symmetrize(&mut pstar);

    // d1 from the propagated estimate.
    let mut pd1 = &cdec.sigma_inv * (&cdec.c1 * &pstar * cdec.c1.transpose() + &cdec.r1) * &cdec.sigma_inv;
    symmetrize(&mut pd1);
    let d1hat = &cdec.sigma_inv * (&st.z1 - &cdec.c1 * &xstar - &cdec.d1 * u);

    // Predicted covariance without the d2 correction, for the Darouach metric.
    let ag1 = hstack(&[&ps.a, &pdec.g1]);
    let mut pring = &ag1 * state.joint_covariance() * ag1.transpose() + &ps.q;
    symmetrize(&mut pring);
    let mut r_hat = &cs.c * &pring * cs.c.transpose() + &cs.r;
    symmetrize(&mut r_hat);
    let gi = GainInputs { p_star: &pstar, step: cs, dec: cdec, g2_prev: g2, m2, r_hat: &r_hat };
    let gain = compute_gain_l(&gi, gamma, tol)?;
    let xhat = &xstar + &gain.l * (y - &cs.c * &xstar - &cs.d * u);
    let g2m2u2t = g2 * m2 * cdec.u2.transpose();
    let px = measurement_covariance(&gain.l, cs, &pstar, &g2m2u2t);

    let n = dims.n;
    let ilc = Mat::identity(n, n) - &gain.l * &cs.c;
    let c1ts = cdec.c1.transpose() * &cdec.sigma_inv;
    let pxd1 = -(&ilc * &pstar * &c1ts) - &gain.l * &cs.r * &cdec.u2 * m2.transpose() * g2.transpose() * &c1ts;

    let residuals = ConstraintResiduals {
        m1_sigma: eye_residual(&(&cdec.sigma_inv * &cdec.sigma)),
        m2_c2g2: eye_residual(&(m2 * &st.c2g2)),
        l_u1: (&gain.l * &cdec.u1).norm(),
    };
    let out = StepOutput {
        k,
        xhat_filt: xhat.clone(),
        xhat_star: xstar,
        dhat_prev,
        pd_prev,
        px: px.clone(),
        gain_l: gain.l,
        gain_m1: cdec.sigma_inv.clone(),
        gain_m2: st.m2,
        residuals,
        rank_changed: pdec.p_h != cdec.p_h,
    };
    let next = PliseState {
        xhat,
        px,
        d1hat,
        pd1,
        pxd1,
        pstar,
        ahat: cdec.a_hat(&cs.a),
        qhat: cdec.q_hat(&cs.q),
        k,
        frame: cur,
    };
    Ok((next, out))
}

/// Standard Kalman predict/update with Joseph-form covariance.
pub fn kalman_step(
    state: &KalmanState,
    y: &Vector,
    u: &Vector,
    model: &SystemModel,
    tol: &Tolerance,
) -> Result<(KalmanState, StepOutput)> {
    let dims = model.dims();
    check_len(y, dims.l, "y")?;
    check_len(u, dims.m, "u")?;
    let prev = &state.frame;
    let cur = prev.next(model, tol)?;
    check_no_unknown_input(&cur.step, tol)?;
    let k = cur.k;
    let (ps, cs) = (&*prev.step, &*cur.step);
    let x_pred = &ps.a * &state.xhat + &ps.b * &state.u_last;
    let mut p_pred = &ps.a * &state.px * ps.a.transpose() + &ps.q;
    symmetrize(&mut p_pred);
    let s = &cs.c * &p_pred * cs.c.transpose() + &cs.r;
    let s_inv = spd_inverse(&s).ok_or_else(|| Error::Numerical { k, what: "innovation covariance".into() })?;
    let l = &p_pred * cs.c.transpose() * s_inv;
    let xhat = &x_pred + &l * (y - &cs.c * &x_pred - &cs.d * u);
    let n = dims.n;
    let ilc = Mat::identity(n, n) - &l * &cs.c;
    let mut px = &ilc * &p_pred * ilc.transpose() + &l * &cs.r * l.transpose();
    symmetrize(&mut px);
    let out = StepOutput {
        k,
        xhat_filt: xhat.clone(),
        xhat_star: x_pred,
        dhat_prev: Vector::zeros(0),
        pd_prev: Mat::zeros(0, 0),
        px: px.clone(),
        gain_l: l,
        gain_m1: Mat::zeros(0, 0),
        gain_m2: Mat::zeros(0, dims.l),
        residuals: ConstraintResiduals::default(),
        rank_changed: false,
    };
    Ok((KalmanState { xhat, px, k, u_last: u.clone(), frame: cur }, out))
}

/// Any of the four filters behind one stepping interface.
#[derive(Debug, Clone)]
pub enum AnyFilter {
    Ulise(UliseState),
    Plise(PliseState),
    Cywz(UliseState),
    Kalman(KalmanState),
}

impl AnyFilter {
    pub fn init(
        kind: FilterKind,
        model: &SystemModel,
        x0_mean: &Vector,
        p0: &Mat,
        y0: &Vector,
        u0: &Vector,
        tol: &Tolerance,
    ) -> Result<AnyFilter> {
        Ok(match kind {
            FilterKind::Ulise => AnyFilter::Ulise(ulise_init(model, x0_mean, p0, y0, u0, tol)?),
            FilterKind::Cywz => AnyFilter::Cywz(ulise_init(model, x0_mean, p0, y0, u0, tol)?),
            FilterKind::Plise => AnyFilter::Plise(plise_init(model, x0_mean, p0, y0, u0, tol)?),
            FilterKind::Kalman => AnyFilter::Kalman(kalman_init(model, x0_mean, p0, u0, tol)?),
        })
    }

    pub fn kind(&self) -> FilterKind {
        match self {
            AnyFilter::Ulise(_) => FilterKind::Ulise,
            AnyFilter::Plise(_) => FilterKind::Plise,
            AnyFilter::Cywz(_) => FilterKind::Cywz,
            AnyFilter::Kalman(_) => FilterKind::Kalman,
        }
    }

    pub fn step(
        &mut self,
        y: &Vector,
        u: &Vector,
        u_prev: &Vector,
        model: &SystemModel,
        gamma: GammaPolicy,
        tol: &Tolerance,
    ) -> Result<StepOutput> {
        let (next, out) = match self {
            AnyFilter::Ulise(s) => {
                let (n, o) = ulise_step(s, y, u, u_prev, model, gamma, tol)?;
                (AnyFilter::Ulise(n), o)
            }
            AnyFilter::Cywz(s) => {
                let (n, o) = cywz_step(s, y, u, u_prev, model, tol)?;
                (AnyFilter::Cywz(n), o)
            }
            AnyFilter::Plise(s) => {
                let (n, o) = plise_step(s, y, u, u_prev, model, gamma, tol)?;
                (AnyFilter::Plise(n), o)
            }
            AnyFilter::Kalman(s) => {
                let (n, o) = kalman_step(s, y, u, model, tol)?;
                (AnyFilter::Kalman(n), o)
            }
        };
        *self = next;
        Ok(out)
    }
}
