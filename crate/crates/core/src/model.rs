//! Linear discrete-time systems with unknown inputs:
//!
//!   x_{k+1} = A x_k + B u_k + G d_k + w_k,   w_k ~ N(0, Q)
//!   y_k     = C x_k + D u_k + H d_k + v_k,   v_k ~ N(0, R)

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{expm, hstack, rank, vstack, Mat, Tolerance};

#[derive(Debug, Clone, PartialEq)]
pub struct SystemStep {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    pub g: Mat,
    pub h: Mat,
    pub q: Mat,
    pub r: Mat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub l: usize,
}

impl SystemStep {
    pub fn dims(&self) -> Dims {
        Dims { n: self.a.nrows(), m: self.b.ncols(), p: self.g.ncols(), l: self.c.nrows() }
    }

    /// Shape mismatches, each described in words.
    pub fn shape_errors(&self) -> Vec<String> {
        let Dims { n, m, p, l } = self.dims();
        let expect = [
            ("A", &self.a, (n, n)),
            ("B", &self.b, (n, m)),
            ("C", &self.c, (l, n)),
            ("D", &self.d, (l, m)),
            ("G", &self.g, (n, p)),
            ("H", &self.h, (l, p)),
            ("Q", &self.q, (n, n)),
            ("R", &self.r, (l, l)),
        ];
        expect
            .iter()
            .filter(|(_, mat, shape)| mat.shape() != *shape)
            .map(|(name, mat, shape)| format!("{name} is {:?}, expected {:?}", mat.shape(), shape))
            .collect()
    }
}

type Provider = dyn Fn(usize) -> SystemStep + Send + Sync;

#[derive(Clone)]
pub enum StepSource {
    Invariant(Arc<SystemStep>),
    Varying(Arc<Provider>),
}

#[derive(Clone)]
pub struct SystemModel {
    dims: Dims,
    source: StepSource,
    pub horizon: Option<usize>,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.source {
            StepSource::Invariant(_) => "time-invariant",
            StepSource::Varying(_) => "time-varying",
        };
        f.debug_struct("SystemModel")
            .field("dims", &self.dims)
            .field("source", &kind)
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl SystemModel {
    pub fn time_invariant(step: SystemStep) -> Result<Self> {
        let errs = step.shape_errors();
        if !errs.is_empty() {
            return Err(Error::InvalidInput(errs.join("; ")));
        }
        Ok(SystemModel { dims: step.dims(), source: StepSource::Invariant(Arc::new(step)), horizon: None })
    }

    /// `provider` must be a pure function of k returning matrices of the declared dimensions.
    pub fn time_varying<F>(dims: Dims, provider: F, horizon: Option<usize>) -> Self
    where
        F: Fn(usize) -> SystemStep + Send + Sync + 'static,
    {
        SystemModel { dims, source: StepSource::Varying(Arc::new(provider)), horizon }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn is_time_invariant(&self) -> bool {
        matches!(self.source, StepSource::Invariant(_))
    }

    pub fn invariant_step(&self) -> Option<&SystemStep> {
        match &self.source {
            StepSource::Invariant(s) => Some(s),
            StepSource::Varying(_) => None,
        }
    }

    pub fn step(&self, k: usize) -> Arc<SystemStep> {
        match &self.source {
            StepSource::Invariant(s) => s.clone(),
            StepSource::Varying(f) => Arc::new(f(k)),
        }
    }

    /// The same matrices re-exposed through a provider, for exercising time-varying code paths.
    pub fn as_time_varying(&self) -> SystemModel {
        let this = self.clone();
        SystemModel::time_varying(self.dims, move |k| (*this.step(k)).clone(), self.horizon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    Shape,
    DimensionOrder,
    NonFinite,
    QNotSymmetricPsd,
    RNotSymmetricPd,
    StackedRank,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// Offending time index; None for whole-horizon conditions.
    pub k: Option<usize>,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.k {
            Some(k) => write!(f, "k={k}: {:?}: {}", self.kind, self.detail),
            None => write!(f, "{:?}: {}", self.kind, self.detail),
        }
    }
}

fn is_symmetric(m: &Mat, tol: &Tolerance) -> bool {
    (m - m.transpose()).amax() <= tol.zero_abs * m.amax().max(1.0)
}

fn min_sym_eig(m: &Mat) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    crate::numeric::sym_eig(&((m + m.transpose()) * 0.5)).map_or(f64::NEG_INFINITY, |(v, _)| v.min())
}

/// Check every step in `k_range` against the standing assumptions.
/// A time-invariant model is checked once regardless of the range.
pub fn validate(model: &SystemModel, k_range: Range<usize>, tol: &Tolerance) -> Vec<Violation> {
    let mut out = Vec::new();
    let ks: Vec<usize> = if model.is_time_invariant() { vec![k_range.start] } else { k_range.collect() };
    let Dims { n, p, l, .. } = model.dims();
    if !(n >= l && l >= 1 && l >= p) {
        out.push(Violation {
            k: None,
            kind: ViolationKind::DimensionOrder,
            detail: format!("need n >= l >= 1 and l >= p, got n={n}, l={l}, p={p}"),
        });
    }
    let mut max_stack_rank = 0;
    for k in ks {
        let s = model.step(k);
        let at = if model.is_time_invariant() { None } else { Some(k) };
        let shape = s.shape_errors();
        if s.dims() != model.dims() {
            out.push(Violation {
                k: at,
                kind: ViolationKind::Shape,
                detail: format!("step dims {:?} differ from model dims {:?}", s.dims(), model.dims()),
            });
        }
        if !shape.is_empty() {
            out.push(Violation { k: at, kind: ViolationKind::Shape, detail: shape.join("; ") });
            continue;
        }
        let all = [&s.a, &s.b, &s.c, &s.d, &s.g, &s.h, &s.q, &s.r];
        if all.iter().any(|m| m.iter().any(|x| !x.is_finite())) {
            out.push(Violation { k: at, kind: ViolationKind::NonFinite, detail: "non-finite entry".into() });
            continue;
        }
        if !is_symmetric(&s.q, tol) || min_sym_eig(&s.q) < -tol.zero_abs {
            out.push(Violation {
                k: at,
                kind: ViolationKind::QNotSymmetricPsd,
                detail: "Q not symmetric PSD".into(),
            });
        }
        let r_ok = is_symmetric(&s.r, tol) && {
            let sym = (&s.r + s.r.transpose()) * 0.5;
            sym.cholesky().is_some() && min_sym_eig(&s.r) > tol.zero_abs
        };
        if !r_ok {
            out.push(Violation { k: at, kind: ViolationKind::RNotSymmetricPd, detail: "R not PD".into() });
        }
        let stacked = vstack(&[&s.g, &s.h]);
        max_stack_rank = max_stack_rank.max(rank(&stacked, tol).unwrap_or(0));
    }
    if max_stack_rank != p && !out.iter().any(|v| v.kind == ViolationKind::Shape) {
        out.push(Violation {
            k: None,
            kind: ViolationKind::StackedRank,
            detail: format!("max_k rk([G; H]) = {max_stack_rank}, expected p = {p}"),
        });
    }
    out
}

/// Continuous-time model: xdot = A x + B u + G d + w, y = C x + D u + H d + v.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousModel {
    pub a: Mat,
    pub b: Mat,
    pub g: Mat,
    pub c: Mat,
    pub d: Mat,
    pub h: Mat,
    pub q: Mat,
    pub r: Mat,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct C2dOptions {
    /// Use R_d = R_c / dt (sampled white-noise convention) instead of R_d = R_c.
    pub scale_r_by_dt: bool,
}

/// Zero-order-hold discretization of one continuous model, both inputs held.
/// Process noise via the Van Loan construction:
/// exp([[-A, Q], [0, A^T]] dt) = [[., F12], [0, F22]], Q_d = F22^T F12.
pub fn discretize(cm: &ContinuousModel, opts: C2dOptions) -> Result<SystemStep> {
    if !(cm.dt > 0.0 && cm.dt.is_finite()) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {}", cm.dt)));
    }
    let n = cm.a.nrows();
    let step_c = SystemStep {
        a: cm.a.clone(),
        b: cm.b.clone(),
        c: cm.c.clone(),
        d: cm.d.clone(),
        g: cm.g.clone(),
        h: cm.h.clone(),
        q: cm.q.clone(),
        r: cm.r.clone(),
    };
    let errs = step_c.shape_errors();
    if !errs.is_empty() {
        return Err(Error::InvalidInput(errs.join("; ")));
    }
    let inputs = hstack(&[&cm.b, &cm.g]);
    let k = inputs.ncols();
    let mut aug = Mat::zeros(n + k, n + k);
    aug.view_mut((0, 0), (n, n)).copy_from(&cm.a);
    aug.view_mut((0, n), (n, k)).copy_from(&inputs);
    let e = expm(&(aug * cm.dt))?;
    let ad = e.view((0, 0), (n, n)).into_owned();
    let bd = e.view((0, n), (n, cm.b.ncols())).into_owned();
    let gd = e.view((0, n + cm.b.ncols()), (n, cm.g.ncols())).into_owned();

    let mut vl = Mat::zeros(2 * n, 2 * n);
    vl.view_mut((0, 0), (n, n)).copy_from(&(-&cm.a));
    vl.view_mut((0, n), (n, n)).copy_from(&cm.q);
    vl.view_mut((n, n), (n, n)).copy_from(&cm.a.transpose());
    let f = expm(&(vl * cm.dt))?;
    let f12 = f.view((0, n), (n, n)).into_owned();
    let f22 = f.view((n, n), (n, n)).into_owned();
    let mut qd = f22.transpose() * f12;
    crate::numeric::symmetrize(&mut qd);

    let rd = if opts.scale_r_by_dt { &cm.r / cm.dt } else { cm.r.clone() };
    Ok(SystemStep { a: ad, b: bd, c: cm.c.clone(), d: cm.d.clone(), g: gd, h: cm.h.clone(), q: qd, r: rd })
}

pub fn c2d_zoh(cm: &ContinuousModel, opts: C2dOptions) -> Result<SystemModel> {
    SystemModel::time_invariant(discretize(cm, opts)?)
}
