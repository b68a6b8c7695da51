//! Ground-truth simulation, filter runs, Monte Carlo aggregation and CSV output.
//!
//! Noise comes from ChaCha8 seeded with `noise_seed`; Monte Carlo run i uses
//! stream i of the same seed, so runs are independent and individually
//! reproducible. Gaussian draws are standard normals (ziggurat, `rand_distr`)
//! shaped by the symmetric square root of Q or R.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{AnyFilter, FilterKind, GammaPolicy, StepOutput};
use crate::model::SystemModel;
use crate::numeric::{psd_sqrt, Mat, Tolerance, Vector};
use crate::structural::{analyze, StructuralReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    /// `amplitude` on k_on..=k_off, zero elsewhere.
    Step { amplitude: f64, k_on: usize, k_off: usize },
    /// slope * (k - k_on) on k_on..=k_off, zero elsewhere.
    Ramp { slope: f64, k_on: usize, k_off: usize },
    /// +amplitude for half_period steps, then -amplitude, repeating over k_on..=k_off.
    SquareWave { amplitude: f64, half_period: usize, k_on: usize, k_off: usize },
    Constant { value: f64 },
    /// Explicit sequence; zero past its end.
    Samples { values: Vec<f64> },
}

impl SignalSpec {
    pub fn value(&self, k: usize) -> f64 {
        match *self {
            SignalSpec::Step { amplitude, k_on, k_off } => {
                if (k_on..=k_off).contains(&k) {
                    amplitude
                } else {
                    0.0
                }
            }
            SignalSpec::Ramp { slope, k_on, k_off } => {
                if (k_on..=k_off).contains(&k) {
                    slope * (k - k_on) as f64
                } else {
                    0.0
                }
            }
            SignalSpec::SquareWave { amplitude, half_period, k_on, k_off } => {
                if (k_on..=k_off).contains(&k) {
                    if ((k - k_on) / half_period) % 2 == 0 {
                        amplitude
                    } else {
                        -amplitude
                    }
                } else {
                    0.0
                }
            }
            SignalSpec::Constant { value } => value,
            SignalSpec::Samples { ref values } => values.get(k).copied().unwrap_or(0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(format!("signal {self:?}: {msg}")));
        match *self {
            SignalSpec::Step { amplitude: a, k_on, k_off } | SignalSpec::Ramp { slope: a, k_on, k_off } => {
                if k_on > k_off {
                    return bad("k_on > k_off");
                }
                if !a.is_finite() {
                    return bad("non-finite parameter");
                }
            }
            SignalSpec::SquareWave { amplitude, half_period, k_on, k_off } => {
                if k_on > k_off {
                    return bad("k_on > k_off");
                }
                if half_period == 0 {
                    return bad("half_period must be positive");
                }
                if !amplitude.is_finite() {
                    return bad("non-finite parameter");
                }
            }
            SignalSpec::Constant { value } => {
                if !value.is_finite() {
                    return bad("non-finite parameter");
                }
            }
            SignalSpec::Samples { ref values } => {
                if values.iter().any(|v| !v.is_finite()) {
                    return bad("non-finite sample");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: SystemModel,
    /// Number of filter steps N; truth runs over k = 0..=N.
    pub horizon: usize,
    pub d_signals: Vec<SignalSpec>,
    /// Either m signals or a single signal broadcast to every known input.
    pub u_signals: Vec<SignalSpec>,
    pub x0_true: Vector,
    pub x0_mean: Vector,
    pub p0: Mat,
    pub noise_seed: u64,
    pub filters: Vec<FilterKind>,
    pub monte_carlo: usize,
    pub gamma: GammaPolicy,
    pub tol: Tolerance,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let dims = self.model.dims();
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.d_signals.len() != dims.p {
            return bad(format!("{} unknown-input signals for p = {}", self.d_signals.len(), dims.p));
        }
        if !(self.u_signals.len() == dims.m || (self.u_signals.len() == 1 && dims.m > 0) || dims.m == 0) {
            return bad(format!("{} known-input signals for m = {}", self.u_signals.len(), dims.m));
        }
        if self.x0_true.len() != dims.n || self.x0_mean.len() != dims.n {
            return bad(format!("initial state length must be n = {}", dims.n));
        }
        if self.p0.shape() != (dims.n, dims.n) {
            return bad(format!("P0 is {:?}, expected n x n", self.p0.shape()));
        }
        if self.monte_carlo < 1 {
            return bad("monte_carlo must be at least 1".into());
        }
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        for s in self.d_signals.iter().chain(&self.u_signals) {
            s.validate()?;
        }
        self.tol.validate()
    }

    pub fn d_at(&self, k: usize) -> Vector {
        Vector::from_iterator(self.d_signals.len(), self.d_signals.iter().map(|s| s.value(k)))
    }

    pub fn u_at(&self, k: usize) -> Vector {
        let m = self.model.dims().m;
        if self.u_signals.len() == m {
            Vector::from_iterator(m, self.u_signals.iter().map(|s| s.value(k)))
        } else if let Some(s) = self.u_signals.first() {
            Vector::from_element(m, s.value(k))
        } else {
            Vector::zeros(m)
        }
    }
}

/// True trajectories for k = 0..=N.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub x: Vec<Vector>,
    pub y: Vec<Vector>,
    pub d: Vec<Vector>,
    pub u: Vec<Vector>,
}

pub fn simulate_truth(scenario: &Scenario) -> Result<Truth> {
    simulate_truth_run(scenario, 0)
}

fn gaussian(rng: &mut ChaCha8Rng, sqrt: &Mat) -> Vector {
    let xi = Vector::from_iterator(sqrt.ncols(), (0..sqrt.ncols()).map(|_| StandardNormal.sample(rng)));
    sqrt * xi
}

/// Truth for Monte Carlo run `run`: same seed, stream `run`.
pub fn simulate_truth_run(scenario: &Scenario, run: u64) -> Result<Truth> {
    let model = &scenario.model;
    let tol = &scenario.tol;
    let n_steps = scenario.horizon;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.noise_seed);
    rng.set_stream(run);
    let fixed = match model.invariant_step() {
        Some(s) => Some((psd_sqrt(&s.q, tol)?, psd_sqrt(&s.r, tol)?)),
        None => None,
    };
    let mut x = Vec::with_capacity(n_steps + 1);
    let mut y = Vec::with_capacity(n_steps + 1);
    let mut d = Vec::with_capacity(n_steps + 1);
    let mut u = Vec::with_capacity(n_steps + 1);
    let mut xk = scenario.x0_true.clone();
    for k in 0..=n_steps {
        let s = model.step(k);
        let (sq, sr) = match &fixed {
            Some((sq, sr)) => (sq.clone(), sr.clone()),
            None => (psd_sqrt(&s.q, tol)?, psd_sqrt(&s.r, tol)?),
        };
        let dk = scenario.d_at(k);
        let uk = scenario.u_at(k);
        let v = gaussian(&mut rng, &sr);
        let w = gaussian(&mut rng, &sq);
        let yk = &s.c * &xk + &s.d * &uk + &s.h * &dk + v;
        let next = &s.a * &xk + &s.b * &uk + &s.g * &dk + w;
        x.push(xk);
        y.push(yk);
        d.push(dk);
        u.push(uk);
        xk = next;
    }
    Ok(Truth { x, y, d, u })
}

#[derive(Debug, Clone)]
pub struct FilterSeries {
    pub kind: FilterKind,
    /// Step indices 1..=N that completed.
    pub k: Vec<usize>,
    pub xhat: Vec<Vector>,
    /// Entry i is the estimate of d at time k[i] - 1.
    pub dhat: Vec<Vector>,
    pub px_diag: Vec<Vector>,
    pub pd_diag: Vec<Vector>,
    pub tr_px: Vec<f64>,
    pub tr_pd: Vec<f64>,
    pub err_x_norm: Vec<f64>,
    pub err_d_norm: Vec<f64>,
    /// Worst unbiasedness-constraint residual over all steps.
    pub max_residual: f64,
    pub failure: Option<String>,
    pub mean_step_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadySummary {
    pub kind: FilterKind,
    pub px_diag: Vec<f64>,
    pub pd_diag: Vec<f64>,
    pub tr_px: f64,
    pub tr_pd: f64,
    /// Number of steps averaged.
    pub window: usize,
    pub failure: Option<String>,
}

/// Index range of the final 20% of a series of length `len`.
pub fn tail_window(len: usize) -> std::ops::Range<usize> {
    let start = len - len.div_ceil(5);
    start..len
}

fn mean_vectors(v: &[Vector]) -> Vec<f64> {
    if v.is_empty() {
        return vec![];
    }
    let mut acc = Vector::zeros(v[0].len());
    for x in v {
        acc += x;
    }
    (acc / v.len() as f64).iter().copied().collect()
}

impl FilterSeries {
    pub fn steady(&self) -> SteadySummary {
        let w = tail_window(self.k.len());
        let mean = |s: &[f64]| if s.is_empty() { f64::NAN } else { s.iter().sum::<f64>() / s.len() as f64 };
        SteadySummary {
            kind: self.kind,
            px_diag: mean_vectors(&self.px_diag[w.clone()]),
            pd_diag: mean_vectors(&self.pd_diag[w.clone()]),
            tr_px: mean(&self.tr_px[w.clone()]),
            tr_pd: mean(&self.tr_pd[w.clone()]),
            window: w.len(),
            failure: self.failure.clone(),
        }
    }
}

/// Run one filter over a truth record, calling `visit` after each step.
pub fn run_filter_with<F>(kind: FilterKind, scenario: &Scenario, truth: &Truth, mut visit: F) -> FilterSeries
where
    F: FnMut(&StepOutput),
{
    let n_steps = truth.y.len() - 1;
    let mut series = FilterSeries {
        kind,
        k: Vec::with_capacity(n_steps),
        xhat: Vec::with_capacity(n_steps),
        dhat: Vec::with_capacity(n_steps),
        px_diag: Vec::with_capacity(n_steps),
        pd_diag: Vec::with_capacity(n_steps),
        tr_px: Vec::with_capacity(n_steps),
        tr_pd: Vec::with_capacity(n_steps),
        err_x_norm: Vec::with_capacity(n_steps),
        err_d_norm: Vec::with_capacity(n_steps),
        max_residual: 0.0,
        failure: None,
        mean_step_seconds: 0.0,
    };
    let model = &scenario.model;
    let tol = &scenario.tol;
    let mut filt = match AnyFilter::init(kind, model, &scenario.x0_mean, &scenario.p0, &truth.y[0], &truth.u[0], tol) {
        Ok(f) => f,
        Err(e) => {
            series.failure = Some(format!("k=0: {e}"));
            return series;
        }
    };
    let start = Instant::now();
    for k in 1..=n_steps {
        match filt.step(&truth.y[k], &truth.u[k], &truth.u[k - 1], model, scenario.gamma, tol) {
            Ok(out) => {
                visit(&out);
                series.k.push(k);
                series.err_x_norm.push((&out.xhat_filt - &truth.x[k]).norm());
                let d_err = if out.dhat_prev.len() == truth.d[k - 1].len() {
                    (&out.dhat_prev - &truth.d[k - 1]).norm()
                } else {
                    0.0
                };
                series.err_d_norm.push(d_err);
                series.px_diag.push(out.px.diagonal());
                series.pd_diag.push(out.pd_prev.diagonal());
                series.tr_px.push(out.px.trace());
                series.tr_pd.push(out.pd_prev.trace());
                series.max_residual = series.max_residual.max(out.residuals.max());
                series.xhat.push(out.xhat_filt);
                series.dhat.push(out.dhat_prev);
            }
            Err(e) => {
                series.failure = Some(e.to_string());
                break;
            }
        }
    }
    if !series.k.is_empty() {
        series.mean_step_seconds = start.elapsed().as_secs_f64() / series.k.len() as f64;
    }
    series
}

pub fn run_filter(kind: FilterKind, scenario: &Scenario, truth: &Truth) -> FilterSeries {
    run_filter_with(kind, scenario, truth, |_| {})
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub truth: Truth,
    pub series: Vec<FilterSeries>,
    pub summaries: Vec<SteadySummary>,
    /// Structural verdicts, computed first for time-invariant models.
    pub structural: Option<StructuralReport>,
}

impl RunResult {
    pub fn failed(&self) -> bool {
        self.series.iter().any(|s| s.failure.is_some())
    }
}

/// Single-realization run of every requested filter on a shared measurement record.
pub fn run_scenario(scenario: &Scenario) -> Result<RunResult> {
    scenario.validate()?;
    let structural = match scenario.model.invariant_step() {
        Some(step) => Some(analyze(step, &scenario.tol)?),
        None => None,
    };
    let truth = simulate_truth(scenario)?;
    let series: Vec<FilterSeries> = scenario.filters.iter().map(|&k| run_filter(k, scenario, &truth)).collect();
    let summaries = series.iter().map(|s| s.steady()).collect();
    Ok(RunResult { truth, series, summaries, structural })
}

/// Unbiased sample covariance of a set of error vectors.
pub fn empirical_error_covariance(errors: &[Vector]) -> Result<Mat> {
    let m = errors.len();
    if m < 2 {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    let n = errors[0].len();
    let mut mean = Vector::zeros(n);
    for e in errors {
        mean += e;
    }
    mean /= m as f64;
    let mut cov = Mat::zeros(n, n);
    for e in errors {
        let c = e - &mean;
        cov += &c * c.transpose();
    }
    cov /= (m - 1) as f64;
    crate::numeric::symmetrize(&mut cov);
    Ok(cov)
}

/// Running first and second moments of an error vector at every time index.
#[derive(Debug, Clone)]
pub struct Moments {
    pub count: usize,
    pub sum: Vec<Vector>,
    pub outer: Vec<Mat>,
}

impl Moments {
    fn new(len: usize, dim: usize) -> Moments {
        Moments { count: 0, sum: vec![Vector::zeros(dim); len], outer: vec![Mat::zeros(dim, dim); len] }
    }

    fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.outer.iter_mut().zip(&other.outer) {
            *a += b;
        }
    }

    pub fn mean(&self, i: usize) -> Vector {
        &self.sum[i] / self.count as f64
    }

    /// Unbiased sample covariance at index i.
    pub fn covariance(&self, i: usize) -> Mat {
        let m = self.count as f64;
        let mean = self.mean(i);
        let mut c = (&self.outer[i] - &mean * mean.transpose() * m) / (m - 1.0);
        crate::numeric::symmetrize(&mut c);
        c
    }

    /// Standard error of the mean, componentwise.
    pub fn std_error(&self, i: usize) -> Vector {
        let c = self.covariance(i);
        c.diagonal().map(|v| (v.max(0.0) / self.count as f64).sqrt())
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloStats {
    pub kind: FilterKind,
    pub runs: usize,
    /// Index i holds x_{k|k} - x_k for step k = i + 1.
    pub x_err: Moments,
    /// Index i holds d_hat_{k-1} - d_{k-1} for step k = i + 1.
    pub d_err: Moments,
    /// Filter-reported covariances from run 0 (identical across runs).
    pub reported_px: Vec<Mat>,
    pub reported_pd: Vec<Mat>,
    pub failure: Option<String>,
}

impl MonteCarloStats {
    /// Mean over the tail window of the empirical and reported trace of the state error covariance.
    pub fn steady_traces(&self) -> (f64, f64) {
        let w = tail_window(self.reported_px.len());
        let len = w.len() as f64;
        let emp: f64 = w.clone().map(|i| self.x_err.covariance(i).trace()).sum::<f64>() / len;
        let rep: f64 = w.map(|i| self.reported_px[i].trace()).sum::<f64>() / len;
        (emp, rep)
    }
}

const MC_CHUNK: usize = 16;

/// Monte Carlo over `runs` independent noise streams. Chunks of runs are
/// processed in parallel and merged in run order, so results do not depend on
/// the thread count.
pub fn monte_carlo(scenario: &Scenario, runs: usize) -> Result<Vec<MonteCarloStats>> {
    scenario.validate()?;
    if runs < 2 {
        return Err(Error::InvalidInput("Monte Carlo needs at least two runs".into()));
    }
    let dims = scenario.model.dims();
    let n_steps = scenario.horizon;
    let kinds = scenario.filters.clone();

    let reported: Vec<(Vec<Mat>, Vec<Mat>, Option<String>)> = {
        let truth = simulate_truth_run(scenario, 0)?;
        kinds
            .iter()
            .map(|&kind| {
                let mut px = Vec::new();
                let mut pd = Vec::new();
                let s = run_filter_with(kind, scenario, &truth, |o| {
                    px.push(o.px.clone());
                    pd.push(o.pd_prev.clone());
                });
                (px, pd, s.failure)
            })
            .collect()
    };
    if let Some((_, _, Some(f))) = reported.iter().find(|r| r.2.is_some()) {
        return Err(Error::InvalidInput(format!("filter failed on run 0: {f}")));
    }

    let chunks: Vec<std::ops::Range<usize>> =
        (0..runs).step_by(MC_CHUNK).map(|s| s..(s + MC_CHUNK).min(runs)).collect();
    let partials: Vec<Result<Vec<(Moments, Moments)>>> = chunks
        .par_iter()
        .map(|range| {
            let mut acc: Vec<(Moments, Moments)> =
                kinds.iter().map(|_| (Moments::new(n_steps, dims.n), Moments::new(n_steps, dims.p))).collect();
            for run in range.clone() {
                let truth = simulate_truth_run(scenario, run as u64)?;
                for (fi, &kind) in kinds.iter().enumerate() {
                    let (mx, md) = &mut acc[fi];
                    let mut i = 0usize;
                    let series = run_filter_with(kind, scenario, &truth, |o| {
                        let k = o.k;
                        let ex = &o.xhat_filt - &truth.x[k];
                        mx.outer[i] += &ex * ex.transpose();
                        mx.sum[i] += ex;
                        if o.dhat_prev.len() == dims.p {
                            let ed = &o.dhat_prev - &truth.d[k - 1];
                            md.outer[i] += &ed * ed.transpose();
                            md.sum[i] += ed;
                        }
                        i += 1;
                    });
                    if let Some(f) = series.failure {
                        return Err(Error::InvalidInput(format!("run {run}: {f}")));
                    }
                    mx.count += 1;
                    md.count += 1;
                }
            }
            Ok(acc)
        })
        .collect();

    let mut total: Vec<(Moments, Moments)> =
        kinds.iter().map(|_| (Moments::new(n_steps, dims.n), Moments::new(n_steps, dims.p))).collect();
    for part in partials {
        for (t, p) in total.iter_mut().zip(part?) {
            t.0.merge(&p.0);
            t.1.merge(&p.1);
        }
    }
    Ok(kinds
        .iter()
        .zip(total)
        .zip(reported)
        .map(|((&kind, (x_err, d_err)), (px, pd, failure))| MonteCarloStats {
            kind,
            runs,
            x_err,
            d_err,
            reported_px: px,
            reported_pd: pd,
            failure,
        })
        .collect())
}

/// Round-trippable float formatting (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    format!("{x:.16e}")
}

/// Per-step CSV: k, filter, xhat_1..n, dhat_1..p, tr_Px, tr_Pd, err_x_norm, err_d_norm.
pub fn write_steps_csv<W: Write>(mut w: W, result: &RunResult, n: usize, p: usize) -> std::io::Result<()> {
    let mut header = vec!["k".to_string(), "filter".to_string()];
    header.extend((1..=n).map(|i| format!("xhat_{i}")));
    header.extend((1..=p).map(|i| format!("dhat_{i}")));
    header.extend(["tr_Px", "tr_Pd", "err_x_norm", "err_d_norm"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for s in &result.series {
        for i in 0..s.k.len() {
            let mut row = vec![s.k[i].to_string(), s.kind.name().to_string()];
            row.extend(s.xhat[i].iter().map(|&v| fmt_f64(v)));
            if s.dhat[i].len() == p {
                row.extend(s.dhat[i].iter().map(|&v| fmt_f64(v)));
            } else {
                row.extend((0..p).map(|_| String::new()));
            }
            row.extend([s.tr_px[i], s.tr_pd[i], s.err_x_norm[i], s.err_d_norm[i]].map(fmt_f64));
            writeln!(w, "{}", row.join(","))?;
        }
        if let Some(f) = &s.failure {
            writeln!(w, "error,{},{}", s.kind.name(), csv_escape(f))?;
        }
    }
    Ok(())
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Steady-state summary CSV: filter, Px_11..Px_nn, Pd_11..Pd_pp, tr_Px, tr_Pd, status.
pub fn write_summary_csv<W: Write>(mut w: W, summaries: &[SteadySummary], n: usize, p: usize) -> std::io::Result<()> {
    let mut header = vec!["filter".to_string()];
    header.extend((1..=n).map(|i| format!("Px_{i}{i}")));
    header.extend((1..=p).map(|i| format!("Pd_{i}{i}")));
    header.extend(["tr_Px", "tr_Pd", "status"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for s in summaries {
        let mut row = vec![s.kind.name().to_string()];
        let pad = |v: &[f64], len: usize| -> Vec<String> {
            if v.len() == len {
                v.iter().map(|&x| fmt_f64(x)).collect()
            } else {
                (0..len).map(|_| String::new()).collect()
            }
        };
        row.extend(pad(&s.px_diag, n));
        row.extend(pad(&s.pd_diag, p));
        row.push(fmt_f64(s.tr_px));
        row.push(fmt_f64(s.tr_pd));
        row.push(match &s.failure {
            None => "ok".to_string(),
            Some(f) => csv_escape(&format!("error: {f}")),
        });
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
