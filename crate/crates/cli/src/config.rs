//! Configuration document: model, scenario, analysis and output blocks.
//!
//! Matrices are nested arrays, one inner array per row. A model block with `dt`
//! is continuous-time and is discretized with a zero-order hold before use.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use sise_core::model::{c2d_zoh, C2dOptions, ContinuousModel};
use sise_core::sim::{Scenario, SignalSpec};
use sise_core::{FilterKind, GammaPolicy, Mat, SystemModel, SystemStep, Tolerance, Vector};

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub model: ModelBlock,
    pub scenario: ScenarioBlock,
    #[serde(default)]
    pub analysis: AnalysisBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub tolerance: ToleranceBlock,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub a: Rows,
    #[serde(default)]
    pub b: Rows,
    pub c: Rows,
    #[serde(default)]
    pub d: Rows,
    #[serde(default)]
    pub g: Rows,
    #[serde(default)]
    pub h: Rows,
    pub q: Rows,
    pub r: Rows,
    /// Sampling period; present only for continuous-time models.
    pub dt: Option<f64>,
    #[serde(default)]
    pub scale_r_by_dt: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioBlock {
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    pub filters: Vec<FilterKind>,
    #[serde(default = "one")]
    pub monte_carlo: usize,
    #[serde(default)]
    pub gamma: GammaPolicy,
    pub x0_true: Option<Vec<f64>>,
    pub x0_mean: Option<Vec<f64>>,
    pub p0: Option<Rows>,
    #[serde(default)]
    pub d: Vec<SignalSpec>,
    #[serde(default)]
    pub u: Vec<SignalSpec>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    StrongObservability,
    StrongDetectability,
    UliseConvergence,
    PliseStability,
}

impl Check {
    pub fn name(&self) -> &'static str {
        match self {
            Check::StrongObservability => "strong_observability",
            Check::StrongDetectability => "strong_detectability",
            Check::UliseConvergence => "ulise_convergence",
            Check::PliseStability => "plise_stability",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisBlock {
    #[serde(default = "default_checks")]
    pub checks: Vec<Check>,
}

fn default_checks() -> Vec<Check> {
    vec![Check::StrongDetectability, Check::UliseConvergence]
}

impl Default for AnalysisBlock {
    fn default() -> Self {
        AnalysisBlock { checks: default_checks() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
    #[serde(default = "steps_name")]
    pub steps: String,
    #[serde(default = "summary_name")]
    pub summary: String,
}

fn steps_name() -> String {
    "steps.csv".into()
}

fn summary_name() -> String {
    "summary.csv".into()
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { dir: None, steps: steps_name(), summary: summary_name() }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceBlock {
    pub rank_rel: Option<f64>,
    pub zero_abs: Option<f64>,
    pub unit_circle_eps: Option<f64>,
}

impl ToleranceBlock {
    pub fn resolve(&self) -> Result<Tolerance> {
        let d = Tolerance::default();
        let t = Tolerance {
            rank_rel: self.rank_rel.unwrap_or(d.rank_rel),
            zero_abs: self.zero_abs.unwrap_or(d.zero_abs),
            unit_circle_eps: self.unit_circle_eps.unwrap_or(d.unit_circle_eps),
        };
        t.validate().context("tolerance")?;
        Ok(t)
    }
}

pub fn load(path: &Path) -> Result<ConfigDocument> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text).with_context(|| format!("in {}", path.display()))
}

pub fn parse(text: &str) -> Result<ConfigDocument> {
    Ok(toml::from_str(text)?)
}

/// Row-major nested array to a matrix. An empty array means `rows` x 0.
fn matrix(key: &str, data: &Rows, rows: usize) -> Result<Mat> {
    if data.is_empty() {
        return Ok(Mat::zeros(rows, 0));
    }
    let cols = data[0].len();
    if let Some(i) = data.iter().position(|r| r.len() != cols) {
        bail!("model.{key}: row {i} has {} entries, row 0 has {cols}", data[i].len());
    }
    if data.iter().flatten().any(|x| !x.is_finite()) {
        bail!("{key}: entries must be finite");
    }
    Ok(Mat::from_row_iterator(data.len(), cols, data.iter().flatten().copied()))
}

impl ModelBlock {
    /// Discrete-time model, after ZOH discretization when the block is continuous.
    pub fn system(&self) -> Result<SystemModel> {
        let n = self.a.len();
        let l = self.c.len();
        let a = matrix("a", &self.a, n)?;
        let b = matrix("b", &self.b, n)?;
        let c = matrix("c", &self.c, l)?;
        let g = matrix("g", &self.g, n)?;
        let m = b.ncols();
        let d = if self.d.is_empty() { Mat::zeros(l, m) } else { matrix("d", &self.d, l)? };
        let h = if self.h.is_empty() { Mat::zeros(l, g.ncols()) } else { matrix("h", &self.h, l)? };
        let q = matrix("q", &self.q, n)?;
        let r = matrix("r", &self.r, l)?;
        let model = match self.dt {
            Some(dt) => {
                let cm = ContinuousModel { a, b, g, c, d, h, q, r, dt };
                c2d_zoh(&cm, C2dOptions { scale_r_by_dt: self.scale_r_by_dt })?
            }
            None => {
                if self.scale_r_by_dt {
                    bail!("model.scale_r_by_dt needs model.dt");
                }
                SystemModel::time_invariant(SystemStep { a, b, c, d, g, h, q, r })?
            }
        };
        Ok(model)
    }
}

/// Values given on the command line that take precedence over the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub monte_carlo: Option<usize>,
    pub filters: Option<Vec<FilterKind>>,
}

impl ConfigDocument {
    pub fn scenario(&self, ov: &Overrides) -> Result<Scenario> {
        let model = self.model.system()?;
        let dims = model.dims();
        let sc = &self.scenario;
        let vector = |key: &str, v: &Option<Vec<f64>>| -> Result<Vector> {
            match v {
                None => Ok(Vector::zeros(dims.n)),
                Some(v) if v.len() == dims.n => Ok(Vector::from_column_slice(v)),
                Some(v) => bail!("scenario.{key} has {} entries, expected n = {}", v.len(), dims.n),
            }
        };
        let p0 = match &sc.p0 {
            None => Mat::identity(dims.n, dims.n),
            Some(rows) => matrix("p0", rows, dims.n).context("scenario.p0")?,
        };
        let scenario = Scenario {
            model,
            horizon: sc.horizon,
            d_signals: sc.d.clone(),
            u_signals: sc.u.clone(),
            x0_true: vector("x0_true", &sc.x0_true)?,
            x0_mean: vector("x0_mean", &sc.x0_mean)?,
            p0,
            noise_seed: ov.seed.unwrap_or(sc.seed),
            filters: ov.filters.clone().unwrap_or_else(|| sc.filters.clone()),
            monte_carlo: ov.monte_carlo.unwrap_or(sc.monte_carlo),
            gamma: sc.gamma,
            tol: self.tolerance.resolve()?,
        };
        scenario.validate().context("scenario")?;
        if scenario.filters.is_empty() {
            bail!("scenario.filters is empty");
        }
        Ok(scenario)
    }
}
