//! `sise`: structural analysis, filter runs and filter comparisons from a config file.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 structural or dominance
//! check failed, 3 numerical failure during a run.

mod config;
mod report;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use config::{ConfigDocument, Overrides};
use sise_core::sim::{monte_carlo, run_scenario, write_steps_csv, write_summary_csv, MonteCarloStats, Scenario};
use sise_core::structural::analyze;
use sise_core::FilterKind;

#[derive(Parser)]
#[command(name = "sise", version, about = "Simultaneous input and state estimation")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Structural checks: strong observability and detectability, invariant zeros, convergence.
    Analyze(Common),
    /// Simulate the scenario and write per-step and steady-state CSV files.
    Run(Common),
    /// Run two or more filters on the same data and compare steady-state covariances.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Noise seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding SISE_OUT_DIR and the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Abort before running when a structural check fails.
    #[arg(long)]
    strict: bool,
    /// Monte Carlo runs, overriding the config.
    #[arg(long)]
    mc: Option<usize>,
    /// Comma-separated filter list (ulise, plise, cywz, kalman), overriding the config.
    #[arg(long, value_delimiter = ',')]
    filters: Option<Vec<FilterKind>>,
}

enum Failure {
    Usage(anyhow::Error),
    Check(String),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Check(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

type Outcome = Result<(), Failure>;

fn usage(e: anyhow::Error) -> Failure {
    Failure::Usage(e)
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

impl Common {
    fn load(&self) -> Result<(ConfigDocument, Scenario), Failure> {
        let doc = config::load(&self.config).map_err(usage)?;
        let ov = Overrides { seed: self.seed, monte_carlo: self.mc, filters: self.filters.clone() };
        let sc = doc.scenario(&ov).map_err(usage)?;
        Ok((doc, sc))
    }

    fn out_dir(&self, doc: &ConfigDocument) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os("SISE_OUT_DIR").map(PathBuf::from))
            .or_else(|| doc.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("sise-out"))
    }
}

/// Write via a temporary file in the target directory, then rename into place.
fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> anyhow::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Structural verdicts for the requested checks; a failure is returned under --strict
/// and only reported otherwise.
fn precheck(doc: &ConfigDocument, sc: &Scenario, strict: bool) -> Outcome {
    let step = sc.model.invariant_step().expect("config models are time-invariant");
    let rep = analyze(step, &sc.tol).map_err(runtime)?;
    let failed: Vec<&str> =
        doc.analysis.checks.iter().filter(|&&c| !report::check_passes(&rep, c)).map(|c| c.name()).collect();
    if failed.is_empty() {
        return Ok(());
    }
    let msg = format!("structural check failed: {}", failed.join(", "));
    if strict {
        Err(Failure::Check(msg))
    } else {
        eprintln!("warning: {msg}; continuing");
        Ok(())
    }
}

fn cmd_analyze(args: &Common) -> Outcome {
    let (doc, sc) = args.load()?;
    let step = sc.model.invariant_step().expect("config models are time-invariant");
    let rep = analyze(step, &sc.tol).map_err(runtime)?;
    let (text, ok) = report::structural_text(step, &rep, &doc.analysis.checks);
    print!("{text}");
    if ok {
        Ok(())
    } else {
        Err(Failure::Check("structural check failed".into()))
    }
}

fn write_monte_carlo(path: &Path, stats: &[MonteCarloStats]) -> anyhow::Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "filter,runs,empirical_tr_Px,reported_tr_Px")?;
        for s in stats {
            let (emp, rep) = s.steady_traces();
            let f = sise_core::sim::fmt_f64;
            writeln!(w, "{},{},{},{}", s.kind.name(), s.runs, f(emp), f(rep))?;
        }
        Ok(())
    })
}

/// Runs the scenario, writes the CSV files and returns the steady summaries.
fn simulate(args: &Common, doc: &ConfigDocument, sc: &Scenario) -> Result<Vec<sise_core::sim::SteadySummary>, Failure> {
    precheck(doc, sc, args.strict)?;
    let res = run_scenario(sc).map_err(runtime)?;
    let dims = sc.model.dims();
    let dir = args.out_dir(doc);
    let steps = dir.join(&doc.output.steps);
    write_atomic(&steps, |w| write_steps_csv(w, &res, dims.n, dims.p)).map_err(usage)?;
    let summary = dir.join(&doc.output.summary);
    write_atomic(&summary, |w| write_summary_csv(w, &res.summaries, dims.n, dims.p)).map_err(usage)?;
    if let Some(f) = res.series.iter().find_map(|s| s.failure.as_ref().map(|f| format!("{}: {f}", s.kind))) {
        return Err(Failure::Runtime(anyhow!("{f} (partial output in {})", steps.display())));
    }
    if sc.monte_carlo > 1 {
        let stats = monte_carlo(sc, sc.monte_carlo).map_err(runtime)?;
        write_monte_carlo(&dir.join("monte_carlo.csv"), &stats).map_err(usage)?;
    }
    Ok(res.summaries)
}

fn cmd_run(args: &Common) -> Outcome {
    let (doc, sc) = args.load()?;
    let summaries = simulate(args, &doc, &sc)?;
    print!("{}", report::comparison_text(&summaries));
    Ok(())
}

fn cmd_compare(args: &Common) -> Outcome {
    let (doc, sc) = args.load()?;
    if sc.filters.len() < 2 {
        return Err(usage(anyhow!("compare needs at least two filters, got {}", sc.filters.len())));
    }
    let summaries = simulate(args, &doc, &sc)?;
    print!("{}", report::comparison_text(&summaries));
    let violations = report::dominance_violations(&summaries);
    if !summaries.iter().any(|s| s.kind == FilterKind::Ulise) {
        println!("dominance: not checked (ULISE not requested)");
        return Ok(());
    }
    if violations.is_empty() {
        println!("dominance: ok");
        Ok(())
    } else {
        for v in &violations {
            println!("dominance violated: {v}");
        }
        Err(Failure::Check(format!("{} dominance violation(s)", violations.len())))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.cmd {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(e) | Failure::Runtime(e) => eprintln!("error: {e:#}"),
                Failure::Check(m) => eprintln!("{m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
