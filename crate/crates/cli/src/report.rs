//! Text rendering of structural reports and filter comparisons.

use std::fmt::Write;

use num_complex::Complex64;
use sise_core::sim::SteadySummary;
use sise_core::structural::{StructuralReport, UnitCircleRank};
use sise_core::{FilterKind, SystemStep};

use crate::config::Check;

/// Shortest decimal that still shows six significant digits, trailing zeros dropped.
fn short(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    let s = format!("{:.6}", x);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

pub fn fmt_zero(z: &Complex64) -> String {
    if z.im.abs() < 1e-9 {
        short(z.re)
    } else if z.im > 0.0 {
        format!("{}+{}i", short(z.re), short(z.im))
    } else {
        format!("{}-{}i", short(z.re), short(-z.im))
    }
}

pub fn sorted_zeros(rep: &StructuralReport) -> Vec<Complex64> {
    let mut z = rep.zeros().to_vec();
    z.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    z
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn unit_circle(uc: &Option<UnitCircleRank>) -> String {
    match uc {
        Some(u) if !u.full_rank => format!(" (rank drops on the unit circle at angle {:.4} rad)", u.worst_omega),
        _ => String::new(),
    }
}

pub fn check_passes(rep: &StructuralReport, check: Check) -> bool {
    match check {
        Check::StrongObservability => rep.strongly_observable(),
        Check::StrongDetectability => rep.strongly_detectable(),
        Check::UliseConvergence => rep.ulise.convergent,
        Check::PliseStability => rep.plise.bounded,
    }
}

/// Returns the rendered report and whether every requested check passed.
pub fn structural_text(step: &SystemStep, rep: &StructuralReport, checks: &[Check]) -> (String, bool) {
    let dims = step.dims();
    let so = &rep.strong_observability;
    let mut out = String::new();
    let _ = writeln!(out, "dimensions: n = {}, m = {}, p = {}, l = {}, rank(H) = {}", dims.n, dims.m, dims.p, dims.l, rep.p_h);
    let _ = writeln!(out, "rank(C2 G2): {} (required {})", so.c2g2_rank, so.c2g2_required);
    let obs = if dims.p == 0 {
        format!("{} (classical)", yes(so.observable))
    } else {
        match so.witness {
            Some(w) => format!("yes (window length {w})"),
            None => "no".to_string(),
        }
    };
    let _ = writeln!(out, "strong observability: {obs}");
    let zeros: Vec<String> = sorted_zeros(rep).iter().map(fmt_zero).collect();
    let zeros = if zeros.is_empty() { "none".to_string() } else { zeros.join(", ") };
    let det = &rep.strong_detectability;
    let degenerate = if det.zeros.degenerate() { " (degenerate pencil)" } else { "" };
    let _ = writeln!(out, "strongly detectable: {}; zeros: {zeros}{degenerate}", yes(det.detectable));
    let ulise = match &rep.ulise.precondition_failed {
        Some(msg) => format!("no ({msg})"),
        None => format!("{}{}", yes(rep.ulise.convergent), unit_circle(&rep.ulise.unit_circle)),
    };
    let _ = writeln!(out, "ULISE gain convergence: {ulise}");
    let plise = match &rep.plise.precondition_failed {
        Some(msg) => format!("not evaluated ({msg})"),
        None => format!("{}{}", yes(rep.plise.bounded), unit_circle(&rep.plise.unit_circle)),
    };
    let _ = writeln!(out, "PLISE bounded-error condition: {plise}");
    let mut all = true;
    for &c in checks {
        let ok = check_passes(rep, c);
        all &= ok;
        let _ = writeln!(out, "check {}: {}", c.name(), if ok { "pass" } else { "FAIL" });
    }
    (out, all)
}

/// Side-by-side steady-state table, one column per filter.
pub fn comparison_text(summaries: &[SteadySummary]) -> String {
    let mut out = String::new();
    let n = summaries.iter().map(|s| s.px_diag.len()).max().unwrap_or(0);
    let p = summaries.iter().map(|s| s.pd_diag.len()).max().unwrap_or(0);
    let _ = write!(out, "{:<8}", "entry");
    for s in summaries {
        let _ = write!(out, " {:>12}", s.kind.name());
    }
    out.push('\n');
    let mut row = |label: String, get: &dyn Fn(&SteadySummary) -> Option<f64>| {
        let _ = write!(out, "{label:<8}");
        for s in summaries {
            match get(s) {
                Some(v) if v.is_finite() => {
                    let _ = write!(out, " {v:>12.6}");
                }
                _ => {
                    let _ = write!(out, " {:>12}", "-");
                }
            }
        }
        out.push('\n');
    };
    for i in 0..n {
        row(format!("Px_{}{}", i + 1, i + 1), &|s| s.px_diag.get(i).copied());
    }
    for i in 0..p {
        row(format!("Pd_{}{}", i + 1, i + 1), &|s| s.pd_diag.get(i).copied());
    }
    row("tr_Px".into(), &|s| Some(s.tr_px));
    row("tr_Pd".into(), &|s| Some(s.tr_pd));
    out
}

/// ULISE is optimal among linear unbiased estimators, so no other filter may report
/// a smaller steady trace. Returns one line per violation.
pub fn dominance_violations(summaries: &[SteadySummary]) -> Vec<String> {
    let Some(u) = summaries.iter().find(|s| s.kind == FilterKind::Ulise && s.failure.is_none()) else {
        return vec![];
    };
    let mut out = Vec::new();
    for s in summaries.iter().filter(|s| s.kind != FilterKind::Ulise && s.kind != FilterKind::Kalman && s.failure.is_none()) {
        if u.tr_px > s.tr_px + 1e-10 {
            out.push(format!("trace(Px): ULISE {:.6} > {} {:.6}", u.tr_px, s.kind, s.tr_px));
        }
        if u.tr_pd > s.tr_pd + 1e-10 {
            out.push(format!("trace(Pd): ULISE {:.6} > {} {:.6}", u.tr_pd, s.kind, s.tr_pd));
        }
    }
    out
}
