use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use fairlens::feasibility::ScenarioSummary;
use fairlens::Ratio;
use serde::Serialize;

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

pub fn stdout(bytes: &[u8]) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes)?;
    out.flush()?;
    Ok(())
}

/// Either a file or standard output.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => write_file(p, bytes),
        None => stdout(bytes),
    }
}

/// One compact JSON object per line.
pub fn json_lines<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn trim(x: f64) -> String {
    let s = format!("{x:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

/// `2:1` style, larger side scaled to the smaller.
pub fn ratio_text(r: Ratio) -> String {
    match r {
        Ratio::Finite(x) if x >= 1.0 => format!("{}:1", trim(x)),
        Ratio::Finite(x) if x > 0.0 => format!("1:{}", trim(1.0 / x)),
        Ratio::Finite(_) => "0:1".into(),
        Ratio::Infinite => "1:0".into(),
        Ratio::Undefined => "--".into(),
    }
}

fn rate(v: Option<f64>) -> String {
    v.map_or_else(|| "--".into(), |x| format!("{x:.2}"))
}

pub fn scenario_text(s: &ScenarioSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario {}", s.name);
    if !s.notes.is_empty() {
        let _ = writeln!(out, "  {}", s.notes);
    }
    for d in &s.discrepancies {
        let _ = writeln!(out, "  note: {d}");
    }
    for (g, summary) in &s.groups {
        let t = &summary.table;
        let q = &summary.quantities;
        let _ = writeln!(out, "\n  group {g}");
        let _ = writeln!(out, "    {:<16}{:>16}{:>20}{:>10}", "", "predicted fail", "predicted success", "total");
        let _ = writeln!(out, "    {:<16}{:>16}{:>20}{:>10}", "actual fail", t.tp(), t.fn_(), t.positives());
        let _ = writeln!(out, "    {:<16}{:>16}{:>20}{:>10}", "actual success", t.fp(), t.tn(), t.negatives());
        let _ = writeln!(
            out,
            "    {:<16}{:>16}{:>20}{:>10}",
            "total",
            t.tp() + t.fp(),
            t.fn_() + t.tn(),
            t.n()
        );
        let rows = [
            ("base rate (fail)", rate(Some(q.base_rate_fail))),
            ("base rate (success)", rate(Some(q.base_rate_success))),
            ("predicted fail share", rate(Some(q.pred_fail_share))),
            ("predicted success share", rate(Some(q.pred_success_share))),
            ("overall error", rate(Some(q.overall_error))),
            ("false negative rate", rate(q.fnr)),
            ("false positive rate", rate(q.fpr)),
            ("failure prediction error", rate(q.fail_pred_error)),
            ("success prediction error", rate(q.success_pred_error)),
            ("cost ratio (FN:FP)", ratio_text(q.cost_ratio_fn_to_fp)),
        ];
        for (label, value) in rows {
            let _ = writeln!(out, "    {label:<28}{value}");
        }
    }
    out
}
