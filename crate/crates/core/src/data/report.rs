//! Report serialization: versioned JSON with sorted keys and six significant digits, or a
//! markdown summary grid.

use std::fmt::Write as _;
use std::str::FromStr;

use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};

use crate::confusion::Ratio;
use crate::error::{Error, Result};
use crate::fairness::{CheckStatus, FairnessReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "md" | "markdown" => Ok(Self::Markdown),
            other => Err(Error::InvalidParameter(format!(
                "unknown report format `{other}` (expected json or markdown)"
            ))),
        }
    }
}

impl ReportFormat {
    /// Format implied by a file extension (`.md` is markdown, anything else JSON).
    pub fn for_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("md") | Some("markdown") => Self::Markdown,
            _ => Self::Json,
        }
    }
}

/// Hex SHA-256 of raw dataset bytes.
pub fn dataset_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn round_significant(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x)
        .parse()
        .unwrap_or(x)
}

/// Rebuild `v` with keys in sorted order and every float rounded to six significant digits.
pub fn canonical_json(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            let mut out = Map::new();
            for (k, v) in entries {
                out.insert(k, canonical_json(v));
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonical_json).collect()),
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            Number::from_f64(round_significant(x, 6)).map_or(Value::Null, Value::Number)
        }
        other => other,
    }
}

/// Canonical pretty JSON of any serializable value, newline-terminated.
pub fn to_canonical_json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let v = canonical_json(serde_json::to_value(value)?);
    let mut out = serde_json::to_vec_pretty(&v)?;
    out.push(b'\n');
    Ok(out)
}

pub fn emit_report(report: &FairnessReport, format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Json => to_canonical_json(report),
        ReportFormat::Markdown => Ok(markdown(report).into_bytes()),
    }
}

pub fn parse_report(bytes: &[u8]) -> Result<FairnessReport> {
    Ok(serde_json::from_slice(bytes)?)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "--".to_string(), |x| format!("{x:.2}"))
}

fn title(group: &str) -> String {
    let mut chars = group.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn status(s: CheckStatus) -> &'static str {
    match s {
        CheckStatus::Satisfied => "satisfied",
        CheckStatus::Unsatisfied => "unsatisfied",
        CheckStatus::Indeterminate => "indeterminate",
    }
}

fn markdown(r: &FairnessReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Fairness report\n");
    let _ = writeln!(s, "Tolerance: {}\n", r.tolerance);
    s.push_str(
        "| Group | N | Base rate (fail) | Predicted fail share | Fail prediction error \
         | Success prediction error | Success prediction accuracy | FNR | FPR \
         | Overall accuracy | FN:FP |\n",
    );
    s.push_str("|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n");
    for (g, summary) in &r.groups {
        let q = &summary.quantities;
        let ratio = match q.cost_ratio_fn_to_fp {
            Ratio::Finite(x) => format!("{x:.2}"),
            Ratio::Infinite => "inf".into(),
            Ratio::Undefined => "--".into(),
        };
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            title(g),
            q.n,
            cell(Some(q.base_rate_fail)),
            cell(Some(q.pred_fail_share)),
            cell(q.fail_pred_error),
            cell(q.success_pred_error),
            cell(q.npv()),
            cell(q.fnr),
            cell(q.fpr),
            cell(Some(q.overall_accuracy())),
            ratio,
        );
    }
    s.push_str("\n| Check | Status | Max disparity |\n|---|---|---:|\n");
    for c in &r.checks {
        let d = c
            .max_abs_disparity
            .map_or_else(|| "--".to_string(), |d| format!("{d:.4}"));
        let _ = writeln!(s, "| {} | {} | {} |", c.name, status(c.status), d);
    }
    let f = &r.feasibility;
    let _ = writeln!(
        s,
        "\nJoint feasibility of conditional use accuracy and error-rate equality: {} ({})",
        if f.joint_feasible { "possible" } else { "impossible" },
        serde_json::to_value(f.reason).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
    );
    let m = &r.metadata;
    if let Some(h) = &m.dataset_hash {
        let _ = writeln!(s, "\nDataset SHA-256: `{h}`");
    }
    if let Some(seed) = m.seed {
        let _ = writeln!(s, "\nSeed: {seed}");
    }
    if let Some(p) = &m.threshold_policy {
        let list: Vec<String> = p
            .per_group_threshold
            .iter()
            .map(|(g, t)| format!("{g} = {t}"))
            .collect();
        let _ = writeln!(s, "\nThresholds: {}", list.join(", "));
    }
    if let Some(p) = &m.mixing_policy {
        for g in &p.groups {
            let _ = writeln!(s, "\nMixing {}: p0 = {:.6}, p1 = {:.6}", g.group, g.p0, g.p1);
        }
    }
    for note in &m.notes {
        let _ = writeln!(s, "\n{note}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confusion::{ConfusionTable, GroupTables};
    use crate::fairness::evaluate_all;

    fn report() -> FairnessReport {
        let tables: GroupTables = [
            ("female", [300.0, 200.0, 200.0, 300.0]),
            ("male", [600.0, 400.0, 200.0, 300.0]),
        ]
        .into_iter()
        .map(|(g, c)| (g.to_string(), ConfusionTable::new(c[0], c[1], c[2], c[3]).unwrap()))
        .collect();
        let mut r = evaluate_all(&tables, 0.05).unwrap();
        r.metadata.seed = Some(7);
        r
    }

    #[test]
    fn markdown_grid_shows_printed_values() {
        let md = String::from_utf8(emit_report(&report(), ReportFormat::Markdown).unwrap()).unwrap();
        let male = md.lines().find(|l| l.starts_with("| Male |")).unwrap();
        for v in ["0.40", "0.25", "0.57", "2.00"] {
            assert!(male.contains(v), "{v} missing from {male}");
        }
        assert!(md.lines().any(|l| l.starts_with("| Female |")));
        assert!(md.contains("| treatment_equality | unsatisfied |"));
    }

    #[test]
    fn json_is_deterministic_and_versioned() {
        let a = emit_report(&report(), ReportFormat::Json).unwrap();
        let b = emit_report(&report(), ReportFormat::Json).unwrap();
        assert_eq!(a, b);
        let v: Value = serde_json::from_slice(&a).unwrap();
        assert_eq!(v["schema"], "fairlens-report/1");
        assert_eq!(v["metadata"]["seed"], 7);
        let text = String::from_utf8(a).unwrap();
        let keys: Vec<usize> = ["\"checks\"", "\"feasibility\"", "\"groups\"", "\"metadata\"", "\"schema\""]
            .iter()
            .map(|k| text.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn json_round_trip() {
        let r = report();
        let bytes = emit_report(&r, ReportFormat::Json).unwrap();
        let back = parse_report(&bytes).unwrap();
        assert_eq!(back.checks.len(), 6);
        assert_eq!(back.groups.keys().collect::<Vec<_>>(), r.groups.keys().collect::<Vec<_>>());
        for (a, b) in back.checks.iter().zip(&r.checks) {
            assert_eq!(a.status, b.status);
            match (a.max_abs_disparity, b.max_abs_disparity) {
                (Some(x), Some(y)) => assert!((x - y).abs() <= 5e-6 * y.abs()),
                (x, y) => assert_eq!(x, y),
            }
        }
        assert_eq!(emit_report(&back, ReportFormat::Json).unwrap(), bytes);
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(round_significant(2.0 / 3.0, 6), 0.666667);
        assert_eq!(round_significant(1234567.0, 6), 1234570.0);
        assert_eq!(round_significant(0.0, 6), 0.0);
        let v = canonical_json(serde_json::json!({"b": 1.0 / 3.0, "a": [2u64, 0.1 + 0.2]}));
        assert_eq!(v.to_string(), r#"{"a":[2,0.3],"b":0.333333}"#);
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(
            dataset_hash(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
