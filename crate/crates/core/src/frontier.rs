//! Threshold frontier: one group's quantities and every check's disparity as that group's
//! score cutoff sweeps an even grid while the other groups stay at a fixed cutoff.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::confusion::{table_from_scores, ConfusionTable, Ratio, ABOVE_ONE};
use crate::correct_in::check_disparity;
use crate::confusion::GroupedOutcomes;
use crate::error::{Error, Result};
use crate::fairness::CheckId;
use crate::par::Execution;

/// Cutoff held by the groups that are not being swept.
pub const DEFAULT_OTHER_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierRow {
    pub group: String,
    pub threshold: f64,
    pub table: ConfusionTable,
    pub n: f64,
    pub base_rate_fail: f64,
    pub pred_fail_share: f64,
    pub overall_accuracy: f64,
    pub fnr: Option<f64>,
    pub fpr: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub fail_pred_error: Option<f64>,
    pub success_pred_error: Option<f64>,
    pub cost_ratio_fn_to_fp: Ratio,
    pub disparities: BTreeMap<CheckId, Option<f64>>,
}

/// `k` evenly spaced cutoffs from 0 to 1; the last is `1 + eps` so that the final row
/// predicts success for everyone, including records scored exactly 1.
pub fn frontier_thresholds(k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("grid needs at least 2 points, got {k}")));
    }
    let mut ts: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
    ts[k - 1] = ABOVE_ONE;
    Ok(ts)
}

pub fn frontier(data: &GroupedOutcomes, group: &str, k: usize, exec: Execution) -> Result<Vec<FrontierRow>> {
    frontier_with(data, group, k, DEFAULT_OTHER_THRESHOLD, exec)
}

pub fn frontier_with(
    data: &GroupedOutcomes,
    group: &str,
    k: usize,
    other_threshold: f64,
    exec: Execution,
) -> Result<Vec<FrontierRow>> {
    let thresholds = frontier_thresholds(k)?;
    let groups = data.groups();
    if !groups.iter().any(|g| g == group) {
        return Err(Error::UnknownGroup(group.to_string()));
    }
    if let Some(r) = data.records.iter().find(|r| r.score.is_none()) {
        return Err(Error::MissingScore(r.id.clone()));
    }
    let others: BTreeMap<String, ConfusionTable> = groups
        .iter()
        .filter(|g| *g != group)
        .map(|g| Ok((g.clone(), table_from_scores(data, g, other_threshold)?)))
        .collect::<Result<_>>()?;
    let rows = exec.map(&thresholds, |&t| -> Result<FrontierRow> {
        let table = table_from_scores(data, group, t)?;
        let mut all = others.clone();
        all.insert(group.to_string(), table);
        let tables: Vec<ConfusionTable> = all.into_values().collect();
        let q = table.quantities()?;
        Ok(FrontierRow {
            group: group.to_string(),
            threshold: t,
            table,
            n: q.n,
            base_rate_fail: q.base_rate_fail,
            pred_fail_share: q.pred_fail_share,
            overall_accuracy: q.overall_accuracy(),
            fnr: q.fnr,
            fpr: q.fpr,
            ppv: q.ppv(),
            npv: q.npv(),
            fail_pred_error: q.fail_pred_error,
            success_pred_error: q.success_pred_error,
            cost_ratio_fn_to_fp: q.cost_ratio_fn_to_fp,
            disparities: CheckId::ALL
                .iter()
                .map(|&id| (id, check_disparity(id, &tables)))
                .collect(),
        })
    });
    rows.into_iter().collect()
}

/// CSV header of [`emit_frontier_csv`].
pub fn frontier_columns() -> Vec<String> {
    let mut cols: Vec<String> = [
        "group", "threshold", "tp", "fn", "fp", "tn", "n", "base_rate_fail", "pred_fail_share",
        "overall_accuracy", "fnr", "fpr", "ppv", "npv", "fail_pred_error", "success_pred_error",
        "cost_ratio_fn_to_fp",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend(CheckId::ALL.iter().map(|id| format!("disparity_{id}")));
    cols
}

/// Rows as CSV; undefined values are empty cells, an infinite cost ratio is `inf`.
pub fn emit_frontier_csv(rows: &[FrontierRow], sink: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    w.write_record(frontier_columns()).map_err(io)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let mut rec = vec![
            r.group.clone(),
            r.threshold.to_string(),
            r.table.tp().to_string(),
            r.table.fn_().to_string(),
            r.table.fp().to_string(),
            r.table.tn().to_string(),
            r.n.to_string(),
            r.base_rate_fail.to_string(),
            r.pred_fail_share.to_string(),
            r.overall_accuracy.to_string(),
            opt(r.fnr),
            opt(r.fpr),
            opt(r.ppv),
            opt(r.npv),
            opt(r.fail_pred_error),
            opt(r.success_pred_error),
            match r.cost_ratio_fn_to_fp {
                Ratio::Finite(x) => x.to_string(),
                Ratio::Infinite => "inf".into(),
                Ratio::Undefined => String::new(),
            },
        ];
        rec.extend(CheckId::ALL.iter().map(|id| opt(r.disparities[id])));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confusion::tables_at_thresholds;
    use crate::data::synthetic::{generate_synthetic, GroupSpec, SyntheticSpec};
    use crate::fairness::evaluate_all;

    fn data() -> GroupedOutcomes {
        generate_synthetic(&SyntheticSpec::new(
            9,
            vec![GroupSpec::new("a", 800, 0.3, 1.2), GroupSpec::new("b", 600, 0.15, 0.8)],
        ))
        .unwrap()
    }

    #[test]
    fn two_point_grid_is_the_boundary() {
        let rows = frontier(&data(), "a", 2, Execution::default()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].threshold, 0.0);
        assert_eq!(rows[1].threshold, ABOVE_ONE);
        assert_eq!(rows[0].pred_fail_share, 1.0);
        assert_eq!(rows[1].pred_fail_share, 0.0);
    }

    #[test]
    fn midpoint_row_matches_full_report() {
        let d = data();
        let rows = frontier(&d, "b", 3, Execution::default()).unwrap();
        let mid = &rows[1];
        assert_eq!(mid.threshold, 0.5);
        let th = [("a".to_string(), 0.5), ("b".to_string(), 0.5)].into();
        let report = evaluate_all(&tables_at_thresholds(&d, &th).unwrap(), 0.01).unwrap();
        assert_eq!(report.groups["b"].table, mid.table);
        for c in &report.checks {
            assert_eq!(c.max_abs_disparity, mid.disparities[&c.name], "{}", c.name);
        }
    }

    #[test]
    fn fail_share_is_monotone() {
        let rows = frontier(&data(), "a", 101, Execution::default()).unwrap();
        assert!(rows.windows(2).all(|w| w[1].pred_fail_share <= w[0].pred_fail_share));
        let seq = frontier(&data(), "a", 101, Execution::Sequential).unwrap();
        assert_eq!(rows, seq);
    }

    #[test]
    fn csv_shape() {
        let rows = frontier(&data(), "a", 5, Execution::default()).unwrap();
        let mut out = Vec::new();
        emit_frontier_csv(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0].split(',').count(), frontier_columns().len());
        assert!(lines[0].ends_with("disparity_total_fairness"));
    }

    #[test]
    fn errors() {
        let d = data();
        assert!(matches!(frontier(&d, "zz", 5, Execution::default()), Err(Error::UnknownGroup(_))));
        assert!(frontier(&d, "a", 1, Execution::default()).is_err());
        let mut no_scores = d.clone();
        no_scores.records[3].score = None;
        no_scores.records[3].yhat = Some(true);
        assert!(matches!(
            frontier(&no_scores, "a", 5, Execution::default()),
            Err(Error::MissingScore(_))
        ));
    }
}
