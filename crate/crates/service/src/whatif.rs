use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use fairlens::correct_in::ThresholdPolicy;
use fairlens::correct_post::{expected_tables, solve_mixing, MixingOptions, MixingPolicy, RateConstraint};
use fairlens::{build_tables, evaluate_all, tables_at_thresholds, FairnessReport, GroupTables, DEFAULT_TOLERANCE};

use crate::error::ApiError;
use crate::store::Dataset;

/// A what-if request: exactly one of `thresholds`, `cost_ratio`, `mixing_policy` or
/// `equalize`, plus an optional report tolerance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    /// Score cutoff for every group.
    #[serde(default)]
    pub thresholds: Option<BTreeMap<String, f64>>,
    /// FN:FP cost ratio, turned into a common cutoff `1 / (1 + ratio)`.
    #[serde(default)]
    pub cost_ratio: Option<f64>,
    /// Per-group mixing probabilities applied to the baseline predictions.
    #[serde(default)]
    pub mixing_policy: Option<MixingPolicy>,
    /// Solve for the error-minimising mixing policy under this rate constraint.
    #[serde(default)]
    pub equalize: Option<RateConstraint>,
    #[serde(default)]
    pub tol: Option<f64>,
}

/// Tables of the unadjusted classifier: the stored predictions when every record has one,
/// otherwise the scores cut at .5.
fn baseline_tables(ds: &Dataset) -> Result<GroupTables, ApiError> {
    if ds.data.has_predictions() {
        Ok(build_tables(&ds.data)?)
    } else {
        let th = ds.data.groups().into_iter().map(|g| (g, 0.5)).collect();
        Ok(tables_at_thresholds(&ds.data, &th)?)
    }
}

fn check_thresholds(ds: &Dataset, th: &BTreeMap<String, f64>) -> Result<(), ApiError> {
    let groups = ds.data.groups();
    if let Some(g) = th.keys().find(|g| !groups.contains(g)) {
        return Err(ApiError::unprocessable(format!("threshold for unknown group `{g}`")));
    }
    if let Some(g) = groups.iter().find(|g| !th.contains_key(*g)) {
        return Err(ApiError::unprocessable(format!("no threshold for group `{g}`")));
    }
    Ok(())
}

pub fn evaluate_whatif(ds: &Dataset, req: &WhatIfRequest) -> Result<FairnessReport, ApiError> {
    let modes = [
        req.thresholds.is_some(),
        req.cost_ratio.is_some(),
        req.mixing_policy.is_some(),
        req.equalize.is_some(),
    ]
    .iter()
    .filter(|&&m| m)
    .count();
    if modes != 1 {
        return Err(ApiError::unprocessable(format!(
            "exactly one of thresholds, cost_ratio, mixing_policy or equalize is required, got {modes}"
        )));
    }
    let tol = req.tol.unwrap_or(DEFAULT_TOLERANCE);
    let mut threshold_policy = None;
    let mut mixing_policy = None;
    let tables = if let Some(th) = &req.thresholds {
        check_thresholds(ds, th)?;
        let policy = ThresholdPolicy::manual(th.clone())?;
        let tables = tables_at_thresholds(&ds.data, &policy.per_group_threshold)?;
        threshold_policy = Some(policy);
        tables
    } else if let Some(ratio) = req.cost_ratio {
        let policy = ThresholdPolicy::from_cost_ratio(&ds.data.groups(), ratio)?;
        let tables = tables_at_thresholds(&ds.data, &policy.per_group_threshold)?;
        threshold_policy = Some(policy);
        tables
    } else {
        let base = baseline_tables(ds)?;
        let policy = match (&req.mixing_policy, req.equalize) {
            (Some(p), _) => {
                if let Some(g) = p.groups.iter().find(|m| !base.contains_key(&m.group)) {
                    return Err(ApiError::unprocessable(format!(
                        "mixing policy names unknown group `{}`",
                        g.group
                    )));
                }
                p.recompute(&base)?
            }
            (None, Some(constraint)) => {
                let options = MixingOptions {
                    constraint,
                    ..MixingOptions::new(0.0)
                };
                solve_mixing(&base, &options)?
            }
            (None, None) => unreachable!("mode count checked above"),
        };
        let tables = expected_tables(&base, &policy)?;
        mixing_policy = Some(policy);
        tables
    };
    let mut report = evaluate_all(&tables, tol)?;
    report.metadata.dataset_hash = Some(ds.id.clone());
    report.metadata.threshold_policy = threshold_policy;
    report.metadata.mixing_policy = mixing_policy;
    Ok(report)
}
