//! When can conditional use accuracy equality and equal error rates hold together?
//!
//! Within one table the failure base rate `p`, the positive predictive value `ppv` and the
//! error rates are tied by
//!
//! ```text
//! fpr = p / (1 - p) * (1 - ppv) / ppv * (1 - fnr)
//! ```
//!
//! so two groups sharing FNR, FPR and PPV must share the base rate. Both kinds of fairness are
//! jointly attainable only with equal base rates or with separation (a classifier making no
//! errors). This module checks the identity numerically, renders the verdict, and carries the
//! worked-example catalog.

mod catalog;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use catalog::{
    catalog, reconstruct_from_rates, scenario, scenarios_to_records, Scenario, ScenarioSummary, EMPIRICAL_MARGINS,
    EMPIRICAL_NAME,
};

use crate::confusion::{ConfusionTable, GroupedOutcomes};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::rng;

/// |fpr - p/(1-p) * (1-ppv)/ppv * (1-fnr)| for one table.
pub fn prevalence_identity_residual(t: &ConfusionTable) -> Result<f64> {
    let q = t.quantities()?;
    let p = q.base_rate_fail;
    if p <= 0.0 || p >= 1.0 {
        return Err(Error::IdentityInapplicable("failure base rate is 0 or 1"));
    }
    let ppv = match q.ppv() {
        Some(v) if v > 0.0 => v,
        _ => return Err(Error::IdentityInapplicable("ppv undefined or zero")),
    };
    // p in (0, 1) guarantees both rows are populated.
    let fnr = q.fnr.expect("positives present");
    let fpr = q.fpr.expect("negatives present");
    let rhs = p / (1.0 - p) * ((1.0 - ppv) / ppv) * (1.0 - fnr);
    Ok((fpr - rhs).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibilityReason {
    EqualBaseRates,
    Separation,
    InfeasibleUnequalRatesNoSeparation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub base_rates: BTreeMap<String, f64>,
    pub separable: bool,
    pub joint_feasible: bool,
    pub reason: FeasibilityReason,
}

/// Base rates count as equal when they agree within this absolute tolerance.
pub const BASE_RATE_EQUALITY_TOL: f64 = 1e-12;

pub fn joint_feasibility(
    base_rates: &BTreeMap<String, f64>,
    separable: bool,
) -> Result<FeasibilityVerdict> {
    if base_rates.is_empty() {
        return Err(Error::NoGroups);
    }
    if let Some((g, r)) = base_rates.iter().find(|(_, r)| !(0.0..=1.0).contains(*r)) {
        return Err(Error::InvalidParameter(format!(
            "base rate {r} for `{g}` outside [0, 1]"
        )));
    }
    let hi = base_rates.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = base_rates.values().copied().fold(f64::INFINITY, f64::min);
    let reason = if hi - lo <= BASE_RATE_EQUALITY_TOL {
        FeasibilityReason::EqualBaseRates
    } else if separable {
        FeasibilityReason::Separation
    } else {
        FeasibilityReason::InfeasibleUnequalRatesNoSeparation
    };
    Ok(FeasibilityVerdict {
        base_rates: base_rates.clone(),
        separable,
        joint_feasible: reason != FeasibilityReason::InfeasibleUnequalRatesNoSeparation,
        reason,
    })
}

/// Sample-level separation per group: some score cutoff classifies every record of the
/// group correctly. This says nothing about the population the sample came from.
pub fn separation_by_group(data: &GroupedOutcomes) -> Result<BTreeMap<String, bool>> {
    // (max success score, min failure score) per group
    let mut extremes: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for r in &data.records {
        let s = r.score.ok_or_else(|| Error::MissingScore(r.id.clone()))?;
        let e = extremes
            .entry(r.group.clone())
            .or_insert((f64::NEG_INFINITY, f64::INFINITY));
        if r.y {
            e.1 = e.1.min(s);
        } else {
            e.0 = e.0.max(s);
        }
    }
    if extremes.is_empty() {
        return Err(Error::NoGroups);
    }
    Ok(extremes
        .into_iter()
        .map(|(g, (max_success, min_fail))| (g, max_success < min_fail))
        .collect())
}

/// Weighted failure base rate per group.
pub fn base_rates(data: &GroupedOutcomes) -> Result<BTreeMap<String, f64>> {
    let mut acc: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for r in &data.records {
        let e = acc.entry(r.group.clone()).or_default();
        e.1 += r.weight;
        if r.y {
            e.0 += r.weight;
        }
    }
    if acc.is_empty() {
        return Err(Error::NoGroups);
    }
    Ok(acc.into_iter().map(|(g, (f, n))| (g, f / n)).collect())
}

/// Verdict for a scored dataset, detecting separation from the scores.
pub fn assess(data: &GroupedOutcomes) -> Result<FeasibilityVerdict> {
    let separable = separation_by_group(data)?.values().all(|&s| s);
    joint_feasibility(&base_rates(data)?, separable)
}

/// Everyone gets the same class.
pub fn assign_constant(data: &GroupedOutcomes, fail: bool) -> Vec<bool> {
    vec![fail; data.len()]
}

/// Each record independently predicted to fail with probability `p_fail`, one ChaCha8 draw
/// per record in record order.
pub fn assign_random(data: &GroupedOutcomes, p_fail: f64, seed: u64) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&p_fail) {
        return Err(Error::InvalidParameter(format!("p_fail {p_fail} outside [0, 1]")));
    }
    let mut rng = rng::seeded(seed);
    Ok((0..data.len()).map(|_| rng.gen::<f64>() < p_fail).collect())
}

/// Two tables with identical FNR and FPR (both in (0, 1)) but base rates at least
/// `min_gap` apart. Cells are integers: each group has `100u` failures and `100v` successes
/// with `u, v` in 1..=50, and the shared rates are whole percentages in 1..=99.
pub fn equal_error_pair(
    rng: &mut impl Rng,
    min_gap: f64,
) -> Result<(ConfusionTable, ConfusionTable)> {
    if !(0.0..0.95).contains(&min_gap) {
        return Err(Error::InvalidParameter(format!("min_gap {min_gap} outside [0, .95)")));
    }
    let fnr_pct = rng.gen_range(1..=99u32) as f64;
    let fpr_pct = rng.gen_range(1..=99u32) as f64;
    let draw = |rng: &mut dyn rand::RngCore| {
        let u = rng.gen_range(1..=50u32) as f64;
        let v = rng.gen_range(1..=50u32) as f64;
        ConfusionTable::new(u * (100.0 - fnr_pct), u * fnr_pct, v * fpr_pct, v * (100.0 - fpr_pct))
    };
    let first = draw(rng)?;
    loop {
        let second = draw(rng)?;
        let gap = (first.positives() / first.n() - second.positives() / second.n()).abs();
        if gap >= min_gap {
            return Ok((first, second));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpossibilityTrial {
    pub first: ConfusionTable,
    pub second: ConfusionTable,
    pub base_rate_gap: f64,
    /// Larger of the PPV and NPV gaps.
    pub conditional_use_disparity: f64,
    pub identity_residuals: [f64; 2],
}

/// Seeded Monte Carlo over equal-error-rate table pairs with unequal base rates. Trial `i`
/// draws from substream `i` of `seed`, so results do not depend on the execution strategy.
pub fn impossibility_trials(
    count: usize,
    seed: u64,
    min_gap: f64,
    exec: Execution,
) -> Result<Vec<ImpossibilityTrial>> {
    exec.map_range(0..count, |i| {
        let mut rng = rng::substream(seed, i as u64);
        let (first, second) = equal_error_pair(&mut rng, min_gap)?;
        let (qa, qb) = (first.quantities()?, second.quantities()?);
        let gap = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => (a - b).abs(),
            _ => 0.0,
        };
        Ok(ImpossibilityTrial {
            first,
            second,
            base_rate_gap: (qa.base_rate_fail - qb.base_rate_fail).abs(),
            conditional_use_disparity: gap(qa.ppv(), qb.ppv()).max(gap(qa.npv(), qb.npv())),
            identity_residuals: [
                prevalence_identity_residual(&first)?,
                prevalence_identity_residual(&second)?,
            ],
        })
    })
    .into_iter()
    .collect()
}
