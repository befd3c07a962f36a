//! In-processing levers on a scored classifier: cost-sensitive cutoffs, per-group cutoffs
//! tuned toward a reference group's conditional use accuracy, and reassignment of the
//! least certain predictions.
//!
//! Retraining a model with a shifted outcome prior moves every group's operating point; with
//! fixed scores the same effect is obtained by moving each group's score cutoff, which is
//! what [`tune_group_thresholds`] does.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::confusion::{check_threshold, ConfusionTable, GroupedOutcomes, ABOVE_ONE};
use crate::error::{Error, Result};
use crate::fairness::CheckId;
use crate::par::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyRationale {
    CostRatio,
    TunedToReference,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub per_group_threshold: BTreeMap<String, f64>,
    pub rationale: PolicyRationale,
    pub cost_ratio_fn_to_fp: Option<f64>,
    pub reference_group: Option<String>,
}

impl ThresholdPolicy {
    pub fn manual(per_group_threshold: BTreeMap<String, f64>) -> Result<Self> {
        for t in per_group_threshold.values() {
            check_threshold(*t)?;
        }
        Ok(Self {
            per_group_threshold,
            rationale: PolicyRationale::Manual,
            cost_ratio_fn_to_fp: None,
            reference_group: None,
        })
    }

    /// Every group at the cost-ratio cutoff.
    pub fn from_cost_ratio(groups: &[String], ratio: f64) -> Result<Self> {
        let t = threshold_for_cost_ratio(ratio)?;
        Ok(Self {
            per_group_threshold: groups.iter().map(|g| (g.clone(), t)).collect(),
            rationale: PolicyRationale::CostRatio,
            cost_ratio_fn_to_fp: Some(ratio),
            reference_group: None,
        })
    }

    pub fn predictions(&self, data: &GroupedOutcomes) -> Result<Vec<bool>> {
        data.predictions_at(&self.per_group_threshold)
    }
}

/// Score cutoff minimising expected cost when a false negative costs `ratio` times a false
/// positive and scores are failure probabilities: predict failure iff `s * ratio >= 1 - s`,
/// i.e. `s >= 1 / (1 + ratio)`. An infinite ratio gives 0 (everyone predicted to fail).
pub fn threshold_for_cost_ratio(ratio: f64) -> Result<f64> {
    if ratio.is_nan() || ratio <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "cost ratio {ratio} must be positive"
        )));
    }
    Ok(1.0 / (1.0 + ratio))
}

/// Scores of one group sorted descending with cumulative weighted class totals, so the
/// table at any cutoff is a binary search away.
#[derive(Debug, Clone)]
pub struct ScoreIndex {
    scores: Vec<f64>,
    // cum[i] = (fail weight, success weight) over the first i records
    cum: Vec<(f64, f64)>,
}

impl ScoreIndex {
    pub fn new(data: &GroupedOutcomes, group: &str) -> Result<Self> {
        let mut rows: Vec<(f64, bool, f64)> = Vec::new();
        for r in data.records.iter().filter(|r| r.group == group) {
            let s = r.score.ok_or_else(|| Error::MissingScore(r.id.clone()))?;
            rows.push((s, r.y, r.weight));
        }
        if rows.is_empty() {
            return Err(Error::UnknownGroup(group.to_string()));
        }
        rows.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut cum = Vec::with_capacity(rows.len() + 1);
        let (mut f, mut s) = (0.0, 0.0);
        cum.push((f, s));
        for &(_, y, w) in &rows {
            if y {
                f += w;
            } else {
                s += w;
            }
            cum.push((f, s));
        }
        Ok(Self {
            scores: rows.into_iter().map(|r| r.0).collect(),
            cum,
        })
    }

    /// Table when records with `score >= t` are predicted to fail.
    pub fn table_at(&self, t: f64) -> ConfusionTable {
        let k = self.scores.partition_point(|&s| s >= t);
        let (pf, ps) = self.cum[k];
        let (tf, ts) = *self.cum.last().expect("non-empty");
        ConfusionTable::new(pf, tf - pf, ps, ts - ps).expect("cumulative weights are valid")
    }

    /// Candidate cutoffs: 0, every distinct score, and one past the top, ascending.
    pub fn cutpoints(&self) -> Vec<f64> {
        let mut c: Vec<f64> = self.scores.iter().rev().copied().collect();
        c.push(0.0);
        c.push(ABOVE_ONE);
        c.sort_by(f64::total_cmp);
        c.dedup();
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuneTarget {
    /// a/(a+c)
    #[default]
    Ppv,
    /// d/(b+d)
    Npv,
    /// both, minimising the larger gap
    Both,
}

impl std::str::FromStr for TuneTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ppv" => Ok(TuneTarget::Ppv),
            "npv" => Ok(TuneTarget::Npv),
            "both" => Ok(TuneTarget::Both),
            _ => Err(Error::InvalidParameter(format!("unknown tuning target `{s}`"))),
        }
    }
}

fn target_values(t: &ConfusionTable) -> (Option<f64>, Option<f64>) {
    let ppv = (t.tp() + t.fp() > 0.0).then(|| t.tp() / (t.tp() + t.fp()));
    let npv = (t.tn() + t.fn_() > 0.0).then(|| t.tn() / (t.tn() + t.fn_()));
    (ppv, npv)
}

fn target_gap(target: TuneTarget, t: &ConfusionTable, reference: (Option<f64>, Option<f64>)) -> Option<f64> {
    let (ppv, npv) = target_values(t);
    let gap = |a: Option<f64>, b: Option<f64>| Some((a? - b?).abs());
    match target {
        TuneTarget::Ppv => gap(ppv, reference.0),
        TuneTarget::Npv => gap(npv, reference.1),
        TuneTarget::Both => Some(gap(ppv, reference.0)?.max(gap(npv, reference.1)?)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub policy: ThresholdPolicy,
    pub target: TuneTarget,
    /// Achieved |target - reference target| per tuned group (0 for the reference).
    pub residual_gap: BTreeMap<String, Option<f64>>,
    /// Groups for which no cutpoint defines the target quantity; they keep the reference
    /// threshold.
    pub indeterminate: Vec<String>,
    pub tolerance: f64,
    pub within_tolerance: bool,
}

/// Hold the reference group at its cutoff (default: the symmetric-cost cutoff .5) and move
/// every other group's cutoff to the swept cutpoint that brings its target quantity closest
/// to the reference's. Ties go to the smaller cutoff (more predicted failures).
pub fn tune_group_thresholds(
    data: &GroupedOutcomes,
    reference: &str,
    reference_threshold: Option<f64>,
    target: TuneTarget,
    tol: f64,
    exec: Execution,
) -> Result<TuningResult> {
    let ref_t = match reference_threshold {
        Some(t) => check_threshold(t)?,
        None => threshold_for_cost_ratio(1.0)?,
    };
    let groups = data.groups();
    if !groups.iter().any(|g| g == reference) {
        return Err(Error::UnknownGroup(reference.to_string()));
    }
    let ref_index = ScoreIndex::new(data, reference)?;
    let ref_values = target_values(&ref_index.table_at(ref_t));
    let ref_defined = match target {
        TuneTarget::Ppv => ref_values.0.is_some(),
        TuneTarget::Npv => ref_values.1.is_some(),
        TuneTarget::Both => ref_values.0.is_some() && ref_values.1.is_some(),
    };
    if !ref_defined {
        return Err(Error::Indeterminate(format!(
            "reference `{reference}` has an undefined {target:?} at threshold {ref_t}"
        )));
    }

    let sweeps = exec.map(&groups, |g| -> Result<(f64, Option<f64>)> {
        if g == reference {
            return Ok((ref_t, Some(0.0)));
        }
        let index = ScoreIndex::new(data, g)?;
        let mut best: Option<(f64, f64)> = None;
        for t in index.cutpoints() {
            if let Some(gap) = target_gap(target, &index.table_at(t), ref_values) {
                if best.map_or(true, |(_, b)| gap < b) {
                    best = Some((t, gap));
                }
            }
        }
        Ok(match best {
            Some((t, gap)) => (t, Some(gap)),
            None => (ref_t, None),
        })
    });

    let mut per_group_threshold = BTreeMap::new();
    let mut residual_gap = BTreeMap::new();
    let mut indeterminate = Vec::new();
    for (g, res) in groups.iter().zip(sweeps) {
        let (t, gap) = res?;
        if gap.is_none() {
            indeterminate.push(g.clone());
        }
        per_group_threshold.insert(g.clone(), t);
        residual_gap.insert(g.clone(), gap);
    }
    let within_tolerance = residual_gap.values().all(|g| g.is_some_and(|v| v <= tol));
    Ok(TuningResult {
        policy: ThresholdPolicy {
            per_group_threshold,
            rationale: PolicyRationale::TunedToReference,
            cost_ratio_fn_to_fp: reference_threshold.is_none().then_some(1.0),
            reference_group: Some(reference.to_string()),
        },
        target,
        residual_gap,
        indeterminate,
        tolerance: tol,
        within_tolerance,
    })
}

/// Disparity of one fairness check computed straight from the cells, without building a
/// report. Matches `CheckResult::max_abs_disparity`.
pub fn check_disparity(id: CheckId, tables: &[ConfusionTable]) -> Option<f64> {
    fn spread(tables: &[ConfusionTable], f: impl Fn(&ConfusionTable) -> Option<f64>) -> Option<f64> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in tables {
            let v = f(t)?;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Some(hi - lo)
    }
    let ratio = |n: f64, d: f64| (d > 0.0).then(|| n / d);
    let max_opt = |xs: &[Option<f64>]| xs.iter().flatten().copied().reduce(f64::max);
    match id {
        CheckId::OverallAccuracyEquality => {
            spread(tables, |t| Some(1.0 - (t.fn_() + t.fp()) / t.n()))
        }
        CheckId::StatisticalParity => spread(tables, |t| Some((t.tp() + t.fp()) / t.n())),
        CheckId::ConditionalProcedureAccuracyEquality => max_opt(&[
            spread(tables, |t| ratio(t.fn_(), t.positives())),
            spread(tables, |t| ratio(t.fp(), t.negatives())),
        ]),
        CheckId::ConditionalUseAccuracyEquality => max_opt(&[
            spread(tables, |t| ratio(t.fp(), t.tp() + t.fp()).map(|e| 1.0 - e)),
            spread(tables, |t| ratio(t.fn_(), t.fn_() + t.tn()).map(|e| 1.0 - e)),
        ]),
        CheckId::TreatmentEquality => spread(tables, |t| ratio(t.fn_(), t.fp())),
        CheckId::TotalFairness => max_opt(
            &CheckId::ALL[..5]
                .iter()
                .map(|&c| check_disparity(c, tables))
                .collect::<Vec<_>>(),
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Count(usize),
    /// Fraction of all records, rounded down.
    Fraction(f64),
}

impl Budget {
    fn resolve(self, n: usize) -> Result<usize> {
        match self {
            Budget::Count(k) => Ok(k),
            Budget::Fraction(f) if (0.0..=1.0).contains(&f) => Ok((f * n as f64).floor() as usize),
            Budget::Fraction(f) => Err(Error::InvalidParameter(format!(
                "budget fraction {f} outside [0, 1]"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reassignment {
    pub predictions: Vec<bool>,
    /// Record indices flipped, in flip order.
    pub flipped: Vec<usize>,
    pub disparity_before: Option<f64>,
    /// Objective disparity after each flip.
    pub trace: Vec<f64>,
}

/// Flip predictions of the least certain records (smallest |score - group cutoff| first,
/// record order breaking ties) while a flip strictly lowers the objective's disparity. Each
/// step takes the least certain remaining record whose flip improves the objective; the
/// loop stops when the budget is spent or no remaining flip improves.
pub fn uncertainty_reassign(
    data: &GroupedOutcomes,
    policy: &ThresholdPolicy,
    budget: Budget,
    objective: CheckId,
) -> Result<Reassignment> {
    let budget = budget.resolve(data.len())?;
    let mut predictions = policy.predictions(data)?;
    let groups = data.groups();
    let slot: BTreeMap<&str, usize> = groups.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
    let mut tables = vec![ConfusionTable::zero(); groups.len()];
    let mut rec_slot = Vec::with_capacity(data.len());
    for (r, &p) in data.records.iter().zip(&predictions) {
        let k = slot[r.group.as_str()];
        tables[k].add(r.y, p, r.weight);
        rec_slot.push(k);
    }

    let mut order: Vec<(f64, usize)> = data
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            // predictions_at above guarantees score and threshold exist
            let s = r.score.expect("scored");
            (
                (s - policy.per_group_threshold[&r.group]).abs(),
                i,
            )
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut remaining: Vec<usize> = order.into_iter().map(|(_, i)| i).collect();

    let disparity_before = check_disparity(objective, &tables);
    let mut current = disparity_before;
    let mut flipped = Vec::new();
    let mut trace = Vec::new();
    while flipped.len() < budget {
        let Some(cur) = current else { break };
        let mut chosen = None;
        for (pos, &i) in remaining.iter().enumerate() {
            let r = &data.records[i];
            let k = rec_slot[i];
            let saved = tables[k];
            tables[k].add(r.y, predictions[i], -r.weight);
            tables[k].add(r.y, !predictions[i], r.weight);
            let d = check_disparity(objective, &tables);
            tables[k] = saved;
            if let Some(d) = d.filter(|&d| d < cur) {
                chosen = Some((pos, i, d));
                break;
            }
        }
        let Some((pos, i, d)) = chosen else { break };
        let r = &data.records[i];
        let k = rec_slot[i];
        tables[k].add(r.y, predictions[i], -r.weight);
        predictions[i] = !predictions[i];
        tables[k].add(r.y, predictions[i], r.weight);
        remaining.remove(pos);
        flipped.push(i);
        trace.push(d);
        current = Some(d);
    }
    Ok(Reassignment {
        predictions,
        flipped,
        disparity_before,
        trace,
    })
}
