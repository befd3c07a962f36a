//! Post-processing by randomized reassignment of provisional class labels.
//!
//! Each group gets a pair of probabilities: `p1`, the chance a record predicted to fail keeps
//! (or receives) the failure label, and `p0`, the chance a record predicted to succeed is
//! switched to failure. Under the policy a group's true-positive and false-positive rates
//! become `p1*tpr + p0*(1-tpr)` and `p1*fpr + p0*(1-fpr)`. The probabilities are chosen to
//! minimise expected misclassification subject to those mixed rates agreeing across groups.

pub mod lp;
mod oracle;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::confusion::{ConfusionTable, GroupTables, GroupedOutcomes};
use crate::error::{Error, Result};
use crate::rng::substream;

pub use oracle::{mixing_oracle, mixing_oracle_with};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateConstraint {
    /// Equal true-positive and false-positive rates.
    #[default]
    EqualizedOdds,
    /// Equal true-positive rates only.
    EqualOpportunity,
}

impl std::str::FromStr for RateConstraint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equalized_odds" | "equalized-odds" => Ok(Self::EqualizedOdds),
            "equal_opportunity" | "equal-opportunity" => Ok(Self::EqualOpportunity),
            other => Err(Error::InvalidParameter(format!("unknown rate constraint `{other}`"))),
        }
    }
}

/// Relative costs of the two error types in the objective. The constraint set does not
/// depend on them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorCosts {
    pub fn_cost: f64,
    pub fp_cost: f64,
}

impl Default for ErrorCosts {
    fn default() -> Self {
        Self {
            fn_cost: 1.0,
            fp_cost: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingOptions {
    pub tolerance: f64,
    pub constraint: RateConstraint,
    pub costs: ErrorCosts,
}

impl MixingOptions {
    pub fn new(tolerance: f64) -> Self {
        Self {
            tolerance,
            constraint: RateConstraint::default(),
            costs: ErrorCosts::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    VertexEnumeration,
    Simplex,
    Grid,
    #[default]
    Supplied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMixing {
    pub group: String,
    pub p0: f64,
    pub p1: f64,
    #[serde(default)]
    pub achieved_tpr: f64,
    #[serde(default)]
    pub achieved_fpr: f64,
    /// Expected 0/1 misclassification rate within the group under the policy.
    #[serde(default)]
    pub expected_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingPolicy {
    pub groups: Vec<GroupMixing>,
    #[serde(default)]
    pub constraint: RateConstraint,
    #[serde(default)]
    pub tolerance: f64,
    #[serde(default)]
    pub costs: ErrorCosts,
    /// Population-weighted expected cost per record.
    #[serde(default)]
    pub objective: f64,
    #[serde(default)]
    pub method: SolveMethod,
}

impl MixingPolicy {
    pub fn group(&self, name: &str) -> Option<&GroupMixing> {
        self.groups.iter().find(|g| g.group == name)
    }

    pub fn is_identity(&self) -> bool {
        self.groups.iter().all(|g| g.p0 == 0.0 && g.p1 == 1.0)
    }

    /// Build a policy from bare probabilities, filling in the rates and errors implied by
    /// `tables`.
    pub fn from_probabilities(
        tables: &GroupTables,
        probs: &BTreeMap<String, (f64, f64)>,
        options: &MixingOptions,
    ) -> Result<Self> {
        let mut groups = Vec::with_capacity(tables.len());
        for (g, t) in tables {
            let &(p0, p1) = probs.get(g).ok_or_else(|| Error::UnknownGroup(g.clone()))?;
            groups.push(describe(g, t, p0, p1)?);
        }
        let objective = objective_of(tables, &groups, &options.costs);
        Ok(Self {
            groups,
            constraint: options.constraint,
            tolerance: options.tolerance,
            costs: options.costs,
            objective,
            method: SolveMethod::Supplied,
        })
    }

    /// Recompute achieved rates, errors and objective of a (possibly user-supplied) policy
    /// against `tables`.
    pub fn recompute(&self, tables: &GroupTables) -> Result<Self> {
        let probs = self.probabilities(tables)?;
        let options = MixingOptions {
            tolerance: self.tolerance,
            constraint: self.constraint,
            costs: self.costs,
        };
        let mut out = Self::from_probabilities(tables, &probs, &options)?;
        out.method = self.method;
        Ok(out)
    }

    fn probabilities(&self, tables: &GroupTables) -> Result<BTreeMap<String, (f64, f64)>> {
        let mut probs = BTreeMap::new();
        for g in tables.keys() {
            let m = self.group(g).ok_or_else(|| Error::UnknownGroup(g.clone()))?;
            probs.insert(g.clone(), (m.p0, m.p1));
        }
        Ok(probs)
    }

    /// Largest cross-group spread of the achieved (tpr, fpr).
    pub fn rate_gaps(&self) -> (f64, f64) {
        let spread = |f: fn(&GroupMixing) -> f64| {
            let (lo, hi) = self
                .groups
                .iter()
                .map(f)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if lo.is_finite() {
                hi - lo
            } else {
                0.0
            }
        };
        (spread(|g| g.achieved_tpr), spread(|g| g.achieved_fpr))
    }
}

fn check_probability(name: &str, p: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {p}")))
    }
}

pub(crate) fn rates(t: &ConfusionTable) -> (f64, f64) {
    (t.tp() / t.positives(), t.fp() / t.negatives())
}

pub(crate) fn mixed(p0: f64, p1: f64, rate: f64) -> f64 {
    p1 * rate + p0 * (1.0 - rate)
}

fn describe(group: &str, t: &ConfusionTable, p0: f64, p1: f64) -> Result<GroupMixing> {
    check_probability("p0", p0)?;
    check_probability("p1", p1)?;
    let e = expected_table(t, p0, p1)?;
    Ok(GroupMixing {
        group: group.to_string(),
        // normalizes -0.0 from the solver
        p0: p0 + 0.0,
        p1: p1 + 0.0,
        achieved_tpr: e.tp() / e.positives(),
        achieved_fpr: e.fp() / e.negatives(),
        expected_error: (e.fn_() + e.fp()) / e.n(),
    })
}

fn objective_of(tables: &GroupTables, groups: &[GroupMixing], costs: &ErrorCosts) -> f64 {
    let total: f64 = tables.values().map(ConfusionTable::n).sum();
    let cost: f64 = tables
        .values()
        .zip(groups)
        .map(|(t, m)| {
            costs.fn_cost * t.positives() * (1.0 - m.achieved_tpr)
                + costs.fp_cost * t.negatives() * m.achieved_fpr
        })
        .sum();
    cost / total
}

/// Expected confusion table after mixing: a record predicted to fail is labelled fail with
/// probability `p1`, a record predicted to succeed with probability `p0`.
pub fn expected_table(t: &ConfusionTable, p0: f64, p1: f64) -> Result<ConfusionTable> {
    ConfusionTable::new(
        t.tp() * p1 + t.fn_() * p0,
        t.tp() * (1.0 - p1) + t.fn_() * (1.0 - p0),
        t.fp() * p1 + t.tn() * p0,
        t.fp() * (1.0 - p1) + t.tn() * (1.0 - p0),
    )
}

/// Expected per-group tables under `policy`.
pub fn expected_tables(tables: &GroupTables, policy: &MixingPolicy) -> Result<GroupTables> {
    let probs = policy.probabilities(tables)?;
    tables
        .iter()
        .map(|(g, t)| {
            let (p0, p1) = probs[g];
            Ok((g.clone(), expected_table(t, p0, p1)?))
        })
        .collect()
}

/// Lowest 0/1 error a single group can reach by mixing on its own. The objective is linear
/// in (p0, p1), so the minimum sits at a corner of the unit square.
pub fn standalone_min_error(t: &ConfusionTable) -> f64 {
    let n = t.n();
    let identity = t.fn_() + t.fp();
    let inverted = t.tp() + t.tn();
    identity.min(inverted).min(t.positives()).min(t.negatives()) / n
}

pub(crate) fn validate(tables: &GroupTables, options: &MixingOptions) -> Result<()> {
    if tables.len() < 2 {
        return Err(Error::TooFewGroups(tables.len()));
    }
    if options.tolerance.is_nan() || options.tolerance < 0.0 {
        return Err(Error::Infeasible(format!(
            "rate tolerance must be non-negative, got {}",
            options.tolerance
        )));
    }
    let ErrorCosts { fn_cost, fp_cost } = options.costs;
    if !(fn_cost.is_finite() && fp_cost.is_finite() && fn_cost > 0.0 && fp_cost > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "error costs must be positive and finite, got fn={fn_cost} fp={fp_cost}"
        )));
    }
    for (g, t) in tables {
        if t.positives() <= 0.0 || t.negatives() <= 0.0 {
            return Err(Error::DegenerateTable(g.clone()));
        }
    }
    Ok(())
}

/// The mixing LP over `x = [p0_g, p1_g for each group]`, objective divided by the total
/// record count and without its constant term.
fn build_lp(tables: &GroupTables, options: &MixingOptions) -> lp::Lp {
    let total: f64 = tables.values().map(ConfusionTable::n).sum();
    let k = tables.len();
    let ErrorCosts { fn_cost, fp_cost } = options.costs;
    let mut objective = Vec::with_capacity(2 * k);
    let mut rate_rows: Vec<(usize, f64, f64)> = Vec::new();
    for (i, t) in tables.values().enumerate() {
        objective.push((-fn_cost * t.fn_() + fp_cost * t.tn()) / total);
        objective.push((-fn_cost * t.tp() + fp_cost * t.fp()) / total);
        let (tpr, fpr) = rates(t);
        rate_rows.push((i, tpr, fpr));
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut push_pair = |a: &mut Vec<Vec<f64>>, i: usize, ri: f64, j: usize, rj: f64| {
        // mixed(i) - mixed(j) <= tol and the reverse
        let mut row = vec![0.0; 2 * k];
        row[2 * i] = 1.0 - ri;
        row[2 * i + 1] = ri;
        row[2 * j] = -(1.0 - rj);
        row[2 * j + 1] = -rj;
        let neg: Vec<f64> = row.iter().map(|v| -v).collect();
        a.push(row);
        a.push(neg);
        b.push(options.tolerance);
        b.push(options.tolerance);
    };
    for x in 0..k {
        for y in x + 1..k {
            let (i, tpr_i, fpr_i) = rate_rows[x];
            let (j, tpr_j, fpr_j) = rate_rows[y];
            push_pair(&mut a, i, tpr_i, j, tpr_j);
            if options.constraint == RateConstraint::EqualizedOdds {
                push_pair(&mut a, i, fpr_i, j, fpr_j);
            }
        }
    }
    lp::Lp { objective, a, b }
}

/// Equalized-odds mixing with symmetric costs.
pub fn solve_equalized_odds(tables: &GroupTables, tol: f64) -> Result<MixingPolicy> {
    solve_mixing(tables, &MixingOptions::new(tol))
}

/// Exact solution of the mixing LP. Two groups are solved by enumerating every vertex of the
/// four-variable polytope; more groups by simplex over all pairwise constraints. When the
/// unmodified predictions already satisfy the constraints and are optimal, the identity
/// policy is returned exactly.
pub fn solve_mixing(tables: &GroupTables, options: &MixingOptions) -> Result<MixingPolicy> {
    validate(tables, options)?;
    let program = build_lp(tables, options);
    let identity: Vec<f64> = (0..tables.len()).flat_map(|_| [0.0, 1.0]).collect();
    let (x, method) = if tables.len() == 2 {
        (lp::vertex_enumeration(&program, &identity), SolveMethod::VertexEnumeration)
    } else {
        (lp::simplex(&program), SolveMethod::Simplex)
    };
    let mut x = x.ok_or_else(|| Error::Infeasible("mixing program has no feasible point".into()))?;
    if program.is_feasible(&identity, 0.0) && program.value(&identity) <= program.value(&x) + 1e-12
    {
        x = identity;
    }
    let probs = tables
        .keys()
        .enumerate()
        .map(|(i, g)| (g.clone(), (x[2 * i], x[2 * i + 1])))
        .collect();
    let mut policy = MixingPolicy::from_probabilities(tables, &probs, options)?;
    policy.method = method;
    Ok(policy)
}

/// Randomize `predictions` under `policy`. Record `i` of group `g` draws from the stream
/// belonging to `g`'s position in the policy, so the outcome of one group does not depend on
/// which other groups are present.
pub fn apply_mixing(
    predictions: &[bool],
    groups: &[&str],
    policy: &MixingPolicy,
    seed: u64,
) -> Result<Vec<bool>> {
    if predictions.len() != groups.len() {
        return Err(Error::InvalidParameter(format!(
            "{} predictions for {} group labels",
            predictions.len(),
            groups.len()
        )));
    }
    let mut streams = Vec::with_capacity(policy.groups.len());
    for (i, m) in policy.groups.iter().enumerate() {
        check_probability("p0", m.p0)?;
        check_probability("p1", m.p1)?;
        streams.push(substream(seed, i as u64));
    }
    let index: BTreeMap<&str, usize> =
        policy.groups.iter().enumerate().map(|(i, m)| (m.group.as_str(), i)).collect();
    predictions
        .iter()
        .zip(groups)
        .map(|(&yhat, g)| {
            let &i = index.get(g).ok_or_else(|| Error::UnknownGroup(g.to_string()))?;
            let m = &policy.groups[i];
            let p = if yhat { m.p1 } else { m.p0 };
            let u: f64 = streams[i].gen();
            Ok(u < p)
        })
        .collect()
}

/// Dataset whose predictions are the mixed labels.
pub fn apply_mixing_to(
    data: &GroupedOutcomes,
    policy: &MixingPolicy,
    seed: u64,
) -> Result<GroupedOutcomes> {
    let mut yhat = Vec::with_capacity(data.len());
    for r in &data.records {
        yhat.push(r.yhat.ok_or_else(|| Error::MissingPrediction(r.id.clone()))?);
    }
    let groups: Vec<&str> = data.records.iter().map(|r| r.group.as_str()).collect();
    let mixed = apply_mixing(&yhat, &groups, policy, seed)?;
    data.with_predictions(&mixed)
}
