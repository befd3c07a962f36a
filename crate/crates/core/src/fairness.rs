//! The six group-fairness definitions evaluated over per-group confusion tables.
//!
//! Every check compares one or two quantities across all groups. The disparity of a quantity
//! is the largest absolute pairwise difference (max minus min); a check is satisfied when
//! every compared quantity's disparity is within the tolerance. A quantity that is undefined
//! in any group (zero denominator) makes its comparison indeterminate, which is reported
//! separately from satisfied/unsatisfied.
//!
//! Naming of the conditional use quantities varies in the literature: the failure-column
//! accuracy a/(a+c) is also called positive predictive value or precision, and the
//! success-column accuracy d/(b+d) negative predictive value. The failure-column error
//! c/(a+c) is sometimes called the false discovery rate, b/(b+d) the false omission rate.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::confusion::{build_tables, ConfusionTable, GroupTables, GroupedOutcomes, TableQuantities};
use crate::correct_in::ThresholdPolicy;
use crate::correct_post::MixingPolicy;
use crate::feasibility::{joint_feasibility, FeasibilityVerdict};
use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 0.01;
pub const REPORT_SCHEMA: &str = "fairlens-report/1";
/// Disparities this far past the tolerance still count as within it, so a policy solved to
/// sit exactly on the tolerance boundary is not failed by rounding.
pub const BOUNDARY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckId {
    OverallAccuracyEquality,
    StatisticalParity,
    ConditionalProcedureAccuracyEquality,
    ConditionalUseAccuracyEquality,
    TreatmentEquality,
    TotalFairness,
}

impl CheckId {
    pub const ALL: [CheckId; 6] = [
        CheckId::OverallAccuracyEquality,
        CheckId::StatisticalParity,
        CheckId::ConditionalProcedureAccuracyEquality,
        CheckId::ConditionalUseAccuracyEquality,
        CheckId::TreatmentEquality,
        CheckId::TotalFairness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckId::OverallAccuracyEquality => "overall_accuracy_equality",
            CheckId::StatisticalParity => "statistical_parity",
            CheckId::ConditionalProcedureAccuracyEquality => {
                "conditional_procedure_accuracy_equality"
            }
            CheckId::ConditionalUseAccuracyEquality => "conditional_use_accuracy_equality",
            CheckId::TreatmentEquality => "treatment_equality",
            CheckId::TotalFairness => "total_fairness",
        }
    }
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CheckId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CheckId::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown fairness check `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Satisfied,
    Unsatisfied,
    Indeterminate,
}

/// Comparison of a single quantity across groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub quantity: String,
    pub per_group: BTreeMap<String, Option<f64>>,
    pub disparity: Option<f64>,
    pub status: CheckStatus,
}

impl Comparison {
    fn new(quantity: &str, per_group: BTreeMap<String, Option<f64>>, tol: f64) -> Self {
        let values: Option<Vec<f64>> = per_group.values().copied().collect();
        let disparity = values.map(|v| {
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            hi - lo
        });
        let status = match disparity {
            None => CheckStatus::Indeterminate,
            Some(d) if d <= tol + BOUNDARY_SLACK => CheckStatus::Satisfied,
            Some(_) => CheckStatus::Unsatisfied,
        };
        Self {
            quantity: quantity.to_string(),
            per_group,
            disparity,
            status,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: CheckId,
    /// Compared values per group, in the order of `comparisons`.
    pub per_group_values: BTreeMap<String, Vec<Option<f64>>>,
    pub comparisons: Vec<Comparison>,
    /// Largest determinate disparity; `None` when nothing could be compared.
    pub max_abs_disparity: Option<f64>,
    pub tolerance: f64,
    pub status: CheckStatus,
    pub satisfied: bool,
}

impl CheckResult {
    fn combine(name: CheckId, comparisons: Vec<Comparison>, tol: f64) -> Self {
        let status = combine_status(comparisons.iter().map(|c| c.status));
        let max_abs_disparity = comparisons
            .iter()
            .filter_map(|c| c.disparity)
            .reduce(f64::max);
        let mut per_group_values: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
        for c in &comparisons {
            for (g, v) in &c.per_group {
                per_group_values.entry(g.clone()).or_default().push(*v);
            }
        }
        Self {
            name,
            per_group_values,
            comparisons,
            max_abs_disparity,
            tolerance: tol,
            status,
            satisfied: status == CheckStatus::Satisfied,
        }
    }

    pub fn comparison(&self, quantity: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.quantity == quantity)
    }
}

fn combine_status(statuses: impl Iterator<Item = CheckStatus>) -> CheckStatus {
    let mut out = CheckStatus::Satisfied;
    for s in statuses {
        match s {
            CheckStatus::Unsatisfied => return CheckStatus::Unsatisfied,
            CheckStatus::Indeterminate => out = CheckStatus::Indeterminate,
            CheckStatus::Satisfied => {}
        }
    }
    out
}

fn quantities(tables: &GroupTables) -> Result<BTreeMap<String, TableQuantities>> {
    if tables.len() < 2 {
        return Err(Error::TooFewGroups(tables.len()));
    }
    tables
        .iter()
        .map(|(g, t)| Ok((g.clone(), t.quantities()?)))
        .collect()
}

fn check_tol(tol: f64) -> Result<f64> {
    if tol.is_nan() || tol < 0.0 {
        Err(Error::InvalidParameter(format!("tolerance {tol} must be >= 0")))
    } else {
        Ok(tol)
    }
}

fn compare(
    q: &BTreeMap<String, TableQuantities>,
    quantity: &str,
    tol: f64,
    f: impl Fn(&TableQuantities) -> Option<f64>,
) -> Comparison {
    Comparison::new(quantity, q.iter().map(|(g, v)| (g.clone(), f(v))).collect(), tol)
}

type CheckFn = fn(&BTreeMap<String, TableQuantities>, f64) -> CheckResult;

fn overall_accuracy(q: &BTreeMap<String, TableQuantities>, tol: f64) -> CheckResult {
    let c = compare(q, "overall_accuracy", tol, |v| Some(v.overall_accuracy()));
    CheckResult::combine(CheckId::OverallAccuracyEquality, vec![c], tol)
}

fn parity(q: &BTreeMap<String, TableQuantities>, tol: f64) -> CheckResult {
    let c = compare(q, "pred_fail_share", tol, |v| Some(v.pred_fail_share));
    CheckResult::combine(CheckId::StatisticalParity, vec![c], tol)
}

// "fnr" alone is the equality-of-opportunity variant.
fn procedure(q: &BTreeMap<String, TableQuantities>, tol: f64) -> CheckResult {
    let fnr = compare(q, "fnr", tol, |v| v.fnr);
    let fpr = compare(q, "fpr", tol, |v| v.fpr);
    CheckResult::combine(CheckId::ConditionalProcedureAccuracyEquality, vec![fnr, fpr], tol)
}

// "ppv" alone is the positive-predictive-value variant.
fn conditional_use(q: &BTreeMap<String, TableQuantities>, tol: f64) -> CheckResult {
    let ppv = compare(q, "ppv", tol, |v| v.ppv());
    let npv = compare(q, "npv", tol, |v| v.npv());
    CheckResult::combine(CheckId::ConditionalUseAccuracyEquality, vec![ppv, npv], tol)
}

fn treatment(q: &BTreeMap<String, TableQuantities>, tol: f64) -> CheckResult {
    let c = compare(q, "fn_to_fp", tol, |v| v.cost_ratio_fn_to_fp.finite());
    CheckResult::combine(CheckId::TreatmentEquality, vec![c], tol)
}

const COMPONENTS: [CheckFn; 5] = [overall_accuracy, parity, procedure, conditional_use, treatment];

fn total(q: &BTreeMap<String, TableQuantities>, tol: f64) -> CheckResult {
    let parts: Vec<Comparison> = COMPONENTS
        .iter()
        .map(|f| {
            let r = f(q, tol);
            Comparison {
                quantity: r.name.as_str().to_string(),
                per_group: BTreeMap::new(),
                disparity: r.max_abs_disparity,
                status: r.status,
            }
        })
        .collect();
    CheckResult::combine(CheckId::TotalFairness, parts, tol)
}

fn run(tables: &GroupTables, tol: f64, f: CheckFn) -> Result<CheckResult> {
    let tol = check_tol(tol)?;
    Ok(f(&quantities(tables)?, tol))
}

/// (a+d)/n equal across groups.
pub fn overall_accuracy_equality(tables: &GroupTables, tol: f64) -> Result<CheckResult> {
    run(tables, tol, overall_accuracy)
}

/// Predicted-failure share equal across groups (the success share follows by complement).
pub fn statistical_parity(tables: &GroupTables, tol: f64) -> Result<CheckResult> {
    run(tables, tol, parity)
}

/// Error rates conditional on the true outcome, FNR and FPR, equal across groups.
pub fn conditional_procedure_accuracy_equality(
    tables: &GroupTables,
    tol: f64,
) -> Result<CheckResult> {
    run(tables, tol, procedure)
}

/// Accuracy conditional on the predicted outcome, a/(a+c) and d/(b+d), equal across groups.
pub fn conditional_use_accuracy_equality(tables: &GroupTables, tol: f64) -> Result<CheckResult> {
    run(tables, tol, conditional_use)
}

/// FN/FP ratio equal across groups. Groups with no false positives make the check
/// indeterminate.
pub fn treatment_equality(tables: &GroupTables, tol: f64) -> Result<CheckResult> {
    run(tables, tol, treatment)
}

/// All five component checks at once. The aggregated disparity mixes rate differences with
/// the treatment-equality ratio difference.
pub fn total_fairness(tables: &GroupTables, tol: f64) -> Result<CheckResult> {
    run(tables, tol, total)
}

pub fn check(id: CheckId, tables: &GroupTables, tol: f64) -> Result<CheckResult> {
    let f: CheckFn = match id {
        CheckId::OverallAccuracyEquality => overall_accuracy,
        CheckId::StatisticalParity => parity,
        CheckId::ConditionalProcedureAccuracyEquality => procedure,
        CheckId::ConditionalUseAccuracyEquality => conditional_use,
        CheckId::TreatmentEquality => treatment,
        CheckId::TotalFairness => total,
    };
    run(tables, tol, f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub table: ConfusionTable,
    pub quantities: TableQuantities,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub dataset_hash: Option<String>,
    pub seed: Option<u64>,
    pub threshold_policy: Option<ThresholdPolicy>,
    #[serde(default)]
    pub mixing_policy: Option<MixingPolicy>,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub schema: String,
    pub tolerance: f64,
    pub groups: BTreeMap<String, GroupSummary>,
    pub checks: Vec<CheckResult>,
    /// Whether conditional use accuracy and equal error rates can hold together here, with
    /// separation read as error-free predictions in every group.
    pub feasibility: FeasibilityVerdict,
    pub metadata: ReportMetadata,
}

impl FairnessReport {
    pub fn check(&self, id: CheckId) -> &CheckResult {
        self.checks
            .iter()
            .find(|c| c.name == id)
            .expect("report always carries all six checks")
    }

    pub fn count(&self, status: CheckStatus) -> usize {
        self.checks.iter().filter(|c| c.status == status).count()
    }
}

pub fn evaluate_all(tables: &GroupTables, tol: f64) -> Result<FairnessReport> {
    let tol = check_tol(tol)?;
    let q = quantities(tables)?;
    let checks = CheckId::ALL
        .iter()
        .map(|&id| check(id, tables, tol))
        .collect::<Result<Vec<_>>>()?;
    let groups = tables
        .iter()
        .map(|(g, t)| {
            let summary = GroupSummary {
                table: *t,
                quantities: q[g],
            };
            (g.clone(), summary)
        })
        .collect();
    Ok(FairnessReport {
        schema: REPORT_SCHEMA.to_string(),
        tolerance: tol,
        groups,
        checks,
        feasibility: table_feasibility(tables)?,
        metadata: ReportMetadata::default(),
    })
}

fn table_feasibility(tables: &GroupTables) -> Result<FeasibilityVerdict> {
    let rates = tables
        .iter()
        .map(|(g, t)| (g.clone(), t.positives() / t.n()))
        .collect();
    let separable = tables.values().all(|t| t.fn_() == 0.0 && t.fp() == 0.0);
    joint_feasibility(&rates, separable)
}

/// Report over the records' own predictions.
pub fn evaluate_data(data: &GroupedOutcomes, tol: f64) -> Result<FairnessReport> {
    evaluate_all(&build_tables(data)?, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tables(pairs: &[(&str, [f64; 4])]) -> GroupTables {
        pairs
            .iter()
            .map(|(g, c)| (g.to_string(), ConfusionTable::new(c[0], c[1], c[2], c[3]).unwrap()))
            .collect()
    }

    const T2: [f64; 4] = [300.0, 200.0, 200.0, 300.0];
    const T3: [f64; 4] = [600.0, 400.0, 200.0, 300.0];
    const T4: [f64; 4] = [800.0, 200.0, 200.0, 300.0];

    #[test]
    fn overall_accuracy_tables_2_3_4() {
        let r = overall_accuracy_equality(&tables(&[("f", T2), ("m", T3)]), 0.0).unwrap();
        assert!(r.satisfied);
        assert_eq!(r.max_abs_disparity, Some(0.0));
        let r = overall_accuracy_equality(&tables(&[("f", T2), ("m", T4)]), 0.01).unwrap();
        assert!(!r.satisfied);
        assert!((r.max_abs_disparity.unwrap() - (1100.0 / 1500.0 - 0.6)).abs() < 1e-12);
    }

    #[test]
    fn statistical_parity_tables() {
        let r = statistical_parity(&tables(&[("f", T2), ("m", T3)]), 0.05).unwrap();
        assert!((r.max_abs_disparity.unwrap() - (800.0 / 1500.0 - 0.5)).abs() < 1e-12);
        assert!(r.satisfied);
        let r = statistical_parity(&tables(&[("f", T2), ("m", T4)]), 0.05).unwrap();
        assert!((r.max_abs_disparity.unwrap() - (1000.0 / 1500.0 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn procedure_accuracy_tables() {
        assert!(conditional_procedure_accuracy_equality(&tables(&[("f", T2), ("m", T3)]), 0.0)
            .unwrap()
            .satisfied);
        let r = conditional_procedure_accuracy_equality(&tables(&[("f", T2), ("m", T4)]), 0.01)
            .unwrap();
        assert!(!r.satisfied);
        assert_eq!(r.comparison("fnr").unwrap().status, CheckStatus::Unsatisfied);
        assert_eq!(r.comparison("fpr").unwrap().status, CheckStatus::Satisfied);
    }

    #[test]
    fn conditional_use_one_side_only() {
        let r = conditional_use_accuracy_equality(&tables(&[("f", T2), ("m", T4)]), 0.01).unwrap();
        assert_eq!(r.status, CheckStatus::Unsatisfied);
        assert_eq!(r.comparison("npv").unwrap().status, CheckStatus::Satisfied);
        assert_eq!(r.comparison("ppv").unwrap().status, CheckStatus::Unsatisfied);
        assert_eq!(r.per_group_values["m"], vec![Some(0.8), Some(0.6)]);
    }

    #[test]
    fn treatment_equality_ratio_and_indeterminate() {
        let r = treatment_equality(&tables(&[("f", T2), ("m", T3)]), 0.05).unwrap();
        assert_eq!(r.max_abs_disparity, Some(1.0));
        assert!(!r.satisfied);
        let sep = tables(&[("f", [40.0, 0.0, 0.0, 10.0]), ("m", [400.0, 0.0, 0.0, 100.0])]);
        let r = treatment_equality(&sep, 0.05).unwrap();
        assert_eq!(r.status, CheckStatus::Indeterminate);
        assert!(!r.satisfied);
    }

    #[test]
    fn total_fairness_examples() {
        let sep = tables(&[("f", [40.0, 0.0, 0.0, 10.0]), ("m", [400.0, 0.0, 0.0, 100.0])]);
        // Treatment equality is 0/0 for perfect separation; every determinate check passes.
        let r = total_fairness(&sep, 0.0).unwrap();
        assert_eq!(r.status, CheckStatus::Indeterminate);
        assert_eq!(
            r.comparison("conditional_use_accuracy_equality").unwrap().status,
            CheckStatus::Satisfied
        );
        let r = total_fairness(&tables(&[("f", T2), ("m", T3)]), 0.05).unwrap();
        assert_eq!(r.status, CheckStatus::Unsatisfied);
        let r = total_fairness(&tables(&[("f", T2), ("m", T2)]), 0.0).unwrap();
        assert!(r.satisfied);
    }

    #[test]
    fn single_group_is_rejected() {
        assert!(matches!(
            overall_accuracy_equality(&tables(&[("f", T2)]), 0.01),
            Err(Error::TooFewGroups(1))
        ));
        assert!(statistical_parity(&tables(&[("f", T2), ("m", T3)]), -1.0).is_err());
    }

    #[test]
    fn report_tables_2_3() {
        let r = evaluate_all(&tables(&[("female", T2), ("male", T3)]), 0.05).unwrap();
        assert_eq!(r.checks.len(), 6);
        assert!(r.check(CheckId::StatisticalParity).satisfied);
        assert!(!r.check(CheckId::ConditionalUseAccuracyEquality).satisfied);
        assert!(!r.check(CheckId::TreatmentEquality).satisfied);
        assert!(!r.check(CheckId::TotalFairness).satisfied);
        assert_eq!(r.count(CheckStatus::Satisfied), 3);
        assert_eq!(r.count(CheckStatus::Unsatisfied), 3);
        assert_eq!(r.tolerance, 0.05);
    }

    #[test]
    fn check_id_round_trip() {
        for id in CheckId::ALL {
            assert_eq!(id.as_str().parse::<CheckId>().unwrap(), id);
            assert_eq!(serde_json::to_value(id).unwrap(), id.as_str());
        }
        assert!("nope".parse::<CheckId>().is_err());
    }
}
