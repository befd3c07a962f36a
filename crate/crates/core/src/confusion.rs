//! Confusion tables and the quantities read off their margins.
//!
//! Cell naming follows the usual 2x2 layout with failure as the positive class:
//!
//! | truth \ predicted | fail (1) | success (0) |
//! |-------------------|----------|-------------|
//! | fail (1)          | `tp` (a) | `fn_` (b)   |
//! | success (0)       | `fp` (c) | `tn` (d)    |

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Threshold strictly above every valid score: classifies everything as success.
pub const ABOVE_ONE: f64 = 1.0 + f64::EPSILON;

pub fn check_threshold(t: f64) -> Result<f64> {
    if (0.0..=ABOVE_ONE).contains(&t) {
        Ok(t)
    } else {
        Err(Error::InvalidThreshold(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable")]
pub struct ConfusionTable {
    tp: f64,
    #[serde(rename = "fn")]
    fn_: f64,
    fp: f64,
    tn: f64,
}

#[derive(Deserialize)]
struct RawTable {
    tp: f64,
    #[serde(rename = "fn")]
    fn_: f64,
    fp: f64,
    tn: f64,
}

impl TryFrom<RawTable> for ConfusionTable {
    type Error = Error;

    fn try_from(r: RawTable) -> Result<Self> {
        ConfusionTable::new(r.tp, r.fn_, r.fp, r.tn)
    }
}

impl ConfusionTable {
    pub fn new(tp: f64, fn_: f64, fp: f64, tn: f64) -> Result<Self> {
        for (cell, value) in [("tp", tp), ("fn", fn_), ("fp", fp), ("tn", tn)] {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidCell { cell, value });
            }
        }
        Ok(Self { tp, fn_, fp, tn })
    }

    pub(crate) const fn zero() -> Self {
        Self {
            tp: 0.0,
            fn_: 0.0,
            fp: 0.0,
            tn: 0.0,
        }
    }

    /// Add `weight` to the cell addressed by (truth, prediction).
    pub(crate) fn add(&mut self, y: bool, yhat: bool, weight: f64) {
        match (y, yhat) {
            (true, true) => self.tp += weight,
            (true, false) => self.fn_ += weight,
            (false, true) => self.fp += weight,
            (false, false) => self.tn += weight,
        }
    }

    pub fn tp(&self) -> f64 {
        self.tp
    }
    pub fn fn_(&self) -> f64 {
        self.fn_
    }
    pub fn fp(&self) -> f64 {
        self.fp
    }
    pub fn tn(&self) -> f64 {
        self.tn
    }

    pub fn n(&self) -> f64 {
        self.tp + self.fn_ + self.fp + self.tn
    }
    pub fn positives(&self) -> f64 {
        self.tp + self.fn_
    }
    pub fn negatives(&self) -> f64 {
        self.fp + self.tn
    }

    pub fn is_integral(&self) -> bool {
        [self.tp, self.fn_, self.fp, self.tn]
            .iter()
            .all(|v| v.fract() == 0.0)
    }

    /// Integer-only validation mode; weighted tables legitimately carry fractional cells.
    pub fn require_integral(&self) -> Result<()> {
        if self.is_integral() {
            Ok(())
        } else {
            Err(Error::NonIntegral)
        }
    }

    pub fn quantities(&self) -> Result<TableQuantities> {
        derive_quantities(self)
    }
}

impl fmt::Display for ConfusionTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(tp={}, fn={}, fp={}, tn={})",
            self.tp, self.fn_, self.fp, self.tn
        )
    }
}

/// A ratio of two counts that may have a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Finite(f64),
    /// Non-zero numerator over a zero denominator.
    Infinite,
    /// 0/0.
    Undefined,
}

impl Ratio {
    pub fn of(num: f64, den: f64) -> Self {
        if den > 0.0 {
            Ratio::Finite(num / den)
        } else if num > 0.0 {
            Ratio::Infinite
        } else {
            Ratio::Undefined
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Ratio::Finite(v) => Some(v),
            _ => None,
        }
    }
}

// JSON: number, the string "inf", or null.
impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Ratio::Finite(v) => s.serialize_f64(*v),
            Ratio::Infinite => s.serialize_str("inf"),
            Ratio::Undefined => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Option::<Repr>::deserialize(d)? {
            None => Ok(Ratio::Undefined),
            Some(Repr::Num(v)) => Ok(Ratio::Finite(v)),
            Some(Repr::Str(s)) if s == "inf" => Ok(Ratio::Infinite),
            Some(Repr::Str(s)) => Err(serde::de::Error::custom(format!("bad ratio `{s}`"))),
        }
    }
}

/// Everything read off the margins of one confusion table. Rates whose denominator is zero
/// are `None` (the "--" cells of a table with an empty column).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableQuantities {
    pub n: f64,
    pub base_rate_fail: f64,
    pub base_rate_success: f64,
    pub pred_fail_share: f64,
    pub pred_success_share: f64,
    pub overall_error: f64,
    /// b/(a+b)
    pub fnr: Option<f64>,
    /// c/(c+d)
    pub fpr: Option<f64>,
    /// c/(a+c), failure prediction error
    pub fail_pred_error: Option<f64>,
    /// b/(b+d), success prediction error
    pub success_pred_error: Option<f64>,
    /// b/c
    pub cost_ratio_fn_to_fp: Ratio,
}

fn rate(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

impl TableQuantities {
    pub fn overall_accuracy(&self) -> f64 {
        1.0 - self.overall_error
    }
    /// a/(a+b)
    pub fn tpr(&self) -> Option<f64> {
        self.fnr.map(|v| 1.0 - v)
    }
    /// d/(c+d)
    pub fn tnr(&self) -> Option<f64> {
        self.fpr.map(|v| 1.0 - v)
    }
    /// a/(a+c), conditional use accuracy for predicted failures.
    pub fn ppv(&self) -> Option<f64> {
        self.fail_pred_error.map(|v| 1.0 - v)
    }
    /// d/(b+d), conditional use accuracy for predicted successes.
    pub fn npv(&self) -> Option<f64> {
        self.success_pred_error.map(|v| 1.0 - v)
    }
}

pub fn derive_quantities(t: &ConfusionTable) -> Result<TableQuantities> {
    let n = t.n();
    if n <= 0.0 {
        return Err(Error::EmptyTable);
    }
    let (a, b, c, d) = (t.tp, t.fn_, t.fp, t.tn);
    Ok(TableQuantities {
        n,
        base_rate_fail: (a + b) / n,
        base_rate_success: (c + d) / n,
        pred_fail_share: (a + c) / n,
        pred_success_share: (b + d) / n,
        overall_error: (b + c) / n,
        fnr: rate(b, a + b),
        fpr: rate(c, c + d),
        fail_pred_error: rate(c, a + c),
        success_pred_error: rate(b, b + d),
        cost_ratio_fn_to_fp: Ratio::of(b, c),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub group: String,
    /// `true` = failure, the positive class.
    pub y: bool,
    pub score: Option<f64>,
    pub yhat: Option<bool>,
    pub weight: f64,
    pub legitimate: Vec<f64>,
    pub protected: Vec<f64>,
}

impl Record {
    pub fn new(id: impl Into<String>, group: impl Into<String>, y: bool) -> Self {
        Self {
            id: id.into(),
            group: group.into(),
            y,
            score: None,
            yhat: None,
            weight: 1.0,
            legitimate: Vec::new(),
            protected: Vec::new(),
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn with_yhat(mut self, yhat: bool) -> Self {
        self.yhat = Some(yhat);
        self
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }
}

/// Per-record outcomes, scores and predictions tagged with a protected group label.
/// Legitimate (`L_*`) and protected (`S_*`) predictor columns are named once for the dataset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupedOutcomes {
    pub legitimate_names: Vec<String>,
    pub protected_names: Vec<String>,
    pub records: Vec<Record>,
}

impl GroupedOutcomes {
    pub fn new(records: Vec<Record>) -> Self {
        Self {
            records,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct group labels in sorted order.
    pub fn groups(&self) -> Vec<String> {
        let mut g: Vec<String> = self.records.iter().map(|r| r.group.clone()).collect();
        g.sort();
        g.dedup();
        g
    }

    pub fn has_scores(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.score.is_some())
    }

    pub fn has_predictions(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.yhat.is_some())
    }

    /// Check record-level invariants: a score or a prediction on every record, scores in
    /// [0, 1], positive weights, predictor widths matching the column names, unique ids.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.records.len());
        for r in &self.records {
            let bad = |m: String| Err(Error::InvalidParameter(format!("record `{}`: {m}", r.id)));
            if !seen.insert(r.id.as_str()) {
                return bad("duplicate id".into());
            }
            if r.score.is_none() && r.yhat.is_none() {
                return bad("needs a score or a prediction".into());
            }
            if let Some(s) = r.score {
                if !(0.0..=1.0).contains(&s) {
                    return bad(format!("score {s} outside [0, 1]"));
                }
            }
            if !(r.weight.is_finite() && r.weight > 0.0) {
                return bad(format!("weight {} must be positive", r.weight));
            }
            if r.legitimate.len() != self.legitimate_names.len()
                || r.protected.len() != self.protected_names.len()
            {
                return bad("predictor count does not match the column names".into());
            }
        }
        Ok(())
    }

    /// Copy of the data with `yhat` replaced, one prediction per record in order.
    pub fn with_predictions(&self, predictions: &[bool]) -> Result<Self> {
        if predictions.len() != self.records.len() {
            return Err(Error::InvalidParameter(format!(
                "{} predictions for {} records",
                predictions.len(),
                self.records.len()
            )));
        }
        let mut out = self.clone();
        for (r, &p) in out.records.iter_mut().zip(predictions) {
            r.yhat = Some(p);
        }
        Ok(out)
    }

    /// Predictions from per-group score cutoffs (fail iff score >= threshold).
    pub fn predictions_at(&self, thresholds: &BTreeMap<String, f64>) -> Result<Vec<bool>> {
        for t in thresholds.values() {
            check_threshold(*t)?;
        }
        self.records
            .iter()
            .map(|r| {
                let t = thresholds
                    .get(&r.group)
                    .ok_or_else(|| Error::UnknownGroup(r.group.clone()))?;
                let s = r.score.ok_or_else(|| Error::MissingScore(r.id.clone()))?;
                Ok(s >= *t)
            })
            .collect()
    }
}

pub type GroupTables = BTreeMap<String, ConfusionTable>;

/// Cross-tabulate outcome against prediction per group, accumulating record weights.
pub fn build_tables(data: &GroupedOutcomes) -> Result<GroupTables> {
    if data.records.is_empty() {
        return Err(Error::NoGroups);
    }
    let mut tables = GroupTables::new();
    for r in &data.records {
        let yhat = r.yhat.ok_or_else(|| Error::MissingPrediction(r.id.clone()))?;
        tables
            .entry(r.group.clone())
            .or_insert_with(ConfusionTable::zero)
            .add(r.y, yhat, r.weight);
    }
    Ok(tables)
}

/// One group's table when predictions come from `score >= threshold`.
pub fn table_from_scores(
    data: &GroupedOutcomes,
    group: &str,
    threshold: f64,
) -> Result<ConfusionTable> {
    check_threshold(threshold)?;
    let mut table = ConfusionTable::zero();
    let mut found = false;
    for r in data.records.iter().filter(|r| r.group == group) {
        found = true;
        let s = r.score.ok_or_else(|| Error::MissingScore(r.id.clone()))?;
        table.add(r.y, s >= threshold, r.weight);
    }
    if !found {
        return Err(Error::UnknownGroup(group.to_string()));
    }
    Ok(table)
}

/// All groups' tables under per-group score thresholds.
pub fn tables_at_thresholds(
    data: &GroupedOutcomes,
    thresholds: &BTreeMap<String, f64>,
) -> Result<GroupTables> {
    let predictions = data.predictions_at(thresholds)?;
    build_tables(&data.with_predictions(&predictions)?)
}
