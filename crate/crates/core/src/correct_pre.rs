//! Pre-processing corrections applied to the data before any classifier sees it:
//! residualizing legitimate predictors on protected ones, reweighting or relabeling
//! outcomes to a common base rate, and perturbing group membership.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::confusion::GroupedOutcomes;
use crate::error::{Error, Result, ValidationIssue};
use crate::rng::{seeded, substream};

/// Relative size of a QR diagonal entry below which a design column counts as collinear.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResidualizeOptions {
    /// Products of pairs of protected columns added to the design.
    #[serde(default)]
    pub interactions: Vec<(String, String)>,
    /// Order in which legitimate predictors are processed; defaults to column order.
    #[serde(default)]
    pub order: Option<Vec<String>>,
    /// Condition each predictor also on the already transformed predictors before it.
    #[serde(default)]
    pub sequential: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorFit {
    pub name: String,
    /// Design columns this predictor was regressed on, intercept first.
    pub regressors: Vec<String>,
    pub coefficients: Vec<f64>,
}

/// Fitted projections of each legitimate predictor, reusable on new records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualizationModel {
    pub protected: Vec<String>,
    pub interactions: Vec<(String, String)>,
    pub order: Vec<String>,
    pub sequential: bool,
    pub fits: Vec<PredictorFit>,
}

impl ResidualizationModel {
    /// Replace every fitted predictor of `data` by its residual under the stored
    /// coefficients. Columns are matched by name.
    pub fn apply(&self, data: &GroupedOutcomes) -> Result<GroupedOutcomes> {
        require_finite(data)?;
        let base = base_design(data, &self.protected, &self.interactions)?;
        let mut out = data.clone();
        let mut done: Vec<(String, Vec<f64>)> = Vec::new();
        for fit in &self.fits {
            let col = legit_index(data, &fit.name)?;
            let x: Vec<f64> = data.records.iter().map(|r| r.legitimate[col]).collect();
            let design = extend(&base, self.sequential.then_some(done.as_slice()));
            if design.ncols() != fit.coefficients.len() {
                return Err(Error::InvalidParameter(format!(
                    "model for `{}` expects {} regressors, data gives {}",
                    fit.name,
                    fit.coefficients.len(),
                    design.ncols()
                )));
            }
            let fitted = &design * DVector::from_column_slice(&fit.coefficients);
            let resid: Vec<f64> = x.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
            for (r, v) in out.records.iter_mut().zip(&resid) {
                r.legitimate[col] = *v;
            }
            done.push((fit.name.clone(), resid));
        }
        Ok(out)
    }
}

fn require_finite(data: &GroupedOutcomes) -> Result<()> {
    let issues: Vec<ValidationIssue> = data
        .records
        .iter()
        .filter(|r| r.legitimate.iter().chain(&r.protected).any(|v| !v.is_finite()))
        .map(|r| ValidationIssue {
            line: None,
            column: None,
            message: format!("record `{}` has a missing or non-finite predictor value", r.id),
        })
        .collect();
    if issues.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(issues))
    }
}

fn legit_index(data: &GroupedOutcomes, name: &str) -> Result<usize> {
    data.legitimate_names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::InvalidParameter(format!("no legitimate predictor `{name}`")))
}

struct Design {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

fn base_design(
    data: &GroupedOutcomes,
    protected: &[String],
    interactions: &[(String, String)],
) -> Result<Design> {
    let n = data.len();
    let mut names = vec!["intercept".to_string()];
    let mut columns = vec![vec![1.0; n]];
    let pcol = |name: &str| {
        data.protected_names
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::InvalidParameter(format!("no protected predictor `{name}`")))
    };
    for name in protected {
        let j = pcol(name)?;
        names.push(name.clone());
        columns.push(data.records.iter().map(|r| r.protected[j]).collect());
    }
    for (a, b) in interactions {
        let (i, j) = (pcol(a)?, pcol(b)?);
        names.push(format!("{a}*{b}"));
        columns.push(data.records.iter().map(|r| r.protected[i] * r.protected[j]).collect());
    }
    Ok(Design { names, columns })
}

fn extend(base: &Design, previous: Option<&[(String, Vec<f64>)]>) -> DMatrix<f64> {
    let n = base.columns[0].len();
    let extra = previous.unwrap_or(&[]);
    let cols: Vec<&Vec<f64>> = base.columns.iter().chain(extra.iter().map(|(_, c)| c)).collect();
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

fn design_names(base: &Design, previous: Option<&[(String, Vec<f64>)]>) -> Vec<String> {
    let mut names = base.names.clone();
    names.extend(previous.unwrap_or(&[]).iter().map(|(n, _)| n.clone()));
    names
}

/// Least-squares coefficients of `y` on the columns of `x` via Householder QR, failing with
/// the first column that is (numerically) a combination of earlier ones.
fn least_squares(x: &DMatrix<f64>, y: &[f64], names: &[String]) -> Result<Vec<f64>> {
    if x.nrows() < x.ncols() {
        return Err(Error::RankDeficient(names[x.nrows().min(names.len() - 1)].clone()));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    for j in 0..x.ncols() {
        let scale = x.column(j).norm().max(1.0);
        if r[(j, j)].abs() <= RANK_TOL * scale {
            return Err(Error::RankDeficient(names[j].clone()));
        }
    }
    let qty = qr.q().transpose() * DVector::from_column_slice(y);
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient(names[0].clone()))?;
    Ok(beta.iter().copied().collect())
}

/// Residualize every legitimate predictor on an intercept and all protected predictors.
pub fn residualize(data: &GroupedOutcomes) -> Result<(GroupedOutcomes, ResidualizationModel)> {
    residualize_with(data, &ResidualizeOptions::default())
}

/// Residualize predictors one at a time in `order`, each also conditioned on the ones
/// already transformed.
pub fn sequential_residualize(
    data: &GroupedOutcomes,
    order: Option<Vec<String>>,
) -> Result<(GroupedOutcomes, ResidualizationModel)> {
    residualize_with(
        data,
        &ResidualizeOptions {
            order,
            sequential: true,
            ..ResidualizeOptions::default()
        },
    )
}

pub fn residualize_with(
    data: &GroupedOutcomes,
    options: &ResidualizeOptions,
) -> Result<(GroupedOutcomes, ResidualizationModel)> {
    if data.legitimate_names.is_empty() {
        return Err(Error::InvalidParameter("no legitimate (L_) predictor columns".into()));
    }
    if data.protected_names.is_empty() {
        return Err(Error::InvalidParameter("no protected (S_) predictor columns".into()));
    }
    data.validate()?;
    require_finite(data)?;
    let order = options.order.clone().unwrap_or_else(|| data.legitimate_names.clone());
    for name in &order {
        legit_index(data, name)?;
    }
    let base = base_design(data, &data.protected_names, &options.interactions)?;
    let mut out = data.clone();
    let mut done: Vec<(String, Vec<f64>)> = Vec::new();
    let mut fits = Vec::with_capacity(order.len());
    for name in &order {
        let col = legit_index(data, name)?;
        let y: Vec<f64> = data.records.iter().map(|r| r.legitimate[col]).collect();
        let prev = options.sequential.then_some(done.as_slice());
        let x = extend(&base, prev);
        let names = design_names(&base, prev);
        let beta = least_squares(&x, &y, &names)?;
        let fitted = &x * DVector::from_column_slice(&beta);
        let resid: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
        for (r, v) in out.records.iter_mut().zip(&resid) {
            r.legitimate[col] = *v;
        }
        fits.push(PredictorFit {
            name: name.clone(),
            regressors: names,
            coefficients: beta,
        });
        done.push((name.clone(), resid));
    }
    let model = ResidualizationModel {
        protected: data.protected_names.clone(),
        interactions: options.interactions.clone(),
        order,
        sequential: options.sequential,
        fits,
    };
    Ok((out, model))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub fail: f64,
    pub success: f64,
}

/// Per-group outcome weights that move every group's weighted failure rate to
/// `target_rate`. A group's total weight is unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebalanceWeights {
    pub target_rate: f64,
    pub weights: BTreeMap<String, ClassWeights>,
}

impl RebalanceWeights {
    /// Multiply each record's weight by its (group, outcome) factor.
    pub fn apply(&self, data: &GroupedOutcomes) -> Result<GroupedOutcomes> {
        let mut out = data.clone();
        for r in &mut out.records {
            let w = self
                .weights
                .get(&r.group)
                .ok_or_else(|| Error::UnknownGroup(r.group.clone()))?;
            r.weight *= if r.y { w.fail } else { w.success };
        }
        Ok(out)
    }
}

/// Weighted (fail, total) per group.
fn group_mass(data: &GroupedOutcomes) -> Result<BTreeMap<String, (f64, f64)>> {
    if data.is_empty() {
        return Err(Error::NoGroups);
    }
    let mut acc: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for r in &data.records {
        let e = acc.entry(r.group.clone()).or_default();
        e.1 += r.weight;
        if r.y {
            e.0 += r.weight;
        }
    }
    Ok(acc)
}

/// Weights `target / observed` for failures and `(1 - target) / (1 - observed)` for
/// successes, group by group. The default target is the pooled failure rate.
pub fn rebalance_weights(data: &GroupedOutcomes, target_rate: Option<f64>) -> Result<RebalanceWeights> {
    let mass = group_mass(data)?;
    let target = match target_rate {
        Some(t) if (0.0..=1.0).contains(&t) => t,
        Some(t) => return Err(Error::InvalidParameter(format!("target rate {t} outside [0, 1]"))),
        None => {
            let (f, n) = mass.values().fold((0.0, 0.0), |(a, b), (f, n)| (a + f, b + n));
            f / n
        }
    };
    let mut weights = BTreeMap::new();
    for (g, (fail, n)) in mass {
        if fail <= 0.0 {
            return Err(Error::MissingClass { group: g, class: "failure" });
        }
        if fail >= n {
            return Err(Error::MissingClass { group: g, class: "success" });
        }
        let p = fail / n;
        weights.insert(
            g,
            ClassWeights {
                fail: target / p,
                success: (1.0 - target) / (1.0 - p),
            },
        );
    }
    Ok(RebalanceWeights {
        target_rate: target,
        weights,
    })
}

/// One changed record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFlip {
    pub id: String,
    pub group: String,
    pub from: u8,
    pub to: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relabeled {
    pub data: GroupedOutcomes,
    pub log: Vec<LabelFlip>,
}

/// Flip `round(n_g * (observed_g - target))` outcome labels in each group, chosen uniformly
/// at random among the records of the over-represented class. Group `k` in sorted order
/// draws from stream `k` of `seed`. Counts are unweighted.
pub fn relabel(data: &GroupedOutcomes, target_rate: f64, seed: u64) -> Result<Relabeled> {
    if !(0.0..=1.0).contains(&target_rate) {
        return Err(Error::InvalidParameter(format!("target rate {target_rate} outside [0, 1]")));
    }
    if data.is_empty() {
        return Err(Error::NoGroups);
    }
    let mut out = data.clone();
    let mut flip = vec![false; data.len()];
    for (k, g) in data.groups().iter().enumerate() {
        let members: Vec<usize> = (0..data.len()).filter(|&i| &data.records[i].group == g).collect();
        let n = members.len() as f64;
        let fails = members.iter().filter(|&&i| data.records[i].y).count() as f64;
        let delta = (n * (fails / n - target_rate)).round() as i64;
        if delta == 0 {
            continue;
        }
        let from_fail = delta > 0;
        let pool: Vec<usize> = members
            .into_iter()
            .filter(|&i| data.records[i].y == from_fail)
            .collect();
        let amount = (delta.unsigned_abs() as usize).min(pool.len());
        let mut rng = substream(seed, k as u64);
        for j in sample(&mut rng, pool.len(), amount) {
            flip[pool[j]] = true;
        }
    }
    let mut log = Vec::new();
    for (r, &f) in out.records.iter_mut().zip(&flip) {
        if f {
            log.push(LabelFlip {
                id: r.id.clone(),
                group: r.group.clone(),
                from: u8::from(r.y),
                to: u8::from(!r.y),
            });
            r.y = !r.y;
        }
    }
    Ok(Relabeled { data: out, log })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupChange {
    pub id: String,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Perturbed {
    pub data: GroupedOutcomes,
    pub log: Vec<GroupChange>,
}

/// Reassign the group label of `round(fraction * N)` uniformly chosen records, drawing each
/// new label from the empirical distribution of the other groups. Only the group label
/// changes; predictor columns are left as they are.
pub fn perturb_protected(data: &GroupedOutcomes, fraction: f64, seed: u64) -> Result<Perturbed> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!("fraction {fraction} outside [0, 1]")));
    }
    let groups = data.groups();
    if groups.len() < 2 {
        return Err(Error::TooFewGroups(groups.len()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &data.records {
        *counts.entry(r.group.as_str()).or_default() += 1;
    }
    let amount = (fraction * data.len() as f64).round() as usize;
    let mut rng = seeded(seed);
    let mut chosen: Vec<usize> = sample(&mut rng, data.len(), amount).into_vec();
    chosen.sort_unstable();
    let mut out = data.clone();
    let mut log = Vec::with_capacity(amount);
    for i in chosen {
        let own = data.records[i].group.as_str();
        let others: Vec<(&str, usize)> =
            counts.iter().filter(|(g, _)| **g != own).map(|(g, c)| (*g, *c)).collect();
        let total: usize = others.iter().map(|(_, c)| c).sum();
        let mut u = rng.gen_range(0..total);
        let mut to = others[0].0;
        for (g, c) in &others {
            if u < *c {
                to = g;
                break;
            }
            u -= c;
        }
        log.push(GroupChange {
            id: data.records[i].id.clone(),
            from: own.to_string(),
            to: to.to_string(),
        });
        out.records[i].group = to.to_string();
    }
    Ok(Perturbed { data: out, log })
}
