//! Seeded synthetic two-class score data.
//!
//! Each group has an exact number of failures, `round(n * base_rate_fail)`, placed by a
//! seeded shuffle. A latent value is drawn for every record as `+q/2` (failure) or `-q/2`
//! (success) plus triangular noise on (-1, 1), where `q` is the score quality. The reported
//! score is the posterior failure probability of that latent value, so scores are calibrated
//! within the group. At `q = 0` every score equals the base rate; from `q = 2`
//! ([`SEPARATION_QUALITY`]) the two class-conditional supports no longer overlap and the
//! scores separate the classes perfectly.
//!
//! Group `k` (its position in the spec) draws from stream `k` of the spec seed, so a group's
//! records do not depend on the other groups.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::confusion::{GroupedOutcomes, Record};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::rng::substream;

pub const SEPARATION_QUALITY: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub n: usize,
    pub base_rate_fail: f64,
    pub score_quality: f64,
}

impl GroupSpec {
    pub fn new(name: impl Into<String>, n: usize, base_rate_fail: f64, score_quality: f64) -> Self {
        Self {
            name: name.into(),
            n,
            base_rate_fail,
            score_quality,
        }
    }

    pub fn failures(&self) -> usize {
        (self.n as f64 * self.base_rate_fail).round() as usize
    }
}

/// Optional predictor columns: `legitimate` columns `L_1..` that depend on the group index
/// with strength `dependence` and on the outcome, plus one protected indicator column per
/// group after the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub legitimate: usize,
    pub dependence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub groups: Vec<GroupSpec>,
    #[serde(default)]
    pub predictors: Option<PredictorSpec>,
}

impl SyntheticSpec {
    pub fn new(seed: u64, groups: Vec<GroupSpec>) -> Self {
        Self {
            seed,
            groups,
            predictors: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::NoGroups);
        }
        let mut names: Vec<&str> = self.groups.iter().map(|g| g.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(format!("group `{}` listed twice", w[0])));
        }
        for g in &self.groups {
            if g.name.is_empty() {
                return Err(Error::InvalidParameter("group name must not be empty".into()));
            }
            if g.n == 0 {
                return Err(Error::EmptyGroup(g.name.clone()));
            }
            if !(g.base_rate_fail > 0.0 && g.base_rate_fail < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "base_rate_fail of `{}` must lie in (0, 1), got {}",
                    g.name, g.base_rate_fail
                )));
            }
            if !(g.score_quality >= 0.0 && g.score_quality.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "score_quality of `{}` must be finite and >= 0, got {}",
                    g.name, g.score_quality
                )));
            }
        }
        if let Some(p) = &self.predictors {
            if !p.dependence.is_finite() {
                return Err(Error::InvalidParameter("predictor dependence must be finite".into()));
            }
        }
        Ok(())
    }
}

fn triangular(x: f64) -> f64 {
    (1.0 - x.abs()).max(0.0)
}

/// Posterior failure probability of latent value `z`.
pub fn calibrated_score(z: f64, base_rate_fail: f64, quality: f64) -> f64 {
    if quality == 0.0 {
        return base_rate_fail;
    }
    let f1 = base_rate_fail * triangular(z - quality / 2.0);
    let f0 = (1.0 - base_rate_fail) * triangular(z + quality / 2.0);
    if f1 + f0 > 0.0 {
        f1 / (f1 + f0)
    } else {
        base_rate_fail
    }
}

fn noise(rng: &mut impl Rng) -> f64 {
    rng.gen::<f64>() + rng.gen::<f64>() - 1.0
}

fn generate_group(
    index: usize,
    g: &GroupSpec,
    seed: u64,
    groups: usize,
    predictors: Option<&PredictorSpec>,
) -> Vec<Record> {
    let mut rng = substream(seed, index as u64);
    let mut fail = vec![false; g.n];
    fail[..g.failures()].fill(true);
    fail.shuffle(&mut rng);
    fail.iter()
        .enumerate()
        .map(|(i, &y)| {
            let shift = if y { g.score_quality / 2.0 } else { -g.score_quality / 2.0 };
            let z = shift + noise(&mut rng);
            let mut r = Record::new(format!("{}-{:06}", g.name, i), g.name.clone(), y)
                .with_score(calibrated_score(z, g.base_rate_fail, g.score_quality));
            if let Some(p) = predictors {
                r.legitimate = (0..p.legitimate)
                    .map(|_| p.dependence * index as f64 + 0.5 * f64::from(u8::from(y)) + noise(&mut rng))
                    .collect();
                r.protected = (1..groups).map(|k| f64::from(u8::from(k == index))).collect();
            }
            r
        })
        .collect()
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<GroupedOutcomes> {
    generate_synthetic_with(spec, Execution::default())
}

pub fn generate_synthetic_with(spec: &SyntheticSpec, exec: Execution) -> Result<GroupedOutcomes> {
    spec.validate()?;
    let indexed: Vec<(usize, &GroupSpec)> = spec.groups.iter().enumerate().collect();
    let parts = exec.map(&indexed, |&(i, g)| {
        generate_group(i, g, spec.seed, spec.groups.len(), spec.predictors.as_ref())
    });
    let mut data = GroupedOutcomes::new(parts.into_iter().flatten().collect());
    if let Some(p) = &spec.predictors {
        data.legitimate_names = (1..=p.legitimate).map(|j| format!("L_{j}")).collect();
        data.protected_names = spec.groups[1..].iter().map(|g| format!("S_{}", g.name)).collect();
    }
    Ok(data)
}
