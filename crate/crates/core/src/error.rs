use std::fmt;

use serde::{Deserialize, Serialize};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single problem found while validating tabular input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    /// 1-based line in the source, header is line 1. `None` for file-level issues.
    pub line: Option<u64>,
    pub column: Option<String>,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.line, &self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column `{c}`: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(c)) => write!(f, "column `{c}`: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("no groups")]
    NoGroups,
    #[error("at least two groups are required for a fairness comparison, found {0}")]
    TooFewGroups(usize),
    #[error("record `{0}` has no prediction (yhat)")]
    MissingPrediction(String),
    #[error("record `{0}` has no score")]
    MissingScore(String),
    #[error("confusion cell `{cell}` must be finite and non-negative, got {value}")]
    InvalidCell { cell: &'static str, value: f64 },
    #[error("confusion table is empty (n = 0)")]
    EmptyTable,
    #[error("confusion table has fractional cells but integral counts were required")]
    NonIntegral,
    #[error("threshold {0} outside [0, 1+eps]")]
    InvalidThreshold(f64),
    #[error("identity inapplicable: {0}")]
    IdentityInapplicable(&'static str),
    #[error("unknown scenario `{name}`; catalog: {catalog}")]
    UnknownScenario { name: String, catalog: String },
    #[error("unknown group `{0}`")]
    UnknownGroup(String),
    #[error("group `{group}` has no {class} outcomes")]
    MissingClass { group: String, class: &'static str },
    #[error("group `{0}` is empty")]
    EmptyGroup(String),
    #[error("rank-deficient design: column `{0}` is collinear with earlier columns")]
    RankDeficient(String),
    #[error("group `{0}` needs both positive and negative outcomes")]
    DegenerateTable(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("indeterminate: {0}")]
    Indeterminate(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{}", join_issues(.0))]
    Validation(Vec<ValidationIssue>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join_issues(issues: &[ValidationIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// Input problems (bad data, bad arguments) as opposed to failures of a computation on
    /// valid input. The CLI maps these to distinct exit codes.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::IdentityInapplicable(_)
                | Error::RankDeficient(_)
                | Error::DegenerateTable(_)
                | Error::Infeasible(_)
                | Error::Indeterminate(_)
                | Error::EmptyTable
                | Error::MissingClass { .. }
        )
    }
}
