//! Group-fairness auditing for binary risk classifiers.
//!
//! Outcomes are coded with failure as the positive class. A [`ConfusionTable`] per group
//! feeds the six fairness checks in [`fairness`]; [`feasibility`] explains when they can
//! hold together; [`correct_pre`], [`correct_in`] and [`correct_post`] adjust data,
//! thresholds or labels; [`data`] reads, writes and generates datasets and reports.

pub mod confusion;
pub mod correct_in;
pub mod correct_post;
pub mod correct_pre;
pub mod data;
pub mod error;
pub mod fairness;
pub mod feasibility;
pub mod frontier;
pub mod par;
pub mod rng;

pub use confusion::{
    build_tables, derive_quantities, table_from_scores, tables_at_thresholds, ConfusionTable,
    GroupTables, GroupedOutcomes, Ratio, Record, TableQuantities, ABOVE_ONE,
};
pub use error::{Error, Result, ValidationIssue};
pub use fairness::{
    evaluate_all, evaluate_data, CheckId, CheckResult, CheckStatus, FairnessReport,
    DEFAULT_TOLERANCE, REPORT_SCHEMA,
};
pub use par::Execution;
