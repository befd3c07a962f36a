//! Dataset ingestion, synthetic generation and report serialization.

pub mod csv;
pub mod report;
pub mod synthetic;

pub use self::csv::{emit_csv, emit_csv_bytes, load_csv, load_csv_path};
pub use report::{dataset_hash, emit_report, parse_report, to_canonical_json, ReportFormat};
pub use synthetic::{generate_synthetic, generate_synthetic_with, GroupSpec, SyntheticSpec};
