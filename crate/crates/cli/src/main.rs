mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "fairlens", version, about = "Fairness audits for binary risk classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fairness report for a dataset's predictions, a common cutoff or a stored policy.
    Audit(AuditArgs),
    /// Print catalog scenarios with every derived quantity.
    Scenario(ScenarioArgs),
    /// Apply a correction and write the result with a before/after report pair.
    Correct(CorrectArgs),
    /// Sweep one group's cutoff and emit the tradeoff frontier as CSV.
    Sweep(SweepArgs),
    /// Generate a synthetic scored dataset from a JSON spec.
    Gen(GenArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Json,
    Md,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[arg(long)]
    data: PathBuf,
    /// Cutoff applied to every group's scores.
    #[arg(long, conflicts_with = "policy")]
    threshold: Option<f64>,
    /// Threshold or mixing policy JSON.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long, default_value_t = fairlens::DEFAULT_TOLERANCE)]
    tol: f64,
    /// Report file; `.md` selects markdown. Standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Format for standard output.
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    format: OutFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScenarioFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    #[arg(long, required_unless_present = "list")]
    name: Vec<String>,
    /// List catalog names.
    #[arg(long)]
    list: bool,
    #[arg(long, value_enum, default_value_t = ScenarioFormat::Text)]
    format: ScenarioFormat,
    /// Also write the named scenarios as one record-level CSV.
    #[arg(long)]
    emit_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Residualize,
    Reweight,
    Relabel,
    Perturb,
    TuneThresholds,
    Reassign,
    EqualizedOdds,
}

#[derive(Debug, Args)]
struct CorrectArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = fairlens::DEFAULT_TOLERANCE)]
    tol: f64,
    /// Target failure base rate (reweight defaults to the pooled rate).
    #[arg(long)]
    target_rate: Option<f64>,
    /// Residualize one predictor at a time, conditioning on those already done.
    #[arg(long)]
    sequential: bool,
    /// Predictor processing order, comma separated.
    #[arg(long, value_delimiter = ',')]
    order: Option<Vec<String>>,
    /// Interaction of two protected columns, `S_a:S_b`.
    #[arg(long)]
    interaction: Vec<String>,
    /// Share of records whose group label is reassigned.
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    reference_threshold: Option<f64>,
    #[arg(long, default_value = "ppv")]
    target: String,
    /// Baseline cutoff for reassignment.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Number of predictions reassignment may flip.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, default_value = "conditional_use_accuracy_equality")]
    objective: String,
    #[arg(long, default_value = "equalized_odds")]
    constraint: String,
    #[arg(long, default_value_t = 1.0)]
    fn_cost: f64,
    #[arg(long, default_value_t = 1.0)]
    fp_cost: f64,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    group: String,
    #[arg(long, default_value_t = 101)]
    grid: usize,
    /// Cutoff held by every other group.
    #[arg(long, default_value_t = fairlens::frontier::DEFAULT_OTHER_THRESHOLD)]
    other_threshold: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    #[arg(long, env = "FAIRLENS_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Allow cross-origin requests from any origin.
    #[arg(long)]
    cors: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Audit(a) => commands::audit(a),
        Command::Scenario(a) => commands::scenario(a),
        Command::Correct(a) => commands::correct(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Gen(a) => commands::gen(a),
        Command::Serve(a) => commands::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 for bad input, 2 for a computation that cannot produce an answer on valid input.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<fairlens::Error>()) {
        Some(err) if !err.is_validation() => 2,
        _ => 1,
    }
}
