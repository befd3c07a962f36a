use std::path::Path;

use anyhow::{anyhow, Context, Result};
use fairlens::correct_in::{tune_group_thresholds, uncertainty_reassign, Budget, ThresholdPolicy, TuneTarget};
use fairlens::correct_post::{apply_mixing_to, expected_tables, solve_mixing, ErrorCosts, MixingOptions, MixingPolicy};
use fairlens::correct_pre::{
    perturb_protected, rebalance_weights, relabel, residualize_with, ResidualizeOptions,
};
use fairlens::data::report::ReportFormat;
use fairlens::data::synthetic::{generate_synthetic, SyntheticSpec};
use fairlens::data::{dataset_hash, emit_csv_bytes, emit_report, load_csv, to_canonical_json};
use fairlens::feasibility::{catalog, scenario as find_scenario, scenarios_to_records};
use fairlens::frontier::{emit_frontier_csv, frontier_with};
use fairlens::{build_tables, evaluate_all, CheckId, Execution, FairnessReport, GroupedOutcomes};
use fairlens_service::ServiceConfig;
use serde::Deserialize;

use crate::output::{emit, json_lines, scenario_text, stdout, write_file};
use crate::{AuditArgs, CorrectArgs, GenArgs, Method, OutFormat, ScenarioArgs, ScenarioFormat, ServeArgs, SweepArgs};

struct Input {
    data: GroupedOutcomes,
    hash: String,
}

fn load(path: &Path) -> Result<Input> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let data = load_csv(&bytes[..]).with_context(|| format!("validating {}", path.display()))?;
    Ok(Input {
        data,
        hash: dataset_hash(&bytes),
    })
}

/// The classifier as given: stored predictions when every record has one, otherwise scores
/// cut at .5.
fn baseline(data: &GroupedOutcomes) -> Result<GroupedOutcomes> {
    if data.has_predictions() {
        return Ok(data.clone());
    }
    if data.has_scores() {
        let th = data.groups().into_iter().map(|g| (g, 0.5)).collect();
        return Ok(data.with_predictions(&data.predictions_at(&th)?)?);
    }
    Err(fairlens::Error::InvalidParameter("dataset has neither a yhat nor a score column".into()).into())
}

fn report_for(data: &GroupedOutcomes, tol: f64, hash: &str) -> Result<FairnessReport> {
    let mut report = evaluate_all(&build_tables(data)?, tol)?;
    report.metadata.dataset_hash = Some(hash.to_string());
    Ok(report)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PolicyFile {
    Threshold(ThresholdPolicy),
    Mixing(MixingPolicy),
}

pub fn audit(args: AuditArgs) -> Result<()> {
    let input = load(&args.data)?;
    let data = &input.data;
    let report = if let Some(t) = args.threshold {
        let policy = ThresholdPolicy::manual(data.groups().into_iter().map(|g| (g, t)).collect())?;
        let mut r = report_for(&data.with_predictions(&policy.predictions(data)?)?, args.tol, &input.hash)?;
        r.metadata.threshold_policy = Some(policy);
        r
    } else if let Some(path) = &args.policy {
        let text = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let policy: PolicyFile = serde_json::from_slice(&text)
            .with_context(|| format!("{} is neither a threshold nor a mixing policy", path.display()))?;
        match policy {
            PolicyFile::Threshold(policy) => {
                let mut r = report_for(&data.with_predictions(&policy.predictions(data)?)?, args.tol, &input.hash)?;
                r.metadata.threshold_policy = Some(policy);
                r
            }
            PolicyFile::Mixing(policy) => {
                let tables = build_tables(&baseline(data)?)?;
                let mut r = evaluate_all(&expected_tables(&tables, &policy)?, args.tol)?;
                r.metadata.dataset_hash = Some(input.hash.clone());
                r.metadata.mixing_policy = Some(policy);
                r.metadata.notes.push("expected tables under the mixing policy".into());
                r
            }
        }
    } else {
        report_for(&baseline(data)?, args.tol, &input.hash)?
    };
    match &args.out {
        Some(path) => write_file(path, &emit_report(&report, ReportFormat::for_path(path))?),
        None => {
            let fmt = match args.format {
                OutFormat::Json => ReportFormat::Json,
                OutFormat::Md => ReportFormat::Markdown,
            };
            stdout(&emit_report(&report, fmt)?)
        }
    }
}

pub fn scenario(args: ScenarioArgs) -> Result<()> {
    if args.list {
        let mut out = catalog().join("\n");
        out.push('\n');
        stdout(out.as_bytes())?;
        if args.name.is_empty() {
            return Ok(());
        }
    }
    let scenarios = args
        .name
        .iter()
        .map(|n| find_scenario(n))
        .collect::<fairlens::Result<Vec<_>>>()?;
    let summaries = scenarios.iter().map(|s| s.summary()).collect::<fairlens::Result<Vec<_>>>()?;
    let out = match args.format {
        ScenarioFormat::Text => summaries.iter().map(scenario_text).collect::<Vec<_>>().join("\n").into_bytes(),
        ScenarioFormat::Json if summaries.len() == 1 => to_canonical_json(&summaries[0])?,
        ScenarioFormat::Json => to_canonical_json(&summaries)?,
    };
    stdout(&out)?;
    if let Some(path) = &args.emit_csv {
        write_file(path, &emit_csv_bytes(&scenarios_to_records(&scenarios)?)?)?;
    }
    Ok(())
}

fn interactions(specs: &[String]) -> Result<Vec<(String, String)>> {
    specs
        .iter()
        .map(|s| {
            s.split_once(':')
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .ok_or_else(|| anyhow!(fairlens::Error::InvalidParameter(format!("interaction `{s}` is not `S_a:S_b`"))))
        })
        .collect()
}

fn require<T>(value: Option<T>, flag: &str, method: &str) -> Result<T> {
    value.ok_or_else(|| anyhow!(fairlens::Error::InvalidParameter(format!("--{flag} is required for {method}"))))
}

struct Outputs<'a> {
    dir: &'a Path,
}

impl Outputs<'_> {
    fn bytes(&self, name: &str, bytes: &[u8]) -> Result<()> {
        write_file(&self.dir.join(name), bytes)
    }

    fn dataset(&self, data: &GroupedOutcomes) -> Result<String> {
        let bytes = emit_csv_bytes(data)?;
        self.bytes("data.csv", &bytes)?;
        Ok(dataset_hash(&bytes))
    }

    fn reports(&self, before: &FairnessReport, after: &FairnessReport) -> Result<()> {
        self.bytes("before.json", &to_canonical_json(before)?)?;
        self.bytes("after.json", &to_canonical_json(after)?)
    }
}

pub fn correct(args: CorrectArgs) -> Result<()> {
    let input = load(&args.data)?;
    let data = &input.data;
    let out = Outputs { dir: &args.out_dir };
    let before = || -> Result<FairnessReport> {
        let mut r = report_for(&baseline(data)?, args.tol, &input.hash)?;
        r.metadata.seed = Some(args.seed);
        Ok(r)
    };
    let after_data = |changed: &GroupedOutcomes, hash: &str| -> Result<FairnessReport> {
        let mut r = report_for(&baseline(changed)?, args.tol, hash)?;
        r.metadata.seed = Some(args.seed);
        Ok(r)
    };
    match args.method {
        Method::Residualize => {
            let options = ResidualizeOptions {
                interactions: interactions(&args.interaction)?,
                order: args.order.clone(),
                sequential: args.sequential,
            };
            let (changed, model) = residualize_with(data, &options)?;
            let hash = out.dataset(&changed)?;
            out.bytes("model.json", &to_canonical_json(&model)?)?;
            if data.has_predictions() || data.has_scores() {
                out.reports(&before()?, &after_data(&changed, &hash)?)?;
            } else {
                eprintln!("no predictions or scores; skipping the report pair");
            }
        }
        Method::Reweight => {
            let weights = rebalance_weights(data, args.target_rate)?;
            let changed = weights.apply(data)?;
            let hash = out.dataset(&changed)?;
            out.bytes("weights.json", &to_canonical_json(&weights)?)?;
            out.reports(&before()?, &after_data(&changed, &hash)?)?;
        }
        Method::Relabel => {
            let target = require(args.target_rate, "target-rate", "relabel")?;
            let result = relabel(data, target, args.seed)?;
            let hash = out.dataset(&result.data)?;
            out.bytes("flips.jsonl", &json_lines(&result.log)?)?;
            out.reports(&before()?, &after_data(&result.data, &hash)?)?;
        }
        Method::Perturb => {
            let fraction = require(args.fraction, "fraction", "perturb")?;
            let result = perturb_protected(data, fraction, args.seed)?;
            let hash = out.dataset(&result.data)?;
            out.bytes("changes.jsonl", &json_lines(&result.log)?)?;
            out.reports(&before()?, &after_data(&result.data, &hash)?)?;
        }
        Method::TuneThresholds => {
            let reference = require(args.reference.clone(), "reference", "tune-thresholds")?;
            let target: TuneTarget = args.target.parse()?;
            let result = tune_group_thresholds(
                data,
                &reference,
                args.reference_threshold,
                target,
                args.tol,
                Execution::default(),
            )?;
            out.bytes("policy.json", &to_canonical_json(&result)?)?;
            let tuned = data.with_predictions(&result.policy.predictions(data)?)?;
            let mut after = report_for(&tuned, args.tol, &input.hash)?;
            after.metadata.seed = Some(args.seed);
            after.metadata.threshold_policy = Some(result.policy.clone());
            out.reports(&before()?, &after)?;
            if !result.within_tolerance {
                eprintln!("tuned gaps exceed the tolerance {} for at least one group", args.tol);
            }
        }
        Method::Reassign => {
            let groups = data.groups();
            let policy = ThresholdPolicy::manual(groups.into_iter().map(|g| (g, args.threshold)).collect())?;
            let objective: CheckId = args.objective.parse()?;
            let budget = Budget::Count(args.budget.unwrap_or(data.len()));
            let result = uncertainty_reassign(data, &policy, budget, objective)?;
            let changed = data.with_predictions(&result.predictions)?;
            let hash = out.dataset(&changed)?;
            let log: Vec<_> = result
                .flipped
                .iter()
                .zip(&result.trace)
                .map(|(&i, &d)| {
                    let r = &changed.records[i];
                    serde_json::json!({"id": r.id, "group": r.group, "yhat": u8::from(r.yhat == Some(true)), "disparity": d})
                })
                .collect();
            out.bytes("flips.jsonl", &json_lines(&log)?)?;
            let mut start = report_for(&data.with_predictions(&policy.predictions(data)?)?, args.tol, &input.hash)?;
            start.metadata.seed = Some(args.seed);
            start.metadata.threshold_policy = Some(policy);
            out.reports(&start, &after_data(&changed, &hash)?)?;
        }
        Method::EqualizedOdds => {
            let base = baseline(data)?;
            let tables = build_tables(&base)?;
            let options = MixingOptions {
                tolerance: args.tol,
                constraint: args.constraint.parse()?,
                costs: ErrorCosts {
                    fn_cost: args.fn_cost,
                    fp_cost: args.fp_cost,
                },
            };
            let policy = solve_mixing(&tables, &options)?;
            out.bytes("policy.json", &to_canonical_json(&policy)?)?;
            let mixed = apply_mixing_to(&base, &policy, args.seed)?;
            let hash = out.dataset(&mixed)?;
            let mut after = evaluate_all(&expected_tables(&tables, &policy)?, args.tol)?;
            after.metadata.dataset_hash = Some(input.hash.clone());
            after.metadata.seed = Some(args.seed);
            after.metadata.mixing_policy = Some(policy);
            after.metadata.notes.push("expected tables under the mixing policy".into());
            out.bytes("after_realized.json", &to_canonical_json(&after_data(&mixed, &hash)?)?)?;
            out.reports(&before()?, &after)?;
        }
    }
    Ok(())
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let input = load(&args.data)?;
    let rows = frontier_with(&input.data, &args.group, args.grid, args.other_threshold, Execution::default())?;
    let mut buf = Vec::new();
    emit_frontier_csv(&rows, &mut buf)?;
    emit(args.out.as_deref(), &buf)
}

pub fn gen(args: GenArgs) -> Result<()> {
    let text = std::fs::read(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    let mut value: serde_json::Value =
        serde_json::from_slice(&text).with_context(|| format!("parsing {}", args.spec.display()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| anyhow!("{} must hold a JSON object", args.spec.display()))?;
    if let Some(s) = obj.get("seed").and_then(|v| v.as_u64()).filter(|&s| s != args.seed) {
        eprintln!("spec seed {s} overridden by --seed {}", args.seed);
    }
    obj.insert("seed".into(), args.seed.into());
    let spec: SyntheticSpec =
        serde_json::from_value(value).with_context(|| format!("invalid spec {}", args.spec.display()))?;
    let data = generate_synthetic(&spec)?;
    emit(args.out.as_deref(), &emit_csv_bytes(&data)?)
}

pub fn serve(args: ServeArgs) -> Result<()> {
    let config = ServiceConfig {
        data_dir: args.data_dir,
        permissive_cors: args.cors,
    };
    let addr = std::net::SocketAddr::new(args.host, args.port);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        eprintln!("listening on http://{addr}");
        fairlens_service::serve(addr, config).await
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interaction_flags_parse() {
        assert_eq!(
            interactions(&["S_a:S_b".into()]).unwrap(),
            vec![("S_a".to_string(), "S_b".to_string())]
        );
        assert!(interactions(&["S_a".into()]).is_err());
    }
}
