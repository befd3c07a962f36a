use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fairlens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairlens"))
        .args(args)
        .env_remove("FAIRLENS_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = fairlens(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn text(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn t23_csv(dir: &Path) -> PathBuf {
    let path = dir.join("t23.csv");
    ok(&["scenario", "--name", "females_t2", "--name", "males_t3", "--emit-csv", p(&path)]);
    path
}

fn spec_file(dir: &Path) -> PathBuf {
    let path = dir.join("spec.json");
    let spec = serde_json::json!({
        "groups": [
            {"name": "black", "n": 1500, "base_rate_fail": 0.11, "score_quality": 1.2},
            {"name": "white", "n": 800, "base_rate_fail": 0.06, "score_quality": 0.8}
        ],
        "predictors": {"legitimate": 2, "dependence": 0.7}
    });
    std::fs::write(&path, spec.to_string()).unwrap();
    path
}

fn synthetic_csv(dir: &Path, seed: &str) -> PathBuf {
    let out = dir.join(format!("synthetic-{seed}.csv"));
    ok(&["gen", "--spec", p(&spec_file(dir)), "--seed", seed, "--out", p(&out)]);
    out
}

fn check<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["checks"].as_array().unwrap().iter().find(|c| c["name"] == name).unwrap()
}

#[test]
fn scenario_prints_printed_margins() {
    let out = text(&ok(&["scenario", "--name", "males_t3"]));
    assert!(out.contains("base rate (success)         0.33"), "{out}");
    assert!(out.contains("predicted success share     0.47"));
    assert!(out.contains("cost ratio (FN:FP)          2:1"));
}

#[test]
fn scenario_json_and_list() {
    let v: Value = serde_json::from_str(&text(&ok(&["scenario", "--name", "females_t2", "--format", "json"]))).unwrap();
    assert_eq!(v["groups"]["female"]["quantities"]["fnr"], 0.4);
    let list = text(&ok(&["scenario", "--list"]));
    assert_eq!(list.lines().count(), 15);
    assert!(list.lines().any(|l| l == "empirical_t13"));
}

#[test]
fn unknown_scenario_lists_catalog() {
    let out = fairlens(&["scenario", "--name", "nonexistent"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("males_t3") && err.contains("separation_m_t9"), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(fairlens(&["bogus"]).status.code(), Some(1));
    assert_eq!(fairlens(&["gen", "--spec", "x.json"]).status.code(), Some(1));
    assert_eq!(fairlens(&["--help"]).status.code(), Some(0));
}

#[test]
fn audit_tables_two_and_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = t23_csv(dir.path());
    let report: Value = serde_json::from_str(&text(&ok(&["audit", "--data", p(&data), "--tol", "0.05"]))).unwrap();
    assert_eq!(check(&report, "treatment_equality")["satisfied"], false);
    assert_eq!(check(&report, "conditional_procedure_accuracy_equality")["satisfied"], true);
    assert_eq!(report["tolerance"], 0.05);
    let md = dir.path().join("r.md");
    ok(&["audit", "--data", p(&data), "--out", p(&md)]);
    let md = std::fs::read_to_string(md).unwrap();
    assert!(md.contains("| Male | 1500 | 0.67 | 0.53 | 0.25 | 0.57 |"), "{md}");
}

#[test]
fn audit_invalid_data_cites_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "id,group,y,yhat\na,f,1,1\nb,f,1,x\n").unwrap();
    let out = fairlens(&["audit", "--data", p(&path)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    assert_eq!(fairlens(&["audit", "--data", "/no/such/file.csv"]).status.code(), Some(1));
}

#[test]
fn audit_threshold_and_policies_agree() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_csv(dir.path(), "9");
    let by_flag = text(&ok(&["audit", "--data", p(&data), "--threshold", "0.3"]));
    let policy = dir.path().join("policy.json");
    std::fs::write(
        &policy,
        r#"{"per_group_threshold": {"black": 0.3, "white": 0.3}, "rationale": "manual", "cost_ratio_fn_to_fp": null, "reference_group": null}"#,
    )
    .unwrap();
    let by_file = text(&ok(&["audit", "--data", p(&data), "--policy", p(&policy)]));
    assert_eq!(by_flag, by_file);

    let mixing = dir.path().join("mixing.json");
    std::fs::write(
        &mixing,
        r#"{"groups": [{"group": "black", "p0": 0.0, "p1": 1.0}, {"group": "white", "p0": 0.0, "p1": 1.0}]}"#,
    )
    .unwrap();
    let mixed: Value = serde_json::from_str(&text(&ok(&["audit", "--data", p(&data), "--policy", p(&mixing)]))).unwrap();
    let plain: Value = serde_json::from_str(&text(&ok(&["audit", "--data", p(&data)]))).unwrap();
    assert_eq!(mixed["groups"], plain["groups"]);
    assert!(mixed["metadata"]["mixing_policy"].is_object());
}

#[test]
fn gen_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let a = std::fs::read(synthetic_csv(dir.path(), "9")).unwrap();
    let b = text(&ok(&["gen", "--spec", p(&spec_file(dir.path())), "--seed", "9"])).into_bytes();
    let c = std::fs::read(synthetic_csv(dir.path(), "10")).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let header = String::from_utf8(a).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "id,group,y,score,L_1,L_2,S_white");
}

#[test]
fn sweep_emits_frontier_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_csv(dir.path(), "9");
    let out = text(&ok(&["sweep", "--data", p(&data), "--group", "black", "--grid", "3"]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("group,threshold,"));
    assert!(lines[2].starts_with("black,0.5,"));
    let unscored = t23_csv(dir.path());
    assert_eq!(fairlens(&["sweep", "--data", p(&unscored), "--group", "male"]).status.code(), Some(1));
}

fn run_correct(data: &Path, out: &Path, method: &str, extra: &[&str]) -> Output {
    let mut args = vec!["correct", "--data", p(data), "--method", method, "--seed", "7", "--out-dir", p(out)];
    args.extend_from_slice(extra);
    fairlens(&args)
}

fn listing(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn every_correction_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_csv(dir.path(), "9");
    let cases: [(&str, &[&str], &[&str]); 7] = [
        ("residualize", &[], &["data.csv", "model.json", "before.json", "after.json"]),
        ("reweight", &[], &["data.csv", "weights.json", "before.json", "after.json"]),
        ("relabel", &["--target-rate", "0.08"], &["data.csv", "flips.jsonl", "before.json", "after.json"]),
        ("perturb", &["--fraction", "0.05"], &["data.csv", "changes.jsonl", "before.json", "after.json"]),
        ("tune-thresholds", &["--reference", "white"], &["policy.json", "before.json", "after.json"]),
        ("reassign", &["--budget", "20"], &["data.csv", "flips.jsonl", "before.json", "after.json"]),
        (
            "equalized-odds",
            &[],
            &["data.csv", "policy.json", "before.json", "after.json", "after_realized.json"],
        ),
    ];
    for (method, extra, expected) in cases {
        let first = dir.path().join(format!("{method}-1"));
        let second = dir.path().join(format!("{method}-2"));
        for out in [&first, &second] {
            let o = run_correct(&data, out, method, extra);
            assert!(o.status.success(), "{method}: {}", String::from_utf8_lossy(&o.stderr));
            assert!(o.stdout.is_empty(), "{method} wrote to stdout");
        }
        let a = listing(&first);
        let mut names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
        let mut want = expected.to_vec();
        names.sort();
        want.sort();
        assert_eq!(names, want, "{method}");
        assert_eq!(a, listing(&second), "{method} output differs between runs");
    }
}

#[test]
fn correction_outputs_carry_their_effect() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_csv(dir.path(), "9");
    let out = dir.path().join("relabel");
    assert!(run_correct(&data, &out, "relabel", &["--target-rate", "0.08"]).status.success());
    let after: Value = serde_json::from_slice(&std::fs::read(out.join("after.json")).unwrap()).unwrap();
    assert_eq!(after["groups"]["black"]["quantities"]["base_rate_fail"], 0.08);
    assert_eq!(after["groups"]["white"]["quantities"]["base_rate_fail"], 0.08);
    let flips = std::fs::read_to_string(out.join("flips.jsonl")).unwrap();
    let first: Value = serde_json::from_str(flips.lines().next().unwrap()).unwrap();
    assert!(first["id"].is_string() && first["from"].is_u64());

    let out = dir.path().join("eo");
    assert!(run_correct(&data, &out, "equalized-odds", &[]).status.success());
    let after: Value = serde_json::from_slice(&std::fs::read(out.join("after.json")).unwrap()).unwrap();
    assert_eq!(check(&after, "conditional_procedure_accuracy_equality")["satisfied"], true);

    let out = dir.path().join("tune");
    assert!(run_correct(&data, &out, "tune-thresholds", &["--reference", "white"]).status.success());
    let policy: Value = serde_json::from_slice(&std::fs::read(out.join("policy.json")).unwrap()).unwrap();
    assert_eq!(policy["policy"]["per_group_threshold"]["white"], 0.5);
}

#[test]
fn correction_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_csv(dir.path(), "9");
    let out = dir.path().join("x");
    assert_eq!(run_correct(&data, &out, "relabel", &[]).status.code(), Some(1));
    assert_eq!(run_correct(&data, &out, "tune-thresholds", &["--reference", "nobody"]).status.code(), Some(1));
    assert_eq!(fairlens(&["correct", "--data", p(&data), "--method", "relabel", "--out-dir", p(&out)]).status.code(), Some(1));

    let degenerate = dir.path().join("degenerate.csv");
    std::fs::write(&degenerate, "id,group,y,yhat\na,f,1,1\nb,f,1,0\nc,m,1,1\nd,m,0,0\n").unwrap();
    let o = run_correct(&degenerate, &out, "equalized-odds", &[]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn identical_invocations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_csv(dir.path(), "9");
    for args in [
        vec!["audit", "--data", p(&data), "--threshold", "0.2"],
        vec!["audit", "--data", p(&data), "--format", "md"],
        vec!["sweep", "--data", p(&data), "--group", "white", "--grid", "11"],
        vec!["scenario", "--name", "empirical_t13", "--format", "json"],
    ] {
        assert_eq!(ok(&args).stdout, ok(&args).stdout, "{args:?}");
    }
}
