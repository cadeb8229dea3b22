//! End-to-end checks of the `ducb` binary: subcommands, file outputs,
//! exit codes.

use std::path::Path;
use std::process::Command;

fn ducb() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ducb"))
}

fn write_fixtures(dir: &Path) {
    std::fs::write(
        dir.join("env.json"),
        r#"{"contexts":[0.5,0.5],"reward_means":[[0.9,0.1],[0.2,0.8]],"seed":5}"#,
    )
    .unwrap();
    std::fs::write(
        dir.join("experts.json"),
        r#"{
            "experts": [
                {"type":"tabular","probs":[[0.8,0.2],[0.25,0.75]]},
                {"type":"tabular","probs":[[0.45,0.55],[0.5,0.5]]}
            ],
            "context_probs": [0.5, 0.5]
        }"#,
    )
    .unwrap();
    std::fs::write(
        dir.join("run.json"),
        r#"{
            "env_path": "env.json",
            "experts_path": "experts.json",
            "policies": ["ducb-mom", "ucb1"],
            "T": 400,
            "seed": 3,
            "reps": 2
        }"#,
    )
    .unwrap();
    std::fs::write(dir.join("gaps.json"), r#"{"gaps":[0.0,0.1,0.25,0.6]}"#).unwrap();
}

#[test]
fn run_subcommand_writes_artifacts_and_honors_overrides() {
    let dir = tempfile::tempdir().unwrap();
    write_fixtures(dir.path());
    let results = dir.path().join("results");
    let out = ducb()
        .args(["run", "--config"])
        .arg(dir.path().join("run.json"))
        .arg("--out")
        .arg(&results)
        .args(["--reps", "3", "--quiet"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out.stdout.is_empty(), "--quiet should silence the summary");

    for policy in ["ducb-mom", "ucb1"] {
        for rep in 0..3 {
            assert!(results
                .join(format!("trace_{policy}_rep{rep:03}.csv"))
                .exists());
            assert!(results
                .join(format!("trace_{policy}_rep{rep:03}.summary.json"))
                .exists());
        }
    }
    let aggregate = std::fs::read_to_string(results.join("aggregate.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&aggregate).unwrap();
    assert_eq!(parsed["reps"], 3);
    assert!(results.join("plot_data.csv").exists());

    // Trace CSV header matches the documented layout.
    let csv = std::fs::read_to_string(results.join("trace_ducb-mom_rep000.csv")).unwrap();
    assert!(csv.starts_with("t,expert,arm,reward,regret"));
}

#[test]
fn run_respects_policy_override() {
    let dir = tempfile::tempdir().unwrap();
    write_fixtures(dir.path());
    let results = dir.path().join("picked");
    let out = ducb()
        .args(["run", "--config"])
        .arg(dir.path().join("run.json"))
        .arg("--out")
        .arg(&results)
        .args(["--policy", "first,epsilon-greedy", "--quiet"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(results.join("trace_first_rep000.csv").exists());
    assert!(results.join("trace_epsilon-greedy_rep000.csv").exists());
    assert!(!results.join("trace_ucb1_rep000.csv").exists());
}

#[test]
fn run_handles_dataset_env_and_batched_policy() {
    let dir = tempfile::tempdir().unwrap();
    // Separable 3-class dataset; relative dataset path resolves against the
    // config file's directory.
    let mut csv = String::new();
    for i in 0..400usize {
        let label = i % 3;
        let mut features = [0.05f64; 3];
        features[label] = 1.0;
        csv.push_str(&format!(
            "{label},{},{},{}\n",
            features[0], features[1], features[2]
        ));
    }
    std::fs::write(dir.path().join("data.csv"), csv).unwrap();
    std::fs::write(
        dir.path().join("env.json"),
        r#"{"dataset_path":"data.csv","num_arms":3,"shuffle":true,"seed":4}"#,
    )
    .unwrap();
    std::fs::write(
        dir.path().join("run.json"),
        r#"{
            "env_path": "env.json",
            "policies": ["batched"],
            "T": 300,
            "seed": 8,
            "reps": 1,
            "batched": {"pool_cap": 12}
        }"#,
    )
    .unwrap();
    let results = dir.path().join("results");
    let out = ducb()
        .args(["run", "--config"])
        .arg(dir.path().join("run.json"))
        .arg("--out")
        .arg(&results)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("progressive loss"), "stdout: {stdout}");
    let aggregate = std::fs::read_to_string(results.join("aggregate.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&aggregate).unwrap();
    assert!(parsed["policies"][0]["mean_progressive_loss"].is_array());
}

#[test]
fn bounds_subcommand_reports_both_shapes() {
    let dir = tempfile::tempdir().unwrap();
    write_fixtures(dir.path());
    let out = ducb()
        .args(["bounds", "--gaps"])
        .arg(dir.path().join("gaps.json"))
        .args(["--t", "5000", "--m", "2.0", "--sigma", "1.4"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(parsed["clipped"]["theorem"]["total"].as_f64().unwrap() > 0.0);
    assert!(parsed["mom"]["min_shape"].as_f64().unwrap() > 0.0);
    assert!(parsed["lambda"].as_f64().unwrap() >= 1.0);
}

#[test]
fn lambda_mc_and_instance_terms_emit_expected_shapes() {
    let out = ducb()
        .args(["lambda-mc", "--n", "50", "--delta2", "0.05", "--reps", "500"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(parsed["mean_lambda"].as_f64().unwrap() <= parsed["bound"].as_f64().unwrap());

    let out = ducb()
        .args(["instance-terms", "--sizes", "10,20", "--profiles", "20"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,ducb_term,ucb1_term,ratio"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn divergence_subcommand_prints_matrix() {
    let dir = tempfile::tempdir().unwrap();
    write_fixtures(dir.path());
    let out = ducb()
        .args(["divergence", "--experts"])
        .arg(dir.path().join("experts.json"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed["m"][0][0], 1.0);
    assert_eq!(parsed["sigma"][1][1], 1.0);
}

#[test]
fn divergence_subcommand_estimates_from_feature_contexts() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("softmax.json"),
        r#"{
            "experts": [
                {"type":"softmax","weights":[[1.0,0.0],[0.0,1.0]],"bias":[0.0,0.0],"temperature":1.0},
                {"type":"softmax","weights":[[0.5,0.5],[0.5,0.5]],"bias":[0.0,0.0],"temperature":1.0}
            ]
        }"#,
    )
    .unwrap();
    let mut csv = String::new();
    for i in 0..50 {
        csv.push_str(&format!("{},{}\n", (i % 5) as f64 * 0.2, (i % 3) as f64 * 0.3));
    }
    std::fs::write(dir.path().join("contexts.csv"), csv).unwrap();

    // Without contexts the softmax pool cannot be evaluated: exit 2.
    let out = ducb()
        .args(["divergence", "--experts"])
        .arg(dir.path().join("softmax.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = ducb()
        .args(["divergence", "--experts"])
        .arg(dir.path().join("softmax.json"))
        .arg("--contexts")
        .arg(dir.path().join("contexts.csv"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(parsed["m"][0][1].as_f64().unwrap() >= 1.0);
}

#[test]
fn exit_codes_distinguish_config_and_io_errors() {
    // Missing file: IO error, exit 3.
    let out = ducb()
        .args(["bounds", "--gaps", "/definitely/not/here.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    // Malformed gap profile: config error, exit 2.
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"gaps":[0.5,0.1]}"#).unwrap();
    let out = ducb().args(["bounds", "--gaps"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Unknown flag: clap usage error, exit 2.
    let out = ducb().args(["bounds", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Missing divergence scale for the requested bound: exit 2.
    let gaps = dir.path().join("gaps.json");
    std::fs::write(&gaps, r#"{"gaps":[0.0,0.2]}"#).unwrap();
    let out = ducb()
        .args(["bounds", "--which", "r1", "--gaps"])
        .arg(&gaps)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_rejects_bad_config_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"policies": [], "T": 10, "seed": 0}"#).unwrap();
    let out = ducb()
        .args(["run", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
