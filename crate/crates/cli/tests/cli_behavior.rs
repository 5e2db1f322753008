//! Exit-code and error-message contracts of the command-line surface.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("offloadsim-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn invoke(dir: &PathBuf, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_offloadsim"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn valid_config() -> String {
    r#"{
  "n_uavs": 2, "n_mec": 1, "horizon": 0.5, "interval_len": 0.05, "offload_latency": 0.0,
  "energy": { "battery_capacity": 570.0, "hover_power": 211.0, "antenna_power": 17.0,
              "cpu_idle_power": 4320.0, "cpu_active_power": 12960.0 },
  "task_catalog": [
    { "kind": "FD", "mean_interarrival": 0.25, "deadline": 0.3, "proc_time_uav": 0.1, "proc_time_mec": 0.1 }
  ],
  "weight": 0.5, "epsilon_batt": 5.7, "seed": 1
}"#
    .to_string()
}

#[test]
fn help_exits_zero_and_lists_every_command() {
    let dir = workdir("help");
    let out = invoke(&dir, &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for command in [
        "validate-config",
        "train",
        "run",
        "solve",
        "export-lp",
        "compare",
    ] {
        assert!(text.contains(command), "--help does not list {command}");
    }
}

#[test]
fn unknown_flags_exit_one() {
    let dir = workdir("unknown");
    let out = invoke(&dir, &["run", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    let out = invoke(&dir, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn validate_config_reports_violations_with_exit_one() {
    let dir = workdir("validate");
    let bad = valid_config().replace("\"weight\": 0.5", "\"weight\": 1.5");
    fs::write(dir.join("bad.json"), bad).unwrap();
    let out = invoke(&dir, &["validate-config", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("weight"));

    fs::write(dir.join("ok.json"), valid_config()).unwrap();
    let out = invoke(&dir, &["validate-config", "--config", "ok.json"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "valid");
}

#[test]
fn divisibility_only_fails_the_exact_check() {
    let dir = workdir("exact-check");
    let cfg = valid_config().replace("\"interval_len\": 0.05", "\"interval_len\": 0.03");
    fs::write(dir.join("cfg.json"), cfg).unwrap();
    let out = invoke(&dir, &["validate-config", "--config", "cfg.json"]);
    assert_eq!(out.status.code(), Some(0));
    let out = invoke(
        &dir,
        &["validate-config", "--config", "cfg.json", "--exact"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("interval_len"));
}

#[test]
fn unreadable_files_exit_one_and_name_the_path() {
    let dir = workdir("missing");
    fs::write(dir.join("cfg.json"), valid_config()).unwrap();
    let out = invoke(
        &dir,
        &[
            "run",
            "--config",
            "cfg.json",
            "--policy",
            "qlearn:ghost.bin",
            "--seeds",
            "1",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ghost.bin"));

    let out = invoke(&dir, &["validate-config", "--config", "nowhere.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.json"));
}

#[test]
fn stale_tables_are_rejected_on_config_change() {
    let dir = workdir("stale");
    fs::write(dir.join("cfg.json"), valid_config()).unwrap();
    let out = invoke(
        &dir,
        &[
            "train",
            "--config",
            "cfg.json",
            "--episodes",
            "10",
            "--seed",
            "1",
            "--out",
            "q.bin",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    // Any config change flips the embedded hash.
    fs::write(
        dir.join("cfg.json"),
        valid_config().replace("\"seed\": 1", "\"seed\": 2"),
    )
    .unwrap();
    let out = invoke(
        &dir,
        &[
            "run",
            "--config",
            "cfg.json",
            "--policy",
            "qlearn:q.bin",
            "--seeds",
            "1",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("different configuration"));
}

#[test]
fn unschedulable_trace_exits_two() {
    let dir = workdir("infeasible");
    // Both CPU classes need two intervals; an arrival in the final interval
    // cannot finish before the horizon.
    fs::write(dir.join("cfg.json"), valid_config()).unwrap();
    fs::write(
        dir.join("trace.csv"),
        "task_id,type,source_uav,arrival_time\n0,FD,0,0.46\n",
    )
    .unwrap();
    let out = invoke(
        &dir,
        &[
            "solve",
            "--config",
            "cfg.json",
            "--trace",
            "trace.csv",
            "--weight",
            "0",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(2),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot finish"));
}

#[test]
fn solve_prints_the_oracle_pinned_violation_count() {
    // The violation count for this trace at weight 0 is pinned against the
    // exhaustive oracle in the library's exact_properties suite.
    let dir = workdir("pinned");
    let cfg = r#"{
  "n_uavs": 2, "n_mec": 1, "horizon": 0.8, "interval_len": 0.05, "offload_latency": 0.0,
  "energy": { "battery_capacity": 570.0, "hover_power": 211.0, "antenna_power": 17.0,
              "cpu_idle_power": 4320.0, "cpu_active_power": 12960.0 },
  "task_catalog": [
    { "kind": "FD", "mean_interarrival": 0.125, "deadline": 0.2, "proc_time_uav": 0.1, "proc_time_mec": 0.05 },
    { "kind": "PD", "mean_interarrival": 0.125, "deadline": 0.6, "proc_time_uav": 0.5, "proc_time_mec": 0.25 }
  ],
  "weight": 0.5, "epsilon_batt": 5.7, "seed": 1
}"#;
    fs::write(dir.join("cfg.json"), cfg).unwrap();
    fs::write(
        dir.join("trace.csv"),
        "task_id,type,source_uav,arrival_time\n0,FD,0,0\n1,FD,1,0.1\n2,PD,0,0.2\n3,FD,1,0.4\n",
    )
    .unwrap();
    let out = invoke(
        &dir,
        &[
            "solve",
            "--config",
            "cfg.json",
            "--trace",
            "trace.csv",
            "--weight",
            "0",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("violations: 0"),
        "expected the oracle-pinned count in: {stdout}"
    );
}

#[test]
fn colliding_trace_is_an_input_error() {
    let dir = workdir("collision");
    fs::write(dir.join("cfg.json"), valid_config()).unwrap();
    fs::write(
        dir.join("trace.csv"),
        "task_id,type,source_uav,arrival_time\n0,FD,0,0.01\n1,FD,0,0.02\n",
    )
    .unwrap();
    let out = invoke(
        &dir,
        &[
            "solve",
            "--config",
            "cfg.json",
            "--trace",
            "trace.csv",
            "--weight",
            "0",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("one arrival per UAV per interval"));
}
