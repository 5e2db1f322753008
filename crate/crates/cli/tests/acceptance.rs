//! Acceptance criterion 8: every CLI invocation repeated with identical
//! inputs yields byte-identical outputs, checked once per command.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CONFIG: &str = r#"{
  "n_uavs": 2, "n_mec": 1, "horizon": 0.6, "interval_len": 0.05, "offload_latency": 0.0,
  "energy": { "battery_capacity": 570.0, "hover_power": 211.0, "antenna_power": 17.0,
              "cpu_idle_power": 4320.0, "cpu_active_power": 12960.0 },
  "task_catalog": [
    { "kind": "FD", "mean_interarrival": 0.25, "deadline": 0.3, "proc_time_uav": 0.1, "proc_time_mec": 0.05 },
    { "kind": "PD", "mean_interarrival": 0.25, "deadline": 0.8, "proc_time_uav": 0.5, "proc_time_mec": 0.25 }
  ],
  "weight": 0.5, "epsilon_batt": 5.7, "seed": 1
}
"#;

const TRACE: &str = "task_id,type,source_uav,arrival_time\n\
0,FD,0,0\n\
1,FD,1,0\n\
2,PD,0,0.1\n\
3,FD,1,0.15\n\
4,FD,0,0.25\n\
5,FD,1,0.5\n";

struct Workbench {
    dir: PathBuf,
}

impl Workbench {
    fn new(tag: &str) -> Self {
        let dir =
            std::env::temp_dir().join(format!("offloadsim-accept-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join("cfg.json"), CONFIG).unwrap();
        fs::write(dir.join("trace.csv"), TRACE).unwrap();
        Workbench { dir }
    }

    fn invoke(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_offloadsim"))
            .current_dir(&self.dir)
            .args(args)
            .output()
            .expect("binary runs")
    }

    fn snapshot(&self, files: &[&str]) -> Vec<(String, Vec<u8>)> {
        files
            .iter()
            .map(|f| {
                let bytes = fs::read(self.dir.join(f))
                    .unwrap_or_else(|e| panic!("{f} missing after invocation: {e}"));
                (f.to_string(), bytes)
            })
            .collect()
    }
}

impl Drop for Workbench {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.dir);
    }
}

fn assert_identical_runs(bench: &Workbench, args: &[&str], files: &[&str]) {
    let first = bench.invoke(args);
    assert!(
        first.status.success(),
        "`offloadsim {}` failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&first.stderr)
    );
    let first_files = bench.snapshot(files);
    let second = bench.invoke(args);
    assert!(second.status.success());
    assert_eq!(
        first.stdout,
        second.stdout,
        "stdout differs for `offloadsim {}`",
        args.join(" ")
    );
    for ((name, a), (_, b)) in first_files.iter().zip(bench.snapshot(files).iter()) {
        assert_eq!(a, b, "{name} differs between identical invocations");
    }
}

#[test]
fn c8_repeated_invocations_are_byte_identical() {
    let bench = Workbench::new("c8");

    assert_identical_runs(&bench, &["validate-config", "--config", "cfg.json"], &[]);
    assert_identical_runs(
        &bench,
        &[
            "train",
            "--config",
            "cfg.json",
            "--episodes",
            "300",
            "--seed",
            "9",
            "--out",
            "q.bin",
            "--trace-out",
            "rewards.csv",
        ],
        &["q.bin", "rewards.csv"],
    );
    assert_identical_runs(
        &bench,
        &[
            "run",
            "--config",
            "cfg.json",
            "--policy",
            "qlearn:q.bin",
            "--seeds",
            "4,5",
            "--out-dir",
            "runout",
            "--export-traces",
        ],
        &[
            "runout/energy.csv",
            "runout/violations.csv",
            "runout/trace-4.csv",
            "runout/trace-5.csv",
        ],
    );
    assert_identical_runs(
        &bench,
        &[
            "solve",
            "--config",
            "cfg.json",
            "--trace",
            "trace.csv",
            "--weight",
            "0.5",
            "--out",
            "solution.json",
            "--export-lp",
            "model.lp",
        ],
        &["solution.json", "model.lp"],
    );
    assert_identical_runs(
        &bench,
        &[
            "export-lp",
            "--config",
            "cfg.json",
            "--trace",
            "trace.csv",
            "--weight",
            "1",
            "--out",
            "exported.lp",
        ],
        &["exported.lp"],
    );
    assert_identical_runs(
        &bench,
        &[
            "compare",
            "--config",
            "cfg.json",
            "--policies",
            "rr,hef,qhef,qlearn:q.bin",
            "--seeds",
            "4,5,6",
            "--out-dir",
            "cmp",
        ],
        &["cmp/report.json", "cmp/energy.csv", "cmp/violations.csv"],
    );

    // The solve/export pair must agree on the emitted model.
    let solved = fs::read(bench.dir.join("model.lp")).unwrap();
    assert!(!solved.is_empty());
    assert!(Path::new(&bench.dir).join("solution.json").exists());

    println!("criterion 8 (byte-identical CLI reruns across all six commands): PASS");
}
