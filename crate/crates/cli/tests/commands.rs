use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lassoprune"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_ok(o: &Output) {
    assert!(
        o.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status,
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

const RIP_SMALL: &[&str] = &[
    "rip-report",
    "--set",
    "d=6",
    "--set",
    "k=6",
    "--set",
    "r=2",
    "--set",
    "ns=[60, 240]",
    "--set",
    "trials=20",
];

#[test]
fn verify_small_passes_and_offset_fails() {
    let dir = tempfile::tempdir().unwrap();
    let good = run(
        &[
            "verify",
            "--set",
            "suites=[\"finite-difference\"]",
            "--set",
            "fd_instances=3",
        ],
        &dir.path().join("good"),
    );
    assert_ok(&good);
    let report = read_json(&dir.path().join("good/report.json"));
    assert_eq!(report["passed"], Value::Bool(true));

    let bad = run(
        &[
            "verify",
            "--set",
            "suites=[\"finite-difference\"]",
            "--set",
            "fd_instances=3",
            "--set",
            "gradient_offset=1e-3",
        ],
        &dir.path().join("bad"),
    );
    assert_eq!(bad.status.code(), Some(1));
    assert_eq!(
        read_json(&dir.path().join("bad/report.json"))["passed"],
        Value::Bool(false)
    );
}

#[test]
fn seed_fixes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for (name, seed) in [("a", "4"), ("b", "4"), ("c", "5")] {
        let mut args = RIP_SMALL.to_vec();
        args.extend(["--seed", seed]);
        assert_ok(&run(&args, &dir.path().join(name)));
        reports.push(std::fs::read(dir.path().join(name).join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    assert_ne!(reports[0], reports[2]);
}

#[test]
fn manifest_lists_config_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = RIP_SMALL.to_vec();
    args.extend(["--seed", "9", "--plots"]);
    assert_ok(&run(&args, dir.path()));
    let m = read_json(&dir.path().join("manifest.json"));
    assert_eq!(m["command"], "rip-report");
    assert_eq!(m["seeds"][0], 9);
    assert_eq!(m["config"]["d"], 6);
    assert_eq!(m["config"]["trials"], 20);
    assert!(m["wall_clock_s"].as_f64().unwrap() >= 0.0);
    let artifacts: Vec<&str> = m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a.as_str().unwrap())
        .collect();
    for name in ["rip.csv", "report.json", "rip.svg"] {
        assert!(
            artifacts.iter().any(|a| a.ends_with(name)),
            "{name} missing from {artifacts:?}"
        );
        assert!(dir.path().join(name).exists());
    }
}

#[test]
fn flags_beat_set_and_set_beats_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "d = 5\nk = 5\nr = 1\ntrials = 10\nns = [40]\nseed = 1\n").unwrap();
    let out = dir.path().join("run");
    let o = run(
        &[
            "rip-report",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "trials=12",
            "--set",
            "seed=2",
            "--seed",
            "3",
        ],
        &out,
    );
    assert_ok(&o);
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["config"]["d"], 5);
    assert_eq!(m["config"]["trials"], 12);
    assert_eq!(m["config"]["seed"], 3);
}

#[test]
fn unknown_key_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["rip-report", "--set", "no_such_key=1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));
}

#[test]
fn flow_diagnostics_small() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "flow-diagnostics",
            "--set",
            "d=10",
            "--set",
            "k=10",
            "--set",
            "t_end=60",
            "--plots",
        ],
        dir.path(),
    );
    assert_ok(&o);
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["noise_monotone"], Value::Bool(true));
    for name in ["flow.csv", "signal.csv", "columns.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn implicit_reg_small() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "implicit-reg",
            "--set",
            "d=8",
            "--set",
            "k=8",
            "--set",
            "r=1",
            "--set",
            "t_end=200",
            "--set",
            "certify=false",
        ],
        dir.path(),
    );
    assert_ok(&o);
    let report = read_json(&dir.path().join("report.json"));
    assert!(report["unregularized_census"]["count"].as_u64().unwrap() >= 1);
    assert_eq!(report["flow"]["converged"], Value::Bool(true));
    assert_eq!(report["regularized"]["surviving_columns"], 1);
    assert!(dir.path().join("fraction_curve.csv").exists());
}

#[test]
fn pipeline_compare_small() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "pipeline-compare",
            "--set",
            "d=8",
            "--set",
            "k=6",
            "--set",
            "r=2",
            "--set",
            "seeds=1",
            "--set",
            "sweep=false",
            "--set",
            "train_max_iters=20000",
            "--plots",
        ],
        dir.path(),
    );
    assert_ok(&o);
    let summary = std::fs::read_to_string(dir.path().join("compare_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(dir.path().join("compare.svg").exists());
}

#[test]
fn quadratic_nn_small() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "quadratic-nn",
            "--set",
            "d=6",
            "--set",
            "r=1",
            "--set",
            "k=4",
            "--set",
            "seeds=1",
            "--set",
            "ablation=false",
            "--set",
            "certify=false",
        ],
        dir.path(),
    );
    assert_ok(&o);
    assert!(dir.path().join("quadratic_nn.csv").exists());
    assert!(dir.path().join("fro_estimate.csv").exists());
}
