use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
num_clients = 1
sensors_per_client = 2
pretrain_s = 300
duration_s = 900
local_samples = 200
test_samples = 100
sensor_pool = 400
eval_samples = 200
seed = 3

[[drift.events]]
time_s = 500
sensor = 0
corruption = { kind = "structured_overlay", intensity = 1.0 }
"#;

fn flare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flare"))
        .args(args)
        .env_remove("FLARE_SEED")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("small.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn compare_writes_per_scheduler_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = flare(&[
        "compare",
        "--config",
        &config,
        "--schedulers",
        "flare,none",
        "--out",
        out.to_str().unwrap(),
        "--svg",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["flare", "none"] {
        for file in ["metrics.csv", "ledger.csv", "summary.csv"] {
            assert!(out.join(name).join(file).is_file(), "{name}/{file}");
        }
    }
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.starts_with("scheduler,"));
    assert!(std::fs::read_to_string(out.join("accuracy.svg")).unwrap().starts_with("<svg"));
    let metrics = std::fs::read_to_string(out.join("flare/metrics.csv")).unwrap();
    assert!(metrics.starts_with("time_s,sensor,accuracy,normalized_accuracy,ks"));
}

#[test]
fn unknown_scheduler_fails_with_valid_names() {
    let o = flare(&["run", "--scheduler", "sometimes"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("fixed-high"), "{err}");
}

#[test]
fn constraint_violation_names_the_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &format!("alpha = 1.0\nbeta = 3.0\n{SMALL}"));
    let o = flare(&["run", "--config", &config, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("0 <= beta <= alpha"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let run = |seed: Option<&str>, out: &str| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_flare"));
        cmd.args(["run", "--config", &config, "--scheduler", "none", "--out"]);
        cmd.arg(dir.path().join(out));
        match seed {
            Some(s) => cmd.env("FLARE_SEED", s),
            None => cmd.env_remove("FLARE_SEED"),
        };
        assert!(cmd.output().unwrap().status.success());
        std::fs::read_to_string(dir.path().join(out).join("metrics.csv")).unwrap()
    };
    let env_seed = run(Some("11"), "a");
    let flag_seed = {
        let out = dir.path().join("b");
        let o = flare(&["run", "--config", &config, "--scheduler", "none", "--seed", "11", "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        std::fs::read_to_string(out.join("metrics.csv")).unwrap()
    };
    let file_seed = run(None, "c");
    assert_eq!(env_seed, flag_seed);
    assert_ne!(env_seed, file_seed);
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("s");
    let o = flare(&["sweep", "--config", &config, "--param", "phi", "--values", "0.1,0.5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("phi,"));
}

#[test]
fn bad_usage_exits_with_usage_code() {
    assert_eq!(flare(&["sweep", "--param", "phi"]).status.code(), Some(2));
}
