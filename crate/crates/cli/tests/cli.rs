use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
experiment_id = "cli_small"
mode = "indicator"
seed = 3
replicates = 30
sizes = [256, 1024, 4096]

[instance]
kind = "linear-ramp"

[net]
range = [-0.95, 0.95]

[tuning]
delta_prefactor = 2.0
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_noisyda"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("noisyda-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn config(name: &str, text: &str) -> PathBuf {
    let path = scratch(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn tau_prints_exact_fraction() {
    let out = run(&["tau", "--alpha", "1", "--d", "1", "--beta", "2"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "1/4 (0.25)");
    let out = run(&["tau", "--alpha", "1", "--d", "2", "--metric", "d_delta"]);
    assert_eq!(stdout(&out).trim(), "1/5 (0.2)");
}

#[test]
fn tau_rejects_wrong_beta_count() {
    let out = run(&["tau", "--alpha", "1", "--d", "2", "--beta", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--beta"));
}

#[test]
fn bad_config_exits_with_one() {
    let path = config("bad.toml", "experiment_id = \"x\"\nmode = \"sideways\"\n");
    let out = run(&["simulate", arg(&path)]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["simulate", "/nonexistent/config.toml"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_prints_report() {
    let path = config("simulate.toml", SMALL);
    let out = run(&["simulate", arg(&path), "--n", "512", "--seed", "8"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["n"], 512);
    assert!(report["excess_fg"].as_f64().unwrap() >= 0.0);
    let again = run(&["simulate", arg(&path), "--n", "512", "--seed", "8"]);
    assert_eq!(stdout(&out), stdout(&again));
}

#[test]
fn rates_writes_files_and_reports_pass() {
    let path = config("rates.toml", SMALL);
    let target = scratch("rates_out.csv");
    let out = run(&["rates", arg(&path), "--out", arg(&target)]);
    let text = stdout(&out);
    assert!(text.contains("cli_small d_fg: slope"), "{text}");
    assert_eq!(out.status.code(), Some(if text.contains("FAIL") { 2 } else { 0 }));
    assert!(target.exists());
    assert!(scratch("rates_out_summary.csv").exists());
    assert!(scratch("rates_out_manifest.json").exists());
    let data = std::fs::read_to_string(&target).unwrap();
    assert!(data.starts_with("experiment_id,metric,n,mean_excess,stderr,replicates\n"));
    assert_eq!(data.lines().count(), 1 + 3 * 2);
}

#[test]
fn rates_failing_tolerance_exits_with_two() {
    let text = SMALL.to_string() + "\n[rates]\ntolerance = 1e-9\n";
    let path = config("strict.toml", &text);
    let target = scratch("strict.json");
    let out = run(&["rates", arg(&path), "--out", arg(&target), "--format", "json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).contains("FAIL"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&target).unwrap()).unwrap();
    assert_eq!(report["pass"], false);
}

#[test]
fn kernel_dump_csv_and_json() {
    let path = config("kernel.toml", SMALL);
    let out = run(&["kernel-dump", arg(&path), "--lambda", "0.2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,K,K_eta"));
    let first: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(first[0], 0.0);
    assert!((first[1] - first[2]).abs() < 1e-10 * first[1].abs());

    let out = run(&["kernel-dump", arg(&path), "--lambda", "0.2", "--format", "json"]);
    let value: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(value["lambda"], 0.2);
    assert!(value["rows"].as_array().unwrap().len() > 10);
}

#[test]
fn instance_check_reports_json() {
    let path = config("instance.toml", SMALL);
    let out = run(&["instance-check", arg(&path)]);
    assert!(out.status.success());
    let value: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(value["pass"], true);
    assert!(value["margin_scan"]["alpha_hat"].as_f64().unwrap() > 0.5);
}

#[test]
fn instance_check_lower_bound() {
    let text = r#"
experiment_id = "lb"
mode = "indicator"

[instance]
d = 2
nodes = 256
kind = "lower-bound"
q = 4
alpha = 1.0
gamma = 1.0
"#;
    let path = config("lb.toml", text);
    let out = run(&["instance-check", arg(&path)]);
    let value: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(value["lower_bound"]["sign_coherence"]["violations"], 0);
    assert_eq!(out.status.code(), Some(if value["pass"] == true { 0 } else { 2 }));
}
