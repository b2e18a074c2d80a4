//! Black-box tests of the `smasim` binary: exit codes, output formats,
//! replay, the config search path, and fault injection.

use std::path::Path;
use std::process::{Command, Output};

fn smasim(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_smasim"));
    cmd.args(args);
    cmd
}

fn run(args: &[&str]) -> Output {
    smasim(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn no_subcommand_is_usage_error() {
    let out = run(&[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_is_usage_error() {
    let out = run(&["sweep", "--config", "no-such-machine", "--sizes", "64"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-machine"));
}

#[test]
fn validate_passes_with_exit_zero() {
    let out = run(&["validate", "--count", "4", "--seed", "9"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn injected_fault_returns_one_and_names_the_case() {
    let out = smasim(&["validate", "--count", "3", "--seed", "9", "--format", "csv"])
        .env("SMASIM_INJECT_FAULT", "1")
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.contains("semi-broadcast"), "csv was: {text}");
}

#[test]
fn sweep_csv_has_fixed_columns() {
    let out = run(&["sweep", "--config", "2-sma", "--sizes", "64,128"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "config,size_m,size_n,size_k,cycles,macs,efficiency,a_reuse,stall_cycles,\
energy_total_pj,energy_compute_pj,energy_register_file_pj,energy_shared_memory_pj,\
energy_global_pj,energy_control_pj"
    );
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn sweep_json_embeds_config_and_invocation() {
    let out = run(&["sweep", "--config", "2-sma", "--sizes", "64", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["invocation"]["command"], "sweep");
    assert!(v["configs"]["2-sma"].as_str().unwrap().contains("sma_units_per_sm"));
}

#[test]
fn sweep_trace_sidecar_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = smasim(&["sweep", "--config", "2-sma", "--sizes", "64"])
        .arg("--trace")
        .arg(&trace)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("config,size_m,cycles,macs,"));
}

#[test]
fn config_dir_fallback_loads_toml() {
    let dir = tempfile::tempdir().unwrap();
    let text = run(&["sweep", "--config", "2-sma", "--sizes", "64", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&text)).unwrap();
    std::fs::write(
        dir.path().join("custom.toml"),
        v["configs"]["2-sma"].as_str().unwrap(),
    )
    .unwrap();
    let out = smasim(&["sweep", "--config", "custom.toml", "--sizes", "64"])
        .env("SMASIM_CONFIG_DIR", dir.path())
        .current_dir(Path::new("/"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("custom.toml,64,64,64"));
}

#[test]
fn replay_reruns_a_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = smasim(&["sweep", "--config", "2-sma", "--sizes", "64", "--format", "json"])
        .arg("--out")
        .arg(&report)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let first = smasim(&["sweep", "--config", "2-sma", "--sizes", "64"]).output().unwrap();
    let replayed = smasim(&[])
        .arg("--replay")
        .arg(&report)
        .output()
        .unwrap();
    assert_eq!(replayed.status.code(), Some(0));
    assert_eq!(stdout(&first), stdout(&replayed));
}

#[test]
fn replay_conflicts_with_subcommand() {
    let out = run(&["--replay", "x.json", "validate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_rejects_unknown_experiment() {
    let out = run(&["compare", "warp-divergence"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pipeline_csv_rows_match_intervals() {
    let out = run(&["pipeline", "--intervals", "1,4"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("detection_interval,average_ms,worst_ms,target_met"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn explain_plan_parses_both_size_forms() {
    for size in ["512", "512x256x128"] {
        let out = run(&["explain-plan", "--size", size]);
        assert_eq!(out.status.code(), Some(0), "size {size}");
        let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
        assert_eq!(v["size_m"], 512);
    }
    let out = run(&["explain-plan", "--size", "4x4x4x4"]);
    assert_eq!(out.status.code(), Some(2));
}
