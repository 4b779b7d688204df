use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::{json, Value};
use tempfile::TempDir;

fn kfat_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kfat"));
    cmd.args(args).env_remove("KFAT_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("kfat runs")
}

fn kfat(args: &[&str]) -> Output {
    kfat_env(args, &[])
}

fn ok(args: &[&str]) {
    let out = kfat(args);
    assert!(out.status.success(), "kfat {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json_at(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn write(p: &Path, v: &Value) {
    fs::write(p, serde_json::to_string_pretty(v).unwrap()).unwrap()
}

struct Shared {
    _dir: TempDir,
    data: PathBuf,
    tsp: PathBuf,
    ga: PathBuf,
}

fn small_ga_config(dir: &Path) -> PathBuf {
    let p = dir.join("ga_small.json");
    write(&p, &json!({"ga": {"population_size": 6, "max_generations": 3}}));
    p
}

fn shared() -> &'static Shared {
    static SHARED: OnceLock<Shared> = OnceLock::new();
    SHARED.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        ok(&["gen-data", "--out", s(&data), "--seed", "0"]);
        let tsp = dir.path().join("tsp.json");
        ok(&["tune", "--method", "tsbo-tsp", "--data", s(&data), "--out", s(&tsp)]);
        let ga = dir.path().join("ga.json");
        let cfg = small_ga_config(dir.path());
        ok(&["tune", "--method", "ga", "--data", s(&data), "--out", s(&ga), "--config", s(&cfg)]);
        Shared { _dir: dir, data, tsp, ga }
    })
}

fn csv_count(dir: &Path) -> usize {
    fs::read_dir(dir).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv")).count()
}

#[test]
fn gen_data_writes_both_sets_and_a_manifest() {
    let sh = shared();
    assert_eq!(csv_count(&sh.data.join("train")), 8);
    assert_eq!(csv_count(&sh.data.join("test")), 23);
    let m = json_at(&sh.data.join("manifest.json"));
    assert_eq!(m["schema_version"], 1);
    assert_eq!(m["seed"], 0);
    assert_eq!(m["variant"], "standard");
    assert!(m["true_process_noise"].is_null());
    let id = m["dataset_id"].as_str().unwrap();
    assert_eq!(id.len(), 64);
    assert!(id.chars().all(|c| c.is_ascii_hexdigit()));
    assert_eq!(m["train"].as_array().unwrap().len(), 8);
    assert_eq!(m["test"].as_array().unwrap().len(), 23);
}

#[test]
fn gen_data_refuses_a_non_empty_directory_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["gen-data", "--out", s(&data), "--seed", "4"]);
    let before = fs::read(data.join("manifest.json")).unwrap();
    let again = kfat(&["gen-data", "--out", s(&data), "--seed", "4"]);
    assert_eq!(code(&again), 1);
    ok(&["gen-data", "--out", s(&data), "--seed", "4", "--force"]);
    assert_eq!(fs::read(data.join("manifest.json")).unwrap(), before);
    ok(&["gen-data", "--out", s(&data), "--seed", "5", "--force"]);
    assert_ne!(fs::read(data.join("manifest.json")).unwrap(), before);
    assert_eq!(csv_count(&data.join("train")), 8);
}

#[test]
fn tampered_dataset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["gen-data", "--out", s(&data), "--seed", "2"]);
    let victim = fs::read_dir(data.join("train")).unwrap().next().unwrap().unwrap().path();
    let mut text = fs::read_to_string(&victim).unwrap();
    text.push_str(&text.lines().last().unwrap().to_string());
    fs::write(&victim, text).unwrap();
    let out = kfat(&["tune", "--method", "tsbo-tsp", "--data", s(&data), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn tune_report_and_trace() {
    let sh = shared();
    let r = json_at(&sh.tsp);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["method"], "tsbo-tsp");
    assert!(r.get("wall_time_s").is_none());
    let m = json_at(&sh.data.join("manifest.json"));
    assert_eq!(r["dataset"]["id"], m["dataset_id"]);
    let trace = r["result"]["trace"].as_array().unwrap();
    assert!(!trace.is_empty() && trace.len() <= 60);
    assert_eq!(r["result"]["trace"][0]["q"], json!([1e-5, 1e-5, 1e-5]));
    assert_eq!(r["result"]["best_j"], r["train"]["cost"]["total"]);
    assert!(r["test"]["kpi"].is_object());
    let csv = fs::read_to_string(sh.tsp.with_extension("csv")).unwrap();
    assert_eq!(csv.lines().count(), trace.len() + 1);
    let g = json_at(&sh.ga);
    assert_eq!(g["result"]["trace"].as_array().unwrap().len(), 18);
}

#[test]
fn tune_timing_and_explicit_trace_path() {
    let sh = shared();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.json");
    let trace = dir.path().join("nested/trace.csv");
    let cfg = small_ga_config(dir.path());
    ok(&["tune", "--method", "ga", "--data", s(&sh.data), "--out", s(&out), "--config", s(&cfg), "--trace", s(&trace), "--timing"]);
    assert!(json_at(&out)["wall_time_s"].as_f64().unwrap() > 0.0);
    assert!(trace.exists());
}

#[test]
fn tune_usage_errors_exit_one() {
    let sh = shared();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    assert_eq!(code(&kfat(&["tune", "--method", "simplex", "--data", s(&sh.data), "--out", s(&out)])), 1);
    assert_eq!(code(&kfat(&["tune", "--data", s(&sh.data), "--out", s(&out)])), 1);
    let cfg = dir.path().join("bad.json");
    write(&cfg, &json!({"tsbo": {"max_pe": 10, "max_sm": 20}}));
    assert_eq!(code(&kfat(&["tune", "--method", "tsbo-gp", "--data", s(&sh.data), "--out", s(&out), "--config", s(&cfg)])), 1);
    write(&cfg, &json!({"unknown": 1}));
    assert_eq!(code(&kfat(&["tune", "--method", "ga", "--data", s(&sh.data), "--out", s(&out), "--config", s(&cfg)])), 1);
    write(&cfg, &json!({"weights": {"sideslip": -1.0, "yaw_rate": 1.0, "lateral_accel": 1.0}}));
    assert_eq!(code(&kfat(&["tune", "--method", "ga", "--data", s(&sh.data), "--out", s(&out), "--config", s(&cfg)])), 1);
    assert!(!out.exists());
}

#[test]
fn missing_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let nowhere = dir.path().join("nowhere");
    assert_eq!(code(&kfat(&["tune", "--method", "ga", "--data", s(&nowhere), "--out", s(&out)])), 2);
    assert_eq!(code(&kfat(&["evaluate", "--params", s(&nowhere), "--data", s(&nowhere), "--out", s(&out)])), 2);
    assert_eq!(code(&kfat(&["inspect-surrogate", "--result", s(&nowhere), "--out", s(&out)])), 2);
}

#[test]
fn threads_variable_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    for bad in ["0", "many"] {
        let out = kfat_env(&["gen-data", "--out", s(&data)], &[("KFAT_THREADS", bad)]);
        assert_eq!(code(&out), 1, "KFAT_THREADS={bad}");
    }
    let out = kfat_env(&["gen-data", "--out", s(&data)], &[("KFAT_THREADS", "2")]);
    assert!(out.status.success());
}

#[test]
fn evaluate_at_the_true_noise_of_the_noise_only_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    let cfg = dir.path().join("gen.json");
    write(&cfg, &json!({"variant": "noise_only"}));
    ok(&["gen-data", "--out", s(&data), "--seed", "0", "--config", s(&cfg)]);
    let m = json_at(&data.join("manifest.json"));
    assert_eq!(m["variant"], "noise_only");
    let truth = m["true_process_noise"].clone();
    assert_eq!(truth, json!([1e-4, 1e-4, 4e-6]));

    let params = dir.path().join("q.json");
    write(&params, &json!({"schema_version": 1, "q": truth}));
    let out = dir.path().join("eval.json");
    ok(&["evaluate", "--params", s(&params), "--data", s(&data), "--out", s(&out)]);
    let r = json_at(&out);
    assert_eq!(r["schema_version"], 1);
    let close = |v: &Value, expect: f64| {
        let v = v.as_f64().unwrap();
        assert!((v - expect).abs() <= 1e-6 * expect, "{v} vs {expect}");
    };
    close(&r["train"]["cost"]["total"], 0.20864310698826732);
    close(&r["train"]["kpi"]["rmse"], 0.05378545548657919);
    close(&r["train"]["kpi"]["mae"], 0.1795031027624334);
    close(&r["test"]["cost"]["total"], 0.25252967724428227);
    close(&r["test"]["kpi"]["rmse"], 0.05414762028944562);

    let worse = dir.path().join("q100.json");
    write(&worse, &json!({"schema_version": 1, "q": [1e-2, 1e-2, 4e-4]}));
    let out100 = dir.path().join("eval100.json");
    ok(&["evaluate", "--params", s(&worse), "--data", s(&data), "--out", s(&out100)]);
    assert!(json_at(&out100)["train"]["cost"]["total"].as_f64().unwrap() > r["train"]["cost"]["total"].as_f64().unwrap());
}

#[test]
fn evaluate_accepts_a_tune_report() {
    let sh = shared();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e.json");
    ok(&["evaluate", "--params", s(&sh.tsp), "--data", s(&sh.data), "--out", s(&out)]);
    let r = json_at(&out);
    let t = json_at(&sh.tsp);
    assert_eq!(r["q"], t["result"]["best_q"]);
    assert_eq!(r["train"]["cost"], t["train"]["cost"]);
}

#[test]
fn unknown_schema_versions_are_rejected() {
    let sh = shared();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.json");
    let mut report = json_at(&sh.tsp);
    report["schema_version"] = json!(2);
    let bumped = dir.path().join("v2.json");
    write(&bumped, &report);
    assert_eq!(code(&kfat(&["evaluate", "--params", s(&bumped), "--data", s(&sh.data), "--out", s(&out)])), 2);
    assert_eq!(code(&kfat(&["compare", "--results", s(&bumped), "--out", s(&out)])), 2);
    assert_eq!(code(&kfat(&["inspect-surrogate", "--result", s(&bumped), "--out", s(&out)])), 2);
    report.as_object_mut().unwrap().remove("schema_version");
    write(&bumped, &report);
    assert_eq!(code(&kfat(&["compare", "--results", s(&bumped), "--out", s(&out)])), 2);
}

#[test]
fn compare_reports_improvement_over_the_baseline() {
    let sh = shared();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.json");
    ok(&["compare", "--results", s(&sh.ga), s(&sh.tsp), s(&sh.ga), "--out", s(&out)]);
    let c = json_at(&out);
    assert_eq!(c["schema_version"], 1);
    let rows = c["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["method"], "ga");
    for key in ["best_j", "evaluations", "test_rmse", "test_mae"] {
        assert_eq!(rows[0]["improvement_pct"][key], 0.0, "{key}");
        assert_eq!(rows[2]["improvement_pct"][key], 0.0, "{key}");
    }
    let base = rows[0]["best_j"].as_f64().unwrap();
    let tsp = rows[1]["best_j"].as_f64().unwrap();
    let pct = rows[1]["improvement_pct"]["best_j"].as_f64().unwrap();
    assert!((pct - 100.0 * (base - tsp) / base).abs() < 1e-9);
    let evals = rows[1]["improvement_pct"]["evaluations"].as_f64().unwrap();
    assert!((evals - 100.0 * (18.0 - rows[1]["evaluations"].as_f64().unwrap()) / 18.0).abs() < 1e-9);
}

#[test]
fn compare_refuses_mixed_datasets() {
    let sh = shared();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["gen-data", "--out", s(&data), "--seed", "1"]);
    let other = dir.path().join("other.json");
    let cfg = small_ga_config(dir.path());
    ok(&["tune", "--method", "ga", "--data", s(&data), "--out", s(&other), "--config", s(&cfg)]);
    let out = dir.path().join("c.json");
    assert_eq!(code(&kfat(&["compare", "--results", s(&sh.ga), s(&other), "--out", s(&out)])), 2);
}

#[test]
fn inspect_surrogate_dumps_the_refitted_model() {
    let sh = shared();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.json");
    ok(&["inspect-surrogate", "--result", s(&sh.tsp), "--out", s(&out)]);
    let r = json_at(&out);
    let t = json_at(&sh.tsp);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["incumbent"]["q"], t["result"]["best_q"]);
    assert_eq!(r["incumbent"]["j"], t["result"]["best_j"]);
    let mean = r["incumbent"]["predicted_mean"].as_f64().unwrap();
    let best = t["result"]["best_j"].as_f64().unwrap();
    assert!((mean - best).abs() < 0.05, "{mean} vs {best}");
    assert!(r["incumbent"]["predicted_std"].as_f64().unwrap() >= 0.0);

    let gp = dir.path().join("gp.json");
    ok(&["inspect-surrogate", "--result", s(&sh.tsp), "--out", s(&gp), "--surrogate", "gp"]);
    assert_ne!(json_at(&gp)["model"], r["model"]);
}

#[test]
fn help_exits_zero() {
    let out = kfat(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["gen-data", "tune", "evaluate", "compare", "inspect-surrogate"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
    assert_eq!(code(&kfat(&["no-such-command"])), 1);
}
