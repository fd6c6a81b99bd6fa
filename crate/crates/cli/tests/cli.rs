//! End-to-end runs of the command-line driver.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use blog_core::corpus;

fn blogc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blogc")).args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn model(dir: &Path, name: &str) -> PathBuf {
    let p = dir.join(format!("{name}.blog"));
    std::fs::write(&p, corpus::source(name).unwrap()).unwrap();
    p
}

#[test]
fn enumerate_prints_exact_histograms() {
    let dir = tempfile::tempdir().unwrap();
    let p = model(dir.path(), "burglary");
    let j = stdout_json(&blogc(&["enumerate", p.to_str().unwrap()]));
    let t = j[0]["histogram"]["true"].as_f64().unwrap();
    assert!((t - 32.0 / 51.0).abs() < 1e-12, "{t}");
}

#[test]
fn interpreter_run_reports_stats() {
    let dir = tempfile::tempdir().unwrap();
    let p = model(dir.path(), "hurricane");
    let j = stdout_json(&blogc(&["run", "--engine", "interp", "--algo", "lw", "-n", "2000", "--seed", "4", p.to_str().unwrap()]));
    assert_eq!(j["engine"], "interp");
    assert_eq!(j["n_samples"], 2000);
    assert!(j["rng_calls"].as_u64().unwrap() > 0);
    let h = &j["query_results"][0]["histogram"];
    let total: f64 = h.as_object().unwrap().values().map(|v| v.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn compiled_run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = model(dir.path(), "burglary");
    let args = ["run", "--algo", "pmh", "-n", "5000", "--seed", "9", p.to_str().unwrap()];
    let a = stdout_json(&blogc(&args));
    let b = stdout_json(&blogc(&args));
    assert_eq!(a["engine"], "compiled");
    assert_eq!(a["query_results"], b["query_results"]);
    assert_eq!(a["rng_calls"], b["rng_calls"]);
}

#[test]
fn emit_only_writes_a_package() {
    let dir = tempfile::tempdir().unwrap();
    let p = model(dir.path(), "urnball_20_2");
    let out = dir.path().join("pkg");
    let o = blogc(&["compile", "--emit-only", "--algo", "lw", "-o", out.to_str().unwrap(), p.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("Cargo.toml").is_file());
    assert!(out.join("src/main.rs").is_file());
}

#[test]
fn empty_bench_suite_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("r.json");
    let o = blogc(&["bench", "--suite", "empty", "--out", rep.to_str().unwrap()]);
    assert!(o.status.success());
    let j: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(rep).unwrap()).unwrap();
    assert_eq!(j["schema_version"], 1);
    assert_eq!(j["cells"].as_array().unwrap().len(), 0);
}

#[test]
fn errors_exit_nonzero_with_a_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.blog");
    std::fs::write(&p, "random Boolean a ~ b;\n").unwrap();
    let o = blogc(&["enumerate", p.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 1, column 20"), "{err}");
    assert!(!blogc(&["bench", "--suite", "nope"]).status.success());
    assert!(!blogc(&["run", "--engine", "jit", p.to_str().unwrap()]).status.success());
}

#[test]
fn gibbs_on_a_nonconjugate_continuous_model_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.blog");
    std::fs::write(&p, "random Real a ~ Gamma(2.0, 1.0);\nrandom Real b ~ Gaussian(a, 1.0);\nobs b = 0.5;\nquery a;\n").unwrap();
    let out = dir.path().join("pkg");
    let o = blogc(&["compile", "--emit-only", "--algo", "gibbs", "-o", out.to_str().unwrap(), p.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("`a`"), "{err}");
}
