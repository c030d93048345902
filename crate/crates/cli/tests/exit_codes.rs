//! Runs the built binary and checks exit codes and output shape.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_specsum"));
    c.env_remove("SPECSUM_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn zeta_eval_prints_zeta_two() {
    let o = run(&["zeta-eval", "--s", "2+0i"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("1.64493406684823"), "{}", stdout(&o));
    let o = run(&["zeta-eval", "--s", "0.5+14.134725141734693i", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["details"]["re"].as_f64().unwrap().abs() < 1e-10);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&run(&["nonsense"])), 2);
    assert_eq!(code(&run(&["zeta-eval"])), 2);
    assert_eq!(code(&run(&["zeta-eval", "--s", "abc"])), 2);
    assert_eq!(code(&run(&["zeta-eval", "--s", "2", "--threads", "0"])), 2);
    assert_eq!(code(&run(&["trace-check", "--K", "12", "--G", "1"])), 2);
    assert_eq!(code(&run(&["afe-check", "--r", "5"])), 2);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn afe_check_passes_and_fails_on_tolerance() {
    let o = run(&["afe-check", "--r", "40"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("name,value,reference,tolerance,pass\nrelative_error,"));
    assert_eq!(code(&run(&["afe-check", "--r", "40", "--tol", "1e-12"])), 1);
}

#[test]
fn kloosterman_and_bessel() {
    assert_eq!(code(&run(&["kloosterman", "--m", "1", "--n", "1", "--c", "4999"])), 0);
    assert_eq!(code(&run(&["kloosterman", "--m", "-3", "--n", "5", "--c", "12"])), 0);
    let o = run(&["bessel-plus", "--x", "2", "--K", "10", "--G", "1"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

#[test]
fn schema_errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"kappa\": \"9.5\", \"parity\": 0, \"coefficients\": [1.0]}\n").unwrap();
    let o = run(&["ingest", "--data", bad.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&o), 2);
    let v: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(v["error"], "schema");
    let missing = dir.path().join("missing.jsonl");
    assert_eq!(code(&run(&["ingest", "--data", missing.to_str().unwrap()])), 2);
}

#[test]
fn ingest_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    let src = fixture("maass_level1.jsonl");
    let o = run(&["ingest", "--data", src.to_str().unwrap(), "--out", a.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["details"]["form_count"], 26);
    assert_eq!(code(&run(&["ingest", "--data", a.to_str().unwrap(), "--out", b.to_str().unwrap()])), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn trace_check_with_extracted_alphas() {
    let data = fixture("maass_level1_alpha.jsonl");
    let data = data.to_str().unwrap();
    let o = run(&["trace-check", "--data", data, "--K", "12", "--G", "1", "--tol", "1e-2", "--format", "json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["details"]["breakdown"]["diagonal"].as_f64().unwrap() > 0.0);

    // a 20% error in one α is caught
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    let text = std::fs::read_to_string(data).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut rec: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
    let a = rec["alpha"].as_f64().unwrap();
    rec["alpha"] = serde_json::json!(1.2 * a);
    lines[1] = rec.to_string();
    std::fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let o = run(&["trace-check", "--data", bad.to_str().unwrap(), "--K", "12", "--G", "1", "--tol", "1e-2"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn moments_bands() {
    let data = fixture("maass_level1_alpha.jsonl");
    let o = run(&["moments", "--data", data.to_str().unwrap(), "--T", "25", "--K0", "10"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert!(stderr(&o).contains("short of 2K0 + 10G"));
    assert_eq!(code(&run(&["moments", "--T", "100", "--k", "2"])), 0);
    assert_eq!(code(&run(&["moments", "--T", "100", "--k", "3"])), 2);
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "format = json\nthreads = 2\n").unwrap();
    let out = dir.path().join("report.json");
    let o = run(&["zeta-eval", "--s", "3", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["command"], "zeta-eval");
    // the flag wins over the file
    let o = run(&["zeta-eval", "--s", "3", "--config", cfg.to_str().unwrap(), "--format", "csv"]);
    assert!(stdout(&o).starts_with("name,"));
    std::fs::write(&cfg, "threads = many\n").unwrap();
    assert_eq!(code(&run(&["zeta-eval", "--s", "3", "--config", cfg.to_str().unwrap()])), 2);
    let o = bin().args(["zeta-eval", "--s", "3"]).env("SPECSUM_THREADS", "0").output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn reports_do_not_depend_on_threads() {
    let args = ["theorem2-fit", "--format", "json"];
    let one = run(&[&args[..], &["--threads", "1"]].concat());
    let four = run(&[&args[..], &["--threads", "4"]].concat());
    assert_eq!(code(&one), 0, "{}", stdout(&one));
    assert_eq!(one.stdout, four.stdout);
}
