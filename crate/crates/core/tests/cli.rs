use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use tetris_sim::tensor::{save_tensor, synth_tensor, Bitwidth, Distribution, FixedTensor, QuantSpec};

fn tetris(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tetris")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = tetris(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read_json(p: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_layer(dir: &Path, bits: Bitwidth) -> (String, String) {
    let w = synth_tensor(vec![4, 8, 3, 3], QuantSpec::weights(bits), &Distribution::bernoulli(0.311), 7).unwrap();
    let x = synth_tensor(vec![1, 8, 6, 6], QuantSpec::activations(bits), &Distribution::Uniform, 8).unwrap();
    let (wp, xp) = (dir.join("w.fxt"), dir.join("x.fxt"));
    save_tensor(&w, &wp).unwrap();
    save_tensor(&x, &xp).unwrap();
    (s(&wp).to_string(), s(&xp).to_string())
}

#[test]
fn stats_on_all_zero_tensor() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("z.fxt");
    save_tensor(&FixedTensor::zeros(vec![64], QuantSpec::weights(Bitwidth::B16)).unwrap(), &p).unwrap();
    let out = dir.path().join("out");
    ok(&["stats", "--weights", s(&p), "--out", s(&out)]);
    let v = read_json(out.join("stats.json"));
    assert_eq!(v["stats"]["zero_bit_fraction"], 1.0);
    assert_eq!(v["stats"]["zero_value_fraction"], 1.0);
    assert_eq!(v["config"]["weights"][0], s(&p));
}

#[test]
fn stats_to_stdout_and_csv() {
    let dir = TempDir::new().unwrap();
    let (w, _) = write_layer(dir.path(), Bitwidth::B16);
    let out = ok(&["stats", "--weights", &w]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["stats"]["n_values"], 288);
    let out = ok(&["stats", "--weights", &w, "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# config: {"));
    assert_eq!(text.lines().nth(1), Some("bit,ones,density"));
    assert_eq!(text.lines().count(), 2 + 15);
}

#[test]
fn compare_reports_identical_outputs() {
    let dir = TempDir::new().unwrap();
    let (w, x) = write_layer(dir.path(), Bitwidth::B8);
    let out = dir.path().join("cmp");
    ok(&["compare", "--weights", &w, "--input", &x, "--pad", "1", "--out", s(&out)]);
    let v = read_json(out.join("compare.json"));
    assert_eq!(v["outputs_identical"], true);
    let engines = v["engines"].as_array().unwrap();
    let names: Vec<&str> = engines.iter().map(|e| e["engine"].as_str().unwrap()).collect();
    assert_eq!(names, ["tetris-fp16", "tetris-int8", "mac", "bitserial"]);
    let mac = engines.iter().find(|e| e["engine"] == "mac").unwrap();
    assert_eq!(mac["speedup_vs_mac"], 1.0);
    assert_eq!(mac["normalized_edp"], 1.0);
    let output = read_json(out.join("output.json"));
    assert_eq!(output["shape"], serde_json::json!([1, 4, 6, 6]));
}

#[test]
fn compare_skips_int8_for_16_bit_tensors() {
    let dir = TempDir::new().unwrap();
    let (w, x) = write_layer(dir.path(), Bitwidth::B16);
    let out = ok(&["compare", "--weights", &w, "--input", &x]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(!text.contains("tetris-int8"));
    assert!(text.contains("tetris-fp16"));
}

#[test]
fn sweep_is_non_increasing() {
    let dir = TempDir::new().unwrap();
    let (w, x) = write_layer(dir.path(), Bitwidth::B16);
    let out = ok(&["sweep", "--weights", &w, "--input", &x, "--ks", "8,16,32"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let cycles: Vec<u64> = v["rows"].as_array().unwrap().iter().map(|r| r["cycles"].as_u64().unwrap()).collect();
    assert_eq!(cycles.len(), 3);
    assert!(cycles.windows(2).all(|p| p[1] <= p[0]), "{cycles:?}");
    assert_eq!(v["config"]["ks"], serde_json::json!([8, 16, 32]));
}

#[test]
fn knead_with_dump() {
    let dir = TempDir::new().unwrap();
    let (w, _) = write_layer(dir.path(), Bitwidth::B16);
    let out = dir.path().join("k");
    ok(&["knead", "--weights", &w, "--ks", "8", "--dump", "--out", s(&out)]);
    let v = read_json(out.join("knead.json"));
    assert_eq!(v["knead"]["lanes"], 4);
    assert_eq!(v["knead"]["groups"], 4 * 9);
    assert_eq!(v["knead"]["pointer_bits"], 3);
    let dump = read_json(out.join("kneaded.json"));
    assert_eq!(dump.as_array().unwrap().len(), 4);
}

#[test]
fn run_synthesizes_without_files_and_writes_csv() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    ok(&["run", "--seed", "3", "--format", "csv", "--relu", "--out", s(&out)]);
    for f in ["output.csv", "layers.csv", "lanes.csv"] {
        let text = fs::read_to_string(out.join(f)).unwrap();
        assert!(text.starts_with("# config: {"), "{f}");
    }
}

#[test]
fn synth_then_stats() {
    let dir = TempDir::new().unwrap();
    let out = ok(&["synth", "--shape", "1000", "--dist", "bernoulli:0.5", "--seed", "1", "--name", "t", "--out", s(dir.path())]);
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["elements"], 1000);
    let p = dir.path().join("t.fxt");
    let out = ok(&["stats", "--weights", s(&p)]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let zb = v["stats"]["zero_bit_fraction"].as_f64().unwrap();
    assert!((zb - 0.5).abs() < 0.03, "{zb}");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = TempDir::new().unwrap();
    let (w, x) = write_layer(dir.path(), Bitwidth::B16);
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, format!(r#"{{"weights": "{w}", "input": "{x}", "ks": [8, 16], "tree_latency": 3}}"#)).unwrap();
    let out = ok(&["--config", s(&cfg), "sweep", "--ks", "32"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["config"]["ks"], serde_json::json!([32]));
    assert_eq!(v["config"]["tree_latency"], 3);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o");
    let args = ["compare", "--seed", "11", "--bitwidth", "8", "--out", s(&out)];
    ok(&args);
    let first: Vec<Vec<u8>> = ["compare.json", "output.json"].iter().map(|f| fs::read(out.join(f)).unwrap()).collect();
    ok(&args);
    for (f, bytes) in ["compare.json", "output.json"].iter().zip(&first) {
        assert!(&fs::read(out.join(f)).unwrap() == bytes, "{f} changed between runs");
    }
}

#[test]
fn missing_input_exits_with_io_code_and_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o");
    let r = tetris(&["stats", "--weights", s(&dir.path().join("nope.fxt")), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn malformed_file_exits_with_format_code() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("bad.fxt");
    fs::write(&p, b"NOPE\x10\x0f\x01\x00").unwrap();
    let out = dir.path().join("o");
    let r = tetris(&["stats", "--weights", s(&p), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(4));
    assert!(!out.exists() || fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn bad_config_values_exit_with_config_code() {
    let dir = TempDir::new().unwrap();
    let (w, x) = write_layer(dir.path(), Bitwidth::B16);
    assert_eq!(tetris(&["run", "--weights", &w, "--input", &x, "--ks", "0"]).status.code(), Some(2));
    assert_eq!(tetris(&["run", "--weights", &w, "--input", &x, "--engine", "tetris-int8"]).status.code(), Some(2));
    assert_eq!(tetris(&["synth", "--shape", "4", "--dist", "bernoulli:1.5"]).status.code(), Some(2));
    assert_eq!(tetris(&["run", "--engine", "abacus"]).status.code(), Some(2));
}

#[test]
fn no_partial_files_after_success() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o");
    ok(&["run", "--seed", "5", "--out", s(&out)]);
    let names: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert!(names.iter().all(|n| !n.ends_with(".partial")), "{names:?}");
    assert_eq!(names.len(), 2);
}
