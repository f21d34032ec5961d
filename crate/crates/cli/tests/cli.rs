use std::fs;
use std::path::Path;
use std::process::Command;

use memnet::capacity::{capacity_report, CapacityQuery};
use memnet_cli::RunManifest;
use proptest::prelude::*;
use serde_json::Value;

struct Run {
    code: i32,
    json: Value,
    stderr: String,
}

fn memnet(args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_memnet"));
    cmd.args(args).env_remove(memnet_cli::SEED_ENV);
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    let stdout = String::from_utf8(out.stdout).unwrap();
    let json = if stdout.trim().is_empty() {
        Value::Null
    } else {
        serde_json::from_str(&stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {stdout}"))
    };
    Run {
        code: out.status.code().unwrap(),
        json,
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, n: usize, d: usize, delta: f64) -> std::path::PathBuf {
    let ds = dir.join("ds.csv");
    let r = memnet(
        &[
            "generate",
            "--n",
            &n.to_string(),
            "--d",
            &d.to_string(),
            "--delta",
            &delta.to_string(),
            "--seed",
            "3",
            "--out",
            s(&ds),
        ],
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    ds
}

#[test]
fn build_eval_audit_round() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(dir.path(), 256, 16, 0.2);
    let net = dir.path().join("net.json");
    let r = memnet(
        &[
            "build",
            "--dataset",
            s(&ds),
            "--mode",
            "distance",
            "--delta",
            "0.2",
            "--seed",
            "42",
            "--out",
            s(&net),
        ],
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.json, Value::Null, "build prints nothing on stdout");
    assert!(r.stderr.contains("memorized 256 points"));
    for f in ["net.json", "report.json", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let manifest: RunManifest = serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.command, "build");
    assert_eq!(manifest.seed, Some(42));
    assert_eq!(manifest.artifacts["network"], net);

    let preds = dir.path().join("pred.csv");
    let e = memnet(
        &["eval", "--net", s(&net), "--dataset", s(&ds), "--out", s(&preds)],
        &[],
    );
    assert_eq!(e.code, 0, "{}", e.stderr);
    assert_eq!(e.json["accuracy"], 1.0);
    assert_eq!(e.json["n"], 256);
    let rows = fs::read_to_string(&preds).unwrap();
    assert_eq!(rows.lines().next(), Some("index,label,prediction"));
    assert_eq!(rows.lines().count(), 257);

    let a = memnet(&["audit", "--net", s(&net), "--dataset", s(&ds)], &[]);
    assert_eq!(a.code, 0, "{}", a.stderr);
    let report: Value = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(a.json["totals"], report["totals"]);
    assert_eq!(a.json["margin_warnings"], Value::Array(vec![]));
    assert_eq!(a.json["manifest"]["command"], "audit");
}

#[test]
fn violated_separation_is_a_contract_error() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("close.csv");
    fs::write(&ds, "label,f1,f2\n1,0.5,0.0\n0,0.5,0.01\n1,-0.5,0.0\n").unwrap();
    let r = memnet(
        &[
            "build",
            "--dataset",
            s(&ds),
            "--delta",
            "0.2",
            "--out",
            s(&dir.path().join("n.json")),
        ],
        &[],
    );
    assert_eq!(r.code, 2);
    assert_eq!(r.json["error"]["kind"], "not_separated");
    assert!(
        r.json["error"]["message"].as_str().unwrap().contains("points 0 and 1"),
        "{}",
        r.json
    );
    assert!(!dir.path().join("n.json").exists());
}

#[test]
fn missing_file_is_an_io_error() {
    let r = memnet(
        &[
            "build",
            "--dataset",
            "/nonexistent/ds.csv",
            "--delta",
            "0.2",
            "--out",
            "/tmp/never.json",
        ],
        &[],
    );
    assert_eq!(r.code, 1);
    assert_eq!(r.json["error"]["kind"], "io");
    assert!(r.stderr.starts_with("error:"));
}

#[test]
fn malformed_csv_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("bad.csv");
    fs::write(&ds, "label,f1\n1,0.1\n0,zero\n").unwrap();
    let r = memnet(
        &[
            "build",
            "--dataset",
            s(&ds),
            "--delta",
            "0.2",
            "--out",
            s(&dir.path().join("n.json")),
        ],
        &[],
    );
    assert_eq!(r.code, 2);
    assert_eq!(r.json["error"]["kind"], "parse");
}

#[test]
fn retry_exhaustion_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("tight.csv");
    fs::write(&ds, "label,f1,f2\n1,0.5,0.0\n0,0.5,0.000000001\n").unwrap();
    let r = memnet(
        &[
            "build",
            "--dataset",
            s(&ds),
            "--delta",
            "1e-9",
            "--max-retries",
            "3",
            "--c-dist",
            "1e-12",
            "--eps1",
            "0.999",
            "--out",
            s(&dir.path().join("n.json")),
        ],
        &[],
    );
    assert_eq!(r.code, 3, "{}", r.json);
    assert_eq!(r.json["error"]["kind"], "retries_exhausted");
}

#[test]
fn seed_defaults_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = |p: &Path| {
        vec![
            "generate".to_string(),
            "--n".into(),
            "20".into(),
            "--d".into(),
            "3".into(),
            "--delta".into(),
            "0.3".into(),
            "--out".into(),
            s(p).into(),
        ]
    };
    let aa: Vec<String> = args(&a);
    let r = memnet(
        &aa.iter().map(String::as_str).collect::<Vec<_>>(),
        &[("MEMNET_SEED", "77")],
    );
    assert_eq!(r.code, 0);
    let mut bb = args(&b);
    bb.extend(["--seed".into(), "77".into()]);
    assert_eq!(memnet(&bb.iter().map(String::as_str).collect::<Vec<_>>(), &[]).code, 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn rerun_reproduces_generated_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(dir.path(), 40, 4, 0.3);
    let other = dir.path().join("other");
    let r = memnet(
        &[
            "rerun",
            "--manifest",
            s(&dir.path().join("manifest.json")),
            "--out-dir",
            s(&other),
        ],
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(fs::read(&ds).unwrap(), fs::read(other.join("ds.csv")).unwrap());
    let m: RunManifest = serde_json::from_slice(&fs::read(other.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.artifacts["dataset"], other.join("ds.csv"));
}

#[test]
fn lowerbound_and_separate() {
    let dir = tempfile::tempdir().unwrap();
    let cds = dir.path().join("cds.csv");
    let planes = dir.path().join("planes.json");
    let pressure = dir.path().join("pressure.json");
    let r = memnet(
        &[
            "lowerbound",
            "--n",
            "64",
            "--d",
            "8",
            "--delta",
            "0.05",
            "--seed",
            "1",
            "--out",
            s(&cds),
            "--planes",
            "5",
            "--planes-out",
            s(&planes),
            "--pressure-trials",
            "2",
            "--band-planes",
            "200",
            "--report",
            s(&pressure),
        ],
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let text = fs::read_to_string(&cds).unwrap();
    assert!(text.lines().next().unwrap().ends_with(",cluster"));
    assert_eq!(text.lines().count(), 65);
    let p: Value = serde_json::from_slice(&fs::read(&pressure).unwrap()).unwrap();
    assert_eq!(p["clusters"], 8);
    assert_eq!(p["trials"].as_array().unwrap().len(), 2);

    let sep = memnet(
        &[
            "separate",
            "--points",
            s(&cds),
            "--planes",
            s(&planes),
            "--mode",
            "opposite",
        ],
        &[],
    );
    assert_eq!(sep.code, 0, "{}", sep.stderr);
    // 4 ones and 4 zeros in each of 8 clusters, out of 32 ones overall
    assert_eq!(sep.json["total"], 32 * 32);
    assert!(sep.json["separated"].as_u64().unwrap() <= 32 * 32);
    assert_eq!(sep.json["min_hyperplanes"], Value::Null);

    // the exact minimum only exists for planar inputs
    let m = memnet(&["separate", "--points", s(&cds), "--planes", s(&planes), "--min"], &[]);
    assert_eq!(m.code, 2);
}

#[test]
fn separate_minimum_in_the_plane() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("sq.csv");
    fs::write(&pts, "label,f1,f2\n1,1,1\n0,1,-1\n1,-1,-1\n0,-1,1\n").unwrap();
    let planes = dir.path().join("p.json");
    fs::write(&planes, r#"[{"normal":[2,0],"offset":0}]"#).unwrap();
    let r = memnet(
        &[
            "separate",
            "--points",
            s(&pts),
            "--planes",
            s(&planes),
            "--mode",
            "opposite",
            "--min",
        ],
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.json["total"], 4);
    assert_eq!(r.json["separated"], 2);
    // XOR layout needs two lines
    assert_eq!(r.json["min_hyperplanes"], 2);

    fs::write(&planes, r#"[{"normal":[0,0,1],"offset":0}]"#).unwrap();
    assert_eq!(
        memnet(&["separate", "--points", s(&pts), "--planes", s(&planes)], &[]).code,
        2
    );
    fs::write(&planes, "[{").unwrap();
    let bad = memnet(&["separate", "--points", s(&pts), "--planes", s(&planes)], &[]);
    assert_eq!((bad.code, bad.json["error"]["kind"].as_str()), (2, Some("parse")));
}

#[test]
fn bits_prints_bounds() {
    let r = memnet(&["bits", "--n", "1000", "--d", "32", "--delta", "0.05"], &[]);
    assert_eq!(r.code, 0);
    let lo = r.json["lower_bits"].as_f64().unwrap();
    let hi = r.json["upper_bits"].as_f64().unwrap();
    assert!(lo <= hi);
    assert_eq!(r.json["flags"]["bound_on_bound"], true);
    assert_eq!(r.json["manifest"]["command"], "bits");
    assert_eq!(
        memnet(&["bits", "--n", "0", "--d", "32", "--delta", "0.05"], &[]).code,
        2
    );
}

#[test]
fn sweep_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sw.csv");
    let r = memnet(
        &[
            "sweep",
            "--n",
            "64",
            "--d",
            "8",
            "--deltas",
            "0.2",
            "--seeds",
            "2",
            "--out",
            s(&out),
        ],
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.json["slope"], Value::Null);
    assert_eq!(r.json["rows"], 2);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("delta,seed_index,seed,status,first_layer_neurons"));
    assert_eq!(text.lines().count(), 3);

    let empty = memnet(
        &["sweep", "--n", "64", "--d", "8", "--deltas", "", "--out", s(&out)],
        &[],
    );
    assert_eq!(empty.code, 2);
    assert_eq!(empty.json["error"]["kind"], "usage");
    assert_eq!(
        memnet(&["sweep", "--n", "64", "--d", "8", "--out", s(&out)], &[]).code,
        2
    );
}

#[test]
fn failing_sweep_cells_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sw.csv");
    // δ = 3 is outside the distance mode's range; δ = 0.3 still runs
    let r = memnet(
        &[
            "sweep",
            "--n",
            "16",
            "--d",
            "4",
            "--deltas",
            "3,0.3",
            "--seeds",
            "1",
            "--out",
            s(&out),
        ],
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.json["failed"], 1);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().nth(1).unwrap().contains("error"));
    assert!(text.lines().nth(2).unwrap().contains(",ok,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn bits_command_matches_library(n in 1u64..5000, d in 2u64..100, delta in 0.001f64..1.0) {
        let r = memnet(&["bits", "--n", &n.to_string(), "--d", &d.to_string(), "--delta", &delta.to_string()], &[]);
        prop_assert_eq!(r.code, 0);
        let lib = capacity_report(&CapacityQuery::new(n, d, delta).unwrap()).unwrap();
        prop_assert_eq!(r.json["lower_bits"].as_f64().unwrap(), lib.lower.bits);
        prop_assert_eq!(r.json["upper_bits"].as_f64().unwrap(), lib.upper.bits);
    }
}
