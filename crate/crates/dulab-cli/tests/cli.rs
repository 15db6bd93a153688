use std::path::Path;
use std::process::Command;

use serde_json::json;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dulab"))
}

fn write(dir: &Path, name: &str, v: &serde_json::Value) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, v.to_string()).unwrap();
    p
}

fn run(cfg: &Path, out: &Path, workers: usize) -> std::process::Output {
    bin()
        .arg("run")
        .arg(cfg)
        .args(["--workers", &workers.to_string(), "--out"])
        .arg(out)
        .output()
        .unwrap()
}

fn small_configs() -> Vec<(&'static str, serde_json::Value)> {
    vec![
        ("mix", json!({"experiment": "mixing-scan", "q": 3, "gates": [{"family": "mr", "seed": 4, "iterations": 400}], "ensemble": 12, "seed": 9})),
        ("vel", json!({"experiment": "velocity-vs-mixing", "q": 2, "gates": [{"family": "cartan", "j3": 0.1}, {"family": "cartan", "j3": 0.6}], "ensemble": 5, "kernel": "random", "velocity_t": 2})),
        ("ent", json!({"experiment": "entropy-profile", "q": 2, "l": 8, "gates": [{"family": "cartan", "j3": 0.3}], "ensemble": 3, "kernel": "random", "t_max": 3, "alpha": [2, 3]})),
        ("bnd", json!({"experiment": "bounds", "q": 2, "gates": [{"family": "cartan", "j3": 0.3}], "ensemble": 2, "kernel": "random", "samples": 100, "x_max": 2})),
        ("mp", json!({"experiment": "multipartite-profile", "q": 2, "l": 6, "gates": [{"family": "cartan", "j3": 0.2}], "ensemble": 3, "kernel": "random", "t_max": 3, "r": 3})),
        ("cp", json!({"experiment": "circuit-powers", "q": 2, "l": 4, "gates": [{"family": "swap"}, {"family": "cartan", "j3": 0.2}], "ensemble": 3, "t_max": 3, "samples": 100})),
        ("is", json!({"experiment": "ising", "q": 2, "l": 4, "ising": {"t_final": 1.0, "realizations": 3}})),
    ]
}

#[test]
fn every_experiment_is_worker_count_independent() {
    let dir = tempfile::tempdir().unwrap();
    for (name, cfg) in small_configs() {
        let p = write(dir.path(), &format!("{name}.json"), &cfg);
        let a = dir.path().join(format!("{name}-w1"));
        let b = dir.path().join(format!("{name}-w8"));
        for (out, w) in [(&a, 1), (&b, 8)] {
            let o = run(&p, out, w);
            assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        }
        let mut files: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        files.sort();
        assert!(files.iter().any(|f| f.to_string_lossy().ends_with(".meta.json")), "{name}");
        for f in files {
            let x = std::fs::read(a.join(&f)).unwrap();
            let y = std::fs::read(b.join(&f)).unwrap();
            assert!(x == y, "{name}: {} differs between worker counts", f.to_string_lossy());
        }
    }
}

#[test]
fn sidecar_documents_every_column() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = small_configs().into_iter().find(|c| c.0 == "bnd").unwrap();
    let p = write(dir.path(), "b.json", &cfg);
    assert!(run(&p, dir.path(), 2).status.success());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("bounds.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["samples"], 100);
    assert!(meta["code_version"].is_string());
    assert!(meta["summary"]["variant_selection"]["checks"].is_array());
    let csv = std::fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let cols: Vec<&str> = meta["files"][0]["columns"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(header, cols);
    let s_col = meta["files"][0]["columns"].as_array().unwrap().iter().find(|c| c["name"] == "S_bound").unwrap();
    assert_eq!(s_col["log_base"], "e");
}

#[test]
fn seed_override_changes_output_and_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = small_configs().into_iter().find(|c| c.0 == "mix").unwrap();
    let p = write(dir.path(), "m.json", &cfg);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&p, &a, 1).status.success());
    let o = bin().arg("run").arg(&p).args(["--seed", "77", "--out"]).arg(&b).output().unwrap();
    assert!(o.status.success());
    let x = std::fs::read(a.join("mixing-scan.csv")).unwrap();
    let y = std::fs::read(b.join("mixing-scan.csv")).unwrap();
    assert_ne!(x, y);
    let meta = std::fs::read_to_string(b.join("mixing-scan.meta.json")).unwrap();
    assert!(meta.contains("\"seed\": 77"));
}

#[test]
fn validation_and_guard_failures_exit_with_category() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (json!({"experiment": "mixing-scan", "q": 2, "gates": []}), "validation", 2, "gates"),
        (json!({"experiment": "mixing-scan", "q": 2, "gates": [{"family": "cartan", "j3": 2.0}]}), "validation", 2, "gates[0].j3"),
        (json!({"experiment": "nope", "q": 2}), "validation", 2, "config"),
        (json!({"experiment": "bounds", "q": 2, "gates": [{"family": "swap"}], "samples": 10}), "validation", 2, "samples"),
        (json!({"experiment": "circuit-powers", "q": 2, "l": 10, "gates": [{"family": "swap"}]}), "guard", 3, "two-copy"),
        (json!({"experiment": "multipartite-profile", "q": 3, "l": 18, "gates": [{"family": "swap"}], "memory_budget_mb": 16}), "guard", 3, "state"),
    ];
    for (i, (cfg, cat, code, needle)) in cases.iter().enumerate() {
        let p = write(dir.path(), &format!("c{i}.json"), cfg);
        let o = run(&p, dir.path(), 1);
        let err = String::from_utf8_lossy(&o.stderr);
        assert_eq!(o.status.code(), Some(*code), "case {i}: {err}");
        assert!(err.starts_with(&format!("error[{cat}]")), "case {i}: {err}");
        assert!(err.contains(needle), "case {i}: {err}");
    }
    let o = bin().args(["run", "/definitely/missing.json"]).output().unwrap();
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn gate_and_kernel_files_are_read_relative_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let g = dulab::gates::TwoQuditGate::swap(2).to_json();
    std::fs::write(dir.path().join("g.json"), serde_json::to_string(&g).unwrap()).unwrap();
    std::fs::write(
        dir.path().join("m.json"),
        json!({"q": 2, "rows": [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1.0, 0.0]]}).to_string(),
    )
    .unwrap();
    let cfg = json!({
        "experiment": "entropy-profile", "q": 2, "l": 8, "t_max": 3,
        "gates": [{"family": "file", "path": "g.json"}],
        "kernel": {"file": "m.json"}, "dress": false
    });
    let p = write(dir.path(), "c.json", &cfg);
    let out = dir.path().join("o");
    let o = run(&p, &out, 1);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // Unitary kernel: the factorized rows have v_E = 1.
    let csv = std::fs::read_to_string(out.join("entropy-profile.csv")).unwrap();
    let fac: Vec<f64> = csv
        .lines()
        .skip(2)
        .filter(|l| l.ends_with("true"))
        .map(|l| l.split(',').nth(11).unwrap().parse().unwrap())
        .collect();
    assert!(!fac.is_empty());
    assert!(fac.iter().all(|v| (v - 1.0).abs() < 1e-9), "{fac:?}");
}

#[test]
fn table1_pools_runs_and_reports_missing_combinations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "experiment": "multipartite-profile", "name": "l8q2", "q": 2, "l": 8,
        "gates": [{"family": "cartan", "j3": 0.0}], "ensemble": 3, "kernel": "random",
        "t_max": 10, "measure_from": 8
    });
    let p = write(dir.path(), "t.json", &cfg);
    let out = dir.path().join("runs");
    assert!(run(&p, &out, 3).status.success());
    let o = bin().arg("table1").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("L=12 q=3"));
    let csv = dir.path().join("t1.csv");
    let o = bin().arg("table1").arg(out.join("l8q2.meta.json")).arg("--partial").arg("--csv").arg(&csv).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<Vec<String>> = text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][3], "scott_half");
    assert_eq!(rows[2][6], "4.0");
    for r in &rows {
        let v: f64 = r[4].parse().unwrap();
        let m: f64 = r[6].parse().unwrap();
        assert!(v > 0.0 && v <= m);
    }
}
