use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn ramanqpt(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ramanqpt"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_json(dir: &Path, name: &str, value: &Value) {
    fs::write(dir.join(name), serde_json::to_string(value).unwrap()).unwrap();
}

fn chi_entry(record: &Value, i: usize, j: usize) -> (f64, f64) {
    (
        record["chi_real"][i][j].as_f64().unwrap(),
        record["chi_imag"][i][j].as_f64().unwrap(),
    )
}

fn record(diag: [f64; 4]) -> Value {
    let mut real = [[0.0; 4]; 4];
    for (i, d) in diag.iter().enumerate() {
        real[i][i] = *d;
    }
    let imag = [[0.0f64; 4]; 4];
    json!({
        "method": "mle",
        "chi_real": real,
        "chi_imag": imag,
        "nll": null,
        "iterations": 1,
        "converged": true,
        "min_eigenvalue": 0.0,
    })
}

/// Balanced, phase-free, undepolarized channel: memory_off is the identity.
fn ideal_config(dir: &Path, extra: Value) {
    let mut config = json!({
        "channel": {
            "eta_h0": 0.15, "eta_v0": 0.15, "residual_phase": 0.0,
            "decay_tau": 1000.0, "off_depolarization": 0.0
        }
    });
    config
        .as_object_mut()
        .unwrap()
        .extend(extra.as_object().unwrap().clone());
    write_json(dir, "config.json", &config);
}

#[test]
fn simulate_writes_three_datasets() {
    let dir = TempDir::new().unwrap();
    let out = ramanqpt(&["simulate", "--out", "data"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for (name, tag) in [
        ("memory_on.json", "memory_on"),
        ("memory_off.json", "memory_off"),
        ("transmitted.json", "transmitted"),
    ] {
        let ds = read_json(&dir.path().join("data").join(name));
        assert_eq!(ds["channel_tag"], tag);
        assert_eq!(ds["shot_config"]["repetitions"], 500);
        let settings = ds["settings"].as_array().unwrap();
        assert_eq!(settings.len(), 36);
        assert!(settings.iter().all(|s| s["counts"].as_array().unwrap().len() == 500));
    }
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    for out in ["a", "b", "c"] {
        let seed = if out == "c" { "8" } else { "7" };
        let status = ramanqpt(
            &["simulate", "--seed", seed, "--storage-time", "400", "--out", out],
            dir.path(),
        )
        .status;
        assert!(status.success());
    }
    let bytes = |d: &str| fs::read(dir.path().join(d).join("memory_on.json")).unwrap();
    assert_eq!(bytes("a"), bytes("b"));
    assert_ne!(bytes("a"), bytes("c"));
}

#[test]
fn reconstruct_identity_dataset() {
    let dir = TempDir::new().unwrap();
    ideal_config(dir.path(), json!({}));
    assert!(ramanqpt(&["simulate", "--config", "config.json"], dir.path())
        .status
        .success());
    let out = ramanqpt(&["reconstruct", "memory_off.json"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&dir.path().join("memory_off.mle.json"));
    assert_eq!(r["method"], "mle");
    assert_eq!(r["converged"], true);
    assert!(r["min_eigenvalue"].as_f64().unwrap() >= -1e-12);
    for i in 0..4 {
        for j in 0..4 {
            let (re, im) = chi_entry(&r, i, j);
            let want = if i == 0 && j == 0 { 1.0 } else { 0.0 };
            assert!(
                (re - want).abs() < 0.02 && im.abs() < 0.02,
                "χ[{i}][{j}] = {re} + {im}i"
            );
        }
    }
}

#[test]
fn linear_and_mle_agree_on_nearly_noiseless_data() {
    let dir = TempDir::new().unwrap();
    // one enormous pulse per setting: shot noise ~1e-6
    ideal_config(
        dir.path(),
        json!({"shots": {"photons_per_pulse": 1e12, "background": 0.0, "repetitions": 1, "seed": 3}}),
    );
    assert!(ramanqpt(
        &["simulate", "--config", "config.json", "--storage-time", "300"],
        dir.path()
    )
    .status
    .success());
    for method in ["linear", "mle"] {
        let out = ramanqpt(&["reconstruct", "memory_on.json", "--method", method], dir.path());
        assert_eq!(out.status.code(), Some(0));
    }
    let li = read_json(&dir.path().join("memory_on.linear.json"));
    let ml = read_json(&dir.path().join("memory_on.mle.json"));
    assert_eq!(li["method"], "linear_inversion");
    assert!(li["nll"].is_null());
    let mut dist = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let (a, b) = (chi_entry(&li, i, j), chi_entry(&ml, i, j));
            dist += (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
        }
    }
    assert!(dist.sqrt() < 1e-4, "distance {}", dist.sqrt());
}

#[test]
fn malformed_input_exits_3_with_one_line() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("bad.json"), "{\"channel_tag\": ").unwrap();
    let out = ramanqpt(&["reconstruct", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.trim_end().lines().count(), 1, "{stderr}");
    assert!(stderr.contains("bad.json"));

    assert_eq!(
        ramanqpt(&["reconstruct", "missing.json"], dir.path()).status.code(),
        Some(3)
    );
    assert_eq!(
        ramanqpt(&["reconstruct", "bad.json", "--method", "svd"], dir.path())
            .status
            .code(),
        Some(3)
    );
    write_json(dir.path(), "config.json", &json!({"storage_times": []}));
    assert_eq!(
        ramanqpt(&["sweep", "--config", "config.json"], dir.path())
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn non_convergence_exits_2_and_still_writes() {
    let dir = TempDir::new().unwrap();
    write_json(
        dir.path(),
        "config.json",
        &json!({"mle": {"max_iter": 40, "tol": 1e-14, "restarts": 0}}),
    );
    assert!(ramanqpt(&["simulate"], dir.path()).status.success());
    let out = ramanqpt(
        &["reconstruct", "memory_on.json", "--config", "config.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(read_json(&dir.path().join("memory_on.mle.json"))["converged"], false);
}

#[test]
fn fidelity_of_reconstruction_records() {
    let dir = TempDir::new().unwrap();
    let identity = record([1.0, 0.0, 0.0, 0.0]);
    let x = record([0.0, 1.0, 0.0, 0.0]);
    write_json(dir.path(), "id.json", &identity);
    write_json(dir.path(), "x.json", &x);

    let out = ramanqpt(&["fidelity", "id.json", "id.json"], dir.path());
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "F = 1.000000 ± 0.000000");
    let est = read_json(&dir.path().join("fidelity.json"));
    assert_eq!(est, json!({"value": 1.0, "std_err": 0.0, "trials": 0}));

    let out = ramanqpt(&["fidelity", "x.json", "id.json"], dir.path());
    assert!(out.status.success());
    assert!(read_json(&dir.path().join("fidelity.json"))["value"].as_f64().unwrap() < 1e-12);
}

#[test]
fn fidelity_of_unbalanced_memory() {
    let dir = TempDir::new().unwrap();
    write_json(
        dir.path(),
        "config.json",
        &json!({"channel": {
            "eta_h0": 0.3, "eta_v0": 0.15, "residual_phase": 0.0,
            "decay_tau": 1000.0, "off_depolarization": 0.0
        }}),
    );
    write_json(dir.path(), "id.json", &record([1.0, 0.0, 0.0, 0.0]));
    let sim = ramanqpt(
        &["simulate", "--config", "config.json", "--storage-time", "0"],
        dir.path(),
    );
    assert!(sim.status.success());
    let out = ramanqpt(&["fidelity", "memory_on.json", "id.json", "--trials", "40"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("F = 0.97"));
    let est = read_json(&dir.path().join("fidelity.json"));
    let (value, err) = (est["value"].as_f64().unwrap(), est["std_err"].as_f64().unwrap());
    let closed = (0.3f64.sqrt() + 0.15f64.sqrt()).powi(2) / (2.0 * 0.45);
    assert!(err > 0.0 && err < 0.01);
    assert!((value - closed).abs() <= 3.0 * err, "{value} ± {err} vs {closed}");
    assert_eq!(est["trials"], 40);
}

#[test]
fn sweep_writes_csv_and_points() {
    let dir = TempDir::new().unwrap();
    write_json(
        dir.path(),
        "config.json",
        &json!({
            "storage_times": [12.5, 700.0, 1400.0],
            "shots": {"photons_per_pulse": 5000.0, "background": 0.0, "repetitions": 100, "seed": 5},
            "mc_trials": 30
        }),
    );
    for out in ["a", "b"] {
        let run = ramanqpt(&["sweep", "--config", "config.json", "--out", out], dir.path());
        assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    }
    let csv = fs::read_to_string(dir.path().join("a/sweep.csv")).unwrap();
    assert_eq!(csv, fs::read_to_string(dir.path().join("b/sweep.csv")).unwrap());
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "storage_time_ns,efficiency,fidelity,fidelity_err,converged");
    assert_eq!(lines.len(), 4);
    let times: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(times, vec![12.5, 700.0, 1400.0]);
    for (i, t) in times.iter().enumerate() {
        let point = read_json(&dir.path().join(format!("a/point_{i:03}.json")));
        assert_eq!(point["storage_time_ns"].as_f64(), Some(*t));
        assert!(point["memory_on"]["chi_real"].is_array());
    }
}

#[test]
fn print_defaults_is_a_loadable_config() {
    let dir = TempDir::new().unwrap();
    let out = ramanqpt(&["--print-defaults"], dir.path());
    assert!(out.status.success());
    let config: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(config["_note"], "model defaults, not measured data");
    assert_eq!(config["storage_times"][0], 12.5);
    assert_eq!(config["shots"]["repetitions"], 500);
    fs::write(dir.path().join("defaults.json"), &out.stdout).unwrap();
    let sim = ramanqpt(&["simulate", "--config", "defaults.json"], dir.path());
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    assert!(ramanqpt(&["sweep", "--print-defaults"], dir.path()).status.success());
}
