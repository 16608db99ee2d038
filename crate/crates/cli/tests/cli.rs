use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn hyperch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run_cmd(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    hyperch(&args)
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn small() -> Value {
    json!({
        "grid": {"n_modes": 8},
        "scheme": {"dt": 1e-2},
        "t_end": 0.5,
        "sample_every": 5
    })
}

#[test]
fn simulate_zero_length_reports_initial_values() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small();
    cfg["t_end"] = json!(0.0);
    let path = write_config(tmp.path(), "c.json", &cfg);
    let out = tmp.path().join("out");
    let o = run_cmd("simulate", &path, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = read_json(&out.join("summary.json"));
    assert_eq!(s["schema"], 1);
    assert_eq!(s["steps"], 0);
    assert_eq!(s["t_final"], 0.0);
    assert_eq!(s["dissipation"], 0.0);
    assert_eq!(s["initial_energy"], s["energy"]["total"]);
    for f in ["trajectory.csv", "final_u.mfld", "final_ut.mfld", "final.ckpt", "config.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn simulate_linear_mode_matches_oracle() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "grid": {"n_modes": 4},
        "nonlinearity": {"a3": 0.0, "a2": 0.0, "a1": 0.0},
        "initial": {"u": {"preset": "single_mode", "j": 1, "k": 1, "amp": 1.0}, "u_t": {"preset": "zero"}},
        "scheme": {"dt": 1e-3},
        "t_end": 1.0,
        "sample_every": 100
    });
    let path = write_config(tmp.path(), "c.json", &cfg);
    let out = tmp.path().join("out");
    assert!(run_cmd("simulate", &path, &out, &["--quiet"]).status.success());
    let s = read_json(&out.join("summary.json"));
    let (y, z) = hyperch::integrator::exact_linear_mode(2.0, 1.0, 0.0, 1.0);
    let exact = 0.5 * (2.0 * y * y + z * z / 2.0);
    let e = s["energy"]["total"].as_f64().unwrap();
    assert!((e - exact).abs() <= 1e-6, "{e} {exact}");
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.json");
    let o = run_cmd("simulate", &missing, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));

    let bad = write_config(tmp.path(), "bad.json", &json!({"grid": {"n_mode": 8}}));
    let o = run_cmd("simulate", &bad, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_mode"));

    let mut cfg = small();
    cfg["converge"] = json!({"resolutions": [8, 16], "n_ref": 24});
    let p = write_config(tmp.path(), "conv.json", &cfg);
    let o = run_cmd("converge", &p, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("converge.n_ref"));
}

#[test]
fn runtime_failure_exits_with_one() {
    let tmp = TempDir::new().unwrap();
    // Linear growth f = 12u at S = 0 trips the energy safeguard.
    let cfg = json!({
        "grid": {"n_modes": 48},
        "nonlinearity": {"a3": 0.0, "a2": 0.0, "a1": 12.0},
        "initial": {"u": {"preset": "random_band", "band": 48, "amplitude": 1.0}},
        "scheme": {"dt": 1e-3},
        "t_end": 40.0,
        "sample_every": 1000
    });
    let p = write_config(tmp.path(), "c.json", &cfg);
    let o = run_cmd("simulate", &p, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("t = "));
}

#[test]
fn check_suite_and_only_flag() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({"check": {"resolutions": [16, 32]}});
    let p = write_config(tmp.path(), "c.json", &cfg);
    let out = tmp.path().join("out");
    let o = run_cmd("check", &p, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let rep = read_json(&out.join("check.json"));
    assert_eq!(rep["passed"], true);
    assert!(String::from_utf8_lossy(&o.stdout).contains("parseval"));

    let o = run_cmd("check", &p, &out, &["--only", "parseval"]);
    assert!(o.status.success());
    let rep = read_json(&out.join("check.json"));
    let results = rep["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    assert!(results.iter().all(|r| r["name"] == "parseval"));

    let o = run_cmd("check", &p, &out, &["--only", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run_cmd("simulate", &p, &out, &["--only", "parseval"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_with_broken_lambda_bound_fails() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "nonlinearity": {"a3": 1.0, "a2": 0.0, "a1": -1.0, "lambda_bound": 0.0},
        "check": {"resolutions": [16]}
    });
    let p = write_config(tmp.path(), "c.json", &cfg);
    let out = tmp.path().join("out");
    let o = run_cmd("check", &p, &out, &["--quiet"]);
    assert_eq!(o.status.code(), Some(1));
    let rep = read_json(&out.join("check.json"));
    let failed: Vec<&Value> = rep["results"].as_array().unwrap().iter().filter(|r| r["passed"] == false).collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0]["name"], "assumptions");
}

#[test]
fn equilibrium_of_single_well_is_zero() {
    let tmp = TempDir::new().unwrap();
    let p = write_config(tmp.path(), "c.json", &small());
    let out = tmp.path().join("out");
    let o = run_cmd("equilibrium", &p, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = read_json(&out.join("equilibrium.json"));
    assert!(rep["norm_v"].as_f64().unwrap() <= 1e-10);
    assert!(rep["residual"].as_f64().unwrap() <= 1e-10);
    assert!(out.join("u_star.mfld").is_file());

    let mut cfg = small();
    cfg["nonlinearity"] = json!({"a3": 1.0, "a2": 0.0, "a1": -3.0});
    cfg["equilibrium"] = json!({"max_iter": 1});
    let p = write_config(tmp.path(), "c2.json", &cfg);
    let o = run_cmd("equilibrium", &p, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(read_json(&out.join("equilibrium.json"))["converged"], false);
}

#[test]
fn decompose_default_identity() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small();
    cfg["t_end"] = json!(10.0);
    let p = write_config(tmp.path(), "c.json", &cfg);
    let out = tmp.path().join("out");
    let o = run_cmd("decompose", &p, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let rep = read_json(&out.join("decompose.json"));
    assert!(rep["sum_error"].as_f64().unwrap() <= 1e-9);
    assert_eq!(rep["big_l"], 10.0);
    assert!(out.join("decomposition.csv").is_file());
}

#[test]
fn converge_writes_member_trajectories() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "grid": {"n_modes": 8},
        "initial": {"u": {"preset": "random_band", "band": 4, "amplitude": 20.0}},
        "converge": {"resolutions": [8, 16], "n_ref": 32, "t_star": 0.1}
    });
    let p = write_config(tmp.path(), "c.json", &cfg);
    let out = tmp.path().join("out");
    let o = run_cmd("converge", &p, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let rep = read_json(&out.join("converge.json"));
    assert_eq!(rep["monotone"], true);
    for f in ["reference_n32.csv", "coarse_n8.csv", "coarse_n16.csv"] {
        assert!(out.join("trajectories").join(f).is_file(), "{f}");
    }
}

#[test]
fn lojasiewicz_absorb_and_lipschitz_run() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small();
    cfg["t_end"] = json!(40.0);
    cfg["scheme"] = json!({"dt": 1e-2, "stabilization": null});
    cfg["absorb"] = json!({"radii": [0.5, 1.0], "n_per_radius": 2});
    cfg["sample_every"] = json!(100);
    let p = write_config(tmp.path(), "c.json", &cfg);
    for (cmd, file) in [
        ("lojasiewicz", "lojasiewicz.json"),
        ("absorb", "absorb.json"),
        ("lipschitz", "lipschitz.json"),
    ] {
        let out = tmp.path().join(cmd);
        let o = run_cmd(cmd, &p, &out, &[]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stdout));
        assert_eq!(read_json(&out.join(file))["schema"], 1);
    }
    assert!(tmp.path().join("lipschitz/rho.csv").is_file());
    let cfg_echo = read_json(&tmp.path().join("absorb/config.json"));
    assert!(cfg_echo["scheme"]["stabilization"].is_null());
}

#[test]
fn outputs_are_deterministic_and_reproducible_from_echo() {
    let tmp = TempDir::new().unwrap();
    let p = write_config(tmp.path(), "c.json", &small());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run_cmd("simulate", &p, &a, &["--quiet"]).status.success());
    assert!(run_cmd("simulate", &p, &b, &["--quiet"]).status.success());
    for f in ["trajectory.csv", "summary.json", "final_u.mfld"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let echo = a.join("config.json");
    let c = tmp.path().join("c");
    assert!(run_cmd("simulate", &echo, &c, &["--quiet"]).status.success());
    assert_eq!(fs::read(a.join("trajectory.csv")).unwrap(), fs::read(c.join("trajectory.csv")).unwrap());

    let d = tmp.path().join("d");
    assert!(run_cmd("simulate", &p, &d, &["--quiet", "--seed", "7"]).status.success());
    assert_ne!(fs::read(a.join("trajectory.csv")).unwrap(), fs::read(d.join("trajectory.csv")).unwrap());
    assert_eq!(read_json(&d.join("config.json"))["seed"], 7);
}

#[test]
fn quiet_suppresses_stdout_and_file_presets_load() {
    let tmp = TempDir::new().unwrap();
    let p = write_config(tmp.path(), "c.json", &small());
    let a = tmp.path().join("a");
    let o = run_cmd("simulate", &p, &a, &["--quiet"]);
    assert!(o.status.success() && o.stdout.is_empty());

    // Restart from the snapshot written by the first run, via a relative path.
    fs::copy(a.join("final_u.mfld"), tmp.path().join("u0.mfld")).unwrap();
    let mut cfg = small();
    cfg["initial"] = json!({"u": {"preset": "file", "path": "u0.mfld"}, "u_t": {"preset": "zero"}});
    let p2 = write_config(tmp.path(), "c2.json", &cfg);
    let o = run_cmd("simulate", &p2, &tmp.path().join("b"), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!o.stdout.is_empty());
}
