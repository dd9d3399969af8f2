use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;
use volterra::paths::read_samples_csv;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_volterra"));
    c.env_remove("VOLTERRA_SEED");
    c
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_is_seeded() {
    let dir = TempDir::new().unwrap();
    let (a, b, c) = (p(&dir, "a.csv"), p(&dir, "b.csv"), p(&dir, "c.csv"));
    let args = ["simulate", "--kind", "fbm", "--h", "0.7", "--dim", "2", "--grid-n", "64", "--samples", "3"];
    for (out, seed) in [(&a, "9"), (&b, "9"), (&c, "10")] {
        let mut v = args.to_vec();
        v.extend(["--seed", seed, "--out", s(out)]);
        assert_eq!(run(&v).0, 0);
    }
    let ra = fs::read_to_string(&a).unwrap();
    assert_eq!(ra, fs::read_to_string(&b).unwrap());
    assert_ne!(ra, fs::read_to_string(&c).unwrap());
    let paths = read_samples_csv(ra.as_bytes()).unwrap();
    assert_eq!(paths.len(), 3);
    assert_eq!(paths[0].grid().n(), 64);
    assert_eq!(paths[0].dim(), 2);
}

#[test]
fn seed_from_environment_and_flag_precedence() {
    let dir = TempDir::new().unwrap();
    let (env, flag, other) = (p(&dir, "env.csv"), p(&dir, "flag.csv"), p(&dir, "other.csv"));
    let ok = bin().env("VOLTERRA_SEED", "42").args(["simulate", "--grid-n", "32", "--out", s(&env)]).status().unwrap();
    assert!(ok.success());
    assert_eq!(run(&["simulate", "--grid-n", "32", "--seed", "42", "--out", s(&flag)]).0, 0);
    let ok = bin()
        .env("VOLTERRA_SEED", "1")
        .args(["simulate", "--grid-n", "32", "--seed", "42", "--out", s(&other)])
        .status()
        .unwrap();
    assert!(ok.success());
    let flag_text = fs::read_to_string(&flag).unwrap();
    assert_eq!(fs::read_to_string(&env).unwrap(), flag_text);
    assert_eq!(fs::read_to_string(&other).unwrap(), flag_text);
}

#[test]
fn integrate1d_identity_kernel_telescopes() {
    let dir = TempDir::new().unwrap();
    let (w, out, rep) = (p(&dir, "w.csv"), p(&dir, "x.csv"), p(&dir, "r.json"));
    assert_eq!(run(&["simulate", "--grid-n", "32", "--seed", "3", "--out", s(&w)]).0, 0);
    let args = ["integrate1d", "--kernel", "identity", "--driver", s(&w), "--gamma", "0.5", "--out", s(&out), "--report", s(&rep)];
    assert_eq!(run(&args).0, 0);
    let path = &read_samples_csv(fs::File::open(&w).unwrap()).unwrap()[0];
    let mut rd = csv::Reader::from_path(&out).unwrap();
    assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), ["tau", "t", "c_1"]);
    let mut rows = 0;
    for rec in rd.records() {
        let rec = rec.unwrap();
        let t: f64 = rec[1].parse().unwrap();
        let v: f64 = rec[2].parse().unwrap();
        let k = path.grid().index_of(t).unwrap();
        assert!((v - path.scalar(k)).abs() < 1e-12);
        rows += 1;
    }
    assert_eq!(rows, 33 * 34 / 2);
    let r = json(&rep);
    assert_eq!(r["converged"], Value::Bool(true));
    assert!(r["refinement"]["levels"].as_array().unwrap().len() >= 3);
}

#[test]
fn integrate1d_reports_non_convergence() {
    let dir = TempDir::new().unwrap();
    let (w, out) = (p(&dir, "w.csv"), p(&dir, "x.csv"));
    assert_eq!(run(&["simulate", "--grid-n", "64", "--seed", "1", "--out", s(&w)]).0, 0);
    let args = ["integrate1d", "--kernel", "frac:eta=0.2", "--driver", s(&w), "--gamma", "0.5", "--tol", "1e-12", "--out", s(&out)];
    assert_eq!(run(&args).0, 2);
}

#[test]
fn converge_smooth_linear() {
    let dir = TempDir::new().unwrap();
    let rep = p(&dir, "report.json");
    let (code, _, err) = run(&["converge", "--kernel", "frac:eta=0.25", "--driver-kind", "smooth-linear", "--report", s(&rep)]);
    assert_eq!(code, 0, "{err}");
    let r = json(&rep);
    let rate = r["fitted_rate"].as_f64().unwrap();
    assert!(rate > 0.5 && rate < 1.0, "{rate}");
    assert!((r["target_rate"].as_f64().unwrap() - 0.01).abs() < 1e-12);
}

#[test]
fn converge_constant_driver_reports_infinite_rate() {
    let dir = TempDir::new().unwrap();
    let (w, rep) = (p(&dir, "w.csv"), p(&dir, "r.json"));
    let rows: String = (0..=64).map(|k| format!("{},1.5\n", k as f64 / 64.0)).collect();
    fs::write(&w, format!("t,c_1\n{rows}")).unwrap();
    let args = ["converge", "--kernel", "frac:eta=0.25", "--driver", s(&w), "--gamma", "1", "--max-level", "6", "--report", s(&rep)];
    assert_eq!(run(&args).0, 0);
    assert_eq!(json(&rep)["fitted_rate"], Value::String("inf".into()));
}

#[test]
fn cov2d_and_fracou_cov_reduce_to_wiener() {
    let dir = TempDir::new().unwrap();
    let q0 = p(&dir, "q0.json");
    fs::write(&q0, r#"{"dim":2,"entries":[1.0,0.3,0.3,0.5]}"#).unwrap();
    let (a, b) = (p(&dir, "a.json"), p(&dir, "b.json"));
    let common = ["--q0", s(&q0), "--grid-n", "8", "--tol", "1e-12"];
    let mut v = vec!["cov2d", "--kernel", "identity", "--cov", "wiener", "--out", s(&a)];
    v.extend(common);
    assert_eq!(run(&v).0, 0);
    let mut v = vec!["fracou-cov", "--alpha", "1", "--cov", "wiener", "--out", s(&b)];
    v.extend(common);
    assert_eq!(run(&v).0, 0);
    for f in [&a, &b] {
        let recs = json(f);
        let recs = recs.as_array().unwrap();
        assert_eq!(recs.len(), 81);
        for r in recs {
            let m = r["t"].as_f64().unwrap().min(r["t'"].as_f64().unwrap());
            let e: Vec<f64> = r["operator"]["entries"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
            for (x, q) in e.iter().zip([1.0, 0.3, 0.3, 0.5]) {
                assert!((x - m * q).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn fracou_zero_drift_adds_initial_value() {
    let dir = TempDir::new().unwrap();
    let (w, y0, out) = (p(&dir, "w.csv"), p(&dir, "y0.json"), p(&dir, "y.csv"));
    assert_eq!(run(&["simulate", "--grid-n", "32", "--seed", "4", "--out", s(&w)]).0, 0);
    fs::write(&y0, "[2.0]").unwrap();
    let args = ["fracou", "--alpha", "1", "--y0", s(&y0), "--driver", s(&w), "--gamma", "0.5", "--tol", "1e-12", "--out", s(&out)];
    assert_eq!(run(&args).0, 0);
    let w = &read_samples_csv(fs::File::open(&w).unwrap()).unwrap()[0];
    let y = &read_samples_csv(fs::File::open(&out).unwrap()).unwrap()[0];
    for k in 0..=32 {
        assert!((y.scalar(k) - 2.0 - w.scalar(k)).abs() < 1e-12);
    }
}

#[test]
fn roughvol_moments() {
    let dir = TempDir::new().unwrap();
    let files = [("l", "[1.0, 2.0]"), ("z", "[0.6, 0.8]"), ("qb", r#"{"dim":2,"entries":[1,0,0,1]}"#), ("qy", r#"{"dim":2,"entries":[1.0,0.2,0.2,0.4]}"#)];
    for (name, body) in files {
        fs::write(p(&dir, name), body).unwrap();
    }
    let out = p(&dir, "out.json");
    let (l, z, qb, qy) = (p(&dir, "l"), p(&dir, "z"), p(&dir, "qb"), p(&dir, "qy"));
    let args = ["roughvol", "--l", s(&l), "--z", s(&z), "--qb", s(&qb), "--qy", s(&qy), "--k", "2", "--out", s(&out)];
    assert_eq!(run(&args).0, 0);
    let r = json(&out);
    let v = 1.0 + 2.0 * 2.0 * 0.2 + 4.0 * 0.4;
    assert!((r["v"].as_f64().unwrap() - v).abs() < 1e-12);
    assert!((r["moment"].as_f64().unwrap() - 3.0 * v * v).abs() < 1e-12);
}

#[test]
fn rough_gate_and_seminorms() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "g.json");
    assert_eq!(run(&["rough-gate", "--cov", "fbm:h=0.75", "--grid-n", "32", "--out", s(&out)]).0, 0);
    assert_eq!(json(&out)["admissible"], Value::Bool(true));
    assert_eq!(run(&["rough-gate", "--cov", "wiener", "--grid-n", "32", "--out", s(&out)]).0, 0);
    assert_eq!(json(&out)["admissible"], Value::Bool(false));
    let (code, stdout, _) = run(&["seminorms", "--kernel", "frac:eta=0.3", "--grid-n", "32"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert!((v["kernel"]["k1"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn mc_verify_exit_code() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "mc.json");
    let args = ["mc-verify", "--kernel", "frac:eta=0.2", "--driver-kind", "fbm", "--h", "0.6", "--grid-n", "16", "--samples", "2000", "--seed", "5", "--out", s(&out)];
    let (code, _, err) = run(&args);
    let r = json(&out);
    assert_eq!(code, if r["pass"].as_bool().unwrap() { 0 } else { 1 }, "{err}");
    assert!(r["checks"].as_array().unwrap().len() > 20);
}

#[test]
fn errors_and_usage() {
    assert_eq!(run(&["frobnicate"]).0, 64);
    assert_eq!(run(&["cov2d"]).0, 64);
    assert_eq!(run(&["--help"]).0, 0);
    let (code, _, err) = run(&["cov2d", "--kernel", "nope"]);
    assert_eq!(code, 1);
    assert!(err.contains("unknown kernel"), "{err}");
    let (code, _, err) = run(&["cov2d", "--kernel", "frac:eta=0.6", "--cov", "wiener"]);
    assert_eq!(code, 1);
    assert!(err.to_lowercase().contains("admissib"), "{err}");
    assert_eq!(run(&["integrate1d", "--kernel", "identity", "--driver", "/nonexistent.csv", "--gamma", "0.5"]).0, 1);
}
