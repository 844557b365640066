use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freedenoise")).args(args).output().expect("spawn freedenoise")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn fixture(dir: &Path, name: &str, json: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p.display().to_string()
}

fn out(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
}

fn error_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|_| panic!("stderr is not JSON: {}", String::from_utf8_lossy(&o.stderr)))
}

const TWO_POINT: &str = r#"{"domain":"real","atoms":[{"loc":0,"mass":0.5},{"loc":2,"mass":0.5}]}"#;
const PLUS_MINUS: &str = r#"{"domain":"real","atoms":[{"loc":-1,"mass":0.5},{"loc":1,"mass":0.5}]}"#;

/// Linear interpolation in a sorted (t, y) table.
fn interp(t: &[f64], y: &[f64], x: f64) -> f64 {
    let k = t.partition_point(|&v| v < x).clamp(1, t.len() - 1);
    let a = (x - t[k - 1]) / (t[k] - t[k - 1]);
    y[k - 1] + a * (y[k] - y[k - 1])
}

#[test]
fn arcsine_density_matches_golden() {
    let d = tempfile::tempdir().unwrap();
    let ab = fixture(d.path(), "ab.json", TWO_POINT);
    let o = out(d.path(), "o");
    ok(&["convolve", "--op", "add", "--mu", &ab, "--nu", &ab, "--out", o.to_str().unwrap()]);
    let dens = rows(&o.join("density.csv"));
    let t: Vec<f64> = dens.iter().map(|r| r[0].parse().unwrap()).collect();
    let y: Vec<f64> = dens.iter().map(|r| r[1].parse().unwrap()).collect();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/arcsine_density.csv");
    let g = rows(&golden);
    assert!(g.len() > 50);
    for r in g {
        let (x, want): (f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap());
        let got = interp(&t, &y, x);
        assert!((got - want).abs() < 5e-3, "t={x}: {got} vs {want}");
    }
    assert!(rows(&o.join("atoms.csv")).is_empty());
    let m: Value = serde_json::from_slice(&std::fs::read(o.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"]["name"], "convolve");
    assert_eq!(m["inputs"][0]["content"], TWO_POINT);
    assert!(m["diagnostics"]["defect"].as_f64().unwrap().abs() < 1e-6);
}

#[test]
fn multiplicative_zero_atom_takes_the_max() {
    let d = tempfile::tempdir().unwrap();
    let mu = fixture(d.path(), "mu.json", r#"{"domain":"nonneg","atoms":[{"loc":1,"mass":0.5},{"loc":3,"mass":0.5}]}"#);
    let nu = fixture(d.path(), "nu.json", r#"{"domain":"nonneg","atoms":[{"loc":0,"mass":0.3},{"loc":2,"mass":0.7}]}"#);
    let o = out(d.path(), "o");
    ok(&["convolve", "--op", "mult", "--mu", &mu, "--nu", &nu, "--out", o.to_str().unwrap()]);
    let atoms = rows(&o.join("atoms.csv"));
    let zero = atoms.iter().find(|r| r[0] == "0.0").expect("atom at 0");
    assert_eq!(zero[3].parse::<f64>().unwrap(), 0.3);
}

#[test]
fn malformed_json_exits_2() {
    let d = tempfile::tempdir().unwrap();
    let bad = fixture(d.path(), "bad.json", r#"{"domain": "real", atoms"#);
    let ab = fixture(d.path(), "ab.json", TWO_POINT);
    let o = run(&["convolve", "--op", "add", "--mu", &bad, "--nu", &ab, "--out", out(d.path(), "o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = error_json(&o);
    assert_eq!(e["error"], "InvalidInput");
    assert_eq!(e["exit_code"], 2);
    // domain violations are input errors too
    let neg = fixture(d.path(), "neg.json", r#"{"domain":"nonneg","atoms":[{"loc":-1,"mass":1}]}"#);
    let o = run(&["convolve", "--op", "mult", "--mu", &neg, "--nu", &ab, "--out", out(d.path(), "p").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "DomainViolation");
}

#[test]
fn argument_errors_exit_2() {
    let o = run(&["convolve", "--op", "sideways"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "ArgumentError");
    assert!(run(&["--help"]).status.success());
    let d = tempfile::tempdir().unwrap();
    let o = run(&["denoise", "--kind", "tweedie-add", "--out", d.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_json(&o)["message"].as_str().unwrap().contains("--target"));
}

#[test]
fn numerical_failure_exits_3() {
    // atoms between grid nodes cannot be recovered: mass defect
    let d = tempfile::tempdir().unwrap();
    let m = fixture(d.path(), "c.json", r#"{"domain":"circle","atoms":[{"loc":0.4,"mass":0.5},{"loc":2.0,"mass":0.5}]}"#);
    let o = run(&["transform", "--measure", &m, "--invert", "--out", out(d.path(), "o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_json(&o)["error"], "MassDefect");
}

#[test]
fn ledoit_peche_has_zero_row_below_one() {
    let d = tempfile::tempdir().unwrap();
    let mp = fixture(d.path(), "mp.json", r#"{"builtin":{"name":"free_poisson","params":{"lambda":0.5}}}"#);
    let o = out(d.path(), "o");
    ok(&["denoise", "--kind", "ledoit-peche", "--lambda", "0.5", "--target", &mp, "--out", o.to_str().unwrap()]);
    let curve = rows(&o.join("curve.csv"));
    let zero = curve.iter().find(|r| r[2] == "zero").expect("t = 0 row");
    assert_eq!(zero[0], "0.0");
    // the signal is the identity: h ≡ 1
    for r in &curve {
        assert!((r[1].parse::<f64>().unwrap() - 1.0).abs() < 2e-3, "{r:?}");
    }
    let o2 = out(d.path(), "o2");
    ok(&["denoise", "--kind", "ledoit-peche", "--lambda", "2", "--target", &mp, "--out", o2.to_str().unwrap()]);
    assert!(rows(&o2.join("curve.csv")).iter().all(|r| r[2] != "zero"));
}

#[test]
fn tweedie_shrinks_semicircle() {
    let d = tempfile::tempdir().unwrap();
    let sc = fixture(d.path(), "sc.json", r#"{"builtin":{"name":"semicircle","params":{"var":2}}}"#);
    let o = out(d.path(), "o");
    ok(&["denoise", "--kind", "tweedie-add", "--target", &sc, "--sigma2", "1", "--out", o.to_str().unwrap()]);
    for r in rows(&o.join("curve.csv")) {
        let (t, h): (f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap());
        assert!((h - t / 2.0).abs() < 1e-3);
    }
}

#[test]
fn simulate_is_deterministic_and_replays() {
    let d = tempfile::tempdir().unwrap();
    let pm = fixture(d.path(), "pm.json", PLUS_MINUS);
    let (a, b) = (out(d.path(), "a"), out(d.path(), "b"));
    let args = |o: &Path| {
        vec!["simulate", "--model", "goe", "--signal", &pm, "--n", "120", "--trials", "10", "--seed", "7", "--out"]
            .into_iter()
            .map(String::from)
            .chain([o.display().to_string()])
            .collect::<Vec<_>>()
    };
    let run_in = |o: &Path| ok(&args(o).iter().map(String::as_str).collect::<Vec<_>>());
    run_in(&a);
    run_in(&b);
    let files = ["analytic.csv", "losses.csv", "moments.csv", "curve.csv", "deviation.csv", "summary.json", "manifest.json"];
    for f in files {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let losses = rows(&a.join("losses.csv"));
    assert_eq!(losses.len(), 10 * 4);

    // the inputs live in the manifest: replay survives their deletion
    std::fs::remove_file(&pm).unwrap();
    let r = out(d.path(), "r");
    let o = run(&["replay", a.join("manifest.json").to_str().unwrap(), "--out", r.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["identical"], true);
    for f in files {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(r.join(f)).unwrap(), "{f}");
    }

    // a doctored manifest no longer reproduces
    let text = std::fs::read_to_string(a.join("manifest.json")).unwrap().replace("\"seed\": 7", "\"seed\": 8");
    std::fs::write(a.join("manifest.json"), text).unwrap();
    let o = run(&["replay", a.join("manifest.json").to_str().unwrap(), "--out", out(d.path(), "x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_json(&o)["error"], "ReplayMismatch");
}

#[test]
fn simulate_compares_against_a_curve_file() {
    let d = tempfile::tempdir().unwrap();
    let sc = fixture(d.path(), "sc.json", r#"{"builtin":{"name":"semicircle","params":{"var":1}}}"#);
    let c = out(d.path(), "curve");
    ok(&["denoise", "--kind", "additive", "--mu", &sc, "--nu", &sc, "--out", c.to_str().unwrap()]);
    let o = out(d.path(), "sim");
    let curve = c.join("curve.csv");
    ok(&[
        "simulate", "--model", "goe", "--signal", &sc, "--n", "200", "--trials", "10", "--seed", "1", "--compare",
        curve.to_str().unwrap(), "--out", o.to_str().unwrap(),
    ]);
    assert!(!o.join("analytic.csv").exists());
    let summary: Value = serde_json::from_slice(&std::fs::read(o.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["curve"]["compared"], summary["curve"]["passed"]);
    let m: Value = serde_json::from_slice(&std::fs::read(o.join("manifest.json")).unwrap()).unwrap();
    assert!(m["inputs"].as_array().unwrap().iter().any(|i| i["role"] == "compare"));
}

#[test]
fn thread_cap_must_be_positive() {
    let o = Command::new(env!("CARGO_BIN_EXE_freedenoise")).args(["--version"]).env("FREEDENOISE_THREADS", "0").output().unwrap();
    // --version is answered before the environment is read
    assert!(o.status.success());
    let d = tempfile::tempdir().unwrap();
    let ab = fixture(d.path(), "ab.json", TWO_POINT);
    let o = Command::new(env!("CARGO_BIN_EXE_freedenoise"))
        .args(["convolve", "--op", "add", "--mu", &ab, "--nu", &ab, "--out", d.path().join("o").to_str().unwrap()])
        .env("FREEDENOISE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
