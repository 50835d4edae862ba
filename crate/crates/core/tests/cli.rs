use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_alexbary");
const FIXTURES: [&str; 7] = ["euclidean", "sphere", "hyperbolic", "cone", "product", "planar_rate", "dirac"];

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("ALEXBARY_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn euclidean_pair_solves_to_midpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"space":{"family":"euclidean","dim":2},
            "measure":{"kind":"inline","support":[[0.0,0.0],[2.0,4.0]],"weights":[0.5,0.5]}}"#,
    );
    let o = run(&["solve", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let b = read_json(&dir.path().join("barycenter.json"));
    let p: Vec<f64> = serde_json::from_value(b["point"].clone()).unwrap();
    assert_eq!(p, vec![1.0, 2.0]);
    assert_eq!(b["converged"], Value::Bool(true));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("iter,residual,frechet_value,coord_0,coord_1\n"));
}

#[test]
fn single_iteration_on_sphere_does_not_converge() {
    let dir = tempfile::tempdir().unwrap();
    let text = alexbary::cli::fixture("sphere").unwrap();
    let mut cfg: Value = serde_json::from_str(text).unwrap();
    cfg["solve"] = serde_json::json!({"max_iter": 1});
    let path = write_config(dir.path(), &cfg.to_string());
    let o = run(&["solve", "--config", &path], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2, "{trace}");
    let b = read_json(&dir.path().join("barycenter.json"));
    assert_eq!(b["converged"], Value::Bool(false));
}

#[test]
fn cone_grid_trace_visits_the_apex() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--fixture", "cone"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let apex_rows = trace
        .lines()
        .skip(1)
        .filter(|l| {
            let c: Vec<f64> = l.split(',').skip(3).map(|x| x.parse().unwrap()).collect();
            c == [0.0, 0.0]
        })
        .count();
    assert!(apex_rows >= 1, "{trace}");
    let b = read_json(&dir.path().join("barycenter.json"));
    let p: Vec<f64> = serde_json::from_value(b["point"].clone()).unwrap();
    assert!(p[0] > 0.0, "barycenter {p:?} sits at the apex");
}

#[test]
fn all_checks_pass_on_sphere_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--fixture", "sphere"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("check_name,passed,margin,tolerance,seed"));
    let names: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names.len(), 11);
    for n in names {
        let r = read_json(&dir.path().join(format!("{n}.json")));
        assert_eq!(r["passed"], Value::Bool(true), "{n}");
    }
}

#[test]
fn lang_schroeder_passes_on_every_fixture() {
    for f in FIXTURES {
        let dir = tempfile::tempdir().unwrap();
        let o = run(&["verify", "--fixture", f, "--check", "lang-schroeder"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{f}: {}", stderr(&o));
        let r = read_json(&dir.path().join("lang-schroeder.json"));
        assert!(r["margin"].as_f64().unwrap() >= -1e-9, "{f}");
    }
}

#[test]
fn unnormalised_weights_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"space":{"family":"euclidean","dim":1},
            "measure":{"kind":"inline","support":[[0.0],[1.0]],"weights":[0.5,0.6]}}"#,
    );
    for cmd in ["solve", "verify", "rate"] {
        let o = run(&[cmd, "--config", &cfg], dir.path());
        assert_eq!(o.status.code(), Some(2), "{cmd}");
        assert!(stderr(&o).contains("weights"), "{}", stderr(&o));
    }
}

#[test]
fn malformed_json_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{\"space\": {\"family\": \"euclidean\", \"dim\": 2},\n \"measure\": [1, 2");
    let o = run(&["solve", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    let cfg = write_config(
        dir.path(),
        r#"{"space":{"family":"euclidean","dim":1},"measure":{"kind":"inline","support":[[0.0]],"weights":[1.0]},"seeds":3}"#,
    );
    let o = run(&["solve", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seeds"), "{}", stderr(&o));
}

#[test]
fn unknown_check_lists_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--fixture", "euclidean", "--check", "curvature"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for n in ["lang-schroeder", "first-order", "ustat-rate", "opposite", "comparison"] {
        assert!(err.contains(n), "{err}");
    }

    let cfg = write_config(
        dir.path(),
        r#"{"space":{"family":"euclidean","dim":1},"measure":{"kind":"inline","support":[[0.0]],"weights":[1.0]},
            "checks":[{"name":"curvature"}]}"#,
    );
    let o = run(&["verify", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lang-schroeder"), "{}", stderr(&o));
}

#[test]
fn rate_on_planar_fixture_is_in_band() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["rate", "--fixture", "planar_rate"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("rate.csv")).unwrap();
    let rows: Vec<(usize, f64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![10, 20, 40, 80, 160, 320, 640, 1280]);
    assert!(rows.windows(2).all(|w| w[1].1 < w[0].1), "{csv}");
    let j = read_json(&dir.path().join("rate.json"));
    let k = j["slope"].as_f64().unwrap();
    assert!((-1.3..=-0.7).contains(&k), "{k}");
    assert!(j["half_width"].as_f64().unwrap() > 0.0);
}

#[test]
fn rate_on_dirac_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["rate", "--fixture", "dirac"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("degenerate"));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for args in [
        &["verify", "--fixture", "cone"][..],
        &["solve", "--fixture", "hyperbolic"][..],
        &["rate", "--fixture", "planar_rate"][..],
    ] {
        assert_eq!(run(args, a.path()).status.code(), Some(0));
        assert_eq!(run(args, b.path()).status.code(), Some(0));
    }
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 15, "{names:?}");
    for n in names {
        assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn output_dir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from_env");
    let o = Command::new(BIN)
        .args(["solve", "--fixture", "euclidean"])
        .env("ALEXBARY_OUT_DIR", &target)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(target.join("barycenter.json").exists());

    let cfg_dir = dir.path().join("from_config");
    let text = alexbary::cli::fixture("euclidean").unwrap();
    let mut cfg: Value = serde_json::from_str(text).unwrap();
    cfg["output_dir"] = Value::String(cfg_dir.to_str().unwrap().into());
    let path = write_config(dir.path(), &cfg.to_string());
    let o = Command::new(BIN)
        .args(["solve", "--config", &path])
        .env("ALEXBARY_OUT_DIR", &target)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(cfg_dir.join("barycenter.json").exists());
}
