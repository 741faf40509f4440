use std::fs;
use std::path::Path;
use std::process::Command;

use contact_inclusion::cli::{cmd_bch_scan, cmd_constants, cmd_homotopy, cmd_lift_loop, cmd_plan, cmd_simulate};
use contact_inclusion::config::RunConfig;
use contact_inclusion::io::{self, loop_to_string};
use contact_inclusion::{AdmissibleControl, Error};
use nalgebra::{dvector, DVector};
use tempfile::TempDir;

fn cfg(model: &str, dir: &TempDir) -> RunConfig {
    RunConfig {
        model: model.into(),
        out: dir.path().to_path_buf(),
        ..RunConfig::default()
    }
}

fn cinc(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_cinc"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("CINC_OUT")
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_loop(dir: &TempDir, name: &str, n: usize, f: impl Fn(f64) -> DVector<f64>) -> std::path::PathBuf {
    let pts: Vec<DVector<f64>> = (0..n).map(|i| f(i as f64 / n as f64)).collect();
    let path = dir.path().join(name);
    fs::write(&path, loop_to_string(&pts)).unwrap();
    path
}

#[test]
fn constants_table() {
    let dir = TempDir::new().unwrap();
    let torus = cmd_constants(&cfg("torus", &dir)).unwrap();
    assert!(torus.ok);
    assert!((torus.report["k"].as_f64().unwrap() - 2.1851).abs() < 1e-4);
    let heis = cmd_constants(&cfg("heisenberg", &dir)).unwrap();
    assert!((heis.report["k"].as_f64().unwrap() - 5.4772).abs() < 1e-4);
    assert!(dir.path().join("constants.json").exists());
    assert!(matches!(cmd_constants(&cfg("flat_invalid", &dir)), Err(Error::Step2Violation { .. })));

    let (code, _, err) = cinc(dir.path(), &["--model", "flat_invalid", "constants"]);
    assert_ne!(code, 0);
    assert!(err.contains("step-2"), "{err}");
    let (code, stdout, _) = cinc(dir.path(), &["constants"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("K              2.185096"), "{stdout}");
}

#[test]
fn plan_commands() {
    let dir = TempDir::new().unwrap();
    let c = cfg("torus", &dir);
    let x = dvector![0.1, 0.2, 0.3];
    let same = cmd_plan(&c, &x, &x).unwrap();
    assert!(same.ok);
    assert_eq!(same.report["zero_control"], true);

    let near = cmd_plan(&c, &x, &dvector![0.12, 0.19, 0.31]).unwrap();
    assert!(near.ok);
    assert!(near.report["residual"].as_f64().unwrap() <= 1e-7);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("plan.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["legs"].as_array().unwrap().len(), 1);
    assert!(json["legs"][0]["psi"].as_array().unwrap().len() == 3);
    let csv = fs::read_to_string(dir.path().join("plan_trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,x1,x2,x3,u0,u1,u2,omega_dot\n"));

    let (code, _, _) = cinc(dir.path(), &["plan", "--from", "0.1,0.2,0.3", "--to", "0.1,0.2,0.8"]);
    assert_ne!(code, 0);
    let (code, _, _) = cinc(dir.path(), &["plan", "--from", "0.1,0.2,0.3", "--to", "0.12,0.19,0.31"]);
    assert_eq!(code, 0);
}

#[test]
fn simulate_commands() {
    let dir = TempDir::new().unwrap();
    let c = cfg("torus", &dir);
    let x = dvector![0.4, 0.1, 0.7];
    let zero = dir.path().join("zero.txt");
    io::write_control(&zero, &AdmissibleControl::zero(2, 2.2)).unwrap();
    let out = cmd_simulate(&c, &zero, &x, Some(&x)).unwrap();
    assert!(out.ok);
    let csv = fs::read_to_string(dir.path().join("simulate_trajectory.csv")).unwrap();
    for row in csv.lines().skip(1) {
        let cols: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(&cols[1..4], &[0.4, 0.1, 0.7]);
    }

    let y = dvector![0.43, 0.12, 0.68];
    cmd_plan(&c, &x, &y).unwrap();
    let stored = dir.path().join("plan_control.txt");
    let replay = cmd_simulate(&c, &stored, &x, Some(&y)).unwrap();
    assert!(replay.ok);
    assert!(replay.report["target_error"].as_f64().unwrap() < 1e-6);

    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "piece 0 1\n").unwrap();
    assert!(matches!(cmd_simulate(&c, &bad, &x, None), Err(Error::Parse(_))));
    let (code, _, err) = cinc(dir.path(), &["simulate", bad.to_str().unwrap(), "--from", "0,0,0"]);
    assert_eq!(code, 2);
    assert!(err.contains("parse error"), "{err}");
}

#[test]
fn lift_loop_commands() {
    let dir = TempDir::new().unwrap();
    let c = cfg("torus", &dir);
    let constant = write_loop(&dir, "constant.csv", 3, |_| dvector![0.2, 0.3, 0.4]);
    let out = cmd_lift_loop(&c, &constant).unwrap();
    assert!(out.ok);
    assert_eq!(out.report["zero_control"], true);

    let winding = write_loop(&dir, "winding.csv", 32, |t| dvector![t, 0.25, 0.5]);
    let out = cmd_lift_loop(&c, &winding).unwrap();
    assert!(out.ok);
    assert_eq!(out.report["winding"], serde_json::json!([1, 0, 0]));
    assert_eq!(out.report["refinements"], 0);
    let stored = io::read_control(&dir.path().join("lift_loop_control.txt")).unwrap();
    stored.validate().unwrap();

    let coarse = write_loop(&dir, "coarse.csv", 3, |t| dvector![t, 0.25, 0.5]);
    let out = cmd_lift_loop(&c, &coarse).unwrap();
    assert!(out.ok);
    assert_eq!(out.report["refined"], true);
    assert!(out.report["samples_used"].as_u64().unwrap() > 3);
    assert_eq!(out.report["winding"], serde_json::json!([1, 0, 0]));
}

#[test]
fn homotopy_commands() {
    let dir = TempDir::new().unwrap();
    let c = cfg("torus", &dir);
    let constant = dir.path().join("constant.json");
    fs::write(&constant, r#"{"kind": "constant", "points": [[0.1, 0.2, 0.3], [0.7, 0.1, 0.9]], "s_steps": 4}"#).unwrap();
    let out = cmd_homotopy(&c, &constant).unwrap();
    assert!(out.ok);
    assert_eq!(out.report["max_closure"].as_f64().unwrap(), 0.0);
    assert!(dir.path().join("homotopy_nodes/node_0000.csv").exists());

    let moving = dir.path().join("moving.json");
    fs::write(
        &moving,
        r#"{"kind": "circle", "center": [0.5, 0.5, 0.0], "radius": 0.005, "axes": [1, 2], "count": 2, "s_steps": 4}"#,
    )
    .unwrap();
    let loose = dir.path().join("loose.toml");
    fs::write(&loose, format!("closure_tol = 1e-2\nout = {:?}\n", dir.path())).unwrap();
    let out = cmd_homotopy(&RunConfig::load(&loose).unwrap(), &moving).unwrap();
    assert!(out.ok);
    let tables = out.report["lp_tables"].as_array().unwrap();
    assert_eq!(tables.len(), 2);
    for t in tables {
        assert_eq!(t["decreasing"], true);
        let rows = t["rows"].as_array().unwrap();
        assert_eq!(rows.len(), 8);
    }

    let escaping = dir.path().join("escaping.json");
    fs::write(
        &escaping,
        r#"{"kind": "circle", "center": [0.5, 0.5, 0.5], "radius": 0.4, "axes": [0, 1], "count": 2, "s_steps": 4}"#,
    )
    .unwrap();
    match cmd_homotopy(&c, &escaping) {
        Err(Error::LiftFailure { offending }) => assert!(offending.iter().any(|o| o.1 == 0.5)),
        other => panic!("expected LiftFailure, got {other:?}"),
    }
    let (code, _, err) = cinc(dir.path(), &["homotopy", escaping.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("homotopy lift failed"), "{err}");
}

#[test]
fn bch_scan_commands() {
    let dir = TempDir::new().unwrap();
    let torus = cmd_bch_scan(&cfg("torus", &dir), None, 1e-3, 1e-1, 12).unwrap();
    assert!(torus.ok);
    assert!(torus.report["slope"].as_f64().unwrap() >= 2.5);
    assert_eq!(torus.report["zero_row"].as_f64().unwrap(), 0.0);
    let heis = cmd_bch_scan(&cfg("heisenberg", &dir), None, 1e-3, 1e-1, 12).unwrap();
    assert!(heis.ok);
    assert!(heis.report["max_residual"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn flags_and_config() {
    let dir = TempDir::new().unwrap();
    let (code, _, err) = cinc(dir.path(), &["--model", "sphere", "constants"]);
    assert_eq!(code, 2);
    assert!(err.contains("unknown model"), "{err}");
    let (code, _, _) = cinc(dir.path(), &["--p", "0.5", "constants"]);
    assert_eq!(code, 2);
    let (code, _, _) = cinc(dir.path(), &["frobnicate"]);
    assert_eq!(code, 2);

    let env_dir = TempDir::new().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_cinc"))
        .args(["--model", "heisenberg", "--seed", "3", "bch-scan", "--samples", "4"])
        .env("CINC_OUT", env_dir.path())
        .output()
        .unwrap();
    assert!(status.status.success());
    assert!(env_dir.path().join("bch_scan.json").exists());

    let a = cmd_constants(&RunConfig { seed: 7, ..cfg("torus", &dir) }).unwrap();
    let b = cmd_constants(&RunConfig { seed: 7, ..cfg("torus", &dir) }).unwrap();
    assert_eq!(a.report, b.report);
}
