//! End-to-end smoke tests of the `fds` binary: every subcommand, the resume
//! path, and the machine-readable error channel.

use std::path::Path;
use std::process::{Command, Output};

fn fds(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fds"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "exit {:?}, stderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn selftest_passes() {
    let v = stdout_json(&fds(&["selftest"]));
    let checks = v.as_array().expect("array of checks");
    assert!(!checks.is_empty());
    for c in checks {
        assert_eq!(c["pass"], true, "failed check: {c}");
    }
}

#[test]
fn sweep_runs_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = dir.path().join("sweep.toml");
    std::fs::write(
        &config,
        format!(
            "ns = [2]\ntemps = [2.0]\nchis = [16]\noutput_dir = \"{}\"\n",
            out_dir.display()
        ),
    )
    .unwrap();

    let first = stdout_json(&fds(&["sweep", "--config", config.to_str().unwrap()]));
    assert_eq!(first["new_rows"], 1);
    let csv = out_dir.join("results.csv");
    let text = std::fs::read_to_string(&csv).unwrap();
    let row = text.lines().nth(1).expect("one data row");
    let fields: Vec<&str> = row.split(',').collect();
    // M at beta = 0.5 matches the closed form to CTMRG accuracy
    let m: f64 = fields[6].parse().unwrap();
    assert!((m.abs() - 0.911319).abs() < 1e-3, "M = {m}");
    assert_eq!(fields[10], "true");

    let second = stdout_json(&fds(&["sweep", "--config", config.to_str().unwrap()]));
    assert_eq!(second["new_rows"], 0, "resume skips the completed point");
}

#[test]
fn extrapolate_reads_sweep_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("results.csv");
    let mut text =
        String::from("run_id,N,T,beta,chi,h,M,xi,f,iterations,converged,eps_final,config_hash\n");
    for &chi in &[72u32, 88, 104, 120] {
        let xi = 3.0 - 40.0 / chi as f64; // linear in 1/chi, intercept 3
        text.push_str(&format!(
            "r{chi},6,0.5,2,{chi},0,0.4,{xi},-1.9,100,true,1e-9,h{chi}\n"
        ));
    }
    std::fs::write(&csv, text).unwrap();
    let v = stdout_json(&fds(&[
        "extrapolate",
        "--csv",
        csv.to_str().unwrap(),
        "--n",
        "6",
        "--temp",
        "0.5",
        "--field",
        "xi",
    ]));
    let value = v["value"].as_f64().unwrap();
    assert!((value - 3.0).abs() < 1e-9, "extrapolated {value}");
}

#[test]
fn fit_xi_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("xi.csv");
    let mut text = String::new();
    for n in 6u32..=9 {
        for k in 1..=5 {
            let t = -0.05 * k as f64;
            let logxi = std::f64::consts::LN_2.ln() - 1.5 * (n as f64).ln()
                + std::f64::consts::FRAC_PI_4 / ((-t) / n as f64).sqrt();
            text.push_str(&format!("{n},{},{}\n", 0.9 * (1.0 + t), logxi.exp()));
        }
    }
    std::fs::write(&input, text).unwrap();
    let v = stdout_json(&fds(&[
        "fit-xi",
        "--input",
        input.to_str().unwrap(),
        "--t-l",
        "6=0.9",
        "--t-l",
        "7=0.9",
        "--t-l",
        "8=0.9",
        "--t-l",
        "9=0.9",
    ]));
    assert!((v["a"].as_f64().unwrap() - 1.5).abs() < 1e-6);
    assert!((v["b"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert!((v["eps0"].as_f64().unwrap() - std::f64::consts::LN_2).abs() < 1e-6);
}

fn synthetic_results_csv(path: &Path, kappa: f64) {
    let mut text =
        String::from("run_id,N,T,beta,chi,h,M,xi,f,iterations,converged,eps_final,config_hash\n");
    for &n in &[6u32, 7] {
        for &chi in &[40u32, 64, 96] {
            for k in 0..5 {
                let temp = 0.95 + 0.01 * k as f64;
                let xi = (1.0 + temp) * (chi as f64).powf(kappa);
                text.push_str(&format!(
                    "r{n}-{chi}-{k},{n},{temp},{},{chi},0,0.1,{xi},-1.5,50,true,1e-9,h{n}{chi}{k}\n",
                    1.0 / temp
                ));
            }
        }
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn collapse_kappa_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("results.csv");
    synthetic_results_csv(&csv, 1.247);
    let v = stdout_json(&fds(&[
        "collapse",
        "kappa",
        "--csv",
        csv.to_str().unwrap(),
        "--t-min",
        "0.9",
        "--t-max",
        "1.1",
    ]));
    let kappa = v["kappa"].as_f64().unwrap();
    assert!((kappa - 1.247).abs() < 1e-3, "kappa {kappa}");
    assert_eq!(v["points"], 30);
}

#[test]
fn collapse_ansatz_writes_point_cloud() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("o.csv");
    let points = dir.path().join("points.csv");
    let mut text = String::new();
    for &n in &[6u32, 8] {
        for k in 1..=4 {
            let t = -0.05 * k as f64;
            text.push_str(&format!("{n},{},{}\n", 0.9 * (1.0 + t), 0.5 - 0.02 * k as f64));
        }
    }
    std::fs::write(&input, text).unwrap();
    let v = stdout_json(&fds(&[
        "collapse",
        "ansatz-n",
        "--input",
        input.to_str().unwrap(),
        "--t-l",
        "6=0.9",
        "--t-l",
        "8=0.9",
        "--points-out",
        points.to_str().unwrap(),
    ]));
    assert!(v["score"].as_f64().unwrap() >= 0.0);
    let cloud = std::fs::read_to_string(&points).unwrap();
    assert!(cloud.starts_with("x,y,N,chi,T"));
    assert_eq!(cloud.lines().count(), 9); // header + 8 points
}

#[test]
fn rg_trajectory_csv() {
    let out = fds(&["rg", "--u0", "0.05", "--d0", "0.02", "--l-max", "2", "--dl", "0.1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "l,z1,z2,z1_analytic");
    assert_eq!(lines.count(), 21); // l = 0.0 ..= 2.0 in steps of 0.1
}

#[test]
fn lgt_verify_small_torus() {
    let v = stdout_json(&fds(&["lgt-verify", "--n", "3", "--beta", "0.7", "--lattice", "2x2"]));
    assert_eq!(v["pass"], true, "report: {v}");
    assert!(v["min_eigenvalue"].as_f64().unwrap() >= -1e-12);
}

#[test]
fn oracle_ising_closed_form() {
    let v = stdout_json(&fds(&["oracle", "ising", "--beta", "0.5"]));
    assert!((v["value"].as_f64().unwrap() - 0.911319).abs() < 1e-6);
}

#[test]
fn oracle_z_matches_strip_direction() {
    let v = stdout_json(&fds(&[
        "oracle", "z", "--n", "2", "--beta", "0.4", "--lx", "2", "--ly", "2",
    ]));
    assert!(v["value"].as_f64().unwrap().is_finite());
}

#[test]
fn errors_are_machine_readable() {
    let out = fds(&["extrapolate", "--csv", "/nonexistent.csv", "--n", "6", "--temp", "0.5", "--field", "xi"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    let v: serde_json::Value = serde_json::from_str(stderr.trim()).expect("stderr is JSON");
    assert!(v["error"].is_string());
}
