use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn homlinf(args: &[&str], config: Option<&str>, dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_homlinf"));
    cmd.args(args).arg("--out").arg(dir.join("out")).arg("--threads").arg("2");
    if let Some(text) = config {
        let path = dir.join("config.toml");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out").join(name)).unwrap()).unwrap()
}

#[test]
fn laminate_cell_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = homlinf(&["cell"], Some("[cell]\nm = 32\n"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = json(dir.path(), "effective_tensor.json");
    let a_h = t["a_h"].as_f64().unwrap();
    let a_m = t["a_m"].as_f64().unwrap();
    assert!((a_h - t["closed_form"]["a_h"].as_f64().unwrap()).abs() < 1e-9);
    assert!((a_m - t["closed_form"]["a_m"].as_f64().unwrap()).abs() < 1e-12);
    let manifest = json(dir.path(), "manifest.json");
    assert_eq!(manifest["subcommand"], "cell");
    assert!(manifest["wall_time_s"].as_f64().is_some());
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    let record = json(dir.path(), "run_record.json");
    assert_eq!(record["solves"].as_array().unwrap().len(), 2);
}

#[test]
fn single_phase_cell_has_identity_corrector() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[microstructure]\nvariant = \"homogeneous\"\nphase = 1\nphases = [{a11 = 2.0, a12 = 0.5, a22 = 1.0}]\n[cell]\nm = 8\n";
    let out = homlinf(&["cell"], Some(cfg), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = json(dir.path(), "effective_tensor.json");
    assert_eq!(t["a11"].as_f64().unwrap(), 2.0);
    assert_eq!(t["a12"].as_f64().unwrap(), 0.5);
    assert_eq!(t["a22"].as_f64().unwrap(), 1.0);
    let csv = fs::read_to_string(dir.path().join("out/corrector_matrix.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let p: Vec<f64> = line.split(',').skip(2).map(|v| v.parse().unwrap()).collect();
        assert_eq!(p, vec![1.0, 0.0, 0.0, 1.0]);
    }
}

#[test]
fn malformed_config_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = homlinf(&["cell"], Some("[solver]\nrel_tol = 1e-8\nmax_iter = \"x\"\n"), dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    let out = homlinf(&["cell"], Some("[microstructure]\ntheta = 1.5\n"), dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = homlinf(&["cell"], Some("[solver]\nmax_iter = 1\n[cell]\nm = 16\n"), dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unresolved_schedule_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = homlinf(&["converge"], Some("[converge]\nelements_per_period = 8\n"), dir.path());
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn zero_level_design_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let out = homlinf(&["design"], Some("[design]\nM = 0.0\ngrid_m = 8\ncell_m = 8\n"), dir.path());
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn laminate_converge_summary_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = homlinf(&["converge"], None, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(dir.path(), "convergence_summary.json");
    assert!(s["summary"]["gap_at_finest"].as_f64().unwrap() <= 0.05);
    assert_eq!(s["summary"]["pass"], true);
    let csv = fs::read_to_string(dir.path().join("out/convergence.csv")).unwrap();
    assert!(csv.starts_with("n,m,phase,linf,robust_sup,modulation_sup,gap,energy,energy_gap,corr_l2,flux_err_1,flux_err_2\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 2);
}

#[test]
fn homogeneous_converge_gaps_vanish() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[microstructure]\nvariant = \"homogeneous\"\nphases = [{a11 = 1.0, a22 = 1.0}]\n[converge]\nschedule = [1, 2]\n";
    let out = homlinf(&["converge"], Some(cfg), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(dir.path(), "convergence_summary.json");
    assert!(s["summary"]["gap_at_finest"].as_f64().unwrap() < 1e-8);
    assert!(s["summary"]["energy_gap_at_finest"].as_f64().unwrap() < 1e-8);
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[cell]\nm = 16\n[design]\ngrid_m = 16\ncell_m = 16\n";
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        let mut files = Vec::new();
        for sub in ["cell", "design"] {
            let out = homlinf(&[sub, "--deterministic"], Some(cfg), dir.path());
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            let mut names: Vec<_> = fs::read_dir(dir.path().join("out")).unwrap().map(|e| e.unwrap().path()).collect();
            names.sort();
            for p in names {
                files.push((p.clone(), fs::read(&p).unwrap()));
            }
        }
        snapshots.push(files);
        fs::remove_dir_all(dir.path().join("out")).unwrap();
    }
    assert_eq!(snapshots[0], snapshots[1]);
    let manifest = snapshots[0].iter().find(|(p, _)| p.ends_with("manifest.json")).unwrap();
    let m: Value = serde_json::from_slice(&manifest.1).unwrap();
    assert!(m["wall_time_s"].is_null());
}

#[test]
fn design_writes_result_realization_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[design]\ngrid_m = 16\ncell_m = 16\ngamma = [0.4, 1.0]\n";
    let out = homlinf(&["design"], Some(cfg), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let d = json(dir.path(), "design_result.json");
    assert_eq!(d["result"]["feasible"], true);
    let theta: Vec<f64> = d["result"]["design"]["theta"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(theta.iter().sum::<f64>() * 0.25 <= 0.4 + 1e-12);
    // the realized spec is a usable config
    let realized = fs::read_to_string(dir.path().join("out/realized_spec.toml")).unwrap();
    fs::write(dir.path().join("realized.toml"), &realized).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_homlinf"))
        .args(["cell", "--out"])
        .arg(dir.path().join("cell"))
        .arg("--config")
        .arg(dir.path().join("realized.toml"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "graded cells need a point");
    let out = homlinf(&["report"], None, dir.path());
    assert!(out.status.success());
    let md = fs::read_to_string(dir.path().join("out/report.md")).unwrap();
    assert!(md.contains("## Design"));
    assert!(dir.path().join("out/manifest.json").exists());
    assert!(dir.path().join("out/report_manifest.json").exists());
}

#[test]
fn print_defaults_round_trips() {
    let out = Command::new(env!("CARGO_BIN_EXE_homlinf")).arg("print-defaults").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("[converge]") && text.contains("[design]") && text.contains("[solver]"));
    let dir = tempfile::tempdir().unwrap();
    let out = homlinf(&["cell"], Some(&text.replace("m = 64", "m = 8")), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
