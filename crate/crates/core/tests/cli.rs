//! End-to-end checks of the `levelset` binary: exit codes, artifacts, config precedence.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn levelset(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levelset"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("LEVELSET_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Writes setup-1a (2-d) and adversarial (1-d) samples into `dir`.
fn sample_data(dir: &Path) -> (PathBuf, PathBuf) {
    let o = levelset(
        &["simulate", "--setup", "1a", "--c", "0", "--reps", "1", "--n", "400", "--n-boot", "1000", "--export-data"],
        dir,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = levelset(&["simulate", "--setup", "adversarial", "--reps", "1", "--n", "600", "--export-data"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
    (dir.join("data_1a.csv"), dir.join("data_adversarial.csv"))
}

#[test]
fn missing_column_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "y,x1,x2\n1,0.1,0.2\n0,0.3,0.4\n").unwrap();
    let o = levelset(&["estimate", "--input", input.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`a`"), "{}", stderr(&o));
}

#[test]
fn malformed_row_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "y,a,x1\n1,0,0.1\n2,1,0.2\n3,1,zzz\n").unwrap();
    let o = levelset(&["estimate", "--input", input.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn bad_setup_and_bad_geometry_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = levelset(&["simulate", "--setup", "2c"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    // c_hm above 4/3
    let o = levelset(&["simulate", "--setup", "adversarial", "--h", "0.2", "--m", "2", "--k", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = levelset(&["estimate", "--no-such-flag"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn estimate_and_infer_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (d2, _) = sample_data(dir.path());
    let run = dir.path().join("est");
    let o = levelset(
        &["estimate", "--input", d2.to_str().unwrap(), "--method", "dr", "--theta", "0", "--grid", "50"],
        &run,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let mask = std::fs::read_to_string(run.join("mask.csv")).unwrap();
    assert_eq!(mask.lines().next(), Some("x_1,x_2,member"));
    assert_eq!(mask.lines().count(), 1 + 50 * 50);
    let surface = std::fs::read_to_string(run.join("surface.csv")).unwrap();
    assert_eq!(surface.lines().next(), Some("x1,x2,tau_hat,se"));
    assert_eq!(json(run.join("meta.json"))["grid"]["resolution"], 50);

    let inf = dir.path().join("inf");
    let o = levelset(&["infer", "--input", d2.to_str().unwrap(), "--grid", "20", "--n-boot", "1000"], &inf);
    assert!(o.status.success(), "{}", stderr(&o));
    let sets = std::fs::read_to_string(inf.join("confidence_sets.csv")).unwrap();
    assert_eq!(sets.lines().next(), Some("x_1,x_2,lower,plug_in,upper"));
    let band = json(inf.join("band.json"));
    assert!(band["lower_count"].as_u64() <= band["plug_in_count"].as_u64());
    assert!(band["plug_in_count"].as_u64() <= band["upper_count"].as_u64());
}

#[test]
fn lpr_reports_its_tuning() {
    let dir = tempfile::tempdir().unwrap();
    let (_, d1) = sample_data(dir.path());
    let run = dir.path().join("lpr");
    let o = levelset(
        &["estimate", "--input", d1.to_str().unwrap(), "--method", "lpr", "--gamma", "1", "--s", "0.1", "--grid", "10"],
        &run,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let meta = json(run.join("meta.json"));
    assert_eq!(meta["tuning"]["regime"], "low_smoothness");
    assert!((meta["tuning"]["T"].as_f64().unwrap() - 4.0).abs() < 1e-12);
    assert!(run.join("lpr_diagnostics.json").is_file());
    // infer has no Lp-R variant
    let o = levelset(&["infer", "--input", d1.to_str().unwrap(), "--method", "lpr"], &run);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn kappa_panel_has_one_row_per_kappa() {
    let dir = tempfile::tempdir().unwrap();
    let o = levelset(
        &["simulate", "--setup", "1b", "--reps", "3", "--n", "300", "--grid", "20", "--kappa", "0.1,0.5,1,5,10"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("risk_vs_kappa.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5);
}

#[test]
fn flags_override_config_override_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 9, "margin": {"example": "uniform", "samples": 2000, "theta": 0.25}}"#).unwrap();
    let run = |extra: &[&str], sub: &str| {
        let out = dir.path().join(sub);
        let mut args = vec!["margin", "--config", cfg.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = levelset(&args, &out);
        assert!(o.status.success(), "{}", stderr(&o));
        json(out.join("margin.json"))
    };
    let from_cfg = run(&[], "a");
    let flagged = run(&["--samples", "3000", "--seed", "4"], "b");
    assert_eq!((from_cfg["n"].as_u64(), from_cfg["seed"].as_u64()), (Some(2000), Some(9)));
    assert_eq!((flagged["n"].as_u64(), flagged["seed"].as_u64()), (Some(3000), Some(4)));
    // untouched keys fall through to the config, then to defaults
    assert_eq!(flagged["settings"]["theta"], 0.25);
    assert_eq!(flagged["settings"]["column"], "tau_hat");

    std::fs::write(&cfg, r#"{"margin": {"example": "uniform", "sample_count": 5}}"#).unwrap();
    let o = levelset(&["margin", "--config", cfg.to_str().unwrap()], &dir.path().join("c"));
    assert_eq!(o.status.code(), Some(2));
}
