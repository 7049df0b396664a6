use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gridhedge"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn gridhedge")
}

fn reference_config(dir: &Path) -> PathBuf {
    let cfg = gridhedge::config::ConfigFile::reference();
    let path = dir.join("grid.toml");
    fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn estimate_empty_file_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.csv");
    fs::write(&p, "").unwrap();
    let o = run(&["estimate", "--input", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no data rows"), "{}", stderr(&o));
}

#[test]
fn estimate_reports_row_of_bad_value() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    fs::write(
        &p,
        "timestamp,power_kw\n2020-06-01T10:00:00,5.0\n2020-06-01T10:05:00,abc\n",
    )
    .unwrap();
    let o = run(&["estimate", "--input", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row 3"), "{}", stderr(&o));
}

#[test]
fn estimate_recovers_synthetic_gbm() {
    use gridhedge_core::process::{simulate_paths, CorrelationMatrix, GbmParams, Measure};
    // Five-minute samples, 10:00-17:00 windows over 120 days.
    let (mu, sigma) = (0.007, 0.027);
    let per_day = 7 * 12 + 1;
    let e = simulate_paths(
        &[GbmParams::new(mu, sigma).unwrap()],
        &CorrelationMatrix::identity(1),
        &[30.0],
        (per_day * 120) as f64 / 12.0,
        per_day * 120,
        1,
        99,
        Measure::Physical,
    )
    .unwrap();
    let mut text = String::from("timestamp,power_kw\n");
    let start = chrono::NaiveDate::from_ymd_opt(2020, 6, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    for k in 0..=per_day * 120 {
        let t = start + chrono::TimeDelta::minutes(5 * k as i64);
        text.push_str(&format!("{},{}\n", t.format("%Y-%m-%dT%H:%M:%S"), e.value(0, k, 0)));
    }
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("gbm.csv");
    fs::write(&p, text).unwrap();
    let o = run(&["estimate", "--input", p.to_str().unwrap(), "--interval", "10", "--window", "10:00-17:00"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let field = |name: &str| -> f64 {
        out.lines()
            .find_map(|l| l.strip_prefix(&format!("{name} ")))
            .unwrap_or_else(|| panic!("missing {name} in {out}"))
            .parse()
            .unwrap()
    };
    assert!((field("sigma") - sigma).abs() < 0.1 * sigma, "{out}");
    assert!((field("dt_hours") - 1.0 / 6.0).abs() < 1e-12);
    assert_eq!(field("dof"), 13.0);
    let p_value = field("p_value");
    assert!((0.0..=1.0).contains(&p_value));
}

#[test]
fn allocate_rejects_time_at_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference_config(dir.path());
    for t in ["5", "6.5"] {
        let o = run(&["allocate", "--config", cfg.to_str().unwrap(), "--time", t]);
        assert_eq!(o.status.code(), Some(4));
        assert!(stderr(&o).contains("time out of range"), "{}", stderr(&o));
    }
}

#[test]
fn allocate_ces_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference_config(dir.path());
    let o = run(&["allocate", "--config", cfg.to_str().unwrap(), "--mode", "ces"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("mg1 a_hat -0.4866215776 b_hat 10.2675684474"), "{out}");
    let total: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("b_total "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((total - (10.267568447398635 + 12.945882396620999)).abs() < 1e-9);
}

#[test]
fn allocate_tes_reports_savings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference_config(dir.path());
    let o = run(&["allocate", "--config", cfg.to_str().unwrap(), "--mode", "tes", "--time", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    for key in ["b ", "value ", "replication_residual ", "ces_b_total ", "savings_pct ", "remaining_steps 3"] {
        assert!(out.lines().any(|l| l.starts_with(key)), "{key} missing in {out}");
    }
}

#[test]
fn infeasible_calibration_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = gridhedge::config::ConfigFile::reference();
    cfg.microgrids[0].sigma = 3.0;
    cfg.microgrids[1].sigma = 3.0;
    cfg.correlation = vec![vec![1.0, 0.99], vec![0.99, 1.0]];
    let path = dir.path().join("wild.toml");
    fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    let o = run(&["allocate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}{}", stdout(&o), stderr(&o));
    assert!(stderr(&o).contains("dt"), "{}", stderr(&o));
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "t_f_hours = \"five\"\n").unwrap();
    let o = run(&["allocate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic_and_reproducible_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    for out in [&a, &b] {
        let o = run(&[
            "simulate", "--config", cfg.to_str().unwrap(), "--paths", "40", "--seed", "11",
            "--case-filter", "ge,lt", "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let ra = fs::read(a.join("results.csv")).unwrap();
    assert_eq!(ra, fs::read(b.join("results.csv")).unwrap());
    assert_eq!(fs::read(a.join("case_counts.csv")).unwrap(), fs::read(b.join("case_counts.csv")).unwrap());

    let o = run(&[
        "simulate", "--from-manifest", a.join("manifest.txt").to_str().unwrap(), "--out", c.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(ra, fs::read(c.join("results.csv")).unwrap());

    let text = String::from_utf8(ra).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t_hours,metric,case,mean,ci_lo,ci_hi"));
    assert!(lines.all(|l| l.split(',').nth(2) == Some("ge_lt")));
    let manifest = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 11"));
    assert!(manifest.contains("output.results.csv.sha256 = "));
}

#[test]
fn simulate_single_path_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference_config(dir.path());
    let out = dir.path().join("one");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--paths", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("results.csv").exists());
    assert!(out.join("manifest.txt").exists());
}

#[test]
fn simulate_empty_bucket_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = gridhedge::config::ConfigFile::reference();
    // far above demand with almost no volatility: no deficit is ever seen
    cfg.initial_kw = vec![200.0, 250.0];
    cfg.microgrids[0].sigma = 0.001;
    cfg.microgrids[1].sigma = 0.001;
    cfg.n_paths = 5;
    cfg.max_attempts = Some(200);
    let path = dir.path().join("sunny.toml");
    fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "simulate", "--config", path.to_str().unwrap(), "--case-filter", "lt,lt", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stderr(&o).contains("lt,lt"), "{}", stderr(&o));
}

#[test]
fn validate_fault_injection_fails_oracle() {
    let o = run(&["validate", "--suite", "oracle", "--inject-fault", "phi"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ces_closed_form_vs_phi_oracle"));
    let lines = stderr(&o);
    assert!(lines.lines().any(|l| l.starts_with("FAIL ces_closed_form_vs_phi_oracle")));
    assert!(lines.lines().any(|l| l.starts_with("PASS chi_square_p_value")));
}

#[test]
fn validate_oracle_suite_passes() {
    let o = run(&["validate", "--suite", "oracle"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 4);
    assert!(out.lines().all(|l| l.starts_with("PASS ")));
}
