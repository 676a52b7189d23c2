use std::path::Path;
use std::process::{Command, Output};

use chatter_core::problems::supply_chain;

fn chatter(args: &[&str], log: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chatter"))
        .args(args)
        .env("CHATTER_LOG", log)
        .output()
        .unwrap()
}

fn quiet(args: &[&str]) -> Output {
    chatter(args, "quiet")
}

fn rows(dir: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(dir.join("trajectory.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn lqr_solve_writes_consistent_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = quiet(&["solve", "--problem", "lqr", "--intervals", "100", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let rows = rows(dir.path());
    assert_eq!(rows.len(), 101);

    // Re-sum g·Δ over the exported rows; Ψ ≡ 0 for the LQR.
    let num = |s: &str| s.parse::<f64>().unwrap();
    let mut total = 0.0;
    for pair in rows.windows(2) {
        let (t, x, u) = (num(&pair[0][0]), num(&pair[0][1]), num(&pair[0][3]));
        total += (x * x + u * u) * (num(&pair[1][0]) - t);
    }
    let last = rows.last().unwrap();
    assert_eq!(last[3], "");
    assert_eq!(last[4], "");
    assert!((num(&last[5]) - total).abs() < 1e-10);

    let log: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("convergence.json")).unwrap()).unwrap();
    assert_eq!(log["converged"], true);
    let residual = log["final-residual"].as_f64().unwrap();
    assert!((num(&last[2]).abs() - residual).abs() <= 1e-15 * residual);
    assert_eq!(log["residual-history"].as_array().unwrap().len(), log["iterations"].as_u64().unwrap() as usize);

    let schedule = std::fs::read_to_string(dir.path().join("schedule.csv")).unwrap();
    assert!(schedule.starts_with("interval,t_start,t_end,level_index,weight,u_0\n"));
    assert!(schedule.lines().count() > 100);
}

#[test]
fn four_intervals_give_six_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out = quiet(&["solve", "--problem", "lqr", "--intervals", "4", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(matches!(out.status.code(), Some(0 | 2)), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(!text.contains('\r'));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();

    let out = quiet(&["solve", "--problem", "lqr", "--max-iters", "0", "--out-dir", d]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("max-iters must be at least 1"), "{}", stderr(&out));
    assert!(!dir.path().join("trajectory.csv").exists());

    let out = quiet(&["solve", "--problem", "lqr", "--max-iters", "2", "--out-dir", d]);
    assert_eq!(out.status.code(), Some(2));
    assert!(dir.path().join("convergence.json").exists());

    let out = quiet(&["solve", "--problem", "lqr", "--p0", "1,2", "--out-dir", d]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("dimension mismatch"));

    assert_eq!(quiet(&["solve", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(quiet(&["--help"]).status.code(), Some(0));
    assert_eq!(quiet(&["--version"]).status.code(), Some(0));
    assert_eq!(quiet(&["validate", "nonsense"]).status.code(), Some(1));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let out_dir = dir.path().join("out");
    std::fs::write(
        &cfg,
        format!(r#"{{"problem": "lqr", "intervals": 10, "gamma": 0.75, "out-dir": "{}"}}"#, out_dir.display()),
    )
    .unwrap();
    let out = quiet(&["solve", "--config", cfg.to_str().unwrap(), "--intervals", "20", "--p0", "-5"]);
    assert!(matches!(out.status.code(), Some(0 | 2)), "{}", stderr(&out));
    assert_eq!(rows(&out_dir).len(), 21);

    std::fs::write(&cfg, r#"{"problem": "lqr", "bogus-key": 1}"#).unwrap();
    let out = quiet(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("bogus-key"));
}

#[test]
fn supply_chain_respects_state_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let out = quiet(&[
        "solve",
        "--problem",
        "supply-chain",
        "--demand",
        "seasonal",
        "--intervals",
        "40",
        "--max-iters",
        "5",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(matches!(out.status.code(), Some(0 | 2)), "{}", stderr(&out));
    let rows = rows(dir.path());
    assert_eq!(rows.len(), 41);
    for row in &rows {
        for v in &row[1..=supply_chain::STATE_DIM] {
            assert!(v.parse::<f64>().unwrap() >= -1e-9);
        }
    }
}

#[test]
fn validate_targets() {
    let out = quiet(&["validate", "lp"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("1000/1000"));
    assert_eq!(quiet(&["validate", "tables"]).status.code(), Some(0));
    assert_eq!(quiet(&["validate", "lqr"]).status.code(), Some(0));
}

#[test]
fn exported_fixtures_match_shipped_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = quiet(&["export-fixtures", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    for name in ["table1_items.csv", "table1_customers.csv", "table2_suppliers.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join(name)).unwrap(),
            std::fs::read(shipped.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn log_levels() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["solve", "--problem", "lqr", "--intervals", "10", "--out-dir", dir.path().to_str().unwrap()];
    assert!(stderr(&chatter(&args, "quiet")).is_empty());
    assert!(stderr(&chatter(&args, "info")).contains("iteration    1"));
}
