use std::path::PathBuf;
use std::process::{Command, Output};

use dynbv_cli::ExperimentConfig;
use dynbv_core::analytic::{f0, f1, SeriesConfig};

fn dynbv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynbv")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Parses CSV into (header, rows) keyed by column name.
fn table(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (
        header,
        lines.map(|l| l.split(',').map(String::from).collect()).collect(),
    )
}

fn col(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    dir.join(format!("{}-{name}", std::process::id()))
}

#[test]
fn drift_columns_and_zero_grid() {
    let o = dynbv(&[
        "drift",
        "--seed",
        "1",
        "--trials",
        "200",
        "--set",
        "ea.n=50",
        "--set",
        "drift.c=1,2",
        "--set",
        "drift.eps=0",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = table(&stdout(&o));
    assert_eq!(
        header,
        ["c", "eps", "n", "mu", "mean", "stderr", "trials", "aborted", "seed"]
    );
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r[col(&header, "mean")].parse::<f64>().unwrap(), 0.0);
        assert_eq!(r[col(&header, "trials")], "200");
    }
}

#[test]
fn identical_seed_gives_identical_bytes() {
    let run = |threads: &str| {
        let path = scratch(&format!("det-{threads}.csv"));
        let o = dynbv(&[
            "drift",
            "--seed",
            "42",
            "--trials",
            "5000",
            "--threads",
            threads,
            "--out",
            path.to_str().unwrap(),
            "--set",
            "ea.n=200",
            "--set",
            "drift.c=1.5,2.5",
            "--set",
            "drift.eps=0.05,0.1",
        ]);
        assert!(o.status.success());
        std::fs::read(path).unwrap()
    };
    let a = run("1");
    assert_eq!(a, run("1"));
    assert_eq!(a, run("3"));

    let other = dynbv(&[
        "drift",
        "--seed",
        "43",
        "--trials",
        "5000",
        "--set",
        "ea.n=200",
        "--set",
        "drift.c=1.5,2.5",
        "--set",
        "drift.eps=0.05,0.1",
    ]);
    assert_ne!(a, other.stdout);
}

#[test]
fn single_cell_matches_second_order_prediction() {
    let o = dynbv(&[
        "drift",
        "--seed",
        "7",
        "--trials",
        "1000000",
        "--set",
        "ea.n=3000",
        "--set",
        "drift.c=2.2",
        "--set",
        "drift.eps=0.01",
    ]);
    assert!(o.status.success());
    let (h, rows) = table(&stdout(&o));
    let mean: f64 = rows[0][col(&h, "mean")].parse().unwrap();
    let se: f64 = rows[0][col(&h, "stderr")].parse().unwrap();
    let cfg = SeriesConfig::default();
    let eps = 0.01;
    let pred = eps * f0(2.2, &cfg).unwrap() + eps * eps * f1(2.2, &cfg).unwrap();
    assert!(
        (mean - pred).abs() <= 3.0 * se + 0.1 * pred.abs(),
        "{mean} +- {se} vs {pred}"
    );
}

#[test]
fn drift_svg_and_json() {
    let base = [
        "drift",
        "--seed",
        "1",
        "--trials",
        "100",
        "--set",
        "ea.n=40",
        "--set",
        "drift.c=1,2",
        "--set",
        "drift.eps=0.1,0.2,0.3",
    ];
    let svg = dynbv(&[&base[..], &["--format", "svg"]].concat());
    assert!(svg.status.success());
    let text = stdout(&svg);
    assert!(text.starts_with("<svg"));
    assert_eq!(text.matches("<rect").count(), 6);

    let json = dynbv(&[&base[..], &["--format", "json"]].concat());
    let rows: Vec<serde_json::Value> = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows[0].get("stderr").is_some() && rows[0].get("seed").is_some());
}

#[test]
fn analytic_rows() {
    let o = dynbv(&["analytic", "--set", "analytic.c=1,2"]);
    assert!(o.status.success());
    let (h, rows) = table(&stdout(&o));
    assert_eq!(h, ["c", "f0", "f1", "c0", "eps_star", "mu0"]);
    // the grid plus one row at the root
    assert_eq!(rows.len(), 3);
    let get = |r: &Vec<String>, k: &str| r[col(&h, k)].parse::<f64>().unwrap();
    assert!((get(&rows[0], "mu0") - (1f64.exp() + 2.0)).abs() < 1e-12);
    let root = &rows[2];
    assert_eq!(get(root, "c"), get(root, "c0"));
    assert!(get(root, "f0").abs() < 1e-8);
    assert!(rows.iter().all(|r| get(r, "eps_star").is_finite()));
}

#[test]
fn oracle_check_passes_and_validates_range() {
    let o = dynbv(&["oracle-check"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = table(&stdout(&o));
    assert!(rows.iter().all(|r| r[col(&h, "pass")] == "true"));
    let kinds: std::collections::BTreeSet<_> = rows.iter().map(|r| r[col(&h, "check")].clone()).collect();
    assert!(kinds.len() >= 4, "{kinds:?}");

    let too_big = dynbv(&[
        "oracle-check",
        "--set",
        "oracle-check.max-r=6",
        "--set",
        "oracle-check.max-k=6",
    ]);
    assert_eq!(too_big.status.code(), Some(2));
}

#[test]
fn runtime_success_and_failure_regimes() {
    let run = |c: &str, n: &str| {
        let o = dynbv(&[
            "runtime",
            "--seed",
            "3",
            "--trials",
            "20",
            "--set",
            "ea.mu=1",
            "--set",
            &format!("ea.c={c}"),
            "--set",
            &format!("runtime.n={n}"),
        ]);
        assert!(o.status.success());
        let (h, rows) = table(&stdout(&o));
        rows[0][col(&h, "success_rate")].parse::<f64>().unwrap()
    };
    assert_eq!(run("1", "100"), 1.0);
    assert_eq!(run("3", "500"), 0.0);
}

#[test]
fn threshold_without_sign_change_is_a_validity_failure() {
    let o = dynbv(&[
        "threshold",
        "--seed",
        "1",
        "--trials",
        "2000",
        "--set",
        "ea.n=200",
        "--set",
        "ea.mu=1",
        "--set",
        "threshold.lo=0.5",
        "--set",
        "threshold.hi=1.0",
        "--set",
        "threshold.eps=0.05",
        "--set",
        "threshold.max-trials=20000",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_errors_exit_with_two() {
    assert_eq!(
        dynbv(&["drift", "--trials", "10"]).status.code(),
        Some(2),
        "seed is required"
    );
    assert_eq!(
        dynbv(&["drift", "--seed", "1", "--set", "ea.bogus=1"]).status.code(),
        Some(2)
    );
    assert_eq!(
        dynbv(&["drift", "--seed", "1", "--set", "ea.c=0"]).status.code(),
        Some(2)
    );
    assert_eq!(
        dynbv(&["runtime", "--config", "/nonexistent.toml", "--seed", "1"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn config_file_round_trip_and_flag_precedence() {
    let mut cfg = ExperimentConfig::load(
        None,
        &[
            "seed=9".into(),
            "trials=300".into(),
            "ea.n=60".into(),
            "drift.c=1.25".into(),
            "drift.eps=0.1".into(),
        ],
    )
    .unwrap();
    cfg.ea.mu = 3;
    let path = scratch("cfg.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    assert_eq!(ExperimentConfig::load(Some(&path), &[]).unwrap(), cfg);

    let o = dynbv(&["drift", "--config", path.to_str().unwrap(), "--trials", "77"]);
    assert!(o.status.success());
    let (h, rows) = table(&stdout(&o));
    assert_eq!(rows[0][col(&h, "trials")], "77");
    assert_eq!(rows[0][col(&h, "mu")], "3");
    assert_eq!(rows[0][col(&h, "n")], "60");
}
