//! End-to-end runs of the `expertmix` binary against synthetic fixtures:
//! artifacts land where configured, reruns are bit-identical, costs only
//! hurt, and failure modes map to the documented exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_expertmix"))
}

/// Deterministic daily OHLCV panel: three tickers with distinct drifts and
/// oscillations so signals actually fire.
fn write_prices(path: &Path, n_days: usize) {
    let mut csv = String::from("timestamp,ticker,open,high,low,close,volume\n");
    for t in 0..n_days {
        let date = format!("2020-{:02}-{:02}", 1 + t / 28, 1 + t % 28);
        for (k, ticker) in ["AAA", "BBB", "CCC"].iter().enumerate() {
            let base = 50.0 + 10.0 * k as f64;
            let drift = 1.0 + 0.0004 * (k as f64 - 1.0);
            let wave = 1.0 + 0.03 * ((t as f64 / (4.0 + k as f64)) + k as f64).sin();
            let close = base * drift.powi(t as i32) * wave;
            let open = close * 0.995;
            let high = close * 1.01;
            let low = close * 0.985;
            let volume = 10_000.0 + 100.0 * ((t + k) % 7) as f64;
            csv.push_str(&format!(
                "{date},{ticker},{open:.6},{high:.6},{low:.6},{close:.6},{volume}\n"
            ));
        }
    }
    fs::write(path, csv).unwrap();
}

fn write_risk_free(path: &Path, n_days: usize) {
    let mut csv = String::from("date,level\n");
    for t in 0..n_days {
        let date = format!("2020-{:02}-{:02}", 1 + t / 28, 1 + t % 28);
        csv.push_str(&format!("{date},{:.10}\n", 1.0002_f64.powi(t as i32)));
    }
    fs::write(path, csv).unwrap();
}

/// A workspace with fixtures and a fast config: small grid, short test
/// window, modest simulation budget.
fn fixture(n_days: usize) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    write_prices(&dir.path().join("prices.csv"), n_days);
    write_risk_free(&dir.path().join("rf.csv"), n_days);
    let config = format!(
        r#"
[data]
prices = "prices.csv"
risk_free = "rf.csv"

[experts]
n1 = [4, 8]
n2 = [16]

[test]
n_sims = 80
window_start = 5
window_length = 60

[pbo]
t_bl = 25
s_chunks = 4

[run]
seed = 11
out_dir = "{}"
"#,
        dir.path().join("out").display()
    );
    let config_path = dir.path().join("run.toml");
    fs::write(&config_path, config).unwrap();
    (dir, config_path)
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn pl_column(ledger_csv: &str) -> Vec<f64> {
    ledger_csv
        .lines()
        .skip(1)
        .map(|line| line.split(',').nth(3).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn backtest_writes_artifacts_deterministically() {
    let (dir, config) = fixture(80);
    run_ok(bin().args(["backtest", "--config"]).arg(&config));
    let out = dir.path().join("out");
    let ledger = fs::read_to_string(out.join("ledger.csv")).unwrap();
    // 80 days -> initial row + 79 settled periods (plus the header).
    assert_eq!(ledger.lines().count(), 81);
    assert!(out.join("summary.csv").is_file());
    assert!(out.join("manifest-backtest.json").is_file());

    // Same config, fresh output directory: the data artifacts match byte
    // for byte.
    let out2 = dir.path().join("out2");
    run_ok(bin().args(["backtest", "--config"]).arg(&config).arg("--out").arg(&out2));
    assert_eq!(ledger, fs::read_to_string(out2.join("ledger.csv")).unwrap());
    assert_eq!(
        fs::read_to_string(out.join("summary.csv")).unwrap(),
        fs::read_to_string(out2.join("summary.csv")).unwrap()
    );
}

#[test]
fn bcrp_flag_appends_benchmark_column() {
    let (dir, config) = fixture(60);
    run_ok(bin().args(["backtest", "--bcrp", "--config"]).arg(&config));
    let ledger = fs::read_to_string(dir.path().join("out/ledger.csv")).unwrap();
    let header = ledger.lines().next().unwrap();
    assert!(header.ends_with(",bcrp"), "{header}");
    // Benchmark starts at 1 like the strategy.
    let first = ledger.lines().nth(1).unwrap();
    assert!(first.ends_with(",1"), "{first}");
}

#[test]
fn missing_data_file_exits_2_and_names_it() {
    let dir = TempDir::new().unwrap();
    let config_path = dir.path().join("run.toml");
    fs::write(&config_path, "[data]\nprices = \"nowhere.csv\"\n").unwrap();
    let out = bin().args(["backtest", "--config"]).arg(&config_path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nowhere.csv"), "{stderr}");
}

#[test]
fn no_costs_dominates_costs_per_period() {
    let (dir, config) = fixture(70);
    run_ok(bin().args(["backtest", "--config"]).arg(&config));
    let costed = pl_column(&fs::read_to_string(dir.path().join("out/ledger.csv")).unwrap());

    let out2 = dir.path().join("nc");
    run_ok(bin().args(["backtest", "--no-costs", "--config"]).arg(&config).arg("--out").arg(&out2));
    let free = pl_column(&fs::read_to_string(out2.join("ledger.csv")).unwrap());

    assert_eq!(costed.len(), free.len());
    for (t, (c, f)) in costed.iter().zip(&free).enumerate() {
        assert!(f - c > -1e-12, "period {t}: costed {c} > frictionless {f}");
    }
    // And the frictionless run actually avoided a positive total charge.
    assert!(free.last().unwrap() > costed.last().unwrap());
}

#[test]
fn statarb_reports_on_a_ledger() {
    let (dir, config) = fixture(80);
    run_ok(bin().args(["backtest", "--config"]).arg(&config));
    let ledger = dir.path().join("out/ledger.csv");
    run_ok(bin().arg("statarb").arg(&ledger).arg("--config").arg(&config));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/statarb.json")).unwrap())
            .unwrap();
    assert!(report["min_t"].is_number());
    assert!(report["t_c"].is_number());
    let p = report["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(report["window_length"], 60);
    assert!(dir.path().join("out/mint_hist.csv").is_file());
}

#[test]
fn statarb_rejects_short_ledger() {
    let (dir, config) = fixture(30); // 29 increments < start 5 + length 60
    run_ok(bin().args(["backtest", "--config"]).arg(&config));
    let ledger = dir.path().join("out/ledger.csv");
    let out = bin().arg("statarb").arg(&ledger).arg("--config").arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("window"), "{stderr}");
}

#[test]
fn pbo_runs_disjoint_trials() {
    let (dir, config) = fixture(80); // floor(80 / 25) = 3 trials
    run_ok(bin().args(["pbo", "--config"]).arg(&config));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/pbo.json")).unwrap())
            .unwrap();
    assert_eq!(report["n_trials"], 3);
    assert_eq!(report["n_splits"], 6); // C(4, 2)
    let pbo = report["pbo"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&pbo));

    // Deterministic across reruns.
    let out2 = dir.path().join("p2");
    run_ok(bin().args(["pbo", "--config"]).arg(&config).arg("--out").arg(&out2));
    let again: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out2.join("pbo.json")).unwrap()).unwrap();
    assert_eq!(report["pbo"], again["pbo"]);
}

#[test]
fn bench_bcrp_reports_simplex_weights() {
    let (dir, config) = fixture(50);
    run_ok(bin().args(["bench-bcrp", "--config"]).arg(&config));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/bcrp.json")).unwrap())
            .unwrap();
    let weights: Vec<f64> =
        report["weights"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(weights.len(), 3);
    let total: f64 = weights.iter().sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert!(weights.iter().all(|&w| w >= 0.0));
    assert!(report["terminal_wealth"].as_f64().unwrap() > 0.0);
}
