//! Command-line runner for the expert-mixture trading engine.
//!
//! Four commands cover the pipeline: `backtest` runs the mixture over a
//! price panel and writes its accounting artifacts; `statarb` tests a
//! ledger's profit stream for statistical arbitrage; `pbo` estimates the
//! probability of backtest overfitting over disjoint data windows;
//! `bench-bcrp` reports the hindsight-optimal constant-rebalanced
//! portfolio. Every command takes a TOML config and emits machine-readable
//! CSV/JSON plus a manifest pinning config hash, seed, and version.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use expertmix::config::{Mode, RunConfig};
use expertmix::experts::{enumerate_experts, ExpertSpec};
use expertmix::learner::{bcrp_benchmark, run_daily, run_intraday, BacktestOutput, EngineOptions};
use expertmix::market_data::{
    load_clusters, load_ohlcv, price_relatives, LoadOptions, MarketData, RiskFreeSeries, Universe,
};
use expertmix::pbo::{build_trial_matrix, cscv_pbo, sharpe_metric};
use expertmix::report::{
    histogram, read_ledger_csv, strategy_group_summary, write_expert_wealth_csv,
    write_histogram_csv, write_json, write_ledger_csv, write_summary_csv, HistogramBin, Manifest,
};
use expertmix::statarb::{
    critical_value, fit_profit_model, min_t, p_value, probability_of_loss_curve, ModelKind,
};

#[derive(Parser)]
#[command(
    name = "expertmix",
    version,
    about = "Expert-mixture trading backtests with arbitrage and overfit diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the expert-mixture backtest and write ledger, summary, and
    /// manifest.
    Backtest(BacktestArgs),
    /// Test a backtest ledger's profit stream for statistical arbitrage.
    Statarb(StatarbArgs),
    /// Estimate the probability of backtest overfitting over disjoint
    /// daily windows.
    Pbo(CommonArgs),
    /// Report the hindsight-optimal constant-rebalanced portfolio.
    BenchBcrp(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration TOML.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run frictionless, ignoring the configured cost model.
    #[arg(long)]
    no_costs: bool,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured trading mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Args)]
struct BacktestArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Append a Monte Carlo benchmark-portfolio wealth column to the
    /// ledger (daily mode only).
    #[arg(long)]
    bcrp: bool,
}

#[derive(Args)]
struct StatarbArgs {
    /// Ledger CSV produced by `backtest`.
    ledger: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Daily,
    Intraday,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Daily => Mode::Daily,
            ModeArg::Intraday => Mode::Intraday,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Backtest(args) => cmd_backtest(args),
        Command::Statarb(args) => cmd_statarb(args),
        Command::Pbo(args) => cmd_pbo(args),
        Command::BenchBcrp(args) => cmd_bench_bcrp(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            // Input problems (bad files, bad config, short data) exit 2;
            // anything that went wrong mid-computation exits 1.
            let code = err
                .chain()
                .find_map(|cause| cause.downcast_ref::<expertmix::Error>())
                .map_or(1, |e| if e.is_input() { 2 } else { 1 });
            ExitCode::from(code)
        }
    }
}

/// Parse the config and fold the command-line overrides in before
/// validating, so an overridden mode is checked against the right file
/// requirements.
fn effective_config(args: &CommonArgs) -> Result<RunConfig> {
    let text = fs::read_to_string(&args.config).map_err(|e| {
        expertmix::Error::Input(format!("cannot read config {}: {e}", args.config.display()))
    })?;
    let mut config = RunConfig::parse(&text)?;
    if let Some(base) = args.config.parent() {
        config.resolve_paths(base);
    }
    if let Some(seed) = args.seed {
        config.run.seed = seed;
    }
    if args.no_costs {
        config.costs.enabled = false;
    }
    if let Some(out) = &args.out {
        config.run.out_dir = out.clone();
    }
    if let Some(mode) = args.mode {
        config.run.mode = mode.into();
    }
    config.validate()?;
    fs::create_dir_all(&config.run.out_dir)?;
    Ok(config)
}

/// Everything a data-driven command needs loaded and cross-checked.
struct LoadedRun {
    config: RunConfig,
    daily: MarketData,
    intraday: Option<MarketData>,
    rf: RiskFreeSeries,
    universe: Universe,
    specs: Vec<ExpertSpec>,
}

fn load_run(args: &CommonArgs) -> Result<LoadedRun> {
    let config = effective_config(args)?;
    let daily = load_ohlcv(&config.data.prices, &LoadOptions::daily())?;
    let intraday = match config.run.mode {
        Mode::Intraday => {
            let path = config.data.intraday_prices.as_ref().expect("validated");
            Some(load_ohlcv(path, &LoadOptions::intraday())?)
        }
        Mode::Daily => None,
    };
    let rf = match &config.data.risk_free {
        Some(path) => RiskFreeSeries::load(path)?,
        None => RiskFreeSeries::flat(daily.calendar.iter().map(|t| t.date()).collect()),
    };
    let universe = match &config.data.clusters {
        Some(path) => Universe::build(daily.tickers(), &load_clusters(path)?)?,
        None => Universe::trivial(daily.tickers()),
    };
    let specs = enumerate_experts(&universe, &config.experts.grid())?;
    Ok(LoadedRun { config, daily, intraday, rf, universe, specs })
}

fn engine_options(config: &RunConfig) -> EngineOptions {
    EngineOptions {
        vol_window: config.run.vol_window,
        costs: config.costs.resolve(config.run.mode),
        trace: false,
        expert_history: config.run.expert_history,
    }
}

fn run_engine(run: &LoadedRun) -> Result<BacktestOutput> {
    let opts = engine_options(&run.config);
    let output = match &run.intraday {
        Some(intraday) => {
            run_intraday(intraday, &run.daily, &run.rf, &run.universe, &run.specs, &opts)?
        }
        None => run_daily(&run.daily, &run.rf, &run.universe, &run.specs, &opts)?,
    };
    Ok(output)
}

fn write_manifest(out_dir: &Path, name: &str, mut manifest: Manifest) -> Result<()> {
    let path = out_dir.join(name);
    manifest.timings.shrink_to_fit();
    write_json(&path, &manifest)?;
    Ok(())
}

fn cmd_backtest(args: BacktestArgs) -> Result<()> {
    let t_load = Instant::now();
    let run = load_run(&args.common)?;
    let config = &run.config;
    if args.bcrp && config.run.mode != Mode::Daily {
        return Err(expertmix::Error::Config(
            "the benchmark column is daily-mode only".into(),
        )
        .into());
    }
    let mut manifest = Manifest::new(&config.canonical_text(), config.run.seed);
    manifest.push_timing("load", t_load.elapsed().as_secs_f64());

    let t_run = Instant::now();
    let output = run_engine(&run)?;
    manifest.push_timing("backtest", t_run.elapsed().as_secs_f64());

    let t_reports = Instant::now();
    let out_dir = &config.run.out_dir;
    let benchmark = if args.bcrp {
        let relatives = price_relatives(&run.daily);
        let best = bcrp_benchmark(&relatives, config.run.bcrp_samples, config.run.seed)?;
        let mut wealth = 1.0;
        let mut path = vec![1.0];
        for x in &relatives {
            wealth *= best.weights.iter().zip(x).map(|(w, r)| w * r).sum::<f64>();
            path.push(wealth);
        }
        Some(path)
    } else {
        None
    };
    let ledger_path = out_dir.join("ledger.csv");
    write_ledger_csv(&ledger_path, &output.ledger, benchmark.as_deref())?;
    if config.run.expert_history {
        write_expert_wealth_csv(&out_dir.join("expert_wealth.csv"), &output)?;
    }
    let summary = strategy_group_summary(&run.specs, &output)?;
    write_summary_csv(&out_dir.join("summary.csv"), &summary)?;
    manifest.push_timing("reports", t_reports.elapsed().as_secs_f64());
    write_manifest(out_dir, "manifest-backtest.json", manifest)?;

    println!(
        "backtest: {} experts over {} periods -> wealth {:.6}, PL {:+.6}, cost {:.6}",
        run.specs.len(),
        output.ledger.rows.len() - 1,
        output.ledger.terminal_wealth(),
        output.ledger.final_pl(),
        output.ledger.total_cost(),
    );
    println!("wrote {}", ledger_path.display());
    Ok(())
}

#[derive(Serialize)]
struct TStatEntry {
    name: String,
    value: f64,
}

#[derive(Serialize)]
struct LossPoint {
    n: usize,
    probability: Option<f64>,
}

#[derive(Serialize)]
struct StatarbReport {
    model: String,
    window_start: usize,
    window_length: usize,
    mu: f64,
    sigma2: f64,
    lambda: f64,
    theta: Option<f64>,
    se_mu: f64,
    se_sigma2: f64,
    se_lambda: f64,
    se_theta: Option<f64>,
    loglik: f64,
    sigma2_floored: bool,
    t_stats: Vec<TStatEntry>,
    min_t: f64,
    t_c: f64,
    alpha: f64,
    n_sims: usize,
    resimulations: usize,
    p_value: f64,
    reject: bool,
    loss_curve: Vec<LossPoint>,
}

fn cmd_statarb(args: StatarbArgs) -> Result<()> {
    let config = effective_config(&args.common)?;
    let model = config.test.model_kind()?;
    let mut manifest = Manifest::new(&config.canonical_text(), config.run.seed);

    let ledger = read_ledger_csv(&args.ledger)?;
    let increments = ledger.pl_increments();
    let (start, length) = (config.test.window_start, config.test.window_length);
    if increments.len() < start + length {
        return Err(expertmix::Error::Input(format!(
            "ledger provides {} profit increments, the test window needs {}",
            increments.len(),
            start + length
        ))
        .into());
    }
    let dv = &increments[start..start + length];

    let t_fit = Instant::now();
    let fit = fit_profit_model(dv, model)?;
    let stats = min_t(&fit)?;
    let curve = probability_of_loss_curve(dv, dv.len(), 10)?;
    manifest.push_timing("fit", t_fit.elapsed().as_secs_f64());

    let t_cv = Instant::now();
    let cv = critical_value(
        length,
        config.test.alpha,
        config.test.n_sims,
        (0.0, 0.0, 0.01),
        config.run.seed,
    )?;
    manifest.push_timing("critical_value", t_cv.elapsed().as_secs_f64());
    let p = p_value(stats.min_t, &cv.samples);

    let report = StatarbReport {
        model: match model {
            ModelKind::ConstrainedMean => "cm".into(),
            ModelKind::UnconstrainedMean => "um".into(),
        },
        window_start: start,
        window_length: length,
        mu: fit.mu,
        sigma2: fit.sigma2,
        lambda: fit.lambda,
        theta: (model == ModelKind::UnconstrainedMean).then_some(fit.theta),
        se_mu: fit.se_mu,
        se_sigma2: fit.se_sigma2,
        se_lambda: fit.se_lambda,
        se_theta: fit.se_theta.is_finite().then_some(fit.se_theta),
        loglik: fit.loglik,
        sigma2_floored: fit.sigma2_floored,
        t_stats: stats
            .t_stats
            .iter()
            .map(|(name, value)| TStatEntry { name: name.clone(), value: *value })
            .collect(),
        min_t: stats.min_t,
        t_c: cv.t_c,
        alpha: cv.alpha,
        n_sims: cv.n_sims,
        resimulations: cv.resimulations,
        p_value: p,
        reject: stats.min_t > cv.t_c,
        loss_curve: curve
            .iter()
            .map(|lp| LossPoint { n: lp.n, probability: lp.probability })
            .collect(),
    };
    let out_dir = &config.run.out_dir;
    write_json(&out_dir.join("statarb.json"), &report)?;
    write_histogram_csv(&out_dir.join("mint_hist.csv"), &histogram(&cv.samples, 40)?)?;
    write_manifest(out_dir, "manifest-statarb.json", manifest)?;

    println!(
        "statarb: Min-t {:.4} vs t_c {:.4} (alpha {}) -> {}; p = {:.4}",
        stats.min_t,
        cv.t_c,
        cv.alpha,
        if report.reject { "statistical arbitrage" } else { "no rejection" },
        p,
    );
    Ok(())
}

#[derive(Serialize)]
struct PboReport {
    pbo: f64,
    n_splits: usize,
    s_chunks: usize,
    rows_used: usize,
    n_trials: usize,
    t_bl: usize,
    metric: String,
    truncated: bool,
    degenerate_metric_evaluations: usize,
    logit_histogram: Vec<HistogramBin>,
}

fn cmd_pbo(args: CommonArgs) -> Result<()> {
    let run = load_run(&args)?;
    let config = &run.config;
    let mut manifest = Manifest::new(&config.canonical_text(), config.run.seed);

    let t_bl = config.pbo.t_bl;
    let n_trials = run.daily.n_periods() / t_bl;
    if n_trials < 2 {
        return Err(expertmix::Error::Input(format!(
            "{} daily periods yield {} trials of {} days; the overfit estimate needs at least 2",
            run.daily.n_periods(),
            n_trials,
            t_bl
        ))
        .into());
    }

    // Each disjoint window is backtested from scratch; a window's
    // per-period profit increments become one trial column.
    let t_trials = Instant::now();
    let opts = EngineOptions { expert_history: false, trace: false, ..engine_options(config) };
    let mut trials = Vec::with_capacity(n_trials);
    for w in 0..n_trials {
        let window = run.daily.slice_periods(w * t_bl, (w + 1) * t_bl)?;
        let output = run_daily(&window, &run.rf, &run.universe, &run.specs, &opts)?;
        trials.push(output.ledger.pl_increments());
    }
    manifest.push_timing("trials", t_trials.elapsed().as_secs_f64());

    let t_cscv = Instant::now();
    let matrix = build_trial_matrix(&trials)?;
    let result = cscv_pbo(&matrix, config.pbo.s_chunks, sharpe_metric)?;
    manifest.push_timing("cscv", t_cscv.elapsed().as_secs_f64());

    let report = PboReport {
        pbo: result.pbo,
        n_splits: result.n_splits,
        s_chunks: result.s_chunks,
        rows_used: result.rows_used,
        n_trials,
        t_bl,
        metric: config.pbo.metric.clone(),
        truncated: matrix.truncated,
        degenerate_metric_evaluations: result.degenerate_metric_evaluations,
        logit_histogram: histogram(&result.logits, 20)?,
    };
    let out_dir = &config.run.out_dir;
    write_json(&out_dir.join("pbo.json"), &report)?;
    write_manifest(out_dir, "manifest-pbo.json", manifest)?;

    println!(
        "pbo: {:.4} over {} splits ({} trials of {} days, {} chunks)",
        result.pbo, result.n_splits, n_trials, t_bl, result.s_chunks
    );
    Ok(())
}

#[derive(Serialize)]
struct BcrpReport {
    tickers: Vec<String>,
    weights: Vec<f64>,
    terminal_wealth: f64,
    n_samples: usize,
    seed: u64,
}

fn cmd_bench_bcrp(args: CommonArgs) -> Result<()> {
    let config = effective_config(&args)?;
    let mut manifest = Manifest::new(&config.canonical_text(), config.run.seed);
    let daily = load_ohlcv(&config.data.prices, &LoadOptions::daily())?;
    let relatives = price_relatives(&daily);

    let t_search = Instant::now();
    let best = bcrp_benchmark(&relatives, config.run.bcrp_samples, config.run.seed)?;
    manifest.push_timing("search", t_search.elapsed().as_secs_f64());

    let report = BcrpReport {
        tickers: daily.tickers(),
        weights: best.weights.clone(),
        terminal_wealth: best.terminal_wealth,
        n_samples: config.run.bcrp_samples,
        seed: config.run.seed,
    };
    let out_dir = &config.run.out_dir;
    write_json(&out_dir.join("bcrp.json"), &report)?;
    write_manifest(out_dir, "manifest-bench-bcrp.json", manifest)?;

    println!(
        "bench-bcrp: terminal wealth {:.6} from {} simplex samples",
        best.terminal_wealth, config.run.bcrp_samples
    );
    Ok(())
}
