//! The online learner: runs the expert population over a price panel and
//! aggregates it into one zero-cost portfolio.
//!
//! Each period the engine (1) marks the held aggregate portfolio to market,
//! (2) compounds every expert's cost-free wealth, (3) lets every expert
//! refresh its controls from the newest data, (4) renormalizes expert
//! wealth into mixture weights, (5) mixes expert controls into the next
//! aggregate (capped at unit gross exposure), (6) prices the rebalancing
//! trade, and (7) compounds net wealth. Expert wealth is deliberately
//! cost-free: it is a fitness signal for the mixture, not a tradable book.
//!
//! Two drivers share that loop. The daily driver steps once per trading
//! day. The fused intraday driver runs it across the bars of each day with
//! controls that never survive the close, then once more over the close
//! with a separate overnight control stream decided a day earlier; both
//! streams feed one expert-wealth record, which restarts each morning.

use std::collections::HashMap;

use chrono::NaiveDateTime;

use crate::costs::{
    garch11_fit_forecast, period_cost, realized_vol, trailing_stdev, CostConfig,
};
use crate::error::{Error, Result};
use crate::experts::{
    embed_cluster, retain_signals, signals_to_controls, wealth_relative, ExpertSpec, RuleKind,
};
use crate::indicators::{rule_signals, OhlcHistory, Signal, TechRule};
use crate::market_data::{
    price_relatives, Frequency, MarketData, RiskFreeSeries, Universe,
};
use crate::port_strategies::{
    anti_z_bcrp, renormalize_weights, z_anticor, z_bcrp, ControlVector, StrategyRule,
};

/// Number of bars a trading day must contain in intraday mode.
pub const BARS_PER_DAY: usize = 88;

/// First (1-based) bar whose entering transition pays transaction costs;
/// earlier bars are a morning warm-up with free repositioning.
const FIRST_COSTED_BAR: usize = 5;

/// Last (1-based) bar priced off the previous day's GARCH forecast; later
/// bars use the running day's realized volatility instead.
const GARCH_BARS: usize = 15;

/// Bar returns from the previous day used to fit the GARCH forecaster.
const GARCH_FIT_RETURNS: usize = 60;

/// Engine knobs shared by both drivers.
#[derive(Debug, Clone)]
pub struct EngineOptions {
    /// Trailing window (periods) of the close-price standard deviation used
    /// for daily volatility loading and daily cost impact.
    pub vol_window: usize,
    /// Cost model; `None` runs frictionless.
    pub costs: Option<CostConfig>,
    /// Record per-period controls for independent replay.
    pub trace: bool,
    /// Record each expert's wealth relative over every leg (for per-rule
    /// performance summaries and wealth trajectories).
    pub expert_history: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            vol_window: 90,
            costs: Some(CostConfig::daily_default()),
            trace: false,
            expert_history: false,
        }
    }
}

/// One settled ledger period.
#[derive(Debug, Clone)]
pub struct LedgerRow {
    pub period: usize,
    pub timestamp: NaiveDateTime,
    /// Compounded net wealth of the aggregate portfolio.
    pub wealth: f64,
    /// Cumulative sum of net per-period increments.
    pub pl: f64,
    /// Cost charged this period.
    pub cost: f64,
    /// Experts holding a nonzero position during the period.
    pub n_active: usize,
}

/// The run's per-period accounting, row 0 being the pre-trade state.
#[derive(Debug, Clone, Default)]
pub struct Ledger {
    pub rows: Vec<LedgerRow>,
}

impl Ledger {
    pub fn terminal_wealth(&self) -> f64 {
        self.rows.last().map_or(1.0, |r| r.wealth)
    }

    pub fn final_pl(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.pl)
    }

    pub fn total_cost(&self) -> f64 {
        self.rows.iter().map(|r| r.cost).sum()
    }

    /// Per-period increments of the cumulative profit column (skips the
    /// initial row): the raw material for overfit diagnostics.
    pub fn pl_increments(&self) -> Vec<f64> {
        self.rows
            .windows(2)
            .map(|w| w[1].pl - w[0].pl)
            .collect()
    }
}

/// Which leg of the trading schedule a ledger row settles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LegKind {
    /// A full trading day in daily mode.
    Daily,
    /// Intraday transition into (1-based) `bar` of `day`.
    IntradayBar { day: usize, bar: usize },
    /// Last-bar-to-official-close settlement that liquidates intraday
    /// positions.
    CloseOut { day: usize },
    /// Close-to-close overnight leg carried by the daily control stream.
    Overnight { day: usize },
}

/// Everything needed to re-derive one ledger row without the engine:
/// the controls in force, the market move, and the cost inputs.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub leg: LegKind,
    /// Gross price relatives over the leg.
    pub relatives: Vec<f64>,
    pub rf_relative: f64,
    /// Per-asset volatilities used for cost impact and signal loading.
    pub sigmas: Vec<f64>,
    /// Whether this leg is in the cost schedule.
    pub cost_charged: bool,
    /// Expert controls in force during the leg.
    pub held_expert_controls: Vec<ControlVector>,
    /// Aggregate controls in force during the leg.
    pub held_aggregate: ControlVector,
}

/// Per-leg trace aligned with ledger rows 1..: `rows[i]` explains ledger
/// row `i + 1`.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

/// Results of a full engine run.
#[derive(Debug, Clone)]
pub struct BacktestOutput {
    pub ledger: Ledger,
    pub expert_ids: Vec<String>,
    /// Final cost-free expert wealth (for the fused driver, wealth since
    /// the last daily reset).
    pub expert_wealth: Vec<f64>,
    /// Controls the engine would carry into the next period.
    pub final_aggregate: ControlVector,
    /// Days-times-assets on which the GARCH fit fell back to the flat
    /// sample variance (intraday mode only).
    pub garch_fallbacks: usize,
    pub trace: Option<Trace>,
    /// Cost-free wealth relative of every expert over each leg, aligned
    /// like the trace: entry `i` belongs to ledger row `i + 1`.
    pub expert_leg_relatives: Option<Vec<Vec<f64>>>,
}

/// Precomputed technical signals: `(rule, n1, n2) -> [asset][period]`.
struct SignalTable {
    map: HashMap<(TechRule, usize, usize), Vec<Vec<Signal>>>,
}

impl SignalTable {
    /// Evaluate every distinct technical parameterization in the population
    /// over per-asset OHLC histories.
    fn build(experts: &[ExpertSpec], histories: &[OhlcHistory]) -> SignalTable {
        let mut map = HashMap::new();
        for spec in experts {
            if let RuleKind::Tech(rule) = spec.rule {
                map.entry((rule, spec.n1, spec.n2)).or_insert_with(|| {
                    histories
                        .iter()
                        .map(|h| rule_signals(rule, spec.n1, spec.n2, h))
                        .collect::<Vec<Vec<Signal>>>()
                });
            }
        }
        SignalTable { map }
    }

    fn raw(&self, rule: TechRule, n1: usize, n2: usize, asset: usize, t: usize) -> Signal {
        self.map[&(rule, n1, n2)][asset][t]
    }
}

/// Mutable per-expert state for one control stream (intraday and daily
/// streams keep separate copies).
#[derive(Clone)]
struct ExpertRuntime {
    /// Retained (carried-forward) signals per cluster member.
    out_signals: Vec<Signal>,
    /// Previous cluster weights threaded into the lagged-correlation
    /// strategy.
    prev_weights: Vec<f64>,
}

impl ExpertRuntime {
    fn fresh(n_members: usize) -> Self {
        ExpertRuntime {
            out_signals: vec![Signal::Hold; n_members],
            prev_weights: vec![0.0; n_members],
        }
    }
}

/// Static per-expert data resolved once per run.
struct Population {
    specs: Vec<ExpertSpec>,
    ids: Vec<String>,
    members: Vec<Vec<usize>>,
}

impl Population {
    fn resolve(universe: &Universe, experts: &[ExpertSpec]) -> Result<Population> {
        if experts.is_empty() {
            return Err(Error::Config("expert population is empty".into()));
        }
        let mut members = Vec::with_capacity(experts.len());
        for spec in experts {
            let cluster = universe
                .clusters
                .get(spec.cluster)
                .ok_or_else(|| Error::Config(format!("expert references cluster {}", spec.cluster)))?;
            members.push(cluster.members.clone());
        }
        Ok(Population {
            specs: experts.to_vec(),
            ids: experts.iter().map(|e| e.id(universe)).collect(),
            members,
        })
    }

    fn len(&self) -> usize {
        self.specs.len()
    }
}

/// Refresh one expert's controls from data available at the end of period
/// `t` of the current stream. `relatives` rows `0..t` cover the stream's
/// observed transitions; `sigmas` are the loading volatilities at `t`.
fn fresh_controls(
    spec: &ExpertSpec,
    members: &[usize],
    rt: &mut ExpertRuntime,
    table: &SignalTable,
    relatives: &[Vec<f64>],
    t: usize,
    sigmas: &[f64],
    n_assets: usize,
) -> ControlVector {
    match spec.rule {
        RuleKind::Tech(rule) => {
            let raw: Vec<Signal> = members
                .iter()
                .map(|&a| table.raw(rule, spec.n1, spec.n2, a, t))
                .collect();
            rt.out_signals = retain_signals(&rt.out_signals, &raw);
            let vols: Vec<f64> = members.iter().map(|&a| sigmas[a]).collect();
            let cv = signals_to_controls(&rt.out_signals, &vols);
            embed_cluster(n_assets, members, &cv.stocks, cv.risk_free)
        }
        RuleKind::Strategy(rule) => {
            let need = rule.min_window(spec.n1);
            if t < need {
                return ControlVector::zero(n_assets);
            }
            let window: Vec<Vec<f64>> = relatives[t - need..t]
                .iter()
                .map(|row| members.iter().map(|&a| row[a]).collect())
                .collect();
            let weights = match rule {
                StrategyRule::ZBcrp => z_bcrp(&window),
                StrategyRule::AntiZBcrp => anti_z_bcrp(&window),
                StrategyRule::ZAnticor => {
                    let w = z_anticor(&window, spec.n1, &rt.prev_weights);
                    rt.prev_weights = w.clone();
                    w
                }
            };
            let risk_free = -weights.iter().sum::<f64>();
            embed_cluster(n_assets, members, &weights, risk_free)
        }
    }
}

/// Renormalize expert wealth into mixture weights and blend the experts'
/// next controls into the aggregate, capping gross exposure at one.
fn mix_controls(wealth: &[f64], controls: &[ControlVector], n_assets: usize) -> ControlVector {
    let mut q = wealth.to_vec();
    renormalize_weights(&mut q);
    let mut agg = ControlVector::zero(n_assets);
    for (qn, h) in q.iter().zip(controls) {
        for (b, w) in agg.stocks.iter_mut().zip(&h.stocks) {
            *b += qn * w;
        }
        agg.risk_free += qn * h.risk_free;
    }
    let lev = agg.leverage();
    if lev > 1.0 {
        agg.scale(1.0 / lev);
    }
    agg
}

fn per_asset_histories(data: &MarketData) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let highs = data
        .series
        .iter()
        .map(|s| s.bars.iter().map(|b| b.high).collect())
        .collect();
    let lows = data
        .series
        .iter()
        .map(|s| s.bars.iter().map(|b| b.low).collect())
        .collect();
    let closes = data
        .series
        .iter()
        .map(|s| s.bars.iter().map(|b| b.close).collect())
        .collect();
    (highs, lows, closes)
}

fn check_universe(universe: &Universe, data: &MarketData) -> Result<()> {
    if universe.tickers != data.tickers() {
        return Err(Error::Config(
            "universe tickers do not match the price panel".into(),
        ));
    }
    Ok(())
}

/// Book-keeping shared by both drivers: the aggregate and expert wealth
/// streams plus the accumulating ledger and trace.
struct EngineState {
    s: f64,
    pl: f64,
    expert_wealth: Vec<f64>,
    ledger: Ledger,
    trace: Option<Trace>,
    history: Option<Vec<Vec<f64>>>,
}

impl EngineState {
    fn new(n_experts: usize, t0: NaiveDateTime, opts: &EngineOptions) -> EngineState {
        EngineState {
            s: 1.0,
            pl: 0.0,
            expert_wealth: vec![1.0; n_experts],
            ledger: Ledger {
                rows: vec![LedgerRow {
                    period: 0,
                    timestamp: t0,
                    wealth: 1.0,
                    pl: 0.0,
                    cost: 0.0,
                    n_active: 0,
                }],
            },
            trace: opts.trace.then(Trace::default),
            history: opts.expert_history.then(Vec::new),
        }
    }

    /// Compound every expert's cost-free wealth over one leg.
    ///
    /// Relatives are recorded per leg rather than wealth levels because the
    /// fused driver resets expert wealth at day starts; level ratios would
    /// lie across those boundaries.
    fn mark_experts(&mut self, held: &[ControlVector], relatives: &[f64], rf_relative: f64) {
        let mut row = self.history.as_ref().map(|_| Vec::with_capacity(held.len()));
        for (w, h) in self.expert_wealth.iter_mut().zip(held) {
            let rel = wealth_relative(h, relatives, rf_relative);
            *w *= rel;
            if let Some(row) = &mut row {
                row.push(rel);
            }
        }
        if let (Some(history), Some(row)) = (&mut self.history, row) {
            history.push(row);
        }
    }

    /// Settle one leg of the aggregate book: mark it over the move, charge
    /// `cost`, and append the ledger (and optional trace) row. Expert
    /// wealth is marked separately so the caller can weight the next
    /// mixture with post-settlement wealth.
    #[allow(clippy::too_many_arguments)]
    fn settle_leg(
        &mut self,
        leg: LegKind,
        timestamp: NaiveDateTime,
        relatives: &[f64],
        rf_relative: f64,
        sigmas: &[f64],
        cost_charged: bool,
        cost: f64,
        held_aggregate: &ControlVector,
        held_experts: &[ControlVector],
    ) {
        let ds_gross = wealth_relative(held_aggregate, relatives, rf_relative);
        let ds_net = ds_gross - cost;
        self.s *= ds_net;
        self.pl += ds_net - 1.0;
        let n_active = held_experts.iter().filter(|h| !h.is_zero()).count();
        self.ledger.rows.push(LedgerRow {
            period: self.ledger.rows.len(),
            timestamp,
            wealth: self.s,
            pl: self.pl,
            cost,
            n_active,
        });
        if let Some(trace) = &mut self.trace {
            trace.rows.push(TraceRow {
                leg,
                relatives: relatives.to_vec(),
                rf_relative,
                sigmas: sigmas.to_vec(),
                cost_charged,
                held_expert_controls: held_experts.to_vec(),
                held_aggregate: held_aggregate.clone(),
            });
        }
    }
}

/// Run the population over a daily panel.
pub fn run_daily(
    data: &MarketData,
    rf: &RiskFreeSeries,
    universe: &Universe,
    experts: &[ExpertSpec],
    opts: &EngineOptions,
) -> Result<BacktestOutput> {
    if data.frequency != Frequency::Daily {
        return Err(Error::Config("daily driver needs a daily panel".into()));
    }
    check_universe(universe, data)?;
    let t_total = data.n_periods();
    if t_total < 2 {
        return Err(Error::Input("need at least two periods to trade".into()));
    }
    if opts.vol_window < 2 {
        return Err(Error::Config("volatility window must be at least 2".into()));
    }

    let pop = Population::resolve(universe, experts)?;
    let m = data.n_assets();
    let (highs, lows, closes) = per_asset_histories(data);
    let histories: Vec<OhlcHistory> = (0..m)
        .map(|a| OhlcHistory { highs: &highs[a], lows: &lows[a], closes: &closes[a] })
        .collect();
    let table = SignalTable::build(&pop.specs, &histories);
    let relatives = price_relatives(data);

    // Trailing volatility per [period][asset]; shared by signal loading and
    // cost impact.
    let sigmas: Vec<Vec<f64>> = (0..t_total)
        .map(|t| (0..m).map(|a| trailing_stdev(&closes[a], opts.vol_window, t)).collect())
        .collect();

    let rf_relatives: Vec<f64> = (1..t_total)
        .map(|t| rf.daily_relative(data.calendar[t - 1].date(), data.calendar[t].date()))
        .collect::<Result<_>>()?;

    let mut state = EngineState::new(pop.len(), data.calendar[0], opts);
    let mut runtimes: Vec<ExpertRuntime> =
        pop.members.iter().map(|mem| ExpertRuntime::fresh(mem.len())).collect();
    let mut held_experts: Vec<ControlVector> = vec![ControlVector::zero(m); pop.len()];
    let mut held_aggregate = ControlVector::zero(m);

    for t in 1..t_total {
        let x = &relatives[t - 1];
        let rf_rel = rf_relatives[t - 1];

        // Decide the next controls from period-t information.
        let next_experts: Vec<ControlVector> = (0..pop.len())
            .map(|n| {
                fresh_controls(
                    &pop.specs[n],
                    &pop.members[n],
                    &mut runtimes[n],
                    &table,
                    &relatives,
                    t,
                    &sigmas[t],
                    m,
                )
            })
            .collect();

        // Expert wealth is marked over period t before it weights the next
        // mixture.
        state.mark_experts(&held_experts, x, rf_rel);
        let next_aggregate = mix_controls(&state.expert_wealth, &next_experts, m);

        let cost = match &opts.costs {
            Some(cfg) => period_cost(&held_aggregate.stocks, &next_aggregate.stocks, &sigmas[t], cfg),
            None => 0.0,
        };

        state.settle_leg(
            LegKind::Daily,
            data.calendar[t],
            x,
            rf_rel,
            &sigmas[t],
            opts.costs.is_some(),
            cost,
            &held_aggregate,
            &held_experts,
        );

        held_experts = next_experts;
        held_aggregate = next_aggregate;
    }

    Ok(BacktestOutput {
        ledger: state.ledger,
        expert_ids: pop.ids,
        expert_wealth: state.expert_wealth,
        final_aggregate: held_aggregate,
        garch_fallbacks: 0,
        trace: state.trace,
        expert_leg_relatives: state.history,
    })
}

/// Run the population over an intraday panel fused with its daily panel.
///
/// The first day is warm-up: it seeds the GARCH fit and the first overnight
/// decision but settles nothing. Every later day contributes 87 bar legs,
/// one close-out leg, and one overnight leg to the ledger.
pub fn run_intraday(
    intraday: &MarketData,
    daily: &MarketData,
    rf: &RiskFreeSeries,
    universe: &Universe,
    experts: &[ExpertSpec],
    opts: &EngineOptions,
) -> Result<BacktestOutput> {
    if intraday.frequency != Frequency::Intraday {
        return Err(Error::Config("fused driver needs an intraday panel".into()));
    }
    if daily.frequency != Frequency::Daily {
        return Err(Error::Config("fused driver needs a daily close panel".into()));
    }
    check_universe(universe, intraday)?;
    if daily.tickers() != intraday.tickers() {
        return Err(Error::Config("intraday and daily panels list different tickers".into()));
    }
    let days = intraday.day_ranges();
    if days.len() != daily.n_periods()
        || days
            .iter()
            .zip(&daily.calendar)
            .any(|(&(s, _), d)| intraday.calendar[s].date() != d.date())
    {
        return Err(Error::Config(
            "intraday days do not line up with the daily calendar".into(),
        ));
    }
    if days.iter().any(|&(s, e)| e - s != BARS_PER_DAY) {
        return Err(Error::Input(format!(
            "every intraday day must have exactly {BARS_PER_DAY} bars"
        )));
    }
    if days.len() < 2 {
        return Err(Error::Input("need at least two days to trade".into()));
    }

    let pop = Population::resolve(universe, experts)?;
    let m = intraday.n_assets();
    let n_days = days.len();

    // Daily-stream inputs.
    let (d_highs, d_lows, d_closes) = per_asset_histories(daily);
    let d_histories: Vec<OhlcHistory> = (0..m)
        .map(|a| OhlcHistory { highs: &d_highs[a], lows: &d_lows[a], closes: &d_closes[a] })
        .collect();
    let daily_table = SignalTable::build(&pop.specs, &d_histories);
    let daily_relatives = price_relatives(daily);
    let daily_sigmas: Vec<Vec<f64>> = (0..n_days)
        .map(|d| (0..m).map(|a| trailing_stdev(&d_closes[a], opts.vol_window, d)).collect())
        .collect();
    let rf_daily: Vec<f64> = (1..n_days)
        .map(|d| rf.daily_relative(daily.calendar[d - 1].date(), daily.calendar[d].date()))
        .collect::<Result<_>>()?;

    let (i_highs, i_lows, i_closes) = per_asset_histories(intraday);

    let mut state = EngineState::new(pop.len(), intraday.calendar[days[0].1 - 1], opts);
    let mut garch_fallbacks = 0usize;

    // Daily control stream: persists across days, decided at each close.
    let mut rt_daily: Vec<ExpertRuntime> =
        pop.members.iter().map(|mem| ExpertRuntime::fresh(mem.len())).collect();
    let mut held_daily_experts: Vec<ControlVector> = vec![ControlVector::zero(m); pop.len()];
    let mut held_daily_aggregate = ControlVector::zero(m);

    for (d, &(start, end)) in days.iter().enumerate() {
        let last_bar_ts = intraday.calendar[end - 1];
        if d > 0 {
            // Fresh intraday book each morning: expert wealth restarts at
            // one and the intraday stream carries nothing overnight.
            for w in &mut state.expert_wealth {
                *w = 1.0;
            }
            let mut rt_intra: Vec<ExpertRuntime> =
                pop.members.iter().map(|mem| ExpertRuntime::fresh(mem.len())).collect();
            let mut held_intra_experts: Vec<ControlVector> =
                vec![ControlVector::zero(m); pop.len()];
            let mut held_intra_aggregate = ControlVector::zero(m);

            // Bar-return history of the day, per asset (closes only:
            // intraday rules see bars since the open).
            let day_highs: Vec<&[f64]> = (0..m).map(|a| &i_highs[a][start..end]).collect();
            let day_lows: Vec<&[f64]> = (0..m).map(|a| &i_lows[a][start..end]).collect();
            let day_closes: Vec<&[f64]> = (0..m).map(|a| &i_closes[a][start..end]).collect();
            let day_histories: Vec<OhlcHistory> = (0..m)
                .map(|a| OhlcHistory {
                    highs: day_highs[a],
                    lows: day_lows[a],
                    closes: day_closes[a],
                })
                .collect();
            let bar_table = SignalTable::build(&pop.specs, &day_histories);
            let bar_relatives: Vec<Vec<f64>> = (1..BARS_PER_DAY)
                .map(|j| (0..m).map(|a| day_closes[a][j] / day_closes[a][j - 1]).collect())
                .collect();

            // One-step GARCH volatility forecast from the previous day's
            // bar returns, used until enough of today is observed.
            let (prev_start, prev_end) = days[d - 1];
            let garch_sigma: Vec<f64> = (0..m)
                .map(|a| {
                    let closes = &i_closes[a][prev_start..prev_end];
                    let returns: Vec<f64> =
                        closes.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
                    let tail = &returns[returns.len().saturating_sub(GARCH_FIT_RETURNS)..];
                    let fit = garch11_fit_forecast(tail);
                    if fit.fallback {
                        garch_fallbacks += 1;
                    }
                    fit.sigma2_forecast.sqrt()
                })
                .collect();

            let rf_bar = 1.0 + (rf_daily[d - 1] - 1.0) / BARS_PER_DAY as f64;

            // 87 bar legs: transition into (1-based) bars 2..=88.
            for j in 1..BARS_PER_DAY {
                let entered_bar = j + 1; // 1-based
                let x = &bar_relatives[j - 1];
                let sig: Vec<f64> = if entered_bar <= GARCH_BARS {
                    garch_sigma.clone()
                } else {
                    (0..m).map(|a| realized_vol(&day_closes[a][..=j])).collect()
                };

                let next_experts: Vec<ControlVector> = (0..pop.len())
                    .map(|n| {
                        fresh_controls(
                            &pop.specs[n],
                            &pop.members[n],
                            &mut rt_intra[n],
                            &bar_table,
                            &bar_relatives,
                            j,
                            &sig,
                            m,
                        )
                    })
                    .collect();
                state.mark_experts(&held_intra_experts, x, rf_bar);
                let next_aggregate = mix_controls(&state.expert_wealth, &next_experts, m);

                let costed = entered_bar >= FIRST_COSTED_BAR;
                let cost = match (&opts.costs, costed) {
                    (Some(cfg), true) => period_cost(
                        &held_intra_aggregate.stocks,
                        &next_aggregate.stocks,
                        &sig,
                        cfg,
                    ),
                    _ => 0.0,
                };

                state.settle_leg(
                    LegKind::IntradayBar { day: d, bar: entered_bar },
                    intraday.calendar[start + j],
                    x,
                    rf_bar,
                    &sig,
                    costed && opts.costs.is_some(),
                    cost,
                    &held_intra_aggregate,
                    &held_intra_experts,
                );
                held_intra_experts = next_experts;
                held_intra_aggregate = next_aggregate;
            }

            // Close-out leg: settle last bar to the official close, then
            // liquidate the intraday book (the offsetting trade pays the
            // 85th cost leg of the day).
            let x_close: Vec<f64> = (0..m)
                .map(|a| d_closes[a][d] / day_closes[a][BARS_PER_DAY - 1])
                .collect();
            let sig_close: Vec<f64> =
                (0..m).map(|a| realized_vol(day_closes[a])).collect();
            let flat = vec![0.0; m];
            let cost = match &opts.costs {
                Some(cfg) => {
                    period_cost(&held_intra_aggregate.stocks, &flat, &sig_close, cfg)
                }
                None => 0.0,
            };
            state.mark_experts(&held_intra_experts, &x_close, 1.0);
            state.settle_leg(
                LegKind::CloseOut { day: d },
                last_bar_ts,
                &x_close,
                1.0,
                &sig_close,
                opts.costs.is_some(),
                cost,
                &held_intra_aggregate,
                &held_intra_experts,
            );

            // Overnight leg: the daily stream decided at yesterday's close
            // settles close-to-close; its rebalancing carries no cost here.
            let x_daily = &daily_relatives[d - 1];
            state.mark_experts(&held_daily_experts, x_daily, rf_daily[d - 1]);
            state.settle_leg(
                LegKind::Overnight { day: d },
                last_bar_ts,
                x_daily,
                rf_daily[d - 1],
                &daily_sigmas[d],
                false,
                0.0,
                &held_daily_aggregate,
                &held_daily_experts,
            );
        }

        // End-of-day decision for tomorrow's overnight leg, weighted by the
        // day's final expert wealth.
        let next_daily: Vec<ControlVector> = (0..pop.len())
            .map(|n| {
                fresh_controls(
                    &pop.specs[n],
                    &pop.members[n],
                    &mut rt_daily[n],
                    &daily_table,
                    &daily_relatives,
                    d,
                    &daily_sigmas[d],
                    m,
                )
            })
            .collect();
        held_daily_aggregate = mix_controls(&state.expert_wealth, &next_daily, m);
        held_daily_experts = next_daily;
    }

    Ok(BacktestOutput {
        ledger: state.ledger,
        expert_ids: pop.ids,
        expert_wealth: state.expert_wealth,
        final_aggregate: held_daily_aggregate,
        garch_fallbacks,
        trace: state.trace,
        expert_leg_relatives: state.history,
    })
}

/// Best constant-rebalanced portfolio found by Monte Carlo over the
/// long-only simplex.
#[derive(Debug, Clone)]
pub struct BcrpResult {
    pub weights: Vec<f64>,
    pub terminal_wealth: f64,
}

/// Sample `n_samples` uniform points on the simplex (normalized unit
/// exponentials) and keep the constant-rebalanced portfolio with the
/// highest terminal wealth over `relatives`.
pub fn bcrp_benchmark(relatives: &[Vec<f64>], n_samples: usize, seed: u64) -> Result<BcrpResult> {
    use rand::Rng;
    use rand::SeedableRng;

    let m = relatives.first().map_or(0, |r| r.len());
    if m == 0 || n_samples == 0 {
        return Err(Error::Input("benchmark needs relatives and a sample budget".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut best = BcrpResult { weights: vec![1.0 / m as f64; m], terminal_wealth: f64::MIN };
    for _ in 0..n_samples {
        let mut w: Vec<f64> = (0..m)
            .map(|_| -(rng.gen_range(f64::MIN_POSITIVE..1.0f64)).ln())
            .collect();
        let total: f64 = w.iter().sum();
        for wi in &mut w {
            *wi /= total;
        }
        let wealth: f64 = relatives
            .iter()
            .map(|x| w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .product();
        if wealth > best.terminal_wealth {
            best = BcrpResult { weights: w, terminal_wealth: wealth };
        }
    }
    Ok(best)
}
