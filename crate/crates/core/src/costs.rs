//! Transaction-cost model and the volatility estimators that feed it.
//!
//! A single trade in `n` shares of a stock with average daily volume `ADV`
//! costs `M * spread + sigma * sqrt(n / ADV)`: `M` counts sign flips
//! (spread is paid when a position is reversed, not when it is opened or
//! scaled), and the square-root term is price impact scaled by the stock's
//! volatility. The engine charges a per-period aggregate built from the
//! same operator plus a flat direct-cost term, and only while the portfolio
//! actually holds or enters a position.
//!
//! Volatility comes from three estimators depending on context: a trailing
//! standard deviation of closes (daily), a GARCH(1,1) one-step forecast fit
//! on the previous day's returns (early intraday bars), and the cumulative
//! realized volatility of the running day (later bars).

use serde::{Deserialize, Serialize};

use crate::optim::{nelder_mead_restarts, NmOptions};

/// Cost-model parameters. Spread and direct cost are quoted per charged
/// leg, so intraday defaults divide the daily budget across the day's legs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    /// Spread paid per sign flip of an aggregate stock weight.
    pub spread_per_flip: f64,
    /// Flat direct cost per charged leg.
    pub direct: f64,
    /// Traded shares as a fraction of average daily volume.
    pub participation: f64,
    /// Look-back (periods for daily data, days for intraday) of the
    /// average-daily-volume estimate.
    pub adv_window: usize,
}

/// Number of intraday legs that actually pay costs in a day: bar
/// transitions once warm-up has passed, plus the end-of-day close-out.
pub const INTRADAY_COST_LEGS: f64 = 85.0;

impl CostConfig {
    pub fn daily_default() -> Self {
        CostConfig {
            spread_per_flip: 1e-4,
            direct: 4e-4,
            participation: 1e-4,
            adv_window: 90,
        }
    }

    pub fn intraday_default() -> Self {
        CostConfig {
            spread_per_flip: 0.0020 / INTRADAY_COST_LEGS,
            direct: 0.0070 / INTRADAY_COST_LEGS,
            participation: 0.0070 / INTRADAY_COST_LEGS,
            adv_window: 5,
        }
    }
}

/// The scalar cost operator itself: `m_flips * spread + sigma * sqrt(n / adv)`.
pub fn transaction_cost(
    m_flips: usize,
    sigma: f64,
    n_shares: f64,
    adv: f64,
    cfg: &CostConfig,
) -> f64 {
    let impact = if adv > 0.0 && n_shares > 0.0 {
        sigma * (n_shares / adv).sqrt()
    } else {
        0.0
    };
    m_flips as f64 * cfg.spread_per_flip + impact
}

/// Count strict sign reversals between consecutive weight vectors. Going
/// flat (or starting from flat) is not a reversal; only a crossing from
/// long to short or back pays the spread.
pub fn flip_count(prev: &[f64], next: &[f64]) -> usize {
    prev.iter()
        .zip(next)
        .filter(|(&p, &n)| (p > 0.0 && n < 0.0) || (p < 0.0 && n > 0.0))
        .count()
}

/// Aggregate cost of moving the portfolio's stock weights from `prev` to
/// `next` over one period.
///
/// Impact is charged at the configured participation rate (shares traded
/// are `participation * ADV`, so the volume ratio inside the square root
/// cancels) and averaged over the stocks with a position on either side of
/// the transition; the flat direct cost applies whenever any stock is
/// active. A portfolio that is flat before and after the period costs
/// nothing.
pub fn period_cost(prev: &[f64], next: &[f64], sigmas: &[f64], cfg: &CostConfig) -> f64 {
    debug_assert_eq!(prev.len(), next.len());
    debug_assert_eq!(prev.len(), sigmas.len());
    let active: Vec<usize> = (0..prev.len())
        .filter(|&i| prev[i] != 0.0 || next[i] != 0.0)
        .collect();
    if active.is_empty() {
        return 0.0;
    }
    let spread = flip_count(prev, next) as f64 * cfg.spread_per_flip;
    let impact = active
        .iter()
        .map(|&i| sigmas[i] * cfg.participation.sqrt())
        .sum::<f64>()
        / active.len() as f64;
    spread + impact + cfg.direct
}

/// Sample standard deviation of the trailing `window` closes ending at
/// index `t`, normalized by the latest close. Returns zero until two
/// observations are available.
pub fn trailing_stdev(closes: &[f64], window: usize, t: usize) -> f64 {
    let start = (t + 1).saturating_sub(window);
    let slice = &closes[start..=t];
    if slice.len() < 2 {
        return 0.0;
    }
    let mean = slice.iter().sum::<f64>() / slice.len() as f64;
    let var =
        slice.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (slice.len() - 1) as f64;
    var.sqrt() / closes[t]
}

/// Per-return realized volatility over the day so far:
/// `sqrt(sum of squared log returns / number of returns)`.
pub fn realized_vol(day_closes: &[f64]) -> f64 {
    if day_closes.len() < 2 {
        return 0.0;
    }
    let rv: f64 = day_closes
        .windows(2)
        .map(|w| (w[1] / w[0]).ln().powi(2))
        .sum();
    (rv / (day_closes.len() - 1) as f64).sqrt()
}

/// A fitted GARCH(1,1) and its one-step-ahead variance forecast.
#[derive(Debug, Clone)]
pub struct Garch11Fit {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Forecast variance of the next return.
    pub sigma2_forecast: f64,
    /// Maximized Gaussian log-likelihood (constant terms dropped).
    pub loglik: f64,
    /// True when optimization failed and the fields hold the flat-variance
    /// fallback instead of an MLE.
    pub fallback: bool,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// GARCH log-likelihood and terminal variance for demeaned returns, with
/// the recursion seeded at the sample variance.
fn garch_loglik(returns: &[f64], omega: f64, alpha: f64, beta: f64) -> (f64, f64) {
    let sample_var =
        returns.iter().map(|r| r * r).sum::<f64>() / returns.len() as f64;
    let mut sigma2 = sample_var.max(1e-18);
    let mut ll = 0.0;
    for &r in returns {
        ll += -0.5 * (sigma2.ln() + r * r / sigma2);
        sigma2 = omega + alpha * r * r + beta * sigma2;
    }
    (ll, sigma2)
}

/// Fit a GARCH(1,1) to `returns` by maximum likelihood and forecast the
/// next period's variance.
///
/// Returns are demeaned first. The optimizer works in an unconstrained
/// parameterization — `omega = exp(a)`, persistence `alpha + beta =
/// sigmoid(p)`, and the ARCH share `alpha / (alpha + beta) = sigmoid(q)` —
/// so positivity and stationarity hold by construction. A degenerate input
/// (fewer than 20 observations or zero variance) or a non-finite optimum
/// falls back to the flat sample variance with `fallback` set.
pub fn garch11_fit_forecast(returns: &[f64]) -> Garch11Fit {
    let n = returns.len();
    let mean = if n > 0 { returns.iter().sum::<f64>() / n as f64 } else { 0.0 };
    let demeaned: Vec<f64> = returns.iter().map(|r| r - mean).collect();
    let sample_var = if n > 0 {
        demeaned.iter().map(|r| r * r).sum::<f64>() / n as f64
    } else {
        0.0
    };

    let fallback = |sample_var: f64| Garch11Fit {
        omega: sample_var,
        alpha: 0.0,
        beta: 0.0,
        sigma2_forecast: sample_var,
        loglik: f64::NAN,
        fallback: true,
    };
    if n < 20 || sample_var <= 0.0 || !sample_var.is_finite() {
        return fallback(sample_var.max(0.0));
    }

    let objective = |x: &[f64]| -> f64 {
        let omega = x[0].exp();
        let persistence = sigmoid(x[1]);
        let share = sigmoid(x[2]);
        let alpha = persistence * share;
        let beta = persistence * (1.0 - share);
        -garch_loglik(&demeaned, omega, alpha, beta).0
    };

    // Typical equity calibration (persistence 0.9, ARCH share 0.1) and a
    // near-constant-variance start; keep whichever fit is better.
    let logit = |p: f64| (p / (1.0 - p)).ln();
    let starts = [
        vec![(0.1 * sample_var).ln(), logit(0.9), logit(0.1)],
        vec![(0.9 * sample_var).ln(), logit(0.1), logit(0.5)],
    ];
    let mut best: Option<crate::optim::NmResult> = None;
    for start in &starts {
        let r = nelder_mead_restarts(objective, start, &[0.5, 0.5, 0.5], NmOptions::default(), 3);
        if best.as_ref().map_or(true, |b| r.fx < b.fx) {
            best = Some(r);
        }
    }
    let best = best.unwrap();
    if !best.fx.is_finite() {
        return fallback(sample_var);
    }

    let omega = best.x[0].exp();
    let persistence = sigmoid(best.x[1]);
    let share = sigmoid(best.x[2]);
    let alpha = persistence * share;
    let beta = persistence * (1.0 - share);
    let (loglik, sigma2_forecast) = garch_loglik(&demeaned, omega, alpha, beta);
    if !sigma2_forecast.is_finite() || sigma2_forecast <= 0.0 {
        return fallback(sample_var);
    }
    Garch11Fit { omega, alpha, beta, sigma2_forecast, loglik, fallback: false }
}
