//! Zero-cost portfolio strategies that trade directly in weight space.
//!
//! Three strategies complement the rule-based signal generators: a
//! mean-variance optimal zero-cost portfolio, its contrarian mirror, and a
//! lagged-correlation reversal strategy. Each consumes a trailing window of
//! price relatives for one asset cluster and emits stock weights that sum
//! to zero with absolute sum at most one; the risk-free leg of these
//! strategies is always flat.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Self-financing portfolio controls: per-stock weights plus the risk-free
/// weight. Invariants maintained by every producer in this crate:
/// `sum(stocks) + risk_free = 0` and `sum(|stocks|) + |risk_free| <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlVector {
    pub stocks: Vec<f64>,
    pub risk_free: f64,
}

impl ControlVector {
    pub fn zero(n_stocks: usize) -> Self {
        ControlVector {
            stocks: vec![0.0; n_stocks],
            risk_free: 0.0,
        }
    }

    /// Net exposure across stocks and the risk-free leg; zero for a
    /// self-financing portfolio.
    pub fn net_exposure(&self) -> f64 {
        self.stocks.iter().sum::<f64>() + self.risk_free
    }

    /// Gross exposure (absolute-value sum including the risk-free leg).
    pub fn leverage(&self) -> f64 {
        self.stocks.iter().map(|w| w.abs()).sum::<f64>() + self.risk_free.abs()
    }

    pub fn is_zero(&self) -> bool {
        self.risk_free == 0.0 && self.stocks.iter().all(|w| *w == 0.0)
    }

    /// Scale every weight in place (used for the unit-leverage cap).
    pub fn scale(&mut self, k: f64) {
        for w in &mut self.stocks {
            *w *= k;
        }
        self.risk_free *= k;
    }
}

/// The three weight-space strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyRule {
    /// Zero-cost best constant rebalanced portfolio: mean-variance optimal
    /// long/short weights from the trailing window.
    ZBcrp,
    /// Same construction with the expected returns negated.
    AntiZBcrp,
    /// Lagged-correlation reversal: moves weight from recent winners to
    /// losers they are positively cross-correlated with.
    ZAnticor,
}

impl StrategyRule {
    pub const ALL: [StrategyRule; 3] = [
        StrategyRule::ZBcrp,
        StrategyRule::AntiZBcrp,
        StrategyRule::ZAnticor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyRule::ZBcrp => "z-bcrp",
            StrategyRule::AntiZBcrp => "anti-z-bcrp",
            StrategyRule::ZAnticor => "z-anticor",
        }
    }

    /// Rows of the relatives window the strategy needs before it activates
    /// for look-back `ell`.
    pub fn min_window(self, ell: usize) -> usize {
        match self {
            StrategyRule::ZBcrp | StrategyRule::AntiZBcrp => ell.max(2),
            StrategyRule::ZAnticor => 2 * ell,
        }
    }
}

/// Ridge added to a return covariance before inversion, scaled to the
/// average variance so short windows (fewer rows than assets) stay solvable.
const COV_RIDGE: f64 = 1e-8;

/// Mean-variance optimal zero-cost weights from a window of price
/// relatives (`window[row][asset]`, oldest first). The self-financing
/// optimum is the inverse-covariance image of the expected returns with
/// their grand projection removed; the risk-aversion scale is chosen so the
/// weights have unit absolute sum. Degenerate windows (no dispersion, or no
/// cross-sectional mean spread) give the zero vector.
pub fn z_bcrp(window: &[Vec<f64>]) -> Vec<f64> {
    zero_cost_mv(window, false)
}

/// Contrarian mirror of [`z_bcrp`]: identical construction with expected
/// returns negated, hence exactly the negated weights.
pub fn anti_z_bcrp(window: &[Vec<f64>]) -> Vec<f64> {
    zero_cost_mv(window, true)
}

fn zero_cost_mv(window: &[Vec<f64>], contrarian: bool) -> Vec<f64> {
    let rows = window.len();
    if rows < 2 {
        return window.first().map(|r| vec![0.0; r.len()]).unwrap_or_default();
    }
    let k = window[0].len();

    // Net returns per row; column means and sample covariance.
    let mut mean = vec![0.0; k];
    for row in window {
        for (i, &x) in row.iter().enumerate() {
            mean[i] += x - 1.0;
        }
    }
    for m in &mut mean {
        *m /= rows as f64;
    }
    let mut cov = DMatrix::<f64>::zeros(k, k);
    for row in window {
        for i in 0..k {
            let di = (row[i] - 1.0) - mean[i];
            for j in 0..k {
                let dj = (row[j] - 1.0) - mean[j];
                cov[(i, j)] += di * dj;
            }
        }
    }
    cov /= rows as f64 - 1.0;

    let trace: f64 = (0..k).map(|i| cov[(i, i)]).sum();
    if trace <= 0.0 {
        // No dispersion anywhere in the window: no basis for a bet.
        return vec![0.0; k];
    }
    let ridge = COV_RIDGE * trace / k as f64;
    for i in 0..k {
        cov[(i, i)] += ridge;
    }

    let sign = if contrarian { -1.0 } else { 1.0 };
    let mu = DVector::from_iterator(k, mean.iter().map(|&m| sign * m));
    let ones = DVector::from_element(k, 1.0);
    let chol = match cov.clone().cholesky() {
        Some(c) => c,
        None => return vec![0.0; k],
    };
    let cov_inv_mu = chol.solve(&mu);
    let cov_inv_ones = chol.solve(&ones);
    let denom = ones.dot(&cov_inv_ones);
    if denom <= 0.0 || !denom.is_finite() {
        return vec![0.0; k];
    }
    let shift = ones.dot(&cov_inv_mu) / denom;
    let active = cov_inv_mu - cov_inv_ones * shift;

    let gross: f64 = active.iter().map(|w| w.abs()).sum();
    if gross < 1e-12 || !gross.is_finite() {
        return vec![0.0; k];
    }
    // The ones-projection is zero-sum only in exact arithmetic; a badly
    // conditioned covariance leaves a visible residual in the solve, so
    // centre once more before scaling to keep the cash leg at machine scale.
    let mut weights: Vec<f64> = active.iter().copied().collect();
    renormalize_weights(&mut weights);
    weights
}

/// Lagged-correlation reversal weights. `window` holds exactly `2 * ell`
/// rows of price relatives (oldest first) split into two adjacent
/// `ell`-row windows; `prev` is the strategy's current stock weights for
/// the same assets. Weight moves from each recent outperformer to every
/// underperformer it is positively lag-correlated with, one third of the
/// claim per pair, and the result is re-centred and renormalised to unit
/// absolute sum. Returns the zero vector when nothing is claimable and
/// `prev` carries no exposure.
pub fn z_anticor(window: &[Vec<f64>], ell: usize, prev: &[f64]) -> Vec<f64> {
    let k = prev.len();
    if ell < 2 || window.len() != 2 * ell {
        return vec![0.0; k];
    }

    // Log-returns of the two adjacent windows.
    let log_win = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| r.iter().map(|&x| x.ln()).collect())
            .collect()
    };
    let w1 = log_win(&window[..ell]);
    let w2 = log_win(&window[ell..]);

    let col_stats = |w: &[Vec<f64>]| -> (Vec<f64>, Vec<f64>) {
        let mut mean = vec![0.0; k];
        for row in w {
            for (i, &v) in row.iter().enumerate() {
                mean[i] += v;
            }
        }
        for m in &mut mean {
            *m /= ell as f64;
        }
        let mut sd = vec![0.0; k];
        for row in w {
            for (i, &v) in row.iter().enumerate() {
                sd[i] += (v - mean[i]).powi(2);
            }
        }
        for s in &mut sd {
            *s = (*s / (ell as f64 - 1.0)).sqrt();
        }
        (mean, sd)
    };
    let (mu1, sd1) = col_stats(&w1);
    let (mu2, sd2) = col_stats(&w2);

    // Lagged cross-covariance and correlation between the two windows;
    // either window flat in an asset zeroes its correlations.
    let mut corr = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            if sd1[i] == 0.0 || sd2[j] == 0.0 {
                continue;
            }
            let mut cov = 0.0;
            for r in 0..ell {
                cov += (w1[r][i] - mu1[i]) * (w2[r][j] - mu2[j]);
            }
            cov /= ell as f64 - 1.0;
            corr[i][j] = cov / (sd1[i] * sd2[j]);
        }
    }

    // Winners (higher recent mean log-return) surrender a third of each
    // claim to the losers they positively lead.
    let mut h: Vec<f64> = prev.to_vec();
    for i in 0..k {
        for j in 0..k {
            if i == j || mu2[i] <= mu2[j] || corr[i][j] <= 0.0 {
                continue;
            }
            let claim =
                corr[i][j] + (-corr[i][i]).max(0.0) + (-corr[j][j]).max(0.0);
            let transfer = claim / 3.0;
            h[i] -= transfer;
            h[j] += transfer;
        }
    }

    renormalize_weights(&mut h);
    h
}

/// Centre to zero net weight, then scale to unit absolute sum; all-equal
/// input collapses to the zero vector.
pub fn renormalize_weights(weights: &mut [f64]) {
    let k = weights.len();
    if k == 0 {
        return;
    }
    let mean = weights.iter().sum::<f64>() / k as f64;
    for w in weights.iter_mut() {
        *w -= mean;
    }
    let gross: f64 = weights.iter().map(|w| w.abs()).sum();
    if gross == 0.0 || !gross.is_finite() {
        weights.iter_mut().for_each(|w| *w = 0.0);
        return;
    }
    for w in weights.iter_mut() {
        *w /= gross;
    }
}
