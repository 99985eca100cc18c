//! The expert population: every (rule, cluster, look-back) combination.
//!
//! An expert owns one trading rule restricted to one asset cluster with one
//! parameter choice. Rule-based experts turn retained buy/sell signals into
//! zero-cost controls by loading weight proportionally to trailing
//! volatility on each side; weight-space experts delegate to
//! [`crate::port_strategies`]. Controls always live over the full universe
//! (zeros outside the expert's cluster) plus the risk-free leg.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::{Signal, TechRule};
use crate::market_data::Universe;
use crate::port_strategies::{ControlVector, StrategyRule};

/// Look-back grids shared by the whole population: `n1` for every rule's
/// short (or only) window, `n2` for the long window of two-parameter rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub n1: Vec<usize>,
    pub n2: Vec<usize>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            n1: vec![4, 8, 12, 16, 20],
            n2: vec![24, 32, 40, 48],
        }
    }
}

impl Grid {
    pub fn validate(&self) -> Result<()> {
        if self.n1.is_empty() {
            return Err(Error::Config("grid n1 must not be empty".into()));
        }
        for group in [&self.n1, &self.n2] {
            for w in group.windows(2) {
                if w[1] <= w[0] {
                    return Err(Error::Config(
                        "grid windows must be strictly increasing".into(),
                    ));
                }
            }
        }
        if self.n1.iter().any(|&n| n == 0) || self.n2.iter().any(|&n| n == 0) {
            return Err(Error::Config("grid windows must be positive".into()));
        }
        Ok(())
    }

    /// Valid (short, long) pairs for two-parameter rules.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for &a in &self.n1 {
            for &b in &self.n2 {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

/// Any of the seventeen expert-generating rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuleKind {
    Tech(TechRule),
    Strategy(StrategyRule),
}

impl RuleKind {
    /// All rules in enumeration order: the fourteen technical rules, then
    /// the three weight-space strategies.
    pub fn all() -> Vec<RuleKind> {
        TechRule::ALL
            .into_iter()
            .map(RuleKind::Tech)
            .chain(StrategyRule::ALL.into_iter().map(RuleKind::Strategy))
            .collect()
    }

    pub fn arity(self) -> usize {
        match self {
            RuleKind::Tech(r) => r.arity(),
            RuleKind::Strategy(_) => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RuleKind::Tech(r) => r.name(),
            RuleKind::Strategy(s) => s.name(),
        }
    }
}

/// One expert: a rule bound to a cluster and a parameter choice. `n2` is
/// zero for one-parameter rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertSpec {
    pub rule: RuleKind,
    pub cluster: usize,
    pub n1: usize,
    pub n2: usize,
}

impl ExpertSpec {
    pub fn id(&self, universe: &Universe) -> String {
        let cluster = &universe.clusters[self.cluster].name;
        if self.rule.arity() == 2 {
            format!("{}/{}/{}-{}", self.rule.name(), cluster, self.n1, self.n2)
        } else {
            format!("{}/{}/{}", self.rule.name(), cluster, self.n1)
        }
    }
}

/// Enumerate the full population in deterministic order: clusters in
/// universe order, rules in [`RuleKind::all`] order, parameters ascending.
/// Population size is `C * L * W1 + C * W2 * |pairs|` (C clusters, L short
/// windows, W1 one-parameter rules, W2 two-parameter rules).
pub fn enumerate_experts(universe: &Universe, grid: &Grid) -> Result<Vec<ExpertSpec>> {
    grid.validate()?;
    let pairs = grid.pairs();
    let mut out = Vec::new();
    for cluster in 0..universe.clusters.len() {
        for rule in RuleKind::all() {
            if rule.arity() == 1 {
                for &n1 in &grid.n1 {
                    out.push(ExpertSpec { rule, cluster, n1, n2: 0 });
                }
            } else {
                for &(n1, n2) in &pairs {
                    out.push(ExpertSpec { rule, cluster, n1, n2 });
                }
            }
        }
    }
    Ok(out)
}

/// Carry non-hold signals forward: an expert stays positioned until its
/// rule emits the opposite signal.
pub fn retain_signals(prev: &[Signal], raw: &[Signal]) -> Vec<Signal> {
    prev.iter()
        .zip(raw)
        .map(|(&p, &r)| if r.is_hold() { p } else { r })
        .collect()
}

/// Volatility-loaded conversion of signals to self-financing controls.
///
/// Buys share a long pocket of 0.5 and sells a short pocket of 0.5, each
/// allocated proportionally to the assets' volatilities (equal weights when
/// every volatility on a side is zero); the risk-free leg balances the net
/// stock exposure to zero. All-hold input returns the zero vector.
pub fn signals_to_controls(signals: &[Signal], vols: &[f64]) -> ControlVector {
    assert_eq!(signals.len(), vols.len());
    let buys: Vec<usize> = (0..signals.len()).filter(|&i| signals[i] == Signal::Buy).collect();
    let sells: Vec<usize> = (0..signals.len()).filter(|&i| signals[i] == Signal::Sell).collect();
    if buys.is_empty() && sells.is_empty() {
        return ControlVector::zero(signals.len());
    }

    let mut stocks = vec![0.0; signals.len()];
    let mut load_side = |idxs: &[usize], sign: f64| {
        if idxs.is_empty() {
            return;
        }
        let total: f64 = idxs.iter().map(|&i| vols[i]).sum();
        if total > 0.0 {
            for &i in idxs {
                stocks[i] = sign * 0.5 * vols[i] / total;
            }
        } else {
            for &i in idxs {
                stocks[i] = sign * 0.5 / idxs.len() as f64;
            }
        }
    };
    load_side(&buys, 1.0);
    load_side(&sells, -1.0);

    let risk_free = -stocks.iter().sum::<f64>();
    ControlVector { stocks, risk_free }
}

/// Gross one-period wealth relative of a control vector:
/// `sum_i h_i (x_i - 1) + h_rf (x_rf - 1) + 1`.
pub fn wealth_relative(controls: &ControlVector, relatives: &[f64], rf_relative: f64) -> f64 {
    debug_assert_eq!(controls.stocks.len(), relatives.len());
    let stock_pnl: f64 = controls
        .stocks
        .iter()
        .zip(relatives)
        .map(|(h, x)| h * (x - 1.0))
        .sum();
    stock_pnl + controls.risk_free * (rf_relative - 1.0) + 1.0
}

/// Embed cluster-level stock weights into a full-universe control vector.
pub fn embed_cluster(
    n_assets: usize,
    members: &[usize],
    cluster_weights: &[f64],
    risk_free: f64,
) -> ControlVector {
    let mut stocks = vec![0.0; n_assets];
    for (&asset, &w) in members.iter().zip(cluster_weights) {
        stocks[asset] = w;
    }
    ControlVector { stocks, risk_free }
}
