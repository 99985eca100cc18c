//! Backtesting and inference engine for populations of technical-trading
//! experts.
//!
//! The crate is organised as a pipeline:
//!
//! 1. [`market_data`] loads and validates OHLCV bars, builds the stock
//!    universe and its sector clusters, and derives price relatives.
//! 2. [`indicators`] turns bar histories into buy/sell/hold signals for the
//!    fourteen technical trading rules.
//! 3. [`port_strategies`] contributes the three zero-cost portfolio
//!    strategies (mean-variance, contrarian mean-variance, and lagged-
//!    correlation reversal) that trade directly in weight space.
//! 4. [`experts`] enumerates the expert population over (rule, cluster,
//!    look-back) combinations and converts signals into zero-cost,
//!    unit-leverage control vectors.
//! 5. [`learner`] aggregates expert controls online from their realised
//!    wealth and produces the master portfolio ledger, on daily data or on
//!    fused intraday/daily data.
//! 6. [`costs`] estimates per-period transaction costs (spread, market
//!    impact, direct costs) and the volatility inputs they need.
//! 7. [`statarb`] fits the constrained-mean profit model to a ledger and
//!    runs the Min-t statistical-arbitrage test with Monte Carlo critical
//!    values.
//! 8. [`pbo`] estimates the probability of backtest overfitting by
//!    combinatorially symmetric cross-validation.
//!
//! Everything downstream of data loading is deterministic given a seed:
//! Monte Carlo stages take explicit RNG seeds and parallel reductions are
//! ordered, so repeated runs produce bit-identical artefacts.

pub mod config;
pub mod costs;
pub mod error;
pub mod experts;
pub mod indicators;
pub mod learner;
pub mod market_data;
pub mod optim;
pub mod pbo;
pub mod port_strategies;
pub mod report;
pub mod statarb;

pub use error::{Error, Result};
