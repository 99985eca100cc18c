//! Crate-wide error type.
//!
//! Errors split into two families so callers (notably the CLI) can map them
//! onto distinct exit codes: input problems (malformed files, impossible
//! configuration) and computation problems (optimiser failures, degenerate
//! numerics discovered mid-run).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input data (CSV parse failures, OHLC
    /// violations, calendar problems). Carries enough context to point at
    /// the offending file/line or ticker/day.
    #[error("input error: {0}")]
    Input(String),

    /// Configuration that cannot be satisfied (unknown tickers in a cluster
    /// file, empty grids, windows longer than the data).
    #[error("config error: {0}")]
    Config(String),

    /// A numerical procedure failed: optimiser did not converge, a matrix
    /// was singular beyond repair, a simulated path could not be fitted.
    #[error("computation error: {0}")]
    Computation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for the input/config family; the CLI maps these to exit code 2
    /// and computation/runtime failures to exit code 1.
    pub fn is_input(&self) -> bool {
        matches!(
            self,
            Error::Input(_) | Error::Config(_) | Error::Io(_) | Error::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
