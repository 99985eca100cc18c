//! Run configuration.
//!
//! One TOML file pins everything a run depends on — data paths, trading
//! mode, expert grids, the cost model, test and overfit settings, seed and
//! output directory — so that (config, seed) reproduces a run bit for bit.
//! Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::costs::CostConfig;
use crate::error::{Error, Result};
use crate::experts::Grid;
use crate::statarb::ModelKind;

/// Trading mode: daily closes only, or intraday bars fused with the daily
/// stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Daily,
    Intraday,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Daily OHLCV CSV (`timestamp,ticker,open,high,low,close,volume`).
    pub prices: PathBuf,
    /// Intraday OHLCV CSV; required in intraday mode.
    #[serde(default)]
    pub intraday_prices: Option<PathBuf>,
    /// Risk-free index levels CSV (`date,level`); flat 1.0 when absent.
    #[serde(default)]
    pub risk_free: Option<PathBuf>,
    /// Cluster definition TOML; single all-asset cluster when absent.
    #[serde(default)]
    pub clusters: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertConfig {
    pub n1: Vec<usize>,
    pub n2: Vec<usize>,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        let grid = Grid::default();
        ExpertConfig { n1: grid.n1, n2: grid.n2 }
    }
}

impl ExpertConfig {
    pub fn grid(&self) -> Grid {
        Grid { n1: self.n1.clone(), n2: self.n2.clone() }
    }
}

/// Cost model section; unset fields fall back to the mode's defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSection {
    pub enabled: bool,
    pub spread_per_flip: Option<f64>,
    pub direct: Option<f64>,
    pub participation: Option<f64>,
    pub adv_window: Option<usize>,
}

impl Default for CostSection {
    fn default() -> Self {
        CostSection {
            enabled: true,
            spread_per_flip: None,
            direct: None,
            participation: None,
            adv_window: None,
        }
    }
}

impl CostSection {
    /// The effective cost model for `mode`, `None` when costs are disabled.
    pub fn resolve(&self, mode: Mode) -> Option<CostConfig> {
        if !self.enabled {
            return None;
        }
        let mut cfg = match mode {
            Mode::Daily => CostConfig::daily_default(),
            Mode::Intraday => CostConfig::intraday_default(),
        };
        if let Some(v) = self.spread_per_flip {
            cfg.spread_per_flip = v;
        }
        if let Some(v) = self.direct {
            cfg.direct = v;
        }
        if let Some(v) = self.participation {
            cfg.participation = v;
        }
        if let Some(v) = self.adv_window {
            cfg.adv_window = v;
        }
        Some(cfg)
    }
}

/// Statistical-arbitrage test settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TestConfig {
    pub alpha: f64,
    pub n_sims: usize,
    /// First profit increment of the tested window (periods into the run).
    pub window_start: usize,
    pub window_length: usize,
    /// `"cm"` (constrained mean) or `"um"` (unconstrained mean).
    pub model: String,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            alpha: 0.05,
            n_sims: 5000,
            window_start: 30,
            window_length: 400,
            model: "cm".into(),
        }
    }
}

impl TestConfig {
    pub fn model_kind(&self) -> Result<ModelKind> {
        match self.model.as_str() {
            "cm" => Ok(ModelKind::ConstrainedMean),
            "um" => Ok(ModelKind::UnconstrainedMean),
            other => Err(Error::Config(format!("unknown test model '{other}' (use cm or um)"))),
        }
    }
}

/// Overfit-estimate settings: trial window length and CSCV chunk count.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PboConfig {
    pub t_bl: usize,
    pub s_chunks: usize,
    pub metric: String,
}

impl Default for PboConfig {
    fn default() -> Self {
        PboConfig { t_bl: 60, s_chunks: 16, metric: "sharpe".into() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub mode: Mode,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub vol_window: usize,
    /// Write the per-expert wealth trajectory CSV (adds memory per leg).
    pub expert_history: bool,
    /// Sample budget of the Monte Carlo benchmark portfolio.
    pub bcrp_samples: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            mode: Mode::Daily,
            seed: 7,
            out_dir: PathBuf::from("out"),
            vol_window: 90,
            expert_history: false,
            bcrp_samples: 5000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub experts: ExpertConfig,
    #[serde(default)]
    pub costs: CostSection,
    #[serde(default)]
    pub test: TestConfig,
    #[serde(default)]
    pub pbo: PboConfig,
    #[serde(default)]
    pub run: RunSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))
    }

    /// Resolve the config's relative paths against `base` (the config
    /// file's directory), leaving absolute paths alone. The output
    /// directory is intentionally left relative to the working directory.
    pub fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        resolve(&mut self.data.prices);
        if let Some(p) = &mut self.data.intraday_prices {
            resolve(p);
        }
        if let Some(p) = &mut self.data.risk_free {
            resolve(p);
        }
        if let Some(p) = &mut self.data.clusters {
            resolve(p);
        }
    }

    /// Check internal consistency and that every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        let exists = |p: &Path| -> Result<()> {
            if p.is_file() {
                Ok(())
            } else {
                Err(Error::Input(format!("data file not found: {}", p.display())))
            }
        };
        exists(&self.data.prices)?;
        if self.run.mode == Mode::Intraday {
            let p = self
                .data
                .intraday_prices
                .as_ref()
                .ok_or_else(|| Error::Config("intraday mode needs data.intraday_prices".into()))?;
            exists(p)?;
        }
        if let Some(p) = &self.data.risk_free {
            exists(p)?;
        }
        if let Some(p) = &self.data.clusters {
            exists(p)?;
        }
        self.experts.grid().validate()?;
        self.test.model_kind()?;
        if !(self.test.alpha > 0.0 && self.test.alpha < 1.0) {
            return Err(Error::Config("test.alpha must be inside (0, 1)".into()));
        }
        if self.test.n_sims == 0 {
            return Err(Error::Config("test.n_sims must be positive".into()));
        }
        if self.pbo.t_bl < 2 {
            return Err(Error::Config("pbo.t_bl must be at least 2".into()));
        }
        if self.pbo.s_chunks < 2 || self.pbo.s_chunks % 2 != 0 {
            return Err(Error::Config("pbo.s_chunks must be even and at least 2".into()));
        }
        if self.pbo.metric != "sharpe" {
            return Err(Error::Config(format!(
                "unknown pbo.metric '{}' (only sharpe is supported)",
                self.pbo.metric
            )));
        }
        if self.run.vol_window < 2 {
            return Err(Error::Config("run.vol_window must be at least 2".into()));
        }
        if self.run.bcrp_samples == 0 {
            return Err(Error::Config("run.bcrp_samples must be positive".into()));
        }
        Ok(())
    }

    /// Canonical serialization of the effective config; the manifest hashes
    /// this.
    pub fn canonical_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Load, path-resolve, and validate a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read config {}: {e}", path.display())))?;
    let mut config = RunConfig::parse(&text)?;
    if let Some(base) = path.parent() {
        config.resolve_paths(base);
    }
    config.validate()?;
    Ok(config)
}
