//! Machine-readable run artifacts.
//!
//! Everything a run leaves on disk comes through here: the ledger and
//! expert-wealth CSVs, the per-rule performance summary, histogram tables
//! for simulated test statistics, and the manifest that pins config hash,
//! seed, and version so a run can be reproduced bit for bit. Plotting is
//! deliberately out of scope — these are inputs for external tooling.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use chrono::NaiveDateTime;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::experts::ExpertSpec;
use crate::learner::{BacktestOutput, Ledger, LedgerRow};

const TIMESTAMP_FMT: &str = "%Y-%m-%dT%H:%M:%S";

/// Write the ledger as CSV, one row per period including the initial row.
/// `benchmark` appends a constant-rebalanced benchmark wealth column of the
/// same length.
pub fn write_ledger_csv(path: &Path, ledger: &Ledger, benchmark: Option<&[f64]>) -> Result<()> {
    if let Some(b) = benchmark {
        if b.len() != ledger.rows.len() {
            return Err(Error::Input(format!(
                "benchmark column has {} rows, ledger has {}",
                b.len(),
                ledger.rows.len()
            )));
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["period", "timestamp", "wealth", "pl", "cost", "n_active_experts"];
    if benchmark.is_some() {
        header.push("bcrp");
    }
    w.write_record(&header)?;
    for (i, row) in ledger.rows.iter().enumerate() {
        let mut record = vec![
            row.period.to_string(),
            row.timestamp.format(TIMESTAMP_FMT).to_string(),
            row.wealth.to_string(),
            row.pl.to_string(),
            row.cost.to_string(),
            row.n_active.to_string(),
        ];
        if let Some(b) = benchmark {
            record.push(b[i].to_string());
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(Error::Io)?;
    Ok(())
}

/// Read a ledger CSV back; extra columns (such as the benchmark) are
/// ignored.
pub fn read_ledger_csv(path: &Path) -> Result<Ledger> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Input(format!("ledger CSV missing column '{name}'")))
    };
    let (c_period, c_ts, c_wealth, c_pl, c_cost, c_active) = (
        col("period")?,
        col("timestamp")?,
        col("wealth")?,
        col("pl")?,
        col("cost")?,
        col("n_active_experts")?,
    );
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let num = |c: usize| -> Result<f64> {
            field(c)
                .parse()
                .map_err(|_| Error::Input(format!("ledger row {i}: bad number '{}'", field(c))))
        };
        rows.push(LedgerRow {
            period: num(c_period)? as usize,
            timestamp: NaiveDateTime::parse_from_str(field(c_ts), TIMESTAMP_FMT)
                .map_err(|e| Error::Input(format!("ledger row {i}: bad timestamp: {e}")))?,
            wealth: num(c_wealth)?,
            pl: num(c_pl)?,
            cost: num(c_cost)?,
            n_active: num(c_active)? as usize,
        });
    }
    if rows.is_empty() {
        return Err(Error::Input("ledger CSV has no rows".into()));
    }
    Ok(Ledger { rows })
}

/// Write per-expert compounded cost-free wealth, one row per ledger period.
///
/// Needs a run with expert history enabled. Wealth is the cumulative
/// product of per-leg relatives, i.e. the expert's stream compounded
/// without the fused driver's daily resets.
pub fn write_expert_wealth_csv(path: &Path, output: &BacktestOutput) -> Result<()> {
    let relatives = output
        .expert_leg_relatives
        .as_ref()
        .ok_or_else(|| Error::Config("expert wealth CSV needs expert history enabled".into()))?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["period".to_string(), "timestamp".to_string()];
    header.extend(output.expert_ids.iter().cloned());
    w.write_record(&header)?;
    let mut wealth = vec![1.0f64; output.expert_ids.len()];
    for (i, row) in output.ledger.rows.iter().enumerate() {
        if i > 0 {
            for (v, rel) in wealth.iter_mut().zip(&relatives[i - 1]) {
                *v *= rel;
            }
        }
        let mut record = vec![row.period.to_string(), row.timestamp.format(TIMESTAMP_FMT).to_string()];
        record.extend(wealth.iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush().map_err(Error::Io)?;
    Ok(())
}

/// Mean/stdev/min/max of a sample.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub stdev: f64,
    pub min: f64,
    pub max: f64,
}

fn summary_stats(values: &[f64]) -> Option<SummaryStats> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let stdev = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Some(SummaryStats { mean, stdev, min, max })
}

/// Performance of all experts sharing one trading rule.
#[derive(Debug, Clone, Serialize)]
pub struct RuleGroupSummary {
    pub rule: String,
    pub n_experts: usize,
    pub terminal_wealth: SummaryStats,
    /// Stats over per-period expert returns pooled across the group's
    /// experts and all legs; absent when the run kept no expert history.
    pub period_pl: Option<SummaryStats>,
}

/// Group expert performance by trading rule, in rule-enumeration order.
pub fn strategy_group_summary(
    specs: &[ExpertSpec],
    output: &BacktestOutput,
) -> Result<Vec<RuleGroupSummary>> {
    if specs.len() != output.expert_wealth.len() {
        return Err(Error::Input("spec list does not match the run's expert count".into()));
    }
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let name = spec.rule.name().to_string();
        match groups.iter_mut().find(|(n, _)| *n == name) {
            Some((_, members)) => members.push(i),
            None => groups.push((name, vec![i])),
        }
    }
    let mut out = Vec::with_capacity(groups.len());
    for (rule, members) in groups {
        let terminal: Vec<f64> = members.iter().map(|&i| output.expert_wealth[i]).collect();
        let period_pl = output.expert_leg_relatives.as_ref().and_then(|history| {
            let pooled: Vec<f64> = history
                .iter()
                .flat_map(|leg| members.iter().map(|&i| leg[i] - 1.0))
                .collect();
            summary_stats(&pooled)
        });
        out.push(RuleGroupSummary {
            rule,
            n_experts: members.len(),
            terminal_wealth: summary_stats(&terminal).expect("group is non-empty"),
            period_pl,
        });
    }
    Ok(out)
}

/// Write the per-rule summary table as CSV.
pub fn write_summary_csv(path: &Path, summary: &[RuleGroupSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "rule",
        "n_experts",
        "terminal_mean",
        "terminal_stdev",
        "terminal_min",
        "terminal_max",
        "pl_mean",
        "pl_stdev",
        "pl_min",
        "pl_max",
    ])?;
    for g in summary {
        let t = g.terminal_wealth;
        let pl = |f: fn(&SummaryStats) -> f64| {
            g.period_pl.as_ref().map_or(String::new(), |s| f(s).to_string())
        };
        w.write_record([
            g.rule.clone(),
            g.n_experts.to_string(),
            t.mean.to_string(),
            t.stdev.to_string(),
            t.min.to_string(),
            t.max.to_string(),
            pl(|s| s.mean),
            pl(|s| s.stdev),
            pl(|s| s.min),
            pl(|s| s.max),
        ])?;
    }
    w.flush().map_err(Error::Io)?;
    Ok(())
}

/// One histogram bin over `[lo, hi)`; the last bin also includes its upper
/// edge.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width histogram over the sample range. A degenerate sample (all
/// values equal) collapses to a single bin.
pub fn histogram(samples: &[f64], n_bins: usize) -> Result<Vec<HistogramBin>> {
    if samples.is_empty() || n_bins == 0 {
        return Err(Error::Input("histogram needs samples and at least one bin".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("histogram values must be finite".into()));
    }
    let min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Ok(vec![HistogramBin { lo: min, hi: max, count: samples.len() }]);
    }
    let width = (max - min) / n_bins as f64;
    let mut bins: Vec<HistogramBin> = (0..n_bins)
        .map(|i| HistogramBin {
            lo: min + i as f64 * width,
            hi: min + (i + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for &v in samples {
        let idx = (((v - min) / width) as usize).min(n_bins - 1);
        bins[idx].count += 1;
    }
    Ok(bins)
}

/// Write histogram bins as CSV (`lo,hi,count`).
pub fn write_histogram_csv(path: &Path, bins: &[HistogramBin]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["lo", "hi", "count"])?;
    for b in bins {
        w.write_record([b.lo.to_string(), b.hi.to_string(), b.count.to_string()])?;
    }
    w.flush().map_err(Error::Io)?;
    Ok(())
}

/// Serialize any report value as pretty-printed JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::Computation(format!("JSON serialization failed: {e}")))?;
    w.write_all(b"\n").map_err(Error::Io)?;
    w.flush().map_err(Error::Io)?;
    Ok(())
}

/// FNV-1a 64-bit hash; fingerprints the canonical config text.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Wall-clock seconds spent in one pipeline stage.
#[derive(Debug, Clone, Serialize)]
pub struct TimingEntry {
    pub label: String,
    pub seconds: f64,
}

/// Reproducibility record written next to every command's outputs: rerun
/// the same version with the same config and seed and the artifacts match
/// bit for bit.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    /// FNV-1a hash of the effective config serialization, in hex.
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub generated_at: String,
    pub timings: Vec<TimingEntry>,
}

impl Manifest {
    pub fn new(config_text: &str, seed: u64) -> Manifest {
        Manifest {
            config_hash: format!("{:016x}", fnv1a64(config_text.as_bytes())),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            generated_at: chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            timings: Vec::new(),
        }
    }

    pub fn push_timing(&mut self, label: &str, seconds: f64) {
        self.timings.push(TimingEntry { label: label.to_string(), seconds });
    }
}
