//! OHLCV ingestion, calendar alignment, and universe construction.
//!
//! Input files are long-format CSV (`timestamp,ticker,open,high,low,close,
//! volume`, ISO-8601 timestamps). The loader validates every row, aligns all
//! tickers onto the union bar calendar, drops thinly traded names, and
//! forward-fills the remaining gaps so downstream code can treat the data as
//! a dense period × asset panel. Intraday files are additionally required to
//! expose a fixed number of bars on every trading day.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use serde::Deserialize;

use crate::error::{Error, Result};

/// Bar frequency of a loaded panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frequency {
    Daily,
    /// Five-minute bars; every trading day must hold exactly
    /// [`LoadOptions::bars_per_day`] bars.
    Intraday,
}

/// A single OHLCV bar.
#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub timestamp: NaiveDateTime,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
    /// True when the bar was synthesised by gap-filling rather than read
    /// from the input file.
    pub gap_fill: bool,
}

/// One ticker's bars, aligned to the panel calendar (same length).
#[derive(Debug, Clone)]
pub struct BarSeries {
    pub ticker: String,
    pub bars: Vec<Bar>,
}

/// Dense, calendar-aligned market data panel.
#[derive(Debug, Clone)]
pub struct MarketData {
    pub frequency: Frequency,
    /// Union bar calendar over all retained tickers, strictly increasing.
    pub calendar: Vec<NaiveDateTime>,
    pub series: Vec<BarSeries>,
}

/// Loader knobs; defaults mirror the production pipeline.
#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub frequency: Frequency,
    /// Tickers present in fewer than this fraction of calendar periods are
    /// dropped before gap-filling.
    pub min_trading_fraction: f64,
    /// Required bar count per trading day for intraday data.
    pub bars_per_day: usize,
}

impl LoadOptions {
    pub fn daily() -> Self {
        LoadOptions {
            frequency: Frequency::Daily,
            min_trading_fraction: 0.6,
            bars_per_day: 0,
        }
    }

    /// 09:15–16:30 in five-minute steps.
    pub fn intraday() -> Self {
        LoadOptions {
            frequency: Frequency::Intraday,
            min_trading_fraction: 0.6,
            bars_per_day: 88,
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawRow {
    timestamp: String,
    ticker: String,
    open: f64,
    high: f64,
    low: f64,
    close: f64,
    volume: f64,
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .ok()
        .or_else(|| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
        })
}

/// Load a long-format OHLCV CSV from `path`.
pub fn load_ohlcv(path: &Path, opts: &LoadOptions) -> Result<MarketData> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    load_ohlcv_reader(file, opts)
}

/// Load OHLCV rows from any reader. Rows may interleave tickers but must be
/// in strictly increasing timestamp order within each ticker.
pub fn load_ohlcv_reader<R: Read>(reader: R, opts: &LoadOptions) -> Result<MarketData> {
    let mut csv_reader = csv::Reader::from_reader(reader);
    // ticker -> (timestamps, bars as read)
    let mut per_ticker: BTreeMap<String, Vec<Bar>> = BTreeMap::new();

    for (idx, record) in csv_reader.deserialize::<RawRow>().enumerate() {
        let line = idx + 2; // header is line 1
        let row = record.map_err(|e| Error::Input(format!("line {line}: {e}")))?;
        let ts = parse_timestamp(&row.timestamp)
            .ok_or_else(|| Error::Input(format!("line {line}: bad timestamp {:?}", row.timestamp)))?;
        validate_row(&row, line)?;
        let bars = per_ticker.entry(row.ticker.clone()).or_default();
        if let Some(last) = bars.last() {
            if ts <= last.timestamp {
                return Err(Error::Input(format!(
                    "line {line}: timestamps for {} not strictly increasing ({} after {})",
                    row.ticker, ts, last.timestamp
                )));
            }
        }
        bars.push(Bar {
            timestamp: ts,
            open: row.open,
            high: row.high,
            low: row.low,
            close: row.close,
            volume: row.volume,
            gap_fill: false,
        });
    }

    if per_ticker.is_empty() {
        return Err(Error::Input("no data rows".into()));
    }

    // Union calendar over everything, used for the liquidity screen.
    let full_calendar: BTreeSet<NaiveDateTime> = per_ticker
        .values()
        .flat_map(|bars| bars.iter().map(|b| b.timestamp))
        .collect();
    let n_periods = full_calendar.len();

    // Drop tickers that trade too rarely, then rebuild the calendar over
    // the survivors so the panel does not carry periods nobody traded.
    let retained: BTreeMap<String, Vec<Bar>> = per_ticker
        .into_iter()
        .filter(|(_, bars)| bars.len() as f64 >= opts.min_trading_fraction * n_periods as f64)
        .collect();
    if retained.is_empty() {
        return Err(Error::Input(format!(
            "all tickers below the {:.0}% trading-fraction threshold",
            opts.min_trading_fraction * 100.0
        )));
    }
    let calendar: Vec<NaiveDateTime> = retained
        .values()
        .flat_map(|bars| bars.iter().map(|b| b.timestamp))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    if opts.frequency == Frequency::Intraday {
        validate_bars_per_day(&calendar, opts.bars_per_day)?;
    }

    // Align each series onto the calendar. Interior and trailing gaps are
    // forward-filled from the last seen close; leading gaps (a name that
    // lists late) are back-filled flat from its first close so relatives
    // are exactly 1 before the listing date.
    let series = retained
        .into_iter()
        .map(|(ticker, bars)| align_series(ticker, bars, &calendar))
        .collect();

    Ok(MarketData {
        frequency: opts.frequency,
        calendar,
        series,
    })
}

fn validate_row(row: &RawRow, line: usize) -> Result<()> {
    let RawRow {
        open,
        high,
        low,
        close,
        volume,
        ..
    } = *row;
    for (name, v) in [("open", open), ("high", high), ("low", low), ("close", close)] {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::Input(format!("line {line}: {name} must be positive, got {v}")));
        }
    }
    if high < low {
        return Err(Error::Input(format!("line {line}: high {high} < low {low}")));
    }
    if high < open.max(close) || low > open.min(close) {
        return Err(Error::Input(format!(
            "line {line}: open/close outside the high/low range"
        )));
    }
    if !volume.is_finite() || volume < 0.0 {
        return Err(Error::Input(format!("line {line}: volume must be >= 0, got {volume}")));
    }
    Ok(())
}

fn validate_bars_per_day(calendar: &[NaiveDateTime], bars_per_day: usize) -> Result<()> {
    let mut counts: BTreeMap<NaiveDate, usize> = BTreeMap::new();
    for ts in calendar {
        *counts.entry(ts.date()).or_default() += 1;
    }
    for (day, count) in counts {
        if count != bars_per_day {
            return Err(Error::Input(format!(
                "intraday day {day} has {count} bars, expected {bars_per_day}"
            )));
        }
    }
    Ok(())
}

fn align_series(ticker: String, bars: Vec<Bar>, calendar: &[NaiveDateTime]) -> BarSeries {
    let by_ts: BTreeMap<NaiveDateTime, Bar> =
        bars.into_iter().map(|b| (b.timestamp, b)).collect();
    let first_close = by_ts.values().next().map(|b| b.close).unwrap_or(1.0);
    let mut aligned = Vec::with_capacity(calendar.len());
    let mut last_close = first_close;
    for &ts in calendar {
        match by_ts.get(&ts) {
            Some(bar) => {
                last_close = bar.close;
                aligned.push(bar.clone());
            }
            None => aligned.push(Bar {
                timestamp: ts,
                open: last_close,
                high: last_close,
                low: last_close,
                close: last_close,
                volume: 0.0,
                gap_fill: true,
            }),
        }
    }
    BarSeries { ticker, bars: aligned }
}

impl MarketData {
    pub fn n_periods(&self) -> usize {
        self.calendar.len()
    }

    pub fn n_assets(&self) -> usize {
        self.series.len()
    }

    pub fn tickers(&self) -> Vec<String> {
        self.series.iter().map(|s| s.ticker.clone()).collect()
    }

    /// Closing prices as `[period][asset]`.
    pub fn close_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.n_periods())
            .map(|t| self.series.iter().map(|s| s.bars[t].close).collect())
            .collect()
    }

    /// Restrict the panel to the given tickers (panel order preserved).
    pub fn select(&self, tickers: &[String]) -> Result<MarketData> {
        let mut series = Vec::with_capacity(tickers.len());
        for t in tickers {
            let s = self
                .series
                .iter()
                .find(|s| &s.ticker == t)
                .ok_or_else(|| Error::Config(format!("ticker {t} not in panel")))?;
            series.push(s.clone());
        }
        Ok(MarketData {
            frequency: self.frequency,
            calendar: self.calendar.clone(),
            series,
        })
    }

    /// Restrict the panel to the half-open period range `[start, end)`,
    /// e.g. one of the disjoint windows an overfit estimate backtests
    /// independently.
    pub fn slice_periods(&self, start: usize, end: usize) -> Result<MarketData> {
        if start >= end || end > self.n_periods() {
            return Err(Error::Input(format!(
                "period range {start}..{end} outside panel of {}",
                self.n_periods()
            )));
        }
        Ok(MarketData {
            frequency: self.frequency,
            calendar: self.calendar[start..end].to_vec(),
            series: self
                .series
                .iter()
                .map(|s| BarSeries {
                    ticker: s.ticker.clone(),
                    bars: s.bars[start..end].to_vec(),
                })
                .collect(),
        })
    }

    /// `(start, end)` half-open bar-index ranges of each trading day, in
    /// calendar order.
    pub fn day_ranges(&self) -> Vec<(usize, usize)> {
        let mut ranges: Vec<(usize, usize)> = Vec::new();
        let mut day_start = 0usize;
        for t in 1..self.calendar.len() {
            if self.calendar[t].date() != self.calendar[day_start].date() {
                ranges.push((day_start, t));
                day_start = t;
            }
        }
        if !self.calendar.is_empty() {
            ranges.push((day_start, self.calendar.len()));
        }
        ranges
    }
}

/// Gross price relatives `close_t / close_{t-1}` as `[period-1][asset]`
/// (row `r` covers the move into calendar period `r + 1`).
pub fn price_relatives(data: &MarketData) -> Vec<Vec<f64>> {
    let closes = data.close_matrix();
    (1..closes.len())
        .map(|t| {
            (0..data.n_assets())
                .map(|i| closes[t][i] / closes[t - 1][i])
                .collect()
        })
        .collect()
}

/// Rank tickers by average traded volume over the trailing `window` periods
/// and return the top `m`. Ties break lexicographically by ticker so the
/// selection is permutation-invariant.
pub fn adv_rank(data: &MarketData, window: usize, m: usize) -> Vec<String> {
    let t_end = data.n_periods();
    let t_start = t_end.saturating_sub(window);
    let mut ranked: Vec<(String, f64)> = data
        .series
        .iter()
        .map(|s| {
            let vols: Vec<f64> = s.bars[t_start..t_end].iter().map(|b| b.volume).collect();
            let adv = vols.iter().sum::<f64>() / vols.len().max(1) as f64;
            (s.ticker.clone(), adv)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().take(m).map(|(t, _)| t).collect()
}

/// Daily risk-free index levels (e.g. a short-term fixed income index).
#[derive(Debug, Clone)]
pub struct RiskFreeSeries {
    pub dates: Vec<NaiveDate>,
    pub levels: Vec<f64>,
}

impl RiskFreeSeries {
    /// Load a `date,level` CSV; dates must be strictly increasing and
    /// levels positive.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
        Self::load_reader(file)
    }

    pub fn load_reader<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            date: String,
            level: f64,
        }
        let mut csv_reader = csv::Reader::from_reader(reader);
        let mut dates = Vec::new();
        let mut levels = Vec::new();
        for (idx, record) in csv_reader.deserialize::<Row>().enumerate() {
            let line = idx + 2;
            let row = record.map_err(|e| Error::Input(format!("line {line}: {e}")))?;
            let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d")
                .map_err(|e| Error::Input(format!("line {line}: bad date {:?}: {e}", row.date)))?;
            if let Some(&last) = dates.last() {
                if date <= last {
                    return Err(Error::Input(format!(
                        "line {line}: risk-free dates not strictly increasing"
                    )));
                }
            }
            if !row.level.is_finite() || row.level <= 0.0 {
                return Err(Error::Input(format!(
                    "line {line}: risk-free level must be positive, got {}",
                    row.level
                )));
            }
            dates.push(date);
            levels.push(row.level);
        }
        if dates.is_empty() {
            return Err(Error::Input("risk-free series is empty".into()));
        }
        Ok(RiskFreeSeries { dates, levels })
    }

    /// Flat series (zero rate) covering the given dates; used when no
    /// risk-free input is supplied.
    pub fn flat(dates: Vec<NaiveDate>) -> Self {
        let levels = vec![1.0; dates.len()];
        RiskFreeSeries { dates, levels }
    }

    pub fn level_on(&self, date: NaiveDate) -> Option<f64> {
        self.dates
            .binary_search(&date)
            .ok()
            .map(|idx| self.levels[idx])
    }

    /// Gross day-on-day relative `level_t / level_{t-1}` for consecutive
    /// calendar dates; errors if either date is missing from the series.
    pub fn daily_relative(&self, prev: NaiveDate, curr: NaiveDate) -> Result<f64> {
        let l0 = self
            .level_on(prev)
            .ok_or_else(|| Error::Config(format!("risk-free level missing for {prev}")))?;
        let l1 = self
            .level_on(curr)
            .ok_or_else(|| Error::Config(format!("risk-free level missing for {curr}")))?;
        Ok(l1 / l0)
    }
}

/// A named group of assets, held as indices into the panel's ticker list.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub name: String,
    pub members: Vec<usize>,
}

/// Stock universe: the tradeable tickers plus their cluster decomposition.
/// The first cluster is always the trivial one containing every ticker.
#[derive(Debug, Clone)]
pub struct Universe {
    pub tickers: Vec<String>,
    pub clusters: Vec<Cluster>,
}

impl Universe {
    /// Build from a ticker list and named cluster definitions. Cluster
    /// members must be drawn from `tickers`; names are sorted so the
    /// universe is independent of map iteration order. Tickers missing
    /// from every named cluster still trade through the trivial cluster.
    pub fn build(tickers: Vec<String>, named: &BTreeMap<String, Vec<String>>) -> Result<Self> {
        let index_of = |t: &str| tickers.iter().position(|x| x == t);
        let mut clusters = vec![Cluster {
            name: "trivial".into(),
            members: (0..tickers.len()).collect(),
        }];
        for (name, members) in named {
            if name == "trivial" {
                return Err(Error::Config("cluster name 'trivial' is reserved".into()));
            }
            let mut idx = Vec::with_capacity(members.len());
            for m in members {
                match index_of(m) {
                    Some(i) if !idx.contains(&i) => idx.push(i),
                    Some(_) => {
                        return Err(Error::Config(format!("duplicate ticker {m} in cluster {name}")))
                    }
                    None => {
                        return Err(Error::Config(format!(
                            "cluster {name} references unknown ticker {m}"
                        )))
                    }
                }
            }
            if idx.is_empty() {
                return Err(Error::Config(format!("cluster {name} is empty")));
            }
            clusters.push(Cluster {
                name: name.clone(),
                members: idx,
            });
        }
        Ok(Universe { tickers, clusters })
    }

    /// Universe with only the trivial cluster.
    pub fn trivial(tickers: Vec<String>) -> Self {
        Universe::build(tickers, &BTreeMap::new()).expect("trivial universe is always valid")
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }
}

/// Parse a TOML cluster file of the form:
///
/// ```toml
/// [clusters]
/// resources  = ["AGL", "BHP"]
/// financials = ["SBK", "FSR"]
/// ```
pub fn load_clusters(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    parse_clusters(&text)
}

pub fn parse_clusters(text: &str) -> Result<BTreeMap<String, Vec<String>>> {
    #[derive(Deserialize)]
    struct File {
        clusters: BTreeMap<String, Vec<String>>,
    }
    let parsed: File =
        toml::from_str(text).map_err(|e| Error::Input(format!("bad cluster file: {e}")))?;
    Ok(parsed.clusters)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_panel(rows: &[(&str, &str, f64, f64, f64, f64, f64)]) -> String {
        let mut s = String::from("timestamp,ticker,open,high,low,close,volume\n");
        for (ts, tk, o, h, l, c, v) in rows {
            s.push_str(&format!("{ts},{tk},{o},{h},{l},{c},{v}\n"));
        }
        s
    }

    fn two_ticker_panel() -> MarketData {
        let csv = csv_panel(&[
            ("2020-01-01", "AAA", 10.0, 11.0, 9.0, 10.0, 100.0),
            ("2020-01-01", "BBB", 20.0, 21.0, 19.0, 20.0, 50.0),
            ("2020-01-02", "AAA", 10.0, 12.0, 10.0, 12.0, 110.0),
            ("2020-01-02", "BBB", 20.0, 22.0, 18.0, 18.0, 60.0),
            ("2020-01-03", "AAA", 12.0, 12.5, 11.0, 11.0, 90.0),
            ("2020-01-03", "BBB", 18.0, 24.0, 18.0, 24.0, 70.0),
        ]);
        load_ohlcv_reader(csv.as_bytes(), &LoadOptions::daily()).unwrap()
    }

    #[test]
    fn loads_and_aligns() {
        let data = two_ticker_panel();
        assert_eq!(data.n_periods(), 3);
        assert_eq!(data.tickers(), vec!["AAA".to_string(), "BBB".to_string()]);
        assert_eq!(data.series[0].bars[1].close, 12.0);
    }

    #[test]
    fn relatives_are_close_ratios() {
        let data = two_ticker_panel();
        let x = price_relatives(&data);
        assert_eq!(x.len(), 2);
        assert!((x[0][0] - 1.2).abs() < 1e-12);
        assert!((x[0][1] - 0.9).abs() < 1e-12);
        assert!((x[1][0] - 11.0 / 12.0).abs() < 1e-12);
        assert!((x[1][1] - 24.0 / 18.0).abs() < 1e-12);
    }

    #[test]
    fn slice_periods_cuts_calendar_and_bars() {
        let data = two_ticker_panel();
        let window = data.slice_periods(1, 3).unwrap();
        assert_eq!(window.n_periods(), 2);
        assert_eq!(window.calendar[0], data.calendar[1]);
        assert_eq!(window.series[1].bars[0].close, 18.0);
        assert!(data.slice_periods(2, 2).is_err());
        assert!(data.slice_periods(0, 4).is_err());
    }

    #[test]
    fn relatives_product_reconstructs_total_return() {
        // Cumulative product of relatives must rebuild close_T / close_1.
        let data = two_ticker_panel();
        let x = price_relatives(&data);
        for i in 0..data.n_assets() {
            let prod: f64 = x.iter().map(|row| row[i]).product();
            let closes: Vec<f64> = data.series[i].bars.iter().map(|b| b.close).collect();
            let direct = closes[closes.len() - 1] / closes[0];
            assert!((prod - direct).abs() / direct < 1e-12);
        }
    }

    #[test]
    fn high_below_low_is_rejected_with_line() {
        let csv = csv_panel(&[
            ("2020-01-01", "AAA", 10.0, 11.0, 9.0, 10.0, 100.0),
            ("2020-01-02", "AAA", 10.0, 9.0, 11.0, 10.0, 100.0),
        ]);
        let err = load_ohlcv_reader(csv.as_bytes(), &LoadOptions::daily()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("high"), "{msg}");
    }

    #[test]
    fn out_of_order_timestamps_rejected() {
        let csv = csv_panel(&[
            ("2020-01-02", "AAA", 10.0, 11.0, 9.0, 10.0, 100.0),
            ("2020-01-01", "AAA", 10.0, 11.0, 9.0, 10.0, 100.0),
        ]);
        let err = load_ohlcv_reader(csv.as_bytes(), &LoadOptions::daily()).unwrap_err();
        assert!(err.to_string().contains("strictly increasing"));
    }

    #[test]
    fn nonpositive_price_rejected() {
        let csv = csv_panel(&[("2020-01-01", "AAA", 10.0, 11.0, 0.0, 10.0, 100.0)]);
        assert!(load_ohlcv_reader(csv.as_bytes(), &LoadOptions::daily()).is_err());
    }

    #[test]
    fn thin_ticker_dropped_and_gaps_filled() {
        // CCC trades 1 of 5 periods (20% < 60%) and is dropped; BBB misses
        // one interior period and is forward-filled flat.
        let mut rows = vec![];
        for (i, day) in ["2020-01-01", "2020-01-02", "2020-01-03", "2020-01-06", "2020-01-07"]
            .iter()
            .enumerate()
        {
            rows.push((*day, "AAA", 10.0, 30.0, 9.0, 10.0 + i as f64, 100.0));
            if i != 2 {
                rows.push((*day, "BBB", 20.0, 40.0, 19.0, 20.0 + i as f64, 50.0));
            }
        }
        rows.push(("2020-01-01", "CCC", 5.0, 6.0, 4.0, 5.0, 10.0));
        rows.sort_by_key(|r| r.0);
        let csv = csv_panel(&rows);
        let data = load_ohlcv_reader(csv.as_bytes(), &LoadOptions::daily()).unwrap();
        assert_eq!(data.tickers(), vec!["AAA".to_string(), "BBB".to_string()]);
        let bbb = &data.series[1];
        assert!(bbb.bars[2].gap_fill);
        assert_eq!(bbb.bars[2].close, 21.0); // carried from 2020-01-02
        assert_eq!(bbb.bars[2].volume, 0.0);
        // Relative across the filled bar is exactly 1 then re-prices.
        let x = price_relatives(&data);
        assert!((x[1][1] - 1.0).abs() < 1e-15);
        assert!((x[2][1] - 23.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn adv_rank_orders_by_mean_volume() {
        let data = two_ticker_panel();
        // AAA volumes 100,110,90 -> 100; BBB 50,60,70 -> 60.
        assert_eq!(adv_rank(&data, 3, 1), vec!["AAA".to_string()]);
        assert_eq!(adv_rank(&data, 3, 2), vec!["AAA".to_string(), "BBB".to_string()]);
        // Trailing window of 1 uses only the last period: BBB 70 > AAA 90? no.
        assert_eq!(adv_rank(&data, 1, 1), vec!["AAA".to_string()]);
    }

    #[test]
    fn adv_rank_breaks_ties_lexicographically() {
        let csv = csv_panel(&[
            ("2020-01-01", "ZZZ", 10.0, 11.0, 9.0, 10.0, 100.0),
            ("2020-01-01", "MMM", 10.0, 11.0, 9.0, 10.0, 100.0),
            ("2020-01-01", "AAA", 10.0, 11.0, 9.0, 10.0, 100.0),
        ]);
        let data = load_ohlcv_reader(csv.as_bytes(), &LoadOptions::daily()).unwrap();
        assert_eq!(adv_rank(&data, 1, 2), vec!["AAA".to_string(), "MMM".to_string()]);
    }

    #[test]
    fn intraday_requires_complete_days() {
        let mut opts = LoadOptions::intraday();
        opts.bars_per_day = 3;
        let csv = csv_panel(&[
            ("2020-01-01T09:15:00", "AAA", 10.0, 11.0, 9.0, 10.0, 1.0),
            ("2020-01-01T09:20:00", "AAA", 10.0, 11.0, 9.0, 10.0, 1.0),
            ("2020-01-01T09:25:00", "AAA", 10.0, 11.0, 9.0, 10.0, 1.0),
            ("2020-01-02T09:15:00", "AAA", 10.0, 11.0, 9.0, 10.0, 1.0),
            ("2020-01-02T09:20:00", "AAA", 10.0, 11.0, 9.0, 10.0, 1.0),
        ]);
        let err = load_ohlcv_reader(csv.as_bytes(), &opts).unwrap_err();
        assert!(err.to_string().contains("2020-01-02"));
        assert!(err.to_string().contains("2 bars"));
    }

    #[test]
    fn day_ranges_split_on_date() {
        let mut opts = LoadOptions::intraday();
        opts.bars_per_day = 2;
        let csv = csv_panel(&[
            ("2020-01-01T09:15:00", "AAA", 10.0, 11.0, 9.0, 10.0, 1.0),
            ("2020-01-01T09:20:00", "AAA", 10.0, 11.0, 9.0, 10.0, 1.0),
            ("2020-01-02T09:15:00", "AAA", 10.0, 11.0, 9.0, 10.0, 1.0),
            ("2020-01-02T09:20:00", "AAA", 10.0, 11.0, 9.0, 10.0, 1.0),
        ]);
        let data = load_ohlcv_reader(csv.as_bytes(), &opts).unwrap();
        assert_eq!(data.day_ranges(), vec![(0, 2), (2, 4)]);
    }

    #[test]
    fn risk_free_series_round_trip() {
        let csv = "date,level\n2020-01-01,100.0\n2020-01-02,100.02\n";
        let rf = RiskFreeSeries::load_reader(csv.as_bytes()).unwrap();
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let d1 = NaiveDate::from_ymd_opt(2020, 1, 2).unwrap();
        assert!((rf.daily_relative(d0, d1).unwrap() - 1.0002).abs() < 1e-12);
        assert!(rf.daily_relative(d1, d1.succ_opt().unwrap()).is_err());
    }

    #[test]
    fn universe_builds_trivial_plus_named() {
        let tickers: Vec<String> = ["A", "B", "C", "D"].iter().map(|s| s.to_string()).collect();
        let mut named = BTreeMap::new();
        named.insert("fins".to_string(), vec!["B".to_string(), "D".to_string()]);
        named.insert("mines".to_string(), vec!["A".to_string()]);
        let u = Universe::build(tickers, &named).unwrap();
        assert_eq!(u.clusters.len(), 3);
        assert_eq!(u.clusters[0].name, "trivial");
        assert_eq!(u.clusters[0].members, vec![0, 1, 2, 3]);
        assert_eq!(u.clusters[1].name, "fins");
        assert_eq!(u.clusters[1].members, vec![1, 3]);
    }

    #[test]
    fn universe_rejects_unknown_ticker() {
        let tickers = vec!["A".to_string()];
        let mut named = BTreeMap::new();
        named.insert("fins".to_string(), vec!["Z".to_string()]);
        assert!(Universe::build(tickers, &named).is_err());
    }

    #[test]
    fn cluster_file_parses() {
        let text = "[clusters]\nresources = [\"AGL\", \"BHP\"]\nfinancials = [\"SBK\"]\n";
        let map = parse_clusters(text).unwrap();
        assert_eq!(map["resources"], vec!["AGL".to_string(), "BHP".to_string()]);
        assert_eq!(map.len(), 2);
    }
}
