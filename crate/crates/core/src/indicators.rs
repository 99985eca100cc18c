//! Technical indicators and the fourteen rule-based signal generators.
//!
//! Indicators are computed over full bar histories and return one slot per
//! period, with `None` marking the warm-up region where the look-back window
//! is not yet filled. Rules combine indicator values at `t-1` and `t` into
//! buy/sell/hold signals; whenever any required value is unavailable the
//! rule holds. All comparisons follow the published condition table for the
//! rule set verbatim, so a rule never fires two consecutive identical
//! non-zero signals without its inequality re-arming in between.

use serde::{Deserialize, Serialize};

/// A trading signal for one asset at one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Signal {
    Sell,
    Hold,
    Buy,
}

impl Signal {
    pub fn value(self) -> f64 {
        match self {
            Signal::Sell => -1.0,
            Signal::Hold => 0.0,
            Signal::Buy => 1.0,
        }
    }

    pub fn is_hold(self) -> bool {
        self == Signal::Hold
    }
}

/// The fourteen technical trading rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TechRule {
    MaXover,
    EmaXover,
    Ichimoku,
    Momentum,
    Acceleration,
    Macd,
    StochFast,
    StochSlow,
    Rsi,
    Marsi,
    Bollinger,
    Proc,
    Williams,
    Sar,
}

impl TechRule {
    pub const ALL: [TechRule; 14] = [
        TechRule::MaXover,
        TechRule::EmaXover,
        TechRule::Ichimoku,
        TechRule::Momentum,
        TechRule::Acceleration,
        TechRule::Macd,
        TechRule::StochFast,
        TechRule::StochSlow,
        TechRule::Rsi,
        TechRule::Marsi,
        TechRule::Bollinger,
        TechRule::Proc,
        TechRule::Williams,
        TechRule::Sar,
    ];

    /// Number of look-back parameters the rule consumes: crossover-of-two-
    /// averages rules take a short and a long window, the rest take one.
    /// (The parabolic stop-and-reverse rule runs on fixed acceleration
    /// constants; it is enumerated as a one-parameter rule whose look-back
    /// does not enter the formula.)
    pub fn arity(self) -> usize {
        match self {
            TechRule::MaXover | TechRule::EmaXover | TechRule::Macd => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TechRule::MaXover => "ma-xover",
            TechRule::EmaXover => "ema-xover",
            TechRule::Ichimoku => "ichimoku",
            TechRule::Momentum => "momentum",
            TechRule::Acceleration => "acceleration",
            TechRule::Macd => "macd",
            TechRule::StochFast => "stoch-fast",
            TechRule::StochSlow => "stoch-slow",
            TechRule::Rsi => "rsi",
            TechRule::Marsi => "marsi",
            TechRule::Bollinger => "bollinger",
            TechRule::Proc => "proc",
            TechRule::Williams => "williams",
            TechRule::Sar => "sar",
        }
    }
}

/// Borrowed OHLC views for one asset; all slices share one length.
#[derive(Debug, Clone, Copy)]
pub struct OhlcHistory<'a> {
    pub highs: &'a [f64],
    pub lows: &'a [f64],
    pub closes: &'a [f64],
}

impl<'a> OhlcHistory<'a> {
    pub fn from_closes(closes: &'a [f64]) -> Self {
        OhlcHistory {
            highs: closes,
            lows: closes,
            closes,
        }
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Indicator primitives
// ---------------------------------------------------------------------------

/// Simple moving average over the trailing `n` values.
pub fn sma(values: &[f64], n: usize) -> Vec<Option<f64>> {
    assert!(n > 0, "sma window must be positive");
    let mut out = vec![None; values.len()];
    let mut rolling = 0.0;
    for t in 0..values.len() {
        rolling += values[t];
        if t >= n {
            rolling -= values[t - n];
        }
        if t + 1 >= n {
            out[t] = Some(rolling / n as f64);
        }
    }
    out
}

/// Exponential moving average with smoothing `2 / (n + 1)`, seeded with the
/// first observation. Defined from the first period onwards.
pub fn ema(values: &[f64], n: usize) -> Vec<Option<f64>> {
    ema_options(&values.iter().map(|&v| Some(v)).collect::<Vec<_>>(), n)
}

/// EMA over a partially available series: seeded at the first `Some` value.
pub fn ema_options(values: &[Option<f64>], n: usize) -> Vec<Option<f64>> {
    assert!(n > 0, "ema window must be positive");
    let alpha = 2.0 / (n as f64 + 1.0);
    let mut out = vec![None; values.len()];
    let mut state: Option<f64> = None;
    for t in 0..values.len() {
        if let Some(v) = values[t] {
            state = Some(match state {
                None => v,
                Some(prev) => alpha * v + (1.0 - alpha) * prev,
            });
        }
        out[t] = state;
    }
    out
}

/// Trailing sample standard deviation (n - 1 denominator) over `n` values.
pub fn rolling_stdev(values: &[f64], n: usize) -> Vec<Option<f64>> {
    assert!(n > 1, "stdev window must exceed 1");
    let mut out = vec![None; values.len()];
    for t in (n - 1)..values.len() {
        let window = &values[t + 1 - n..=t];
        let mean = window.iter().sum::<f64>() / n as f64;
        let var = window.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        out[t] = Some(var.sqrt());
    }
    out
}

/// Relative strength index with Wilder smoothing. The first value appears
/// after `n` price changes. Flat history (no gains, no losses) maps to the
/// neutral level 50; all-gain maps to 100 and all-loss to 0.
pub fn rsi(closes: &[f64], n: usize) -> Vec<Option<f64>> {
    assert!(n > 0, "rsi window must be positive");
    let mut out = vec![None; closes.len()];
    if closes.len() <= n {
        return out;
    }
    let mut avg_gain = 0.0;
    let mut avg_loss = 0.0;
    for t in 1..=n {
        let change = closes[t] - closes[t - 1];
        avg_gain += change.max(0.0);
        avg_loss += (-change).max(0.0);
    }
    avg_gain /= n as f64;
    avg_loss /= n as f64;
    out[n] = Some(rsi_level(avg_gain, avg_loss));
    for t in (n + 1)..closes.len() {
        let change = closes[t] - closes[t - 1];
        avg_gain = (avg_gain * (n as f64 - 1.0) + change.max(0.0)) / n as f64;
        avg_loss = (avg_loss * (n as f64 - 1.0) + (-change).max(0.0)) / n as f64;
        out[t] = Some(rsi_level(avg_gain, avg_loss));
    }
    out
}

fn rsi_level(avg_gain: f64, avg_loss: f64) -> f64 {
    if avg_loss == 0.0 && avg_gain == 0.0 {
        50.0
    } else if avg_loss == 0.0 {
        100.0
    } else {
        100.0 - 100.0 / (1.0 + avg_gain / avg_loss)
    }
}

/// Moving average of the RSI: SMA over `n` of RSI(`n`).
pub fn marsi(closes: &[f64], n: usize) -> Vec<Option<f64>> {
    sma_options(&rsi(closes, n), n)
}

/// SMA over a partially available series; a window counts only once every
/// slot in it is available.
fn sma_options(values: &[Option<f64>], n: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; values.len()];
    for t in 0..values.len() {
        if t + 1 < n {
            continue;
        }
        let window = &values[t + 1 - n..=t];
        if window.iter().all(|v| v.is_some()) {
            out[t] = Some(window.iter().map(|v| v.unwrap()).sum::<f64>() / n as f64);
        }
    }
    out
}

/// Midpoint of the highest high and lowest low over the trailing `n` bars.
pub fn kijun_sen(highs: &[f64], lows: &[f64], n: usize) -> Vec<Option<f64>> {
    assert!(n > 0);
    let mut out = vec![None; highs.len()];
    for t in (n - 1)..highs.len() {
        let hh = highs[t + 1 - n..=t].iter().cloned().fold(f64::MIN, f64::max);
        let ll = lows[t + 1 - n..=t].iter().cloned().fold(f64::MAX, f64::min);
        out[t] = Some((hh + ll) / 2.0);
    }
    out
}

/// Momentum: `close_t - close_{t-n}`.
pub fn momentum(closes: &[f64], n: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; closes.len()];
    for t in n..closes.len() {
        out[t] = Some(closes[t] - closes[t - n]);
    }
    out
}

/// Momentum acceleration: `MOM_t / MOM_{t-1} - 1`, unavailable where the
/// previous momentum is exactly zero.
pub fn acceleration(closes: &[f64], n: usize) -> Vec<Option<f64>> {
    let mom = momentum(closes, n);
    let mut out = vec![None; closes.len()];
    for t in 1..closes.len() {
        if let (Some(prev), Some(curr)) = (mom[t - 1], mom[t]) {
            if prev != 0.0 {
                out[t] = Some(curr / prev - 1.0);
            }
        }
    }
    out
}

/// Rate of change: `(close_t - close_{t-n}) / close_{t-n}`.
pub fn proc(closes: &[f64], n: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; closes.len()];
    for t in n..closes.len() {
        out[t] = Some((closes[t] - closes[t - n]) / closes[t - n]);
    }
    out
}

/// MACD line (fast EMA minus slow EMA) and its signal line (EMA of the MACD
/// over `signal_n`). Both are masked until the slow window has seen `n2`
/// bars so crossover logic waits for an established baseline.
pub fn macd(closes: &[f64], n1: usize, n2: usize, signal_n: usize) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    assert!(n1 < n2, "macd needs fast window < slow window");
    let fast = ema(closes, n1);
    let slow = ema(closes, n2);
    let mut line = vec![None; closes.len()];
    for t in (n2 - 1)..closes.len() {
        line[t] = Some(fast[t].unwrap() - slow[t].unwrap());
    }
    let signal = ema_options(&line, signal_n);
    (line, signal)
}

/// Fast stochastic: %K over `n` bars and %D = SMA(%K, 3). Flat windows
/// (highest high equals lowest low) yield no value.
pub fn stochastic_fast(h: &OhlcHistory, n: usize) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    assert!(n > 0);
    let len = h.len();
    let mut k = vec![None; len];
    for t in (n - 1)..len {
        let hh = h.highs[t + 1 - n..=t].iter().cloned().fold(f64::MIN, f64::max);
        let ll = h.lows[t + 1 - n..=t].iter().cloned().fold(f64::MAX, f64::min);
        if hh > ll {
            k[t] = Some(100.0 * (h.closes[t] - ll) / (hh - ll));
        }
    }
    let d = sma_options(&k, 3);
    (k, d)
}

/// Slow stochastic: %K is the fast %D, %D = SMA(slow %K, 3).
pub fn stochastic_slow(h: &OhlcHistory, n: usize) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    let (_, fast_d) = stochastic_fast(h, n);
    let slow_d = sma_options(&fast_d, 3);
    (fast_d, slow_d)
}

/// Williams %R over `n` bars, in [-100, 0]; flat windows yield no value.
pub fn williams_r(h: &OhlcHistory, n: usize) -> Vec<Option<f64>> {
    assert!(n > 0);
    let mut out = vec![None; h.len()];
    for t in (n - 1)..h.len() {
        let hh = h.highs[t + 1 - n..=t].iter().cloned().fold(f64::MIN, f64::max);
        let ll = h.lows[t + 1 - n..=t].iter().cloned().fold(f64::MAX, f64::min);
        if hh > ll {
            out[t] = Some(-100.0 * (hh - h.closes[t]) / (hh - ll));
        }
    }
    out
}

/// Bollinger bands: SMA(n) ± 2 sample standard deviations. Returns
/// `(lower, upper)`.
pub fn bollinger(closes: &[f64], n: usize) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    let mid = sma(closes, n);
    let sd = rolling_stdev(closes, n.max(2));
    let mut lower = vec![None; closes.len()];
    let mut upper = vec![None; closes.len()];
    for t in 0..closes.len() {
        if let (Some(m), Some(s)) = (mid[t], sd[t]) {
            lower[t] = Some(m - 2.0 * s);
            upper[t] = Some(m + 2.0 * s);
        }
    }
    (lower, upper)
}

/// Wilder's parabolic stop-and-reverse with acceleration step 0.02 capped
/// at 0.20. Defined from the second bar.
pub fn parabolic_sar(h: &OhlcHistory) -> Vec<Option<f64>> {
    const AF_STEP: f64 = 0.02;
    const AF_MAX: f64 = 0.20;
    let len = h.len();
    let mut out = vec![None; len];
    if len < 2 {
        return out;
    }
    let mut uptrend = h.closes[1] > h.closes[0];
    let mut ep = if uptrend { h.highs[1] } else { h.lows[1] };
    let mut sar = if uptrend { h.lows[0] } else { h.highs[0] };
    let mut af = AF_STEP;
    out[1] = Some(sar);
    for t in 2..len {
        let mut next = sar + af * (ep - sar);
        // The stop may not enter the prior two bars' range.
        if uptrend {
            next = next.min(h.lows[t - 1]).min(h.lows[t - 2]);
        } else {
            next = next.max(h.highs[t - 1]).max(h.highs[t - 2]);
        }
        if uptrend && h.lows[t] < next {
            // Stopped out of the long: flip short at the prior extreme.
            uptrend = false;
            sar = ep;
            ep = h.lows[t];
            af = AF_STEP;
        } else if !uptrend && h.highs[t] > next {
            uptrend = true;
            sar = ep;
            ep = h.highs[t];
            af = AF_STEP;
        } else {
            sar = next;
            if uptrend && h.highs[t] > ep {
                ep = h.highs[t];
                af = (af + AF_STEP).min(AF_MAX);
            } else if !uptrend && h.lows[t] < ep {
                ep = h.lows[t];
                af = (af + AF_STEP).min(AF_MAX);
            }
        }
        out[t] = Some(sar);
    }
    out
}

// ---------------------------------------------------------------------------
// Rule evaluation
// ---------------------------------------------------------------------------

/// Mask the first `warmup` slots of a series to `None`. Used to hold
/// seeded-EMA rules back until their nominal look-back window has filled,
/// matching the SMA-based rules' activation timing.
fn mask_warmup(mut series: Vec<Option<f64>>, warmup: usize) -> Vec<Option<f64>> {
    for slot in series.iter_mut().take(warmup) {
        *slot = None;
    }
    series
}

/// Default signal-line window for the MACD rule.
pub const MACD_SIGNAL_WINDOW: usize = 9;

/// Evaluate one rule over a full bar history, producing one signal per
/// period. `n1` is the short look-back; `n2` is only read by two-parameter
/// rules and must then exceed `n1`.
pub fn rule_signals(rule: TechRule, n1: usize, n2: usize, h: &OhlcHistory) -> Vec<Signal> {
    if rule.arity() == 2 {
        assert!(n1 < n2, "{} needs n1 < n2, got {n1} >= {n2}", rule.name());
    }
    let len = h.len();
    let mut signals = vec![Signal::Hold; len];
    match rule {
        TechRule::MaXover => {
            let fast = sma(h.closes, n1);
            let slow = sma(h.closes, n2);
            for t in 1..len {
                if let (Some(f0), Some(s0), Some(f1), Some(s1)) =
                    (fast[t - 1], slow[t - 1], fast[t], slow[t])
                {
                    if f0 < s0 && f1 >= s1 {
                        signals[t] = Signal::Buy;
                    } else if f0 > s0 && f1 <= s1 {
                        signals[t] = Signal::Sell;
                    }
                }
            }
        }
        TechRule::EmaXover => {
            let fast = mask_warmup(ema(h.closes, n1), n1 - 1);
            let slow = mask_warmup(ema(h.closes, n2), n2 - 1);
            for t in 1..len {
                if let (Some(f0), Some(s0), Some(f1), Some(s1)) =
                    (fast[t - 1], slow[t - 1], fast[t], slow[t])
                {
                    if f0 < s0 && f1 >= s1 {
                        signals[t] = Signal::Buy;
                    } else if f0 > s0 && f1 <= s1 {
                        signals[t] = Signal::Sell;
                    }
                }
            }
        }
        TechRule::Ichimoku => {
            let ks = kijun_sen(h.highs, h.lows, n1);
            for t in 1..len {
                if let (Some(k0), Some(k1)) = (ks[t - 1], ks[t]) {
                    let (c0, c1) = (h.closes[t - 1], h.closes[t]);
                    // Base line crossing the close curve from below / above.
                    if k0 < c0 && k1 >= c1 {
                        signals[t] = Signal::Buy;
                    } else if k0 > c0 && k1 <= c1 {
                        signals[t] = Signal::Sell;
                    }
                }
            }
        }
        TechRule::Momentum => {
            let mom = momentum(h.closes, n1);
            let smooth = ema_options(&mom, n1);
            for t in 1..len {
                if let (Some(m0), Some(m1), Some(e1)) = (mom[t - 1], mom[t], smooth[t]) {
                    if m0 <= e1 && m1 > e1 {
                        signals[t] = Signal::Buy;
                    } else if m0 >= e1 && m1 < e1 {
                        signals[t] = Signal::Sell;
                    }
                }
            }
        }
        TechRule::Acceleration => {
            let acc = acceleration(h.closes, n1);
            for t in 1..len {
                if let (Some(a0), Some(a1)) = (acc[t - 1], acc[t]) {
                    // Conditions act on the raw momentum ratio ACCEL + 1.
                    if a0 + 1.0 <= 0.0 && a1 + 1.0 > 0.0 {
                        signals[t] = Signal::Buy;
                    } else if a0 + 1.0 >= 0.0 && a1 + 1.0 < 0.0 {
                        signals[t] = Signal::Sell;
                    }
                }
            }
        }
        TechRule::Macd => {
            let (line, sig) = macd(h.closes, n1, n2, MACD_SIGNAL_WINDOW);
            for t in 1..len {
                if let (Some(m0), Some(m1), Some(s1)) = (line[t - 1], line[t], sig[t]) {
                    if m0 <= s1 && m1 > s1 {
                        signals[t] = Signal::Buy;
                    } else if m0 >= s1 && m1 < s1 {
                        signals[t] = Signal::Sell;
                    }
                }
            }
        }
        TechRule::StochFast => {
            let (k, d) = stochastic_fast(h, n1);
            stoch_conditions(&k, &d, &mut signals);
        }
        TechRule::StochSlow => {
            let (k, d) = stochastic_slow(h, n1);
            stoch_conditions(&k, &d, &mut signals);
        }
        TechRule::Rsi => {
            let series = rsi(h.closes, n1);
            oscillator_conditions(&series, 30.0, 70.0, &mut signals);
        }
        TechRule::Marsi => {
            let series = marsi(h.closes, n1);
            oscillator_conditions(&series, 30.0, 70.0, &mut signals);
        }
        TechRule::Bollinger => {
            let (lower, upper) = bollinger(h.closes, n1);
            for t in 1..len {
                if let (Some(l0), Some(u0), Some(l1), Some(u1)) =
                    (lower[t - 1], upper[t - 1], lower[t], upper[t])
                {
                    let (c0, c1) = (h.closes[t - 1], h.closes[t]);
                    // Mean-reversion entries: back up through the lower
                    // band buys, back down through the upper band sells.
                    if c0 <= l0 && c1 > l1 {
                        signals[t] = Signal::Buy;
                    } else if c0 >= u0 && c1 < u1 {
                        signals[t] = Signal::Sell;
                    }
                }
            }
        }
        TechRule::Proc => {
            let series = proc(h.closes, n1);
            for t in 1..len {
                if let (Some(p0), Some(p1)) = (series[t - 1], series[t]) {
                    if p0 <= 0.0 && p1 > 0.0 {
                        signals[t] = Signal::Buy;
                    } else if p0 >= 0.0 && p1 < 0.0 {
                        signals[t] = Signal::Sell;
                    }
                }
            }
        }
        TechRule::Williams => {
            let series = williams_r(h, n1);
            for t in 1..len {
                if let (Some(w0), Some(w1)) = (series[t - 1], series[t]) {
                    if w0 >= -20.0 && w1 < -80.0 {
                        signals[t] = Signal::Buy;
                    } else if w0 <= -20.0 && w1 > -80.0 {
                        signals[t] = Signal::Sell;
                    }
                }
            }
        }
        TechRule::Sar => {
            let series = parabolic_sar(h);
            for t in 1..len {
                if let (Some(s0), Some(s1)) = (series[t - 1], series[t]) {
                    let (c0, c1) = (h.closes[t - 1], h.closes[t]);
                    if s0 >= c0 && s1 < c1 {
                        signals[t] = Signal::Buy;
                    } else if s0 <= c0 && s1 > c1 {
                        signals[t] = Signal::Sell;
                    }
                }
            }
        }
    }
    signals
}

/// %K crossing the %D line from below buys, from above sells; both bars are
/// compared against the current %D.
fn stoch_conditions(k: &[Option<f64>], d: &[Option<f64>], signals: &mut [Signal]) {
    for t in 1..signals.len() {
        if let (Some(k0), Some(k1), Some(d1)) = (k[t - 1], k[t], d[t]) {
            if k0 <= d1 && k1 > d1 {
                signals[t] = Signal::Buy;
            } else if k0 >= d1 && k1 < d1 {
                signals[t] = Signal::Sell;
            }
        }
    }
}

/// Threshold-recovery conditions shared by RSI and MARSI: leaving the
/// oversold floor buys, dropping off the overbought ceiling sells.
fn oscillator_conditions(series: &[Option<f64>], floor: f64, ceiling: f64, signals: &mut [Signal]) {
    for t in 1..signals.len() {
        if let (Some(v0), Some(v1)) = (series[t - 1], series[t]) {
            if v0 <= floor && v1 > floor {
                signals[t] = Signal::Buy;
            } else if v0 >= ceiling && v1 < ceiling {
                signals[t] = Signal::Sell;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn opt_eq(series: &[Option<f64>], expected: &[Option<f64>]) {
        assert_eq!(series.len(), expected.len());
        for (i, (got, want)) in series.iter().zip(expected).enumerate() {
            match (got, want) {
                (None, None) => {}
                (Some(g), Some(w)) => assert_relative_eq!(*g, *w, max_relative = 1e-12),
                _ => panic!("slot {i}: got {got:?}, want {want:?}"),
            }
        }
    }

    #[test]
    fn sma_basic() {
        opt_eq(
            &sma(&[1.0, 2.0, 3.0, 4.0], 2),
            &[None, Some(1.5), Some(2.5), Some(3.5)],
        );
    }

    #[test]
    fn ema_seeded_with_first_value() {
        // alpha = 2/3: 10, then (2/3)*20 + (1/3)*10.
        opt_eq(&ema(&[10.0, 20.0], 2), &[Some(10.0), Some(50.0 / 3.0)]);
    }

    #[test]
    fn rolling_stdev_simple() {
        opt_eq(&rolling_stdev(&[1.0, 2.0, 3.0], 3), &[None, None, Some(1.0)]);
    }

    #[test]
    fn rsi_alternating_hand_case() {
        // Changes +1, -1, +1 with n = 2. After the seed window the average
        // gain/loss are 0.5/0.5 (RSI 50); Wilder smoothing then gives
        // 0.75/0.25 (RSI 75).
        let closes = [1.0, 2.0, 1.0, 2.0];
        let series = rsi(&closes, 2);
        opt_eq(&series, &[None, None, Some(50.0), Some(75.0)]);
    }

    #[test]
    fn rsi_saturates_at_extremes() {
        let rising: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let falling: Vec<f64> = (1..=10).rev().map(|v| v as f64).collect();
        assert_eq!(rsi(&rising, 4).last().unwrap().unwrap(), 100.0);
        assert_eq!(rsi(&falling, 4).last().unwrap().unwrap(), 0.0);
        let flat = [5.0; 10];
        assert_eq!(rsi(&flat, 4).last().unwrap().unwrap(), 50.0);
    }

    #[test]
    fn kijun_sen_is_range_midpoint() {
        let highs = [10.0, 12.0, 14.0];
        let lows = [6.0, 8.0, 10.0];
        opt_eq(&kijun_sen(&highs, &lows, 3), &[None, None, Some(10.0)]);
    }

    #[test]
    fn momentum_and_proc() {
        let closes = [10.0, 11.0, 12.5, 12.0];
        opt_eq(&momentum(&closes, 2), &[None, None, Some(2.5), Some(1.0)]);
        opt_eq(&proc(&closes, 2), &[None, None, Some(0.25), Some(1.0 / 11.0)]);
    }

    #[test]
    fn acceleration_guards_zero_momentum() {
        // MOM(1): [_, 1, 0, 2]; ratio needs a non-zero previous momentum.
        let closes = [1.0, 2.0, 2.0, 4.0];
        let acc = acceleration(&closes, 1);
        opt_eq(&acc, &[None, None, Some(-1.0), None]);
    }

    #[test]
    fn bollinger_bands_two_sd() {
        let (lower, upper) = bollinger(&[1.0, 2.0, 3.0], 3);
        opt_eq(&lower, &[None, None, Some(0.0)]);
        opt_eq(&upper, &[None, None, Some(4.0)]);
    }

    #[test]
    fn stochastic_and_williams_share_ranges() {
        let highs = [10.0, 12.0, 14.0];
        let lows = [6.0, 8.0, 10.0];
        let closes = [8.0, 11.0, 13.0];
        let h = OhlcHistory { highs: &highs, lows: &lows, closes: &closes };
        let (k, _) = stochastic_fast(&h, 3);
        opt_eq(&k, &[None, None, Some(87.5)]);
        opt_eq(&williams_r(&h, 3), &[None, None, Some(-12.5)]);
    }

    #[test]
    fn macd_is_ema_difference() {
        let closes = [1.0, 2.0, 3.0, 4.0, 5.0];
        let (line, _) = macd(&closes, 2, 3, MACD_SIGNAL_WINDOW);
        let fast = ema(&closes, 2);
        let slow = ema(&closes, 3);
        for t in 2..closes.len() {
            assert_relative_eq!(
                line[t].unwrap(),
                fast[t].unwrap() - slow[t].unwrap(),
                max_relative = 1e-12
            );
        }
        assert!(line[1].is_none(), "masked until the slow window fills");
    }

    #[test]
    fn parabolic_sar_hand_case() {
        // Uptrend: EP moves to 12 after bar 2, stop accelerates at 0.04.
        let highs = [10.0, 11.0, 12.0, 11.5];
        let lows = [9.0, 10.0, 11.0, 10.5];
        let closes = [9.5, 10.5, 11.5, 11.0];
        let h = OhlcHistory { highs: &highs, lows: &lows, closes: &closes };
        opt_eq(&parabolic_sar(&h), &[None, Some(9.0), Some(9.0), Some(9.12)]);
    }

    #[test]
    fn parabolic_sar_reverses_below_stop() {
        // Strong up-move then a collapse through the stop flips the trend
        // to the prior extreme.
        let highs = [10.0, 11.0, 12.0, 12.5, 8.0];
        let lows = [9.0, 10.0, 11.0, 11.5, 7.0];
        let closes = [9.5, 10.5, 11.5, 12.0, 7.5];
        let h = OhlcHistory { highs: &highs, lows: &lows, closes: &closes };
        let sar = parabolic_sar(&h);
        // After the reversal the stop sits at the old extreme point.
        assert_eq!(sar[4].unwrap(), 12.5);
    }

    #[test]
    fn ma_xover_golden_cross_fires_once() {
        // Fast SMA(2) starts below SMA(4), crosses up exactly once.
        let closes = [10.0, 9.0, 8.0, 7.0, 7.5, 9.5, 11.0, 11.5];
        let h = OhlcHistory::from_closes(&closes);
        let signals = rule_signals(TechRule::MaXover, 2, 4, &h);
        let buys: Vec<usize> = signals
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == Signal::Buy)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(buys, vec![5]);
        assert!(!signals.contains(&Signal::Sell));
    }

    #[test]
    fn constant_series_never_signals() {
        let closes = [50.0; 60];
        let h = OhlcHistory::from_closes(&closes);
        for rule in TechRule::ALL {
            let signals = rule_signals(rule, 4, 8, &h);
            assert!(
                signals.iter().all(|s| s.is_hold()),
                "{} fired on a constant series",
                rule.name()
            );
        }
    }

    #[test]
    fn strictly_rising_series_never_sells() {
        let closes: Vec<f64> = (1..=80).map(|v| 100.0 + v as f64).collect();
        let h = OhlcHistory::from_closes(&closes);
        for rule in TechRule::ALL {
            let signals = rule_signals(rule, 4, 8, &h);
            assert!(
                !signals.contains(&Signal::Sell),
                "{} sold into a monotone rally",
                rule.name()
            );
        }
    }

    #[test]
    fn rsi_rule_buys_on_oversold_recovery() {
        // Drive RSI to the floor with a long slide, then recover.
        let mut closes: Vec<f64> = (0..20).map(|i| 100.0 - 2.0 * i as f64).collect();
        closes.extend((0..6).map(|i| 62.0 + 3.0 * (i + 1) as f64));
        let h = OhlcHistory::from_closes(&closes);
        let signals = rule_signals(TechRule::Rsi, 4, 0, &h);
        assert!(signals.contains(&Signal::Buy));
        let first_buy = signals.iter().position(|s| *s == Signal::Buy).unwrap();
        assert!(first_buy >= 20, "buy must come during the recovery leg");
    }

    #[test]
    fn proc_rule_signals_zero_crossings() {
        let closes = [10.0, 10.0, 9.0, 10.5, 10.0, 9.0];
        let h = OhlcHistory::from_closes(&closes);
        let signals = rule_signals(TechRule::Proc, 2, 0, &h);
        // PROC(2): [_, _, -0.1, 0.05, 1/9, -1/7]; up-cross at 3, down at 5.
        assert_eq!(signals[3], Signal::Buy);
        assert_eq!(signals[5], Signal::Sell);
    }

    // Signals from scale-free rules must be unchanged under any positive
    // rescaling of the price history.
    mod scale_invariance {
        use super::*;
        use proptest::prelude::*;

        const SCALE_FREE: [TechRule; 7] = [
            TechRule::MaXover,
            TechRule::EmaXover,
            TechRule::StochFast,
            TechRule::StochSlow,
            TechRule::Rsi,
            TechRule::Marsi,
            TechRule::Proc,
        ];

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn signals_survive_rescaling(
                seed_moves in proptest::collection::vec(-0.04f64..0.04, 40..70),
                // Power-of-two scales rescale every f64 intermediate
                // exactly, so even tie-boundary comparisons (e.g. %K pinned
                // at 0 on a monotone run) must come out identical. A rule
                // with an absolute price threshold would still fail here.
                scale_exp in -6i32..=6,
            ) {
                let scale = (2.0f64).powi(scale_exp);
                let mut closes = vec![100.0];
                for m in &seed_moves {
                    let next = closes.last().unwrap() * (1.0 + m);
                    closes.push(next);
                }
                let scaled: Vec<f64> = closes.iter().map(|c| c * scale).collect();
                let base_h = OhlcHistory::from_closes(&closes);
                let scaled_h = OhlcHistory::from_closes(&scaled);
                for rule in SCALE_FREE {
                    let a = rule_signals(rule, 4, 8, &base_h);
                    let b = rule_signals(rule, 4, 8, &scaled_h);
                    prop_assert_eq!(&a, &b, "{} not scale-invariant", rule.name());
                }
            }
        }
    }

    #[test]
    fn williams_rule_follows_published_conditions() {
        // The published sell row (prev >= -20 gate absent) fires whenever
        // the oscillator sits between the bands; verify against a direct
        // evaluation of the condition table.
        let closes = [10.0, 10.5, 10.2, 10.4, 10.1, 10.3, 10.2];
        let highs: Vec<f64> = closes.iter().map(|c| c + 0.3).collect();
        let lows: Vec<f64> = closes.iter().map(|c| c - 0.3).collect();
        let h = OhlcHistory { highs: &highs, lows: &lows, closes: &closes };
        let w = williams_r(&h, 3);
        let signals = rule_signals(TechRule::Williams, 3, 0, &h);
        for t in 1..closes.len() {
            let expected = match (w[t - 1], w[t]) {
                (Some(w0), Some(w1)) if w0 >= -20.0 && w1 < -80.0 => Signal::Buy,
                (Some(w0), Some(w1)) if w0 <= -20.0 && w1 > -80.0 => Signal::Sell,
                _ => Signal::Hold,
            };
            assert_eq!(signals[t], expected, "period {t}");
        }
    }
}
