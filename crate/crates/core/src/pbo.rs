//! Probability of backtest overfitting via combinatorially symmetric
//! cross-validation.
//!
//! Given per-period P&L for `N` independent trials, the rows are cut into
//! `S` equal time chunks and every balanced split of chunks into an
//! in-sample and out-of-sample half is examined. Each split selects the
//! trial that looks best in-sample and asks where it lands in the
//! out-of-sample ranking; a selection that falls below the median earns a
//! negative rank-logit. The fraction of splits with a negative logit is
//! the overfit probability: 0.5 means in-sample selection carries no
//! information out of sample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-period P&L of `N` trials over a common time grid, column-major.
#[derive(Debug, Clone)]
pub struct TrialMatrix {
    /// `columns[n][t]`: increment of trial `n` in period `t`.
    pub columns: Vec<Vec<f64>>,
    /// Whether the source series had unequal lengths and were cut to the
    /// shortest.
    pub truncated: bool,
}

impl TrialMatrix {
    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }
}

/// Assemble trial series into a matrix, cutting all series to the shortest
/// length when they disagree.
pub fn build_trial_matrix(trials: &[Vec<f64>]) -> Result<TrialMatrix> {
    if trials.len() < 2 {
        return Err(Error::Input("need at least two trials".into()));
    }
    let min_len = trials.iter().map(|t| t.len()).min().unwrap();
    if min_len == 0 {
        return Err(Error::Input("a trial series is empty".into()));
    }
    if trials.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Input("trial entries must be finite".into()));
    }
    let truncated = trials.iter().any(|t| t.len() != min_len);
    let columns = trials.iter().map(|t| t[..min_len].to_vec()).collect();
    Ok(TrialMatrix { columns, truncated })
}

/// A performance functional over aggregated column moments
/// `(count, sum, sum of squares)`; `None` marks the metric undefined for
/// that column (scored as zero and counted).
pub type Metric = fn(usize, f64, f64) -> Option<f64>;

/// Sharpe ratio of the per-period increments: mean over sample standard
/// deviation. Undefined for degenerate variance.
pub fn sharpe_metric(n: usize, sum: f64, sumsq: f64) -> Option<f64> {
    if n < 2 {
        return None;
    }
    let mean = sum / n as f64;
    let var = (sumsq - sum * sum / n as f64) / (n - 1) as f64;
    if var > 0.0 {
        Some(mean / var.sqrt())
    } else {
        None
    }
}

/// CSCV result: the overfit probability and the rank-logit per split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PboResult {
    pub pbo: f64,
    pub logits: Vec<f64>,
    pub n_splits: usize,
    pub s_chunks: usize,
    /// Rows actually used after truncating to a multiple of the chunk count.
    pub rows_used: usize,
    /// Metric evaluations that were undefined and scored as zero.
    pub degenerate_metric_evaluations: usize,
}

/// All size-`k` subsets of `0..s` in lexicographic order.
fn combinations(s: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        // Advance the rightmost index that can still move.
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + s - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Average rank of `values[selected]` from below (1-based): ties share the
/// midpoint of their rank range, so the result is permutation-invariant.
fn midrank(values: &[f64], selected: usize) -> f64 {
    let v = values[selected];
    let below = values.iter().filter(|&&y| y < v).count();
    let equal = values.iter().filter(|&&y| y == v).count();
    below as f64 + (equal as f64 + 1.0) / 2.0
}

/// Run CSCV over the matrix with `s_chunks` time chunks.
pub fn cscv_pbo(matrix: &TrialMatrix, s_chunks: usize, metric: Metric) -> Result<PboResult> {
    let n_cols = matrix.n_cols();
    let n_rows = matrix.n_rows();
    if n_cols < 2 {
        return Err(Error::Input("need at least two trial columns".into()));
    }
    if s_chunks < 2 || s_chunks % 2 != 0 {
        return Err(Error::Input("chunk count must be even and at least 2".into()));
    }
    if s_chunks > n_rows {
        return Err(Error::Input(format!(
            "cannot cut {n_rows} rows into {s_chunks} chunks"
        )));
    }
    let rows_used = n_rows - n_rows % s_chunks;
    let chunk_len = rows_used / s_chunks;

    // Per-chunk per-column moments; every split's in- and out-of-sample
    // moments are sums over these, so no split re-touches raw data.
    let mut count = vec![vec![0usize; n_cols]; s_chunks];
    let mut sum = vec![vec![0.0f64; n_cols]; s_chunks];
    let mut sumsq = vec![vec![0.0f64; n_cols]; s_chunks];
    for (n, col) in matrix.columns.iter().enumerate() {
        for c in 0..s_chunks {
            for &v in &col[c * chunk_len..(c + 1) * chunk_len] {
                count[c][n] += 1;
                sum[c][n] += v;
                sumsq[c][n] += v * v;
            }
        }
    }
    let total_count: Vec<usize> = (0..n_cols).map(|n| (0..s_chunks).map(|c| count[c][n]).sum()).collect();
    let total_sum: Vec<f64> = (0..n_cols).map(|n| (0..s_chunks).map(|c| sum[c][n]).sum()).collect();
    let total_sumsq: Vec<f64> =
        (0..n_cols).map(|n| (0..s_chunks).map(|c| sumsq[c][n]).sum()).collect();

    let splits = combinations(s_chunks, s_chunks / 2);
    let mut logits = Vec::with_capacity(splits.len());
    let mut degenerate = 0usize;
    let score = |n_obs: usize, s: f64, ss: f64, degenerate: &mut usize| -> f64 {
        match metric(n_obs, s, ss) {
            Some(v) => v,
            None => {
                *degenerate += 1;
                0.0
            }
        }
    };

    for subset in &splits {
        let mut best = 0usize;
        let mut best_metric = f64::NEG_INFINITY;
        let mut oos = Vec::with_capacity(n_cols);
        for n in 0..n_cols {
            let mut is_count = 0usize;
            let mut is_sum = 0.0;
            let mut is_sumsq = 0.0;
            for &c in subset {
                is_count += count[c][n];
                is_sum += sum[c][n];
                is_sumsq += sumsq[c][n];
            }
            let m_is = score(is_count, is_sum, is_sumsq, &mut degenerate);
            if m_is > best_metric {
                best_metric = m_is;
                best = n;
            }
            let m_oos = score(
                total_count[n] - is_count,
                total_sum[n] - is_sum,
                total_sumsq[n] - is_sumsq,
                &mut degenerate,
            );
            oos.push(m_oos);
        }
        let omega = midrank(&oos, best) / (n_cols as f64 + 1.0);
        logits.push((omega / (1.0 - omega)).ln());
    }

    let pbo = logits.iter().filter(|&&l| l < 0.0).count() as f64 / logits.len() as f64;
    Ok(PboResult {
        pbo,
        logits,
        n_splits: splits.len(),
        s_chunks,
        rows_used,
        degenerate_metric_evaluations: degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise_matrix(n_cols: usize, n_rows: usize, seed: u64) -> TrialMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let columns = (0..n_cols)
            .map(|_| (0..n_rows).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        TrialMatrix { columns, truncated: false }
    }

    #[test]
    fn matrix_built_and_truncated() {
        let trials = vec![vec![0.1; 60], vec![0.2; 60], vec![0.3; 60]];
        let m = build_trial_matrix(&trials).unwrap();
        assert_eq!((m.n_rows(), m.n_cols()), (60, 3));
        assert!(!m.truncated);

        let uneven = vec![vec![0.1; 50], vec![0.2; 60]];
        let m = build_trial_matrix(&uneven).unwrap();
        assert_eq!(m.n_rows(), 50);
        assert!(m.truncated);

        assert!(build_trial_matrix(&[vec![1.0]]).is_err());
        assert!(build_trial_matrix(&[vec![f64::NAN], vec![1.0]]).is_err());
    }

    #[test]
    fn combination_count_matches_binomial() {
        assert_eq!(combinations(8, 4).len(), 70);
        assert_eq!(combinations(16, 8).len(), 12870);
        assert_eq!(combinations(2, 1), vec![vec![0], vec![1]]);
        // Lexicographic and duplicate-free.
        let all = combinations(6, 3);
        let mut sorted = all.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(all, sorted);
    }

    #[test]
    fn midrank_averages_ties() {
        // values 3.0 appears twice at ranks 2 and 3 -> midrank 2.5.
        let values = [1.0, 3.0, 3.0, 5.0];
        assert_eq!(midrank(&values, 1), 2.5);
        assert_eq!(midrank(&values, 2), 2.5);
        assert_eq!(midrank(&values, 0), 1.0);
        assert_eq!(midrank(&values, 3), 4.0);
    }

    #[test]
    fn dominant_column_gives_zero_pbo() {
        let mut m = noise_matrix(10, 64, 5);
        for v in &mut m.columns[3] {
            *v = 0.05 + 0.01 * v.abs();
        }
        let r = cscv_pbo(&m, 8, sharpe_metric).unwrap();
        assert_eq!(r.pbo, 0.0);
        assert_eq!(r.n_splits, 70);
        assert!(r.logits.iter().all(|&l| l > 0.0));
    }

    #[test]
    fn null_noise_pbo_is_near_half() {
        let mut total = 0.0;
        let n_seeds = 30;
        for seed in 0..n_seeds {
            let m = noise_matrix(10, 64, 100 + seed);
            total += cscv_pbo(&m, 8, sharpe_metric).unwrap().pbo;
        }
        let mean = total / n_seeds as f64;
        assert!((0.25..=0.75).contains(&mean), "null PBO mean {mean}");
    }

    #[test]
    fn rows_truncated_to_chunk_multiple() {
        let m = noise_matrix(4, 34, 9);
        let r = cscv_pbo(&m, 8, sharpe_metric).unwrap();
        assert_eq!(r.rows_used, 32);
        assert_eq!(r.s_chunks, 8);
    }

    #[test]
    fn degenerate_column_scores_zero_and_is_flagged() {
        let mut m = noise_matrix(4, 32, 13);
        m.columns[2] = vec![0.25; 32]; // zero variance everywhere
        let r = cscv_pbo(&m, 4, sharpe_metric).unwrap();
        // The flat column is undefined in-sample and out-of-sample on every
        // split.
        assert_eq!(r.degenerate_metric_evaluations, 2 * r.n_splits);
        assert!(r.pbo.is_finite());
    }

    #[test]
    fn scale_invariance_with_sharpe() {
        let m = noise_matrix(8, 64, 21);
        let base = cscv_pbo(&m, 8, sharpe_metric).unwrap();
        for k in [0.25, 4.0] {
            let scaled = TrialMatrix {
                columns: m
                    .columns
                    .iter()
                    .map(|c| c.iter().map(|v| v * k).collect())
                    .collect(),
                truncated: false,
            };
            let r = cscv_pbo(&scaled, 8, sharpe_metric).unwrap();
            assert_eq!(r.pbo, base.pbo);
            assert_eq!(r.logits, base.logits);
        }
    }

    #[test]
    fn input_validation() {
        let m = noise_matrix(4, 32, 1);
        assert!(cscv_pbo(&m, 7, sharpe_metric).is_err()); // odd
        assert!(cscv_pbo(&m, 0, sharpe_metric).is_err());
        assert!(cscv_pbo(&m, 64, sharpe_metric).is_err()); // more chunks than rows
        let single = TrialMatrix { columns: vec![vec![1.0; 8]], truncated: false };
        assert!(cscv_pbo(&single, 2, sharpe_metric).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            // Relabeling the trials must not change the overfit estimate:
            // the procedure treats columns symmetrically.
            #[test]
            fn column_permutation_invariance(
                seed in 0u64..1000,
                n_cols in 3usize..7,
                rows in 16usize..48,
            ) {
                let m = noise_matrix(n_cols, rows, seed);
                let base = cscv_pbo(&m, 4, sharpe_metric).unwrap();

                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
                let mut perm: Vec<usize> = (0..n_cols).collect();
                for i in (1..n_cols).rev() {
                    let j = rand::Rng::gen_range(&mut rng, 0..=i);
                    perm.swap(i, j);
                }
                let permuted = TrialMatrix {
                    columns: perm.iter().map(|&p| m.columns[p].clone()).collect(),
                    truncated: false,
                };
                let r = cscv_pbo(&permuted, 4, sharpe_metric).unwrap();
                prop_assert_eq!(r.pbo, base.pbo);
            }
        }
    }
}
