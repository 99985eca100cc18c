//! Statistical-arbitrage test of a cumulative profit curve.
//!
//! The increments of a zero-cost strategy's P&L are modeled as
//! `dv_i = mu * i^theta + sigma * i^lambda * z_i` with standard normal
//! `z_i`: positive drift `mu` plus noise whose scale decays (or grows) as a
//! power of time. A strategy is a statistical arbitrage when the drift is
//! positive and the variance decays fast enough, which the Min-t statistic
//! tests by taking the smallest of the sub-hypothesis t-ratios and
//! comparing it against a Monte Carlo critical value simulated under the
//! no-arbitrage null. The constrained model pins `theta = 0`; the
//! unconstrained model frees it.
//!
//! The series is treated as already discounted: the strategy finances
//! itself at the risk-free leg, so its P&L is a pure excess-value process.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::optim::{nelder_mead_restarts, NmOptions};

/// Shortest increment series the model will fit.
pub const MIN_INCREMENTS: usize = 10;

/// Variance floor applied when the residuals are degenerate.
const SIGMA2_FLOOR: f64 = 1e-12;

/// Which mean specification to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    /// `theta = 0`: constant expected increment.
    ConstrainedMean,
    /// `theta` free: expected increment grows as `mu * i^theta`.
    UnconstrainedMean,
}

/// Maximum-likelihood estimates, standard errors, and the covariance entry
/// the unconstrained t-statistics need.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfitModelFit {
    pub model: ModelKind,
    pub mu: f64,
    pub sigma2: f64,
    pub lambda: f64,
    /// Zero under the constrained model.
    pub theta: f64,
    pub se_mu: f64,
    pub se_sigma2: f64,
    pub se_lambda: f64,
    /// `NaN` under the constrained model.
    pub se_theta: f64,
    /// Covariance of `(theta, lambda)`; zero under the constrained model.
    pub cov_theta_lambda: f64,
    pub loglik: f64,
    /// Set when degenerate residuals forced the variance to its floor.
    pub sigma2_floored: bool,
}

/// The named sub-hypothesis t-statistics and their minimum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinTStatistics {
    pub t_stats: Vec<(String, f64)>,
    pub min_t: f64,
}

/// A simulated null distribution of Min-t and its rejection threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalValue {
    pub t_c: f64,
    pub alpha: f64,
    pub n_sims: usize,
    /// Simulated paths that had to be redrawn after a fit failure.
    pub resimulations: usize,
    /// Min-t samples in simulation order (deterministic per seed).
    pub samples: Vec<f64>,
}

/// Probability the cumulative P&L is negative at horizon `n`; `None` when
/// the prefix is too short to fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossProbability {
    pub n: usize,
    pub probability: Option<f64>,
}

/// Natural-parameter log-likelihood (additive constants dropped):
/// `-1/2 sum(ln sigma2 + 2 lambda ln i) - 1/(2 sigma2) sum w_i e_i^2`
/// with `w_i = i^(-2 lambda)` and residuals `e_i = dv_i - mu i^theta`.
fn loglik(dv: &[f64], log_i: &[f64], mu: f64, sigma2: f64, lambda: f64, theta: f64) -> f64 {
    if sigma2 <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut ll = 0.0;
    for (d, &a) in dv.iter().zip(log_i) {
        let w = (-2.0 * lambda * a).exp();
        let g = (theta * a).exp();
        let e = d - mu * g;
        ll += -0.5 * (sigma2.ln() + 2.0 * lambda * a) - w * e * e / (2.0 * sigma2);
    }
    ll
}

/// Accumulated sufficient statistics for the gradient and Hessian at a
/// parameter point. `a` abbreviates `ln i` below.
struct Moments {
    t: f64,
    sum_a: f64,
    /// `sum w g e`
    wge: f64,
    /// `sum w e^2`
    we2: f64,
    /// `sum a w e^2`
    awe2: f64,
    /// `sum a w g e`
    awge: f64,
    /// `sum w g^2`
    wg2: f64,
    /// `sum a w g (e - mu g)`
    awg_e_mug: f64,
    /// `sum a^2 w e^2`
    a2we2: f64,
    /// `sum a^2 w g e`
    a2wge: f64,
    /// `sum a^2 w g (e - mu g)`
    a2wg_e_mug: f64,
}

fn moments(dv: &[f64], log_i: &[f64], mu: f64, lambda: f64, theta: f64) -> Moments {
    let mut m = Moments {
        t: dv.len() as f64,
        sum_a: 0.0,
        wge: 0.0,
        we2: 0.0,
        awe2: 0.0,
        awge: 0.0,
        wg2: 0.0,
        awg_e_mug: 0.0,
        a2we2: 0.0,
        a2wge: 0.0,
        a2wg_e_mug: 0.0,
    };
    for (d, &a) in dv.iter().zip(log_i) {
        let w = (-2.0 * lambda * a).exp();
        let g = (theta * a).exp();
        let e = d - mu * g;
        m.sum_a += a;
        m.wge += w * g * e;
        m.we2 += w * e * e;
        m.awe2 += a * w * e * e;
        m.awge += a * w * g * e;
        m.wg2 += w * g * g;
        m.awg_e_mug += a * w * g * (e - mu * g);
        m.a2we2 += a * a * w * e * e;
        m.a2wge += a * a * w * g * e;
        m.a2wg_e_mug += a * a * w * g * (e - mu * g);
    }
    m
}

/// Analytic gradient in the order `(mu, sigma2, lambda[, theta])`.
fn gradient(m: &Moments, sigma2: f64, mu: f64, with_theta: bool) -> Vec<f64> {
    let s2 = sigma2;
    let mut g = vec![
        m.wge / s2,
        -m.t / (2.0 * s2) + m.we2 / (2.0 * s2 * s2),
        -m.sum_a + m.awe2 / s2,
    ];
    if with_theta {
        g.push(mu * m.awge / s2);
    }
    g
}

/// Analytic Hessian in the same parameter order as [`gradient`].
fn hessian(m: &Moments, sigma2: f64, mu: f64, with_theta: bool) -> nalgebra::DMatrix<f64> {
    let s2 = sigma2;
    let s4 = s2 * s2;
    let dim = if with_theta { 4 } else { 3 };
    let mut h = nalgebra::DMatrix::zeros(dim, dim);
    h[(0, 0)] = -m.wg2 / s2;
    h[(0, 1)] = -m.wge / s4;
    h[(0, 2)] = -2.0 * m.awge / s2;
    h[(1, 1)] = m.t / (2.0 * s4) - m.we2 / (s4 * s2);
    h[(1, 2)] = -m.awe2 / s4;
    h[(2, 2)] = -2.0 * m.a2we2 / s2;
    if with_theta {
        h[(0, 3)] = m.awg_e_mug / s2;
        h[(1, 3)] = -mu * m.awge / s4;
        h[(2, 3)] = -2.0 * mu * m.a2wge / s2;
        h[(3, 3)] = mu * m.a2wg_e_mug / s2;
    }
    for i in 0..dim {
        for j in 0..i {
            h[(i, j)] = h[(j, i)];
        }
    }
    h
}

fn validate_increments(dv: &[f64]) -> Result<()> {
    if dv.len() < MIN_INCREMENTS {
        return Err(Error::Input(format!(
            "need at least {MIN_INCREMENTS} increments, got {}",
            dv.len()
        )));
    }
    if dv.iter().any(|d| !d.is_finite()) {
        return Err(Error::Input("increments must be finite".into()));
    }
    if dv.iter().all(|&d| d == 0.0) {
        return Err(Error::Input("increments are identically zero".into()));
    }
    Ok(())
}

/// Ordinary-least-squares slope of `ln(e_i^2)` on `2 ln i`: a cheap,
/// robust starting value for the variance-decay exponent.
fn lambda_start(dv: &[f64], log_i: &[f64], mu0: f64) -> f64 {
    let eps: f64 = 1e-12
        * dv.iter().map(|d| (d - mu0) * (d - mu0)).sum::<f64>().max(f64::MIN_POSITIVE)
        / dv.len() as f64;
    let xs: Vec<f64> = log_i.iter().map(|&a| 2.0 * a).collect();
    let ys: Vec<f64> = dv
        .iter()
        .map(|d| ((d - mu0) * (d - mu0) + eps).ln())
        .collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx > 0.0 {
        (sxy / sxx).clamp(-2.0, 2.0)
    } else {
        0.0
    }
}

/// Standard errors (and the `(theta, lambda)` covariance) from the inverse
/// negative Hessian at the optimum.
fn standard_errors(
    h: &nalgebra::DMatrix<f64>,
) -> Result<(Vec<f64>, f64)> {
    let info = -h.clone();
    let inv = info
        .try_inverse()
        .ok_or_else(|| Error::Computation("information matrix is singular".into()))?;
    let dim = inv.nrows();
    let mut ses = Vec::with_capacity(dim);
    for i in 0..dim {
        let v = inv[(i, i)];
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Computation(
                "Hessian is not negative definite at the optimum".into(),
            ));
        }
        ses.push(v.sqrt());
    }
    let cov_tl = if dim == 4 { inv[(3, 2)] } else { 0.0 };
    Ok((ses, cov_tl))
}

/// Fit the profit-increment model by maximum likelihood: multi-start
/// Nelder-Mead over `(mu, ln sigma2, lambda[, theta])`, then a Newton
/// polish in natural parameters using the analytic derivatives.
pub fn fit_profit_model(dv: &[f64], model: ModelKind) -> Result<ProfitModelFit> {
    fit_impl(dv, model, None)
}

/// Log-likelihood of the profit model at arbitrary parameters (additive
/// constants dropped); exposed so fits can be audited externally.
pub fn profit_model_loglik(dv: &[f64], mu: f64, sigma2: f64, lambda: f64, theta: f64) -> f64 {
    let log_i: Vec<f64> = (1..=dv.len()).map(|i| (i as f64).ln()).collect();
    loglik(dv, &log_i, mu, sigma2, lambda, theta)
}

/// Analytic Hessian of the log-likelihood in parameter order
/// `(mu, sigma2, lambda[, theta])`, as dense rows; exposed so the curvature
/// behind the reported standard errors can be checked against finite
/// differences.
pub fn profit_model_hessian(
    dv: &[f64],
    mu: f64,
    sigma2: f64,
    lambda: f64,
    theta: f64,
    model: ModelKind,
) -> Vec<Vec<f64>> {
    let log_i: Vec<f64> = (1..=dv.len()).map(|i| (i as f64).ln()).collect();
    let with_theta = model == ModelKind::UnconstrainedMean;
    let m = moments(dv, &log_i, mu, lambda, theta);
    let h = hessian(&m, sigma2, mu, with_theta);
    (0..h.nrows()).map(|r| (0..h.ncols()).map(|c| h[(r, c)]).collect()).collect()
}

/// Internal entry point that can pin `lambda`, reducing the constrained
/// model to weighted-Gaussian maximum likelihood with a closed form.
fn fit_impl(dv: &[f64], model: ModelKind, fixed_lambda: Option<f64>) -> Result<ProfitModelFit> {
    validate_increments(dv)?;
    let log_i: Vec<f64> = (1..=dv.len()).map(|i| (i as f64).ln()).collect();
    let with_theta = model == ModelKind::UnconstrainedMean;

    if let (Some(lambda), ModelKind::ConstrainedMean) = (fixed_lambda, model) {
        return fit_fixed_lambda(dv, &log_i, lambda);
    }
    if fixed_lambda.is_some() {
        return Err(Error::Computation(
            "fixed-lambda fitting is only defined for the constrained model".into(),
        ));
    }

    let mu0 = dv.iter().sum::<f64>() / dv.len() as f64;
    let var0 = dv.iter().map(|d| (d - mu0) * (d - mu0)).sum::<f64>() / dv.len() as f64;
    if var0 <= 0.0 {
        // All increments equal (and nonzero): the residuals vanish at the
        // sample mean, so clamp the variance and report the floor.
        return fit_degenerate(dv, &log_i, mu0, with_theta);
    }

    let objective = |x: &[f64]| -> f64 {
        let theta = if with_theta { x[3] } else { 0.0 };
        -loglik(dv, &log_i, x[0], x[1].exp(), x[2], theta)
    };
    let mut steps = vec![0.5 * var0.sqrt() + 0.1 * mu0.abs(), 0.5, 0.25];
    let mut start_a = vec![mu0, var0.ln(), lambda_start(dv, &log_i, mu0)];
    let mut start_b = vec![mu0, var0.ln(), 0.0];
    if with_theta {
        steps.push(0.25);
        start_a.push(0.0);
        start_b.push(0.0);
    }

    let opts = NmOptions { tol: 1e-10, max_iter: 600 };
    let mut best: Option<crate::optim::NmResult> = None;
    for start in [&start_a, &start_b] {
        let r = nelder_mead_restarts(objective, start, &steps, opts, 2);
        if best.as_ref().map_or(true, |b| r.fx < b.fx) {
            best = Some(r);
        }
    }
    let best = best.unwrap();
    if !best.fx.is_finite() {
        return Err(Error::Computation(format!(
            "profit-model likelihood is non-finite at the optimizer's best point ({:?})",
            best.x
        )));
    }

    // Newton polish in natural parameters; positivity of sigma2 enforced by
    // step halving.
    let mut p = vec![best.x[0], best.x[1].exp(), best.x[2]];
    if with_theta {
        p.push(best.x[3]);
    }
    let mut ll = loglik(dv, &log_i, p[0], p[1], p[2], if with_theta { p[3] } else { 0.0 });
    for _ in 0..60 {
        let theta = if with_theta { p[3] } else { 0.0 };
        let m = moments(dv, &log_i, p[0], p[2], theta);
        let g = gradient(&m, p[1], p[0], with_theta);
        let h = hessian(&m, p[1], p[0], with_theta);
        let rhs = nalgebra::DVector::from_vec(g.iter().map(|v| -v).collect());
        let delta = match h.clone().lu().solve(&rhs) {
            Some(d) => d,
            None => break,
        };
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let cand: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, d)| a + step * d).collect();
            if cand[1] > 0.0 {
                let cand_theta = if with_theta { cand[3] } else { 0.0 };
                let cand_ll = loglik(dv, &log_i, cand[0], cand[1], cand[2], cand_theta);
                if cand_ll.is_finite() && cand_ll >= ll {
                    let gained = cand_ll - ll;
                    p = cand;
                    ll = cand_ll;
                    improved = true;
                    if gained < 1e-14 * (1.0 + ll.abs()) {
                        // Converged to machine precision.
                        return finish_fit(dv, &log_i, &p, ll, model, false);
                    }
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    finish_fit(dv, &log_i, &p, ll, model, false)
}

fn finish_fit(
    dv: &[f64],
    log_i: &[f64],
    p: &[f64],
    ll: f64,
    model: ModelKind,
    sigma2_floored: bool,
) -> Result<ProfitModelFit> {
    let with_theta = model == ModelKind::UnconstrainedMean;
    let theta = if with_theta { p[3] } else { 0.0 };
    let m = moments(dv, log_i, p[0], p[2], theta);
    let h = hessian(&m, p[1], p[0], with_theta);
    let (ses, cov_tl) = standard_errors(&h)?;
    Ok(ProfitModelFit {
        model,
        mu: p[0],
        sigma2: p[1],
        lambda: p[2],
        theta,
        se_mu: ses[0],
        se_sigma2: ses[1],
        se_lambda: ses[2],
        se_theta: if with_theta { ses[3] } else { f64::NAN },
        cov_theta_lambda: cov_tl,
        loglik: ll,
        sigma2_floored,
    })
}

/// With `lambda` pinned the constrained model is weighted Gaussian
/// regression on a constant, so the MLE is available in closed form:
/// `mu = sum(w dv) / sum(w)` and `sigma2 = sum(w e^2) / T`.
fn fit_fixed_lambda(dv: &[f64], log_i: &[f64], lambda: f64) -> Result<ProfitModelFit> {
    let w: Vec<f64> = log_i.iter().map(|&a| (-2.0 * lambda * a).exp()).collect();
    let sw: f64 = w.iter().sum();
    let mu = w.iter().zip(dv).map(|(wi, d)| wi * d).sum::<f64>() / sw;
    let sigma2 =
        w.iter().zip(dv).map(|(wi, d)| wi * (d - mu) * (d - mu)).sum::<f64>() / dv.len() as f64;
    if sigma2 <= 0.0 {
        return fit_degenerate(dv, log_i, mu, false);
    }
    let ll = loglik(dv, log_i, mu, sigma2, lambda, 0.0);
    // Standard errors over the free parameters only: the (mu, sigma2)
    // block of the information matrix.
    let m = moments(dv, log_i, mu, lambda, 0.0);
    let h_full = hessian(&m, sigma2, mu, false);
    let h = h_full.view((0, 0), (2, 2)).into_owned();
    let (ses, _) = standard_errors(&h)?;
    Ok(ProfitModelFit {
        model: ModelKind::ConstrainedMean,
        mu,
        sigma2,
        lambda,
        theta: 0.0,
        se_mu: ses[0],
        se_sigma2: ses[1],
        se_lambda: f64::NAN,
        se_theta: f64::NAN,
        cov_theta_lambda: 0.0,
        loglik: ll,
        sigma2_floored: false,
    })
}

/// Degenerate residuals: the likelihood is unbounded as `sigma2 -> 0`, so
/// the variance is clamped at its floor. That point is not a stationary
/// maximum, hence no Fisher standard errors exist; downstream t-statistics
/// refuse such fits.
fn fit_degenerate(
    dv: &[f64],
    log_i: &[f64],
    mu: f64,
    with_theta: bool,
) -> Result<ProfitModelFit> {
    let model = if with_theta { ModelKind::UnconstrainedMean } else { ModelKind::ConstrainedMean };
    Ok(ProfitModelFit {
        model,
        mu,
        sigma2: SIGMA2_FLOOR,
        lambda: 0.0,
        theta: 0.0,
        se_mu: f64::NAN,
        se_sigma2: f64::NAN,
        se_lambda: f64::NAN,
        se_theta: f64::NAN,
        cov_theta_lambda: 0.0,
        loglik: loglik(dv, log_i, mu, SIGMA2_FLOOR, 0.0, 0.0),
        sigma2_floored: true,
    })
}

/// Compute the named sub-hypothesis t-statistics and their minimum.
///
/// Constrained model: `Min{t(mu), t(-lambda)}`. Unconstrained model:
/// `Min{t(mu), t(theta - lambda), t(theta - lambda + 0.5),
/// Max[t(-lambda), t(theta + 1)]}`, where the `theta - lambda` ratios use
/// the full covariance of the pair.
pub fn min_t(fit: &ProfitModelFit) -> Result<MinTStatistics> {
    let finite_pos = |v: f64| v.is_finite() && v > 0.0;
    if !finite_pos(fit.se_mu) || !finite_pos(fit.se_lambda) {
        return Err(Error::Computation(
            "t-statistics need positive standard errors".into(),
        ));
    }
    let t_mu = fit.mu / fit.se_mu;
    let t_neg_lambda = -fit.lambda / fit.se_lambda;
    let t_stats: Vec<(String, f64)> = match fit.model {
        ModelKind::ConstrainedMean => vec![
            ("t(mu)".to_string(), t_mu),
            ("t(-lambda)".to_string(), t_neg_lambda),
        ],
        ModelKind::UnconstrainedMean => {
            if !finite_pos(fit.se_theta) {
                return Err(Error::Computation(
                    "t-statistics need positive standard errors".into(),
                ));
            }
            let var_diff = fit.se_theta * fit.se_theta + fit.se_lambda * fit.se_lambda
                - 2.0 * fit.cov_theta_lambda;
            if !finite_pos(var_diff) {
                return Err(Error::Computation(
                    "covariance of (theta, lambda) is degenerate".into(),
                ));
            }
            let se_diff = var_diff.sqrt();
            let t_theta_plus_one = (fit.theta + 1.0) / fit.se_theta;
            vec![
                ("t(mu)".to_string(), t_mu),
                ("t(theta-lambda)".to_string(), (fit.theta - fit.lambda) / se_diff),
                (
                    "t(theta-lambda+0.5)".to_string(),
                    (fit.theta - fit.lambda + 0.5) / se_diff,
                ),
                (
                    "max(t(-lambda), t(theta+1))".to_string(),
                    t_neg_lambda.max(t_theta_plus_one),
                ),
            ]
        }
    };
    let min_t = t_stats
        .iter()
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min);
    Ok(MinTStatistics { t_stats, min_t })
}

/// Draw one path of increments `mu i^theta + sigma i^lambda z_i`.
pub fn simulate_profit_path<R: rand::Rng + ?Sized>(
    mu: f64,
    sigma2: f64,
    lambda: f64,
    theta: f64,
    t_len: usize,
    rng: &mut R,
) -> Vec<f64> {
    let sigma = sigma2.sqrt();
    (1..=t_len)
        .map(|i| {
            let z: f64 = StandardNormal.sample(rng);
            let fi = i as f64;
            mu * fi.powf(theta) + sigma * fi.powf(lambda) * z
        })
        .collect()
}

/// Empirical quantile with a midpoint convention: when `q * n` lands on an
/// integer the quantile averages the neighboring order statistics, so the
/// 0.5 quantile of an even-sized sample is the textbook median.
pub fn empirical_quantile(samples: &[f64], q: f64) -> f64 {
    assert!(!samples.is_empty(), "quantile of an empty sample");
    assert!((0.0..=1.0).contains(&q), "quantile level out of range");
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let k = q * n as f64;
    let rounded = k.round();
    if (k - rounded).abs() < 1e-9 {
        let r = rounded as usize;
        if r == 0 {
            return sorted[0];
        }
        if r >= n {
            return sorted[n - 1];
        }
        (sorted[r - 1] + sorted[r]) / 2.0
    } else {
        sorted[(k.floor() as usize).min(n - 1)]
    }
}

/// Deterministic per-path seed: a splitmix64 finalizer over the base seed,
/// path index, and redraw attempt.
fn path_seed(seed: u64, index: u64, attempt: u64) -> u64 {
    let mut z = seed
        ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ attempt.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const MAX_REDRAWS: u64 = 32;

/// Simulate the null distribution of Min-t under the constrained model
/// with parameters `(mu, lambda, sigma2)` and return the `1 - alpha`
/// quantile. Paths whose fit fails are redrawn (and counted); paths run in
/// parallel but are merged in index order, so results are reproducible for
/// a given seed.
pub fn critical_value(
    t_len: usize,
    alpha: f64,
    n_sims: usize,
    params: (f64, f64, f64),
    seed: u64,
) -> Result<CriticalValue> {
    if t_len < MIN_INCREMENTS {
        return Err(Error::Input(format!(
            "simulated length must be at least {MIN_INCREMENTS}"
        )));
    }
    if n_sims == 0 {
        return Err(Error::Input("need at least one simulation".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Input("alpha must be inside (0, 1)".into()));
    }
    let (mu, lambda, sigma2) = params;
    if sigma2 <= 0.0 {
        return Err(Error::Input("simulation variance must be positive".into()));
    }

    let results: Vec<(f64, u64)> = (0..n_sims as u64)
        .into_par_iter()
        .map(|i| -> Result<(f64, u64)> {
            for attempt in 0..MAX_REDRAWS {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(path_seed(seed, i, attempt));
                let dv = simulate_profit_path(mu, sigma2, lambda, 0.0, t_len, &mut rng);
                let stat = fit_profit_model(&dv, ModelKind::ConstrainedMean)
                    .and_then(|fit| min_t(&fit));
                if let Ok(stat) = stat {
                    return Ok((stat.min_t, attempt));
                }
            }
            Err(Error::Computation(format!(
                "path {i} failed to fit after {MAX_REDRAWS} redraws"
            )))
        })
        .collect::<Result<Vec<_>>>()?;

    let samples: Vec<f64> = results.iter().map(|(v, _)| *v).collect();
    let resimulations = results.iter().map(|(_, a)| *a as usize).sum();
    let t_c = empirical_quantile(&samples, 1.0 - alpha);
    Ok(CriticalValue { t_c, alpha, n_sims, resimulations, samples })
}

/// Fraction of the simulated null sample at or above the observed Min-t.
pub fn p_value(observed: f64, samples: &[f64]) -> f64 {
    assert!(!samples.is_empty(), "p-value against an empty sample");
    samples.iter().filter(|&&s| s >= observed).count() as f64 / samples.len() as f64
}

/// Probability the cumulative P&L is below zero at horizon `n` under the
/// constrained model: `Phi(-mu n / (sigma sqrt(sum i^(2 lambda))))`.
/// Exactly one half when the drift estimate is zero.
pub fn loss_probability(mu: f64, sigma2: f64, lambda: f64, n: usize) -> f64 {
    if mu == 0.0 {
        return 0.5;
    }
    let var_sum: f64 = (1..=n).map(|i| (i as f64).powf(2.0 * lambda)).sum();
    let z = -mu * n as f64 / (sigma2.sqrt() * var_sum.sqrt());
    Normal::standard().cdf(z)
}

/// Loss probabilities for every horizon `n <= n_max`, refitting the
/// constrained model on each prefix; horizons whose prefix is shorter than
/// `min_len` (or whose fit fails) are marked unavailable.
pub fn probability_of_loss_curve(
    dv: &[f64],
    n_max: usize,
    min_len: usize,
) -> Result<Vec<LossProbability>> {
    if n_max > dv.len() {
        return Err(Error::Input(format!(
            "horizon {n_max} exceeds the {} observed increments",
            dv.len()
        )));
    }
    let min_len = min_len.max(MIN_INCREMENTS);
    Ok((1..=n_max)
        .map(|n| {
            if n < min_len {
                return LossProbability { n, probability: None };
            }
            let probability = fit_profit_model(&dv[..n], ModelKind::ConstrainedMean)
                .ok()
                .map(|fit| loss_probability(fit.mu, fit.sigma2, fit.lambda, n));
            LossProbability { n, probability }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_chacha::ChaCha8Rng;

    fn sim(mu: f64, sigma2: f64, lambda: f64, theta: f64, t: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        simulate_profit_path(mu, sigma2, lambda, theta, t, &mut rng)
    }

    fn packed_loglik(dv: &[f64], log_i: &[f64], p: &[f64], with_theta: bool) -> f64 {
        loglik(dv, log_i, p[0], p[1], p[2], if with_theta { p[3] } else { 0.0 })
    }

    #[test]
    fn gradient_vanishes_at_gaussian_closed_form() {
        // With lambda = theta = 0 the MLE is the sample mean and biased
        // variance; the analytic score must vanish there up to summation
        // round-off.
        let dv = sim(0.001, 4e-4, 0.0, 0.0, 300, 3);
        let log_i: Vec<f64> = (1..=dv.len()).map(|i| (i as f64).ln()).collect();
        let mu = dv.iter().sum::<f64>() / dv.len() as f64;
        let s2 = dv.iter().map(|d| (d - mu) * (d - mu)).sum::<f64>() / dv.len() as f64;
        let m = moments(&dv, &log_i, mu, 0.0, 0.0);
        let g = gradient(&m, s2, mu, false);
        assert!(g[0].abs() < 1e-9 / s2, "score wrt mu: {}", g[0]);
        assert!(g[1].abs() < 1e-6 / s2, "score wrt sigma2: {}", g[1]);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let dv = sim(5e-4, 1e-4, -0.15, 0.1, 200, 11);
        let log_i: Vec<f64> = (1..=dv.len()).map(|i| (i as f64).ln()).collect();
        let p = [3e-4, 1.3e-4, -0.1, 0.05];
        let m = moments(&dv, &log_i, p[0], p[2], p[3]);
        let g = gradient(&m, p[1], p[0], true);
        let h = [1e-7, 1e-9, 1e-6, 1e-6];
        for k in 0..4 {
            let mut up = p;
            up[k] += h[k];
            let mut dn = p;
            dn[k] -= h[k];
            let fd = (packed_loglik(&dv, &log_i, &up, true)
                - packed_loglik(&dv, &log_i, &dn, true))
                / (2.0 * h[k]);
            assert_relative_eq!(g[k], fd, max_relative = 1e-5);
        }
    }

    #[test]
    fn analytic_hessian_matches_finite_differences() {
        let dv = sim(5e-4, 1e-4, -0.15, 0.1, 200, 13);
        let log_i: Vec<f64> = (1..=dv.len()).map(|i| (i as f64).ln()).collect();
        let p = [4e-4, 1.2e-4, -0.12, 0.08];
        let m = moments(&dv, &log_i, p[0], p[2], p[3]);
        let hess = hessian(&m, p[1], p[0], true);
        // Central differences of the analytic gradient.
        let steps = [1e-7, 1e-9, 1e-6, 1e-6];
        for k in 0..4 {
            let mut up = p;
            up[k] += steps[k];
            let mut dn = p;
            dn[k] -= steps[k];
            let gu = gradient(&moments(&dv, &log_i, up[0], up[2], up[3]), up[1], up[0], true);
            let gd = gradient(&moments(&dv, &log_i, dn[0], dn[2], dn[3]), dn[1], dn[0], true);
            for row in 0..4 {
                let fd = (gu[row] - gd[row]) / (2.0 * steps[k]);
                assert_relative_eq!(hess[(row, k)], fd, max_relative = 1e-4);
            }
        }
    }

    #[test]
    fn fixed_lambda_reduces_to_gaussian_mle() {
        let dv = sim(0.002, 9e-4, 0.0, 0.0, 250, 17);
        let fit = fit_impl(&dv, ModelKind::ConstrainedMean, Some(0.0)).unwrap();
        let mean = dv.iter().sum::<f64>() / dv.len() as f64;
        let var = dv.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / dv.len() as f64;
        assert_relative_eq!(fit.mu, mean, max_relative = 1e-14);
        assert_relative_eq!(fit.sigma2, var, max_relative = 1e-14);
    }

    #[test]
    fn constrained_fit_recovers_simulated_parameters() {
        let (mu, sigma2, lambda) = (5e-4, 1e-4, -0.1);
        let dv = sim(mu, sigma2, lambda, 0.0, 2000, 23);
        let fit = fit_profit_model(&dv, ModelKind::ConstrainedMean).unwrap();
        assert!((fit.mu - mu).abs() < 3.0 * fit.se_mu);
        assert!((fit.sigma2 - sigma2).abs() < 3.0 * fit.se_sigma2);
        assert!((fit.lambda - lambda).abs() < 3.0 * fit.se_lambda);
        assert!(!fit.sigma2_floored);
    }

    #[test]
    fn unconstrained_fit_recovers_theta() {
        let (mu, sigma2, lambda, theta) = (2e-3, 1e-4, -0.2, 0.3);
        let dv = sim(mu, sigma2, lambda, theta, 1500, 29);
        let fit = fit_profit_model(&dv, ModelKind::UnconstrainedMean).unwrap();
        assert!((fit.theta - theta).abs() < 3.0 * fit.se_theta, "theta {}", fit.theta);
        assert!((fit.lambda - lambda).abs() < 3.0 * fit.se_lambda);
    }

    #[test]
    fn min_t_constrained_arithmetic() {
        let fit = ProfitModelFit {
            model: ModelKind::ConstrainedMean,
            mu: 0.002,
            sigma2: 1e-4,
            lambda: -0.05,
            theta: 0.0,
            se_mu: 0.001,
            se_sigma2: 1e-5,
            se_lambda: 0.02,
            se_theta: f64::NAN,
            cov_theta_lambda: 0.0,
            loglik: 0.0,
            sigma2_floored: false,
        };
        let stat = min_t(&fit).unwrap();
        assert_relative_eq!(stat.min_t, 2.0, max_relative = 1e-12);
        assert_eq!(stat.t_stats.len(), 2);
        assert!(stat.t_stats.iter().all(|(_, v)| stat.min_t <= *v));
    }

    #[test]
    fn positive_lambda_makes_min_t_negative() {
        let fit = ProfitModelFit {
            model: ModelKind::ConstrainedMean,
            mu: 0.01,
            sigma2: 1e-4,
            lambda: 0.1,
            theta: 0.0,
            se_mu: 0.001,
            se_sigma2: 1e-5,
            se_lambda: 0.02,
            se_theta: f64::NAN,
            cov_theta_lambda: 0.0,
            loglik: 0.0,
            sigma2_floored: false,
        };
        assert!(min_t(&fit).unwrap().min_t < 0.0);
    }

    #[test]
    fn min_t_unconstrained_composition() {
        let fit = ProfitModelFit {
            model: ModelKind::UnconstrainedMean,
            mu: 0.001,
            sigma2: 1e-4,
            lambda: -0.1,
            theta: 0.2,
            se_mu: 0.0005,
            se_sigma2: 1e-5,
            se_lambda: 0.05,
            se_theta: 0.1,
            cov_theta_lambda: 0.002,
            loglik: 0.0,
            sigma2_floored: false,
        };
        let stat = min_t(&fit).unwrap();
        let se_diff = (0.1f64 * 0.1 + 0.05 * 0.05 - 2.0 * 0.002).sqrt();
        assert_eq!(stat.t_stats.len(), 4);
        assert_relative_eq!(stat.t_stats[1].1, 0.3 / se_diff, max_relative = 1e-12);
        assert_relative_eq!(stat.t_stats[2].1, 0.8 / se_diff, max_relative = 1e-12);
        // max(t(-lambda) = 2, t(theta+1) = 12) = 12.
        assert_relative_eq!(stat.t_stats[3].1, 12.0, max_relative = 1e-12);
        // t(mu) = 2 is the smallest constituent.
        assert_relative_eq!(stat.min_t, 2.0, max_relative = 1e-12);
        assert!(stat.t_stats.iter().all(|(_, v)| stat.min_t <= *v));
    }

    #[test]
    fn scale_equivariance_of_t_statistics() {
        let dv = sim(8e-4, 2e-4, -0.15, 0.0, 150, 31);
        let base = min_t(&fit_profit_model(&dv, ModelKind::ConstrainedMean).unwrap()).unwrap();
        for k in [0.5, 2.0, 1000.0] {
            let scaled: Vec<f64> = dv.iter().map(|d| d * k).collect();
            let s = min_t(&fit_profit_model(&scaled, ModelKind::ConstrainedMean).unwrap()).unwrap();
            assert_relative_eq!(s.min_t, base.min_t, max_relative = 1e-6);
            for (a, b) in s.t_stats.iter().zip(&base.t_stats) {
                assert_relative_eq!(a.1, b.1, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn quantile_midpoint_convention() {
        let sample = [4.0, 1.0, 3.0, 2.0];
        // Even count: 0.5 lands on an integer cut, so the median averages.
        assert_eq!(empirical_quantile(&sample, 0.5), 2.5);
        let odd = [5.0, 1.0, 3.0];
        assert_eq!(empirical_quantile(&odd, 0.5), 3.0);
        assert_eq!(empirical_quantile(&sample, 0.0), 1.0);
        assert_eq!(empirical_quantile(&sample, 1.0), 4.0);
        // Monotone in q.
        assert!(empirical_quantile(&sample, 0.25) <= empirical_quantile(&sample, 0.75));
    }

    #[test]
    fn p_value_trivial_cases() {
        let sample = [0.1, 0.4, 0.2, 0.3];
        assert_eq!(p_value(0.5, &sample), 0.0);
        assert_eq!(p_value(empirical_quantile(&sample, 0.5), &sample), 0.5);
        assert_eq!(p_value(-1.0, &sample), 1.0);
    }

    #[test]
    fn loss_probability_half_at_zero_drift() {
        assert_eq!(loss_probability(0.0, 1e-4, -0.3, 50), 0.5);
    }

    #[test]
    fn loss_probability_formula_hand_case() {
        // n = 2, lambda = 0: Phi(-mu * 2 / (sigma * sqrt(2))).
        let p = loss_probability(0.001, 1e-4, 0.0, 2);
        let z = -0.001 * 2.0 / (0.01 * 2.0f64.sqrt());
        assert_relative_eq!(p, Normal::standard().cdf(z), max_relative = 1e-12);
    }

    #[test]
    fn loss_curve_marks_short_prefixes_and_falls_for_arbitrage() {
        let dv = sim(0.002, 1e-4, -0.2, 0.0, 400, 37);
        let curve = probability_of_loss_curve(&dv, 400, 10).unwrap();
        assert_eq!(curve.len(), 400);
        assert!(curve[..9].iter().all(|p| p.probability.is_none()));
        assert!(curve[9].probability.is_some());
        let last = curve.last().unwrap().probability.unwrap();
        assert!(last < 0.05, "terminal loss probability {last}");
        for p in &curve {
            if let Some(v) = p.probability {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn critical_value_median_and_determinism() {
        let a = critical_value(60, 0.5, 200, (0.0, 0.0, 0.01), 99).unwrap();
        let b = critical_value(60, 0.5, 200, (0.0, 0.0, 0.01), 99).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.t_c, empirical_quantile(&a.samples, 0.5));
        let strict = critical_value(60, 0.05, 200, (0.0, 0.0, 0.01), 99).unwrap();
        assert!(strict.t_c >= a.t_c, "quantile must not decrease as alpha falls");
        assert_eq!(strict.samples, a.samples);
    }

    #[test]
    fn degenerate_inputs_are_rejected_or_flagged() {
        assert!(fit_profit_model(&[0.0; 50], ModelKind::ConstrainedMean).is_err());
        assert!(fit_profit_model(&[1.0; 5], ModelKind::ConstrainedMean).is_err());
        let fit = fit_profit_model(&[0.25; 50], ModelKind::ConstrainedMean).unwrap();
        assert!(fit.sigma2_floored);
        assert_relative_eq!(fit.mu, 0.25, max_relative = 1e-12);
        assert_eq!(fit.sigma2, 1e-12);
        // No stationary maximum, no Fisher information: t-statistics must
        // refuse the flagged fit rather than invent standard errors.
        assert!(min_t(&fit).is_err());
    }
}
