//! Derivative-free minimization via the Nelder-Mead simplex.
//!
//! Small and self-contained: the only consumers are the profit-model
//! likelihood and the GARCH forecaster, both of which optimize over at most
//! four well-scaled parameters. Objectives may return `NaN` or infinity
//! outside their domain; such points are treated as worse than any finite
//! value so the simplex backs away on its own.

/// Tuning knobs for a single Nelder-Mead run.
#[derive(Debug, Clone, Copy)]
pub struct NmOptions {
    /// Stop once the spread of objective values across the simplex falls
    /// below this.
    pub tol: f64,
    /// Iteration cap per run.
    pub max_iter: usize,
}

impl Default for NmOptions {
    fn default() -> Self {
        NmOptions { tol: 1e-10, max_iter: 2000 }
    }
}

/// Outcome of a minimization.
#[derive(Debug, Clone)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimize `f` starting from `x0`, with `steps[i]` the initial simplex
/// displacement along coordinate `i`.
pub fn nelder_mead<F>(f: F, x0: &[f64], steps: &[f64], opts: NmOptions) -> NmResult
where
    F: Fn(&[f64]) -> f64,
{
    assert_eq!(x0.len(), steps.len());
    let n = x0.len();
    assert!(n > 0, "cannot optimize over zero parameters");

    // Standard coefficients: reflect 1, expand 2, contract 1/2, shrink 1/2.
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        let step = if steps[i] != 0.0 {
            steps[i]
        } else {
            // Degenerate displacement would collapse the simplex; fall back
            // to something proportionate to the coordinate.
            (0.1 * x0[i].abs()).max(1e-4)
        };
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| sanitize(f(v))).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;

        // Order: best first, worst last.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        if values[n] - values[0] < opts.tol {
            converged = true;
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }

        let worst = simplex[n].clone();
        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&worst)
            .map(|(c, w)| c + ALPHA * (c - w))
            .collect();
        let f_reflect = sanitize(f(&reflect));

        if f_reflect < values[0] {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + GAMMA * ALPHA * (c - w))
                .collect();
            let f_expand = sanitize(f(&expand));
            if f_expand < f_reflect {
                simplex[n] = expand;
                values[n] = f_expand;
            } else {
                simplex[n] = reflect;
                values[n] = f_reflect;
            }
        } else if f_reflect < values[n - 1] {
            simplex[n] = reflect;
            values[n] = f_reflect;
        } else {
            // Contract toward the centroid, outside or inside depending on
            // whether reflection at least beat the worst vertex.
            let (anchor, f_anchor) = if f_reflect < values[n] {
                (&reflect, f_reflect)
            } else {
                (&worst, values[n])
            };
            let contract: Vec<f64> = centroid
                .iter()
                .zip(anchor)
                .map(|(c, a)| c + RHO * (a - c))
                .collect();
            let f_contract = sanitize(f(&contract));
            if f_contract < f_anchor {
                simplex[n] = contract;
                values[n] = f_contract;
            } else {
                // Shrink everything toward the best vertex.
                let best = simplex[0].clone();
                for i in 1..=n {
                    for (x, b) in simplex[i].iter_mut().zip(&best) {
                        *x = b + SIGMA * (*x - b);
                    }
                    values[i] = sanitize(f(&simplex[i]));
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=n {
        if values[i] < values[best] {
            best = i;
        }
    }
    NmResult {
        x: simplex[best].clone(),
        fx: values[best],
        iterations,
        converged,
    }
}

/// Run Nelder-Mead, then re-seed a fresh simplex at the incumbent and
/// repeat until a restart fails to improve the objective by `opts.tol`.
/// Restarting un-collapses the simplex, which is the standard cure for the
/// method stalling on narrow valleys.
pub fn nelder_mead_restarts<F>(
    f: F,
    x0: &[f64],
    steps: &[f64],
    opts: NmOptions,
    max_restarts: usize,
) -> NmResult
where
    F: Fn(&[f64]) -> f64,
{
    let mut result = nelder_mead(&f, x0, steps, opts);
    for _ in 0..max_restarts {
        let shrunk: Vec<f64> = steps.iter().map(|s| s * 0.1).collect();
        let next = nelder_mead(&f, &result.x, &shrunk, opts);
        let improved = next.fx < result.fx - opts.tol;
        result = NmResult {
            iterations: result.iterations + next.iterations,
            ..next
        };
        if !improved {
            break;
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadratic_one_dim() {
        let r = nelder_mead(|x| (x[0] - 3.0).powi(2), &[0.0], &[0.5], NmOptions::default());
        assert!(r.converged);
        assert_relative_eq!(r.x[0], 3.0, epsilon = 1e-5);
    }

    #[test]
    fn shifted_quadratic_five_dims() {
        let target = [1.0, -2.0, 0.5, 4.0, -0.25];
        let f = |x: &[f64]| -> f64 {
            x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum()
        };
        let r = nelder_mead_restarts(f, &[0.0; 5], &[0.5; 5], NmOptions::default(), 5);
        assert!(r.fx < 1e-10);
        for (got, want) in r.x.iter().zip(&target) {
            assert_relative_eq!(got, want, epsilon = 1e-4);
        }
    }

    #[test]
    fn rosenbrock_valley() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead_restarts(f, &[-1.2, 1.0], &[0.1, 0.1], NmOptions::default(), 5);
        assert!(r.fx < 1e-9, "fx = {}", r.fx);
        assert_relative_eq!(r.x[0], 1.0, epsilon = 1e-4);
        assert_relative_eq!(r.x[1], 1.0, epsilon = 1e-4);
    }

    #[test]
    fn nan_regions_are_avoided() {
        // Objective undefined left of zero; minimum sits inside the domain.
        let f = |x: &[f64]| {
            if x[0] <= 0.0 {
                f64::NAN
            } else {
                (x[0].ln() - 1.0).powi(2)
            }
        };
        let r = nelder_mead(f, &[0.5], &[0.4], NmOptions::default());
        assert!(r.converged);
        assert_relative_eq!(r.x[0], std::f64::consts::E, epsilon = 1e-4);
    }

    #[test]
    fn zero_step_is_replaced() {
        let r = nelder_mead(|x| x[0] * x[0], &[1.0], &[0.0], NmOptions::default());
        assert!(r.fx < 1e-8);
    }
}
