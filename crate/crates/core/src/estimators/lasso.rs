//! Lasso by cyclic coordinate descent on the Gram matrix.

use nalgebra::{DMatrix, DVector};

use super::{FitResult, SolverSettings};
use crate::error::{Error, Result};
use crate::scenario::Dataset;

/// Sweeps between attempts at an exact active-set finish.
const REFINE_INTERVAL: usize = 50;
const REFINE_STEPS: usize = 100;

/// Precomputed `rho^T rho` and `rho^T P`, reused across a lambda grid.
#[derive(Debug, Clone)]
pub struct LassoProblem {
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
}

impl LassoProblem {
    pub fn new(data: &Dataset) -> Self {
        let rho = data.prices();
        LassoProblem {
            gram: rho.tr_mul(rho),
            xty: rho.tr_mul(data.response()),
            yty: data.response().norm_squared(),
        }
    }

    /// Smallest lambda whose solution is identically zero: `max_i |rho_i^T P|`.
    pub fn lambda_max(&self) -> f64 {
        self.xty.amax()
    }

    /// Runs coordinate descent from `warm_start` (zeros if absent).
    pub fn solve(
        &self,
        lambda: f64,
        settings: &SolverSettings,
        warm_start: Option<&DVector<f64>>,
    ) -> Result<FitResult> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lasso lambda must be positive, got {lambda}")));
        }
        settings.validate()?;
        let n = self.xty.len();
        let mut alpha = match warm_start {
            Some(a) if a.len() == n => a.clone(),
            Some(a) => {
                return Err(Error::DimensionMismatch(format!("warm start of length {} for {n} columns", a.len())))
            }
            None => DVector::zeros(n),
        };
        // Near a neighbouring optimum a few active-set steps usually finish the
        // job; coordinate descent then only confirms it.
        if let Some(exact) = self.refine(&alpha, lambda, 1e-12 * lambda.max(1.0), REFINE_STEPS) {
            alpha = exact;
        }
        // corr = rho^T r, kept in sync with alpha.
        let mut corr = &self.xty - &self.gram * &alpha;

        // Full sweeps alternate with sweeps over the current support only; a
        // full sweep with no coordinate moving more than the tolerance ends it.
        // Slow progress hands over to an active-set refinement now and then.
        let mut iterations = 0;
        let mut converged = false;
        let mut full_sweep = true;
        let mut support: Vec<usize> = Vec::new();
        let mut next_refine = REFINE_INTERVAL;
        while iterations < settings.max_iterations {
            iterations += 1;
            let mut max_change = 0.0f64;
            let mut update = |i: usize, alpha: &mut DVector<f64>, corr: &mut DVector<f64>| {
                let g_ii = self.gram[(i, i)];
                let old = alpha[i];
                let new = if g_ii > 0.0 {
                    soft_threshold(corr[i] + g_ii * old, lambda) / g_ii
                } else {
                    0.0
                };
                let delta = new - old;
                if delta != 0.0 {
                    alpha[i] = new;
                    corr.axpy(-delta, &self.gram.column(i), 1.0);
                    max_change = max_change.max(delta.abs());
                }
            };
            if full_sweep {
                for i in 0..n {
                    update(i, &mut alpha, &mut corr);
                }
            } else {
                for &i in &support {
                    update(i, &mut alpha, &mut corr);
                }
            }
            if max_change < settings.tolerance {
                if full_sweep {
                    converged = true;
                    break;
                }
                full_sweep = true;
            } else if full_sweep {
                support = (0..n).filter(|&i| alpha[i] != 0.0).collect();
                if iterations >= next_refine {
                    next_refine = iterations + REFINE_INTERVAL;
                    if let Some(exact) = self.refine(&alpha, lambda, 1e-12 * lambda.max(1.0), REFINE_STEPS) {
                        alpha = exact;
                        corr = &self.xty - &self.gram * &alpha;
                        continue;
                    }
                }
                full_sweep = false;
            }
        }

        let objective = 0.5 * self.yty - alpha.dot(&self.xty)
            + 0.5 * alpha.dot(&(&self.gram * &alpha))
            + lambda * alpha.lp_norm(1);
        if !objective.is_finite() {
            return Err(Error::NumericalFailure("lasso objective is not finite".into()));
        }
        Ok(FitResult {
            alpha_hat: alpha,
            hyperparameter: lambda,
            beta_hat: None,
            m: None,
            w: None,
            iterations,
            final_objective: objective,
            converged,
        })
    }
}

impl LassoProblem {
    /// Primal active-set refinement from a coordinate-descent iterate.
    ///
    /// On the current support `S` with signs `s` the minimizer of the smooth
    /// piece is `G_SS^{-1} ((rho^T P)_S - lambda s)`. If it keeps the signs it is
    /// taken and the worst KKT violator outside `S` joins; otherwise the
    /// iterate moves towards it until the first coefficient reaches zero, and
    /// that coefficient leaves. Returns the optimum, or `None` if it is not
    /// reached within `max_steps` or a reduced system is singular.
    fn refine(&self, start: &DVector<f64>, lambda: f64, tol: f64, max_steps: usize) -> Option<DVector<f64>> {
        let n = self.xty.len();
        let mut x = start.clone();
        let mut support: Vec<usize> = (0..n).filter(|&i| x[i] != 0.0).collect();
        let mut signs: Vec<f64> = support.iter().map(|&i| x[i].signum()).collect();
        for _ in 0..max_steps {
            let k = support.len();
            let z = if k == 0 {
                DVector::zeros(0)
            } else {
                let sub = DMatrix::from_fn(k, k, |a, b| self.gram[(support[a], support[b])]);
                let rhs = DVector::from_fn(k, |a, _| self.xty[support[a]] - lambda * signs[a]);
                sub.cholesky()?.solve(&rhs)
            };
            if z.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let sign_ok = (0..k).all(|a| z[a] * signs[a] > 0.0);
            if sign_ok {
                for (a, &i) in support.iter().enumerate() {
                    x[i] = z[a];
                }
                let corr = &self.xty - &self.gram * &x;
                let mut worst: Option<(usize, f64)> = None;
                for j in 0..n {
                    if x[j] == 0.0 {
                        let excess = corr[j].abs() - lambda;
                        if excess > tol && worst.is_none_or(|(_, e)| excess > e) {
                            worst = Some((j, excess));
                        }
                    }
                }
                match worst {
                    None => return Some(x),
                    Some((j, _)) => {
                        support.push(j);
                        signs.push(corr[j].signum());
                    }
                }
            } else {
                // Largest step towards z that keeps every sign; at least one
                // coefficient lands on zero.
                let mut step = 1.0f64;
                let mut blocking = 0;
                for (a, &i) in support.iter().enumerate() {
                    if z[a] * signs[a] <= 0.0 {
                        let t = x[i] / (x[i] - z[a]);
                        if t < step {
                            step = t;
                            blocking = a;
                        }
                    }
                }
                for (a, &i) in support.iter().enumerate() {
                    x[i] += step * (z[a] - x[i]);
                }
                x[support[blocking]] = 0.0;
                let keep: Vec<usize> = (0..k).filter(|&a| x[support[a]] != 0.0 && x[support[a]] * signs[a] > 0.0).collect();
                for a in 0..k {
                    if !keep.contains(&a) {
                        x[support[a]] = 0.0;
                    }
                }
                support = keep.iter().map(|&a| support[a]).collect();
                signs = keep.iter().map(|&a| signs[a]).collect();
            }
        }
        None
    }
}

/// Minimizer of `1/2 ||P - rho a||^2 + lambda ||a||_1`, started from zero.
pub fn lasso_fit(data: &Dataset, lambda: f64, settings: &SolverSettings) -> Result<FitResult> {
    LassoProblem::new(data).solve(lambda, settings, None)
}

/// `1/2 ||P - rho a||^2 + lambda ||a||_1`, evaluated directly on the data.
pub fn lasso_objective(data: &Dataset, alpha: &DVector<f64>, lambda: f64) -> f64 {
    let r = data.response() - data.prices() * alpha;
    0.5 * r.norm_squared() + lambda * alpha.lp_norm(1)
}

pub(crate) fn soft_threshold(z: f64, threshold: f64) -> f64 {
    if z > threshold {
        z - threshold
    } else if z < -threshold {
        z + threshold
    } else {
        0.0
    }
}
