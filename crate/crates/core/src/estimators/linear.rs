//! Closed-form least squares: OLS through the covariance normal equations and ridge.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen, SVD};

use super::FitResult;
use crate::error::{Error, Result};
use crate::scenario::Dataset;

/// Largest accepted condition number for an unregularized system.
const MAX_CONDITION: f64 = 1e12;

/// `alpha = chi^{-1} b` with `chi = rho^T rho / T` and `b = rho^T P / T`.
pub fn ols_fit(data: &Dataset) -> Result<FitResult> {
    let t = data.n_samples() as f64;
    let rho = data.prices();
    let chi = rho.tr_mul(rho) / t;
    let b = rho.tr_mul(data.response()) / t;
    let alpha_hat = solve_unregularized(chi, &b)?;
    let objective = ridge_objective(data, &alpha_hat, 0.0);
    Ok(closed_form_result(alpha_hat, f64::NAN, objective))
}

/// Minimizer of `1/2 ||P - rho a||^2 + (lambda/2) ||a||^2`.
///
/// Uses the `T x T` dual system `rho (rho rho^T + lambda I)^{-1} P` when there
/// are fewer samples than consumers, the `N x N` primal one otherwise.
pub fn ridge_fit(data: &Dataset, lambda: f64) -> Result<FitResult> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!("ridge lambda must be finite and >= 0, got {lambda}")));
    }
    let rho = data.prices();
    let p = data.response();
    let alpha_hat = if lambda == 0.0 {
        solve_unregularized(rho.tr_mul(rho), &rho.tr_mul(p))?
    } else if data.n_samples() < data.n_consumers() {
        let mut kernel = rho * rho.transpose();
        kernel.fill_diagonal_add(lambda);
        let dual = cholesky_solve(kernel, p)?;
        rho.tr_mul(&dual)
    } else {
        let mut gram = rho.tr_mul(rho);
        gram.fill_diagonal_add(lambda);
        cholesky_solve(gram, &rho.tr_mul(p))?
    };
    let objective = ridge_objective(data, &alpha_hat, lambda);
    Ok(closed_form_result(alpha_hat, lambda, objective))
}

/// Ridge solutions for many penalties from one thin SVD `rho = U S V^T`:
/// `a(lambda) = V diag(s / (s^2 + lambda)) U^T P`.
#[derive(Debug, Clone)]
pub struct RidgePath {
    v: DMatrix<f64>,
    singular_values: DVector<f64>,
    projected: DVector<f64>,
}

impl RidgePath {
    pub fn new(data: &Dataset) -> Result<Self> {
        let svd = SVD::new(data.prices().clone(), true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(Error::NumericalFailure("SVD did not produce singular vectors".into())),
        };
        Ok(RidgePath {
            v: v_t.transpose(),
            singular_values: svd.singular_values,
            projected: u.tr_mul(data.response()),
        })
    }

    pub fn solve(&self, data: &Dataset, lambda: f64) -> Result<FitResult> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("ridge path needs lambda > 0, got {lambda}")));
        }
        let coeffs = self
            .singular_values
            .zip_map(&self.projected, |s, p| s * p / (s * s + lambda));
        let alpha_hat = &self.v * coeffs;
        let objective = ridge_objective(data, &alpha_hat, lambda);
        Ok(closed_form_result(alpha_hat, lambda, objective))
    }
}

/// `1/2 ||P - rho a||^2 + (lambda/2) ||a||^2`.
pub fn ridge_objective(data: &Dataset, alpha: &DVector<f64>, lambda: f64) -> f64 {
    let r = data.response() - data.prices() * alpha;
    0.5 * r.norm_squared() + 0.5 * lambda * alpha.norm_squared()
}

fn closed_form_result(alpha_hat: DVector<f64>, hyper: f64, objective: f64) -> FitResult {
    FitResult {
        alpha_hat,
        hyperparameter: hyper,
        beta_hat: None,
        m: None,
        w: None,
        iterations: 1,
        final_objective: objective,
        converged: true,
    }
}

fn solve_unregularized(gram: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let eigen = SymmetricEigen::new(gram.clone());
    let max = eigen.eigenvalues.max();
    let min = eigen.eigenvalues.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    cholesky_solve(gram, rhs)
}

trait FillDiagonalAdd {
    fn fill_diagonal_add(&mut self, v: f64);
}

impl FillDiagonalAdd for DMatrix<f64> {
    fn fill_diagonal_add(&mut self, v: f64) {
        for i in 0..self.nrows().min(self.ncols()) {
            self[(i, i)] += v;
        }
    }
}

fn cholesky_solve(matrix: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let chol: Cholesky<f64, Dyn> = Cholesky::new(matrix).ok_or(Error::IllConditioned {
        condition: f64::INFINITY,
    })?;
    let x = chol.solve(rhs);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite Cholesky solution".into()));
    }
    Ok(x)
}
