//! Fitting procedures mapping a [`Dataset`] and a hyperparameter to a [`FitResult`].
//!
//! All objectives share the squared loss `1/2 sum_t (P(t) - sum_i a_i rho_i(t))^2`:
//!
//! * OLS: no penalty, solved through the normal equations.
//! * ridge: `+ (lambda/2) ||a||_2^2`, closed form.
//! * lasso: `+ lambda ||a||_1`, cyclic coordinate descent with soft thresholding.
//! * variational garrote (VG): spike-and-slab coefficients `a_i = s_i w_i` with a
//!   factorized posterior over the switches, fit by coordinate minimization of the
//!   variational free energy; the estimate is `m_i w_i`.

mod garrote;
mod lasso;
mod linear;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::Dataset;

pub use garrote::{vg_fit, vg_fit_from, vg_fit_with_trace, vg_path, vg_path_candidates, vg_free_energy, vg_gradient, VgGradient};
pub use lasso::{lasso_fit, lasso_objective, LassoProblem};
pub use linear::{ols_fit, ridge_fit, ridge_objective, RidgePath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ols,
    Ridge,
    Lasso,
    Vg,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ols, Method::Ridge, Method::Lasso, Method::Vg];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ols => "ols",
            Method::Ridge => "ridge",
            Method::Lasso => "lasso",
            Method::Vg => "vg",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ols" => Ok(Method::Ols),
            "ridge" => Ok(Method::Ridge),
            "lasso" => Ok(Method::Lasso),
            "vg" | "l0" | "garrote" => Ok(Method::Vg),
            other => Err(Error::InvalidConfig(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub alpha_hat: DVector<f64>,
    /// lambda for ridge/lasso, gamma for VG, NaN for OLS.
    pub hyperparameter: f64,
    /// Estimated noise precision (VG only).
    pub beta_hat: Option<f64>,
    /// Posterior inclusion expectations (VG only).
    pub m: Option<DVector<f64>>,
    /// Conditional weights (VG only).
    pub w: Option<DVector<f64>>,
    pub iterations: usize,
    pub final_objective: f64,
    pub converged: bool,
}

impl FitResult {
    /// Number of coefficients with magnitude above `1e-8`.
    pub fn n_nonzero(&self) -> usize {
        self.alpha_hat.iter().filter(|a| a.abs() > 1e-8).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Stop once the largest absolute parameter change in a sweep is below this.
    pub tolerance: f64,
    /// Inclusion expectations are clamped to `[m_clip, 1 - m_clip]`.
    pub m_clip: f64,
    /// Rescale price columns to unit root-mean-square before fitting and map
    /// the coefficients back afterwards.
    pub standardize: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iterations: 10_000,
            tolerance: 1e-8,
            m_clip: 1e-12,
            standardize: false,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        if !(self.m_clip > 0.0 && self.m_clip < 0.5) {
            return Err(Error::InvalidConfig("m_clip must lie in (0, 0.5)".into()));
        }
        Ok(())
    }
}

/// Row-wise `sum_i alpha_i rho_i(t)`.
pub fn predict(alpha_hat: &DVector<f64>, prices: &DMatrix<f64>) -> Result<DVector<f64>> {
    if alpha_hat.len() != prices.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {} price columns",
            alpha_hat.len(),
            prices.ncols()
        )));
    }
    Ok(prices * alpha_hat)
}

/// Fits `method` with the given hyperparameter (ignored for OLS), honoring
/// `settings.standardize`.
pub fn fit(method: Method, data: &Dataset, hyper: f64, settings: &SolverSettings) -> Result<FitResult> {
    if !settings.standardize {
        return fit_raw(method, data, hyper, settings);
    }
    let (scaled, scales) = standardize(data)?;
    let mut result = fit_raw(method, &scaled, hyper, settings)?;
    result.alpha_hat.component_div_assign(&scales);
    if let Some(w) = result.w.as_mut() {
        w.component_div_assign(&scales);
    }
    Ok(result)
}

fn fit_raw(method: Method, data: &Dataset, hyper: f64, settings: &SolverSettings) -> Result<FitResult> {
    match method {
        Method::Ols => ols_fit(data),
        Method::Ridge => ridge_fit(data, hyper),
        Method::Lasso => lasso_fit(data, hyper, settings),
        Method::Vg => vg_fit(data, hyper, settings),
    }
}

/// Divides every price column by its root mean square. Returns the scaled
/// dataset and the per-column scales.
pub fn standardize(data: &Dataset) -> Result<(Dataset, DVector<f64>)> {
    let t = data.n_samples() as f64;
    let scales = DVector::from_iterator(
        data.n_consumers(),
        data.prices().column_iter().map(|c| (c.norm_squared() / t).sqrt()),
    );
    if let Some(i) = scales.iter().position(|&s| s == 0.0) {
        return Err(Error::InvalidConfig(format!("price column {i} is identically zero")));
    }
    let mut prices = data.prices().clone();
    for (mut col, &s) in prices.column_iter_mut().zip(scales.iter()) {
        col /= s;
    }
    Ok((Dataset::new(prices, data.response().clone())?, scales))
}
