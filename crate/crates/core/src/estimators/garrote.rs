//! Variational garrote: mean-field spike-and-slab regression.
//!
//! Coefficients are `s_i w_i` with binary switches `s_i` under an independent
//! prior `p(s_i = 1) = sigmoid(gamma)`. The posterior over switches is replaced
//! by a product of Bernoullis with means `m_i`, and `(m, w, beta)` minimize the
//! free energy
//!
//! ```text
//! F = beta/2 sum_t r(t)^2 + beta/2 sum_i m_i (1 - m_i) w_i^2 S_i - T/2 ln(beta / 2 pi)
//!     - sum_i [gamma m_i - ln(1 + e^gamma)] + sum_i [m_i ln m_i + (1 - m_i) ln(1 - m_i)]
//! ```
//!
//! with `r = P - rho (m * w)` and `S_i = ||rho_i||^2`.
//!
//! Holding everything but coordinate `i` fixed and writing
//! `c_i = rho_i^T (r + m_i w_i rho_i)`, the free energy is minimized by
//! `w_i = c_i / S_i` for any `m_i > 0`; substituting back leaves
//! `-m_i (beta c_i^2 / (2 S_i) + gamma)` plus the entropy, whose minimizer is
//! `m_i = sigmoid(gamma + beta c_i^2 / (2 S_i))`. The `beta` update
//! `T / (||r||^2 + sum_i m_i (1 - m_i) w_i^2 S_i)` is its exact minimizer too, so
//! every step is an exact block minimization and `F` never increases.

use nalgebra::{DMatrix, DVector};

use super::linear::ridge_fit;
use super::{FitResult, SolverSettings};
use crate::error::{Error, Result};
use crate::scenario::Dataset;

/// Partial derivatives of the free energy.
#[derive(Debug, Clone, PartialEq)]
pub struct VgGradient {
    pub m: DVector<f64>,
    pub w: DVector<f64>,
    pub beta: f64,
}

pub fn vg_free_energy(data: &Dataset, m: &DVector<f64>, w: &DVector<f64>, beta: f64, gamma: f64) -> Result<f64> {
    check_inputs(data, m, w, beta, gamma)?;
    let col_sq = column_squares(data.prices());
    let r = residual(data, m, w);
    let f = free_energy_from_parts(r.norm_squared(), &col_sq, m, w, beta, gamma, data.n_samples());
    if !f.is_finite() {
        return Err(Error::NumericalFailure("free energy is not finite".into()));
    }
    Ok(f)
}

pub fn vg_gradient(data: &Dataset, m: &DVector<f64>, w: &DVector<f64>, beta: f64, gamma: f64) -> Result<VgGradient> {
    check_inputs(data, m, w, beta, gamma)?;
    let col_sq = column_squares(data.prices());
    let r = residual(data, m, w);
    let corr = data.prices().tr_mul(&r);
    let n = m.len();
    let mut dm = DVector::zeros(n);
    let mut dw = DVector::zeros(n);
    let mut variance = 0.0;
    for i in 0..n {
        let (mi, wi, si) = (m[i], w[i], col_sq[i]);
        dm[i] = -beta * wi * corr[i] + 0.5 * beta * (1.0 - 2.0 * mi) * wi * wi * si - gamma + logit(mi);
        dw[i] = -beta * mi * corr[i] + beta * mi * (1.0 - mi) * wi * si;
        variance += mi * (1.0 - mi) * wi * wi * si;
    }
    let dbeta = 0.5 * (r.norm_squared() + variance) - 0.5 * data.n_samples() as f64 / beta;
    Ok(VgGradient { m: dm, w: dw, beta: dbeta })
}

/// Fits the variational garrote at sparsity parameter `gamma`.
///
/// Starts from `m = 0.5`, `w = 0`, `beta = T / ||P||^2` and alternates cyclic
/// coordinate updates of `(w_i, m_i)` with a `beta` update after each sweep.
pub fn vg_fit(data: &Dataset, gamma: f64, settings: &SolverSettings) -> Result<FitResult> {
    vg_fit_with_trace(data, gamma, settings).map(|(fit, _)| fit)
}

/// Like [`vg_fit`], also returning the free energy after every sweep.
pub fn vg_fit_with_trace(data: &Dataset, gamma: f64, settings: &SolverSettings) -> Result<(FitResult, Vec<f64>)> {
    run(data, gamma, settings, None)
}

/// Fits from the `(m, w, beta)` of an earlier fit instead of the default start.
pub fn vg_fit_from(data: &Dataset, gamma: f64, settings: &SolverSettings, start: &FitResult) -> Result<FitResult> {
    run(data, gamma, settings, Some(start)).map(|(fit, _)| fit)
}

/// Fits a whole gamma grid, returning for each gamma the fit with the lowest
/// free energy among [`vg_path_candidates`]. Interpolating fits
/// (`sum_i m_i >= T`, where the free energy is unbounded below as `beta`
/// diverges) only win when nothing else is available.
pub fn vg_path(data: &Dataset, gammas: &[f64], settings: &SolverSettings) -> Vec<Result<FitResult>> {
    vg_path_candidates(data, gammas, settings)
        .into_iter()
        .map(|c| c.and_then(|fits| best_candidate(data, fits.into_iter().map(Ok).collect())))
        .collect()
}

/// Distinct local minima of the free energy for every gamma, in grid order.
///
/// A cold start per gamma can stall in the empty model: with nothing explained,
/// the noise precision is small and no switch turns on. A continuation track
/// therefore runs alongside it: it warm-starts each gamma from its
/// neighbour, first from sparse to dense and then back, keeping the lower free
/// energy at each step. Every gamma is also started from a ridge fit
/// (`m = 1/2`, `w = 2 a_ridge`, `beta` from the ridge residual), which can
/// reach dense supports that neither track finds. Which minimum to use is
/// left to the caller.
pub fn vg_path_candidates(data: &Dataset, gammas: &[f64], settings: &SolverSettings) -> Vec<Result<Vec<FitResult>>> {
    let mut order: Vec<usize> = (0..gammas.len()).collect();
    order.sort_by(|&a, &b| gammas[a].total_cmp(&gammas[b]));
    let mut picks: Vec<Option<Result<FitResult>>> = (0..gammas.len()).map(|_| None).collect();
    let mut seeded: Vec<Option<FitResult>> = vec![None; gammas.len()];

    let mut previous: Option<FitResult> = None;
    let seed = ridge_seed(data).ok();
    for &k in &order {
        let mut candidates = vec![vg_fit(data, gammas[k], settings)];
        if let Some(prev) = &previous {
            candidates.push(vg_fit_from(data, gammas[k], settings, prev));
        }
        let pick = best_candidate(data, candidates);
        previous = pick.as_ref().ok().cloned();
        picks[k] = Some(pick);
        if let Some(start) = &seed {
            seeded[k] = vg_fit_from(data, gammas[k], settings, start).ok();
        }
    }

    let mut previous: Option<FitResult> = None;
    for &k in order.iter().rev() {
        let forward = picks[k].take().expect("forward pass visits every gamma");
        let mut candidates = vec![forward];
        if let Some(prev) = &previous {
            candidates.push(vg_fit_from(data, gammas[k], settings, prev));
        }
        let pick = best_candidate(data, candidates);
        previous = pick.as_ref().ok().cloned();
        picks[k] = Some(pick);
    }

    picks
        .into_iter()
        .zip(seeded)
        .map(|(pick, seeded)| {
            let mut fits = Vec::new();
            let err = match pick.expect("backward pass visits every gamma") {
                Ok(fit) => {
                    fits.push(fit);
                    None
                }
                Err(e) => Some(e),
            };
            if let Some(s) = seeded {
                if !fits.iter().any(|f| f.alpha_hat == s.alpha_hat) {
                    fits.push(s);
                }
            }
            match (fits.is_empty(), err) {
                (true, Some(e)) => Err(e),
                _ => Ok(fits),
            }
        })
        .collect()
}

/// Switches half on, weights from a lightly penalized ridge fit (penalty `T/10`).
fn ridge_seed(data: &Dataset) -> Result<FitResult> {
    let t = data.n_samples() as f64;
    let alpha = ridge_fit(data, 0.1 * t)?.alpha_hat;
    let r = data.response() - data.prices() * &alpha;
    let beta = t / r.norm_squared();
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::NumericalFailure("ridge seed fits the data exactly".into()));
    }
    let m = DVector::from_element(alpha.len(), 0.5);
    Ok(FitResult {
        w: Some(&alpha * 2.0),
        alpha_hat: alpha,
        hyperparameter: f64::NAN,
        beta_hat: Some(beta),
        m: Some(m),
        iterations: 0,
        final_objective: f64::NAN,
        converged: false,
    })
}

fn interpolates(data: &Dataset, fit: &FitResult) -> bool {
    fit.m.as_ref().is_some_and(|m| m.sum() >= data.n_samples() as f64)
}

fn best_candidate(data: &Dataset, candidates: Vec<Result<FitResult>>) -> Result<FitResult> {
    let mut best: Option<FitResult> = None;
    let mut last_err = None;
    for c in candidates {
        match c {
            Ok(fit) => {
                let better = match &best {
                    None => true,
                    Some(b) => match (interpolates(data, &fit), interpolates(data, b)) {
                        (false, true) => true,
                        (true, false) => false,
                        _ => fit.final_objective < b.final_objective,
                    },
                };
                if better {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::NumericalFailure("no candidate fits".into())))
}

fn run(
    data: &Dataset,
    gamma: f64,
    settings: &SolverSettings,
    start: Option<&FitResult>,
) -> Result<(FitResult, Vec<f64>)> {
    settings.validate()?;
    if !gamma.is_finite() {
        return Err(Error::InvalidConfig(format!("gamma must be finite, got {gamma}")));
    }
    let rho = data.prices();
    let (t, n) = rho.shape();
    let col_sq = column_squares(rho);
    if let Some(i) = col_sq.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::InvalidConfig(format!("price column {i} has zero energy")));
    }
    let p = data.response();
    let p_sq = p.norm_squared();
    if !(p_sq > 0.0) {
        return Err(Error::NumericalFailure("response is identically zero; noise precision is unbounded".into()));
    }

    let lo = settings.m_clip;
    let hi = 1.0 - settings.m_clip;
    let (mut m, mut w, mut beta) = match start {
        None => (DVector::from_element(n, 0.5), DVector::zeros(n), t as f64 / p_sq),
        Some(fit) => match (&fit.m, &fit.w, fit.beta_hat) {
            (Some(m), Some(w), Some(beta)) if m.len() == n && w.len() == n && beta > 0.0 && beta.is_finite() => {
                (m.map(|v| v.clamp(lo, hi)), w.clone(), beta)
            }
            _ => return Err(Error::InvalidConfig("warm start needs a variational garrote fit of matching size".into())),
        },
    };
    let mut r = residual(data, &m, &w);
    let mut trace = Vec::new();

    let mut iterations = 0;
    let mut converged = false;
    let mut energy = f64::NAN;
    while iterations < settings.max_iterations {
        iterations += 1;
        let mut max_change = 0.0f64;
        for i in 0..n {
            let col = rho.column(i);
            let old_coef = m[i] * w[i];
            let c = col.dot(&r) + old_coef * col_sq[i];
            let new_w = c / col_sq[i];
            let new_m = sigmoid(gamma + beta * c * c / (2.0 * col_sq[i])).clamp(lo, hi);
            max_change = max_change.max((new_w - w[i]).abs()).max((new_m - m[i]).abs());
            w[i] = new_w;
            m[i] = new_m;
            let delta = new_m * new_w - old_coef;
            if delta != 0.0 {
                r.axpy(-delta, &col, 1.0);
            }
        }
        // Refresh the running residual to keep rounding from accumulating.
        r = residual(data, &m, &w);
        let variance = variance_term(&col_sq, &m, &w);
        beta = t as f64 / (r.norm_squared() + variance);
        energy = free_energy_from_parts(r.norm_squared(), &col_sq, &m, &w, beta, gamma, t);
        if !(beta.is_finite() && energy.is_finite()) {
            return Err(Error::NumericalFailure(format!(
                "variational garrote diverged at sweep {iterations} (beta = {beta:e})"
            )));
        }
        trace.push(energy);
        if max_change < settings.tolerance {
            converged = true;
            break;
        }
    }

    let alpha_hat = m.component_mul(&w);
    let fit = FitResult {
        alpha_hat,
        hyperparameter: gamma,
        beta_hat: Some(beta),
        m: Some(m),
        w: Some(w),
        iterations,
        final_objective: energy,
        converged,
    };
    Ok((fit, trace))
}

fn check_inputs(data: &Dataset, m: &DVector<f64>, w: &DVector<f64>, beta: f64, gamma: f64) -> Result<()> {
    let n = data.n_consumers();
    if m.len() != n || w.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "m has {} and w has {} entries for {n} consumers",
            m.len(),
            w.len()
        )));
    }
    if !(beta > 0.0 && beta.is_finite()) || !gamma.is_finite() {
        return Err(Error::InvalidConfig("beta must be positive and finite, gamma finite".into()));
    }
    if m.iter().any(|&v| !(0.0..=1.0).contains(&v)) || w.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("m must lie in [0, 1] and w must be finite".into()));
    }
    Ok(())
}

fn column_squares(rho: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(rho.ncols(), rho.column_iter().map(|c| c.norm_squared()))
}

fn residual(data: &Dataset, m: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    data.response() - data.prices() * m.component_mul(w)
}

fn variance_term(col_sq: &DVector<f64>, m: &DVector<f64>, w: &DVector<f64>) -> f64 {
    col_sq
        .iter()
        .zip(m.iter().zip(w.iter()))
        .map(|(s, (mi, wi))| mi * (1.0 - mi) * wi * wi * s)
        .sum()
}

fn free_energy_from_parts(
    residual_sq: f64,
    col_sq: &DVector<f64>,
    m: &DVector<f64>,
    w: &DVector<f64>,
    beta: f64,
    gamma: f64,
    t: usize,
) -> f64 {
    let likelihood = 0.5 * beta * (residual_sq + variance_term(col_sq, m, w))
        - 0.5 * t as f64 * (beta / (2.0 * std::f64::consts::PI)).ln();
    let log_norm = softplus(gamma);
    let prior: f64 = m.iter().map(|&mi| gamma * mi - log_norm).sum();
    let neg_entropy: f64 = m.iter().map(|&mi| xlogx(mi) + xlogx(1.0 - mi)).sum();
    likelihood - prior + neg_entropy
}

fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logit(m: f64) -> f64 {
    (m / (1.0 - m)).ln()
}
