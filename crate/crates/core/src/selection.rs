//! Validation-set hyperparameter selection.
//!
//! Each candidate is fit on the training set and scored by the squared
//! prediction error on the validation set. Ground truth is never consulted.

use std::cmp::Ordering;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{self, FitResult, LassoProblem, Method, RidgePath, SolverSettings};
use crate::metrics::generalization_error;
use crate::scenario::Dataset;

pub const PENALTY_GRID_POINTS: usize = 50;
pub const PENALTY_GRID_RATIO: f64 = 1e-4;
/// Ridge never reaches zero, so its grid continues this factor past `lambda_max`.
pub const RIDGE_GRID_HEADROOM: f64 = 1e2;
pub const GAMMA_GRID_POINTS: usize = 25;
pub const GAMMA_RANGE: (f64, f64) = (-20.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridScale {
    LogSpaced,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    values: Vec<f64>,
    scale: GridScale,
}

impl Grid {
    pub fn new(values: Vec<f64>, scale: GridScale) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidConfig("hyperparameter grid is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("hyperparameter grid has non-finite values".into()));
        }
        let increasing = values.windows(2).all(|w| w[0] < w[1]);
        let decreasing = values.windows(2).all(|w| w[0] > w[1]);
        if !(increasing || decreasing) {
            return Err(Error::InvalidConfig("hyperparameter grid must be strictly monotone".into()));
        }
        Ok(Grid { values, scale })
    }

    /// `count` points from `lo` to `hi` inclusive, evenly spaced in log scale.
    pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > 0.0) {
            return Err(Error::InvalidConfig("log grid bounds must be positive".into()));
        }
        let mut values: Vec<f64> = spaced(lo.ln(), hi.ln(), count).into_iter().map(f64::exp).collect();
        // Endpoints exactly, not through a ln/exp round trip.
        if let Some(first) = values.first_mut() {
            *first = if count == 1 { hi } else { lo };
        }
        if let Some(last) = values.last_mut() {
            *last = hi;
        }
        Grid::new(values, GridScale::LogSpaced)
    }

    pub fn linear(lo: f64, hi: f64, count: usize) -> Result<Self> {
        Grid::new(spaced(lo, hi, count), GridScale::Linear)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scale(&self) -> GridScale {
        self.scale
    }
}

fn spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![hi],
        _ => (0..count)
            .map(|k| {
                if k + 1 == count {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

/// `max_i |rho_i^T P|`, the smallest lasso penalty with an all-zero solution.
pub fn lambda_max(data: &Dataset) -> f64 {
    data.prices().tr_mul(data.response()).amax()
}

/// Lasso: 50 log-spaced penalties in `[1e-4 lambda_max, lambda_max]`. Ridge:
/// the same count in `[1e-4 lambda_max, 1e2 lambda_max]`, since at
/// `lambda_max` it still shrinks the largest directions only by about half
/// and low-SNR data need far stronger shrinkage. VG: 25 evenly spaced gamma in `[-20, 0]`. OLS has nothing to tune and gets
/// a single placeholder value.
pub fn default_grid(method: Method, data: &Dataset) -> Result<Grid> {
    if data.n_samples() == 0 {
        return Err(Error::Empty("dataset has no rows".into()));
    }
    match method {
        Method::Ols => Grid::new(vec![0.0], GridScale::Linear),
        Method::Ridge | Method::Lasso => {
            let mut top = lambda_max(data);
            if !(top > 0.0) {
                top = 1.0;
            }
            let hi = if method == Method::Ridge { RIDGE_GRID_HEADROOM * top } else { top };
            Grid::log_spaced(PENALTY_GRID_RATIO * top, hi, PENALTY_GRID_POINTS)
        }
        Method::Vg => Grid::linear(GAMMA_RANGE.0, GAMMA_RANGE.1, GAMMA_GRID_POINTS),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub hyperparameter: f64,
    /// NaN when the fit failed.
    pub validation_error: f64,
    pub n_nonzero: usize,
    pub converged: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub best: FitResult,
    pub best_hyperparameter: f64,
    pub best_validation_error: f64,
    /// One entry per grid value, in grid order.
    pub table: Vec<SelectionEntry>,
}

/// Fits `method` at every grid value on `train` and keeps the one with the
/// lowest validation error. Ties go to the sparser fit, then to the stronger
/// regularization.
pub fn select(
    method: Method,
    train: &Dataset,
    val: &Dataset,
    grid: &Grid,
    settings: &SolverSettings,
) -> Result<Selection> {
    if train.n_consumers() != val.n_consumers() {
        return Err(Error::DimensionMismatch(format!(
            "train has {} consumers, validation {}",
            train.n_consumers(),
            val.n_consumers()
        )));
    }
    let (train, scales) = if settings.standardize {
        let (scaled, scales) = estimators::standardize(train)?;
        (scaled, Some(scales))
    } else {
        (train.clone(), None)
    };
    let settings = SolverSettings { standardize: false, ..*settings };

    let fits = fit_grid(method, &train, grid, &settings);
    let mut table = Vec::with_capacity(fits.len());
    let mut best: Option<(usize, FitResult, f64)> = None;
    for (k, (hyper, outcome)) in grid.values().iter().zip(fits).enumerate() {
        let scored = outcome.and_then(|candidates| {
            let mut best_here: Option<(FitResult, f64)> = None;
            let mut last_err = None;
            for mut fit in candidates {
                if let Some(s) = &scales {
                    fit.alpha_hat.component_div_assign(s);
                    if let Some(w) = fit.w.as_mut() {
                        w.component_div_assign(s);
                    }
                }
                match generalization_error(&fit.alpha_hat, val) {
                    Ok(err) if err.is_finite() => {
                        if best_here.as_ref().is_none_or(|(_, e)| err < *e) {
                            best_here = Some((fit, err));
                        }
                    }
                    Ok(_) => last_err = Some(Error::NumericalFailure("non-finite validation error".into())),
                    Err(e) => last_err = Some(e),
                }
            }
            best_here.ok_or_else(|| last_err.unwrap_or_else(|| Error::NumericalFailure("no candidate fits".into())))
        });
        match scored {
            Ok((fit, err)) => {
                table.push(SelectionEntry {
                    hyperparameter: *hyper,
                    validation_error: err,
                    n_nonzero: fit.n_nonzero(),
                    converged: fit.converged,
                    failure: None,
                });
                let better = match &best {
                    None => true,
                    Some((bk, bfit, berr)) => {
                        prefer(method, (err, fit.n_nonzero(), *hyper), (*berr, bfit.n_nonzero(), grid.values()[*bk]))
                    }
                };
                if better {
                    best = Some((k, fit, err));
                }
            }
            Err(e) => table.push(SelectionEntry {
                hyperparameter: *hyper,
                validation_error: f64::NAN,
                n_nonzero: 0,
                converged: false,
                failure: Some(e.to_string()),
            }),
        }
    }
    let (k, best, err) = best.ok_or_else(|| Error::AllGridPointsFailed { method: method.to_string() })?;
    Ok(Selection {
        best,
        best_hyperparameter: grid.values()[k],
        best_validation_error: err,
        table,
    })
}

/// True when candidate `a` should replace incumbent `b`; both are
/// `(validation error, nonzeros, hyperparameter)`.
fn prefer(method: Method, a: (f64, usize, f64), b: (f64, usize, f64)) -> bool {
    match a.0.total_cmp(&b.0) {
        Ordering::Less => return true,
        Ordering::Greater => return false,
        Ordering::Equal => {}
    }
    match a.1.cmp(&b.1) {
        Ordering::Less => return true,
        Ordering::Greater => return false,
        Ordering::Equal => {}
    }
    // Stronger regularization: larger penalty, or more negative gamma.
    match method {
        Method::Vg => a.2 < b.2,
        _ => a.2 > b.2,
    }
}

/// Candidate fits for every grid value. The garrote can offer several local
/// minima per gamma; every other method offers one.
fn fit_grid(method: Method, train: &Dataset, grid: &Grid, settings: &SolverSettings) -> Vec<Result<Vec<FitResult>>> {
    let values = grid.values();
    if method == Method::Vg {
        return estimators::vg_path_candidates(train, values, settings);
    }
    let single: Vec<Result<FitResult>> = match method {
        Method::Ols => values.iter().map(|_| estimators::ols_fit(train)).collect(),
        Method::Ridge => match RidgePath::new(train) {
            Ok(path) => values
                .iter()
                .map(|&l| {
                    if l > 0.0 {
                        path.solve(train, l)
                    } else {
                        estimators::ridge_fit(train, l)
                    }
                })
                .collect(),
            Err(_) => values.iter().map(|&l| estimators::ridge_fit(train, l)).collect(),
        },
        Method::Lasso => {
            // Warm-start along decreasing penalties, then restore grid order.
            let problem = LassoProblem::new(train);
            let mut order: Vec<usize> = (0..values.len()).collect();
            order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
            let mut out: Vec<Option<Result<FitResult>>> = (0..values.len()).map(|_| None).collect();
            let mut warm: Option<DVector<f64>> = None;
            for k in order {
                let fit = problem.solve(values[k], settings, warm.as_ref());
                if let Ok(f) = &fit {
                    warm = Some(f.alpha_hat.clone());
                }
                out[k] = Some(fit);
            }
            out.into_iter().map(|f| f.expect("every grid index visited")).collect()
        }
        Method::Vg => unreachable!("handled above"),
    };
    single.into_iter().map(|f| f.map(|fit| vec![fit])).collect()
}
