//! Synthetic demand-response scenarios.
//!
//! Every consumer receives an independent standard-normal price perturbation in
//! every time slot. A fixed-size, uniformly random subset of consumers is active
//! with a common elasticity; the rest do not respond. The feeder measures the
//! sum of all responses plus Gaussian noise.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the aggregate measurement noise is specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Noise standard deviation in response units.
    SigmaP(f64),
    /// log10 of (noiseless signal sd / noise sd).
    TargetSnr(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_consumers: usize,
    /// Training rows; the validation set gets `n_samples / 2`.
    pub n_samples: usize,
    pub active_fraction: f64,
    pub elasticity_value: f64,
    pub noise: NoiseSpec,
    /// Price-insensitive aggregate consumption added to every response.
    pub baseline_total: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(n_consumers: usize, n_samples: usize, active_fraction: f64, noise: NoiseSpec, seed: u64) -> Self {
        ScenarioConfig {
            n_consumers,
            n_samples,
            active_fraction,
            elasticity_value: 1.0,
            noise,
            baseline_total: 0.0,
            seed,
        }
    }

    /// Exact number of active consumers, `round(f * N)`.
    pub fn n_active(&self) -> usize {
        (self.active_fraction * self.n_consumers as f64).round() as usize
    }

    pub fn n_validation(&self) -> usize {
        self.n_samples / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_consumers == 0 || self.n_samples == 0 {
            return Err(Error::InvalidConfig("n_consumers and n_samples must be positive".into()));
        }
        if self.n_validation() == 0 {
            return Err(Error::InvalidConfig("n_samples must be at least 2 to leave a validation row".into()));
        }
        if !(0.0..=1.0).contains(&self.active_fraction) {
            return Err(Error::InvalidConfig(format!(
                "active_fraction {} outside [0, 1]",
                self.active_fraction
            )));
        }
        if !self.elasticity_value.is_finite() || !self.baseline_total.is_finite() {
            return Err(Error::InvalidConfig("elasticity and baseline must be finite".into()));
        }
        match self.noise {
            NoiseSpec::SigmaP(s) if !(s.is_finite() && s >= 0.0) => {
                Err(Error::InvalidConfig(format!("sigma_p must be finite and non-negative, got {s}")))
            }
            NoiseSpec::TargetSnr(snr) if !snr.is_finite() => {
                Err(Error::InvalidConfig("target SNR must be finite".into()))
            }
            NoiseSpec::TargetSnr(_) if self.n_active() == 0 || self.elasticity_value == 0.0 => Err(
                Error::InvalidConfig("a target SNR needs a nonzero signal (no active consumers)".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// Price perturbations (rows are time slots, columns consumers) and the
/// aggregate response for each slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    prices: DMatrix<f64>,
    response: DVector<f64>,
}

impl Dataset {
    pub fn new(prices: DMatrix<f64>, response: DVector<f64>) -> Result<Self> {
        if prices.nrows() != response.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} price rows vs {} responses",
                prices.nrows(),
                response.len()
            )));
        }
        if prices.iter().chain(response.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("dataset contains non-finite values".into()));
        }
        Ok(Dataset { prices, response })
    }

    /// Builds a dataset from row-major price rows.
    pub fn from_rows(rows: &[Vec<f64>], response: &[f64]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("ragged price rows".into()));
        }
        let prices = DMatrix::from_fn(rows.len(), n, |t, i| rows[t][i]);
        Dataset::new(prices, DVector::from_column_slice(response))
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn n_samples(&self) -> usize {
        self.prices.nrows()
    }

    pub fn n_consumers(&self) -> usize {
        self.prices.ncols()
    }

    /// Subtracts the price-insensitive aggregate from every response.
    pub fn without_baseline(&self, baseline_total: f64) -> Dataset {
        Dataset {
            prices: self.prices.clone(),
            response: self.response.add_scalar(-baseline_total),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub alpha_star: DVector<f64>,
    pub active_mask: Vec<bool>,
    /// Noise standard deviation actually used.
    pub sigma_p: f64,
    /// Analytic standard deviation of the noiseless signal.
    pub signal_sd: f64,
}

impl GroundTruth {
    pub fn n_active(&self) -> usize {
        self.active_mask.iter().filter(|&&a| a).count()
    }
}

/// Noise level giving `log10(signal_sd / sigma_p) = target_snr`.
pub fn snr_to_sigma(signal_sd: f64, target_snr: f64) -> Result<f64> {
    if !(signal_sd > 0.0 && signal_sd.is_finite()) {
        return Err(Error::InvalidConfig(format!("signal_sd must be positive, got {signal_sd}")));
    }
    Ok(signal_sd / 10f64.powf(target_snr))
}

/// Standard deviation of `sum_i alpha_i rho_i(t)` for unit-normal prices.
pub fn signal_sd(config: &ScenarioConfig) -> f64 {
    config.elasticity_value.abs() * (config.n_active() as f64).sqrt()
}

/// Generates the training set, the validation set and the ground truth.
///
/// The active set and training rows come from one ChaCha stream seeded by
/// `config.seed`; validation rows come from an independent stream of the same
/// seed, so the output is a pure function of the config.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<(Dataset, Dataset, GroundTruth)> {
    config.validate()?;
    let n = config.n_consumers;
    let signal_sd = signal_sd(config);
    let sigma_p = match config.noise {
        NoiseSpec::SigmaP(s) => s,
        NoiseSpec::TargetSnr(snr) => snr_to_sigma(signal_sd, snr)?,
    };

    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut val_rng = rng.clone();
    val_rng.set_stream(1);

    let mut active_mask = vec![false; n];
    for i in index::sample(&mut rng, n, config.n_active()) {
        active_mask[i] = true;
    }
    let alpha_star = DVector::from_iterator(
        n,
        active_mask
            .iter()
            .map(|&a| if a { config.elasticity_value } else { 0.0 }),
    );

    let train = draw_dataset(&mut rng, config.n_samples, &alpha_star, sigma_p, config.baseline_total)?;
    let val = draw_dataset(
        &mut val_rng,
        config.n_validation(),
        &alpha_star,
        sigma_p,
        config.baseline_total,
    )?;
    let truth = GroundTruth {
        alpha_star,
        active_mask,
        sigma_p,
        signal_sd,
    };
    Ok((train, val, truth))
}

fn draw_dataset(
    rng: &mut ChaCha20Rng,
    rows: usize,
    alpha_star: &DVector<f64>,
    sigma_p: f64,
    baseline_total: f64,
) -> Result<Dataset> {
    let n = alpha_star.len();
    let prices = DMatrix::from_fn(rows, n, |_, _| StandardNormal.sample(rng));
    let noise = Normal::new(0.0, sigma_p).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut response = &prices * alpha_star;
    for p in response.iter_mut() {
        *p += baseline_total + noise.sample(rng);
    }
    Dataset::new(prices, response)
}
