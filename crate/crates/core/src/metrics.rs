//! Evaluation of a fitted elasticity vector against held-out data and ground truth.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::predict;
use crate::scenario::{Dataset, GroundTruth};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub generalization_error: f64,
    /// AUC with the signed estimates as scores.
    pub roc_auc: f64,
    /// AUC with `|alpha'_i|` as scores.
    pub roc_auc_abs: f64,
    pub reconstruction_error: f64,
    /// Generalization error of the true elasticities.
    pub oracle_generalization_error: f64,
}

/// Sum of squared validation residuals `sum_t (P(t) - sum_i a_i rho_i(t))^2`.
pub fn generalization_error(alpha_hat: &DVector<f64>, val: &Dataset) -> Result<f64> {
    let prediction = predict(alpha_hat, val.prices())?;
    Ok((val.response() - prediction).norm_squared())
}

/// `sum_i |a_i - a*_i|`.
pub fn reconstruction_error(alpha_hat: &DVector<f64>, alpha_star: &DVector<f64>) -> Result<f64> {
    if alpha_hat.len() != alpha_star.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimates vs {} true elasticities",
            alpha_hat.len(),
            alpha_star.len()
        )));
    }
    Ok(alpha_hat.iter().zip(alpha_star.iter()).map(|(a, b)| (a - b).abs()).sum())
}

/// Area under the ROC curve as the Mann-Whitney statistic: the probability that
/// a random active consumer outscores a random inactive one, ties counting 1/2.
pub fn roc_auc(scores: &[f64], active_mask: &[bool]) -> Result<f64> {
    if scores.len() != active_mask.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            active_mask.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidConfig("AUC scores contain NaN".into()));
    }
    let n_pos = active_mask.iter().filter(|&&a| a).count();
    let n_neg = active_mask.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of 1-based mid-ranks of the active consumers.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let mid_rank = (start + 1 + end) as f64 / 2.0;
        let positives = order[start..end].iter().filter(|&&i| active_mask[i]).count();
        rank_sum += mid_rank * positives as f64;
        start = end;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// All metrics for one fit.
pub fn evaluate(alpha_hat: &DVector<f64>, val: &Dataset, truth: &GroundTruth) -> Result<MetricReport> {
    let abs_scores: Vec<f64> = alpha_hat.iter().map(|a| a.abs()).collect();
    Ok(MetricReport {
        generalization_error: generalization_error(alpha_hat, val)?,
        roc_auc: roc_auc(alpha_hat.as_slice(), &truth.active_mask)?,
        roc_auc_abs: roc_auc(&abs_scores, &truth.active_mask)?,
        reconstruction_error: reconstruction_error(alpha_hat, &truth.alpha_star)?,
        oracle_generalization_error: generalization_error(&truth.alpha_star, val)?,
    })
}
