use nalgebra::{DMatrix, DVector};

use super::TrainError;
use crate::composition::ModelParams;

/// Floor applied to log arguments in the sememe loss.
pub const LOG_CLAMP: f64 = 1e-12;

/// Squared Euclidean distance `||p_c - p_r||^2`.
pub fn loss_similarity(p_c: &DVector<f64>, p_r: &DVector<f64>) -> Result<f64, TrainError> {
    check_len(p_c.len(), p_r.len())?;
    Ok((p_c - p_r).norm_squared())
}

pub(crate) fn loss_similarity_grad(p_c: &DVector<f64>, p_r: &DVector<f64>) -> DVector<f64> {
    (p_c - p_r) * 2.0
}

/// `(lambda / 2) * sum ||theta||^2` over the weight matrices. Biases and
/// sememe embeddings are not penalized.
pub fn regularization(params: &ModelParams, lambda: f64) -> f64 {
    0.5 * lambda * params.weight_sq_norm()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Tied single-layer classifier: `sigmoid(W_s p)` where the rows of `W_s`
/// are the sememe embeddings.
pub fn predict_sememes(p: &DVector<f64>, w_s: &DMatrix<f64>) -> Result<DVector<f64>, TrainError> {
    check_len(w_s.ncols(), p.len())?;
    Ok((w_s * p).map(sigmoid))
}

/// Negated weighted cross-entropy: positives carry weight `k`. Log arguments
/// are clamped at [`LOG_CLAMP`].
pub fn loss_sememe(scores: &DVector<f64>, gold: &[bool], k: f64) -> Result<f64, TrainError> {
    check_len(scores.len(), gold.len())?;
    Ok(scores
        .iter()
        .zip(gold)
        .map(|(&y_hat, &y)| {
            if y {
                -k * y_hat.max(LOG_CLAMP).ln()
            } else {
                -(1.0 - y_hat).max(LOG_CLAMP).ln()
            }
        })
        .sum())
}

/// dL/dlogit for [`loss_sememe`]; zero wherever the clamp is active.
pub(crate) fn loss_sememe_logit_grad(scores: &DVector<f64>, gold: &[bool], k: f64) -> DVector<f64> {
    DVector::from_iterator(
        scores.len(),
        scores.iter().zip(gold).map(|(&y_hat, &y)| {
            if y {
                if y_hat > LOG_CLAMP {
                    -k * (1.0 - y_hat)
                } else {
                    0.0
                }
            } else if 1.0 - y_hat > LOG_CLAMP {
                y_hat
            } else {
                0.0
            }
        }),
    )
}

fn check_len(expected: usize, found: usize) -> Result<(), TrainError> {
    if expected != found {
        return Err(TrainError::DimensionMismatch { expected, found });
    }
    Ok(())
}
