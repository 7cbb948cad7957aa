//! Prediction scores.

use super::EvalError;
use crate::stats::compensated_sum;

fn check_lengths(pred: &[f64], truth: &[f64]) -> Result<(), EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(())
}

/// Fraction of positions where the labels match exactly.
pub fn accuracy(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    check_lengths(pred, truth)?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Fraction of positions where the labels differ; `accuracy + error_rate == 1`.
pub fn error_rate(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    check_lengths(pred, truth)?;
    let misses = pred.iter().zip(truth).filter(|(p, t)| p != t).count();
    Ok(misses as f64 / pred.len() as f64)
}

/// F1 of `positive` against every other label. Zero when precision and
/// recall are both zero, which includes having no predicted and no true
/// positives at all.
pub fn f1_score(pred: &[f64], truth: &[f64], positive: f64) -> Result<f64, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch(pred.len(), truth.len()));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p == positive, t == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    // 2PR/(P+R) simplifies to 2TP/(2TP+FP+FN).
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    check_lengths(pred, truth)?;
    if pred.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let sq: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).collect();
    Ok((compensated_sum(sq) / pred.len() as f64).sqrt())
}
