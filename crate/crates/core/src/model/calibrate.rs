//! Logistic calibration of raw scores into probabilities.

use super::ModelError;

/// Numerically stable σ(x).
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fits `σ(a·s + b)` to labeled scores by maximum likelihood: plain gradient
/// ascent on the mean log-likelihood, 500 iterations at learning rate 0.1,
/// over standardized inputs. The returned `(slope, offset)` are mapped back
/// to the raw score scale.
///
/// Needs both classes present, otherwise the likelihood has no finite
/// optimum and the fit is refused.
pub fn calibrate(scores: &[f64], correct: &[bool]) -> Result<(f64, f64), ModelError> {
    assert_eq!(scores.len(), correct.len());
    let n = scores.len();
    if n < 2
        || correct.iter().all(|c| *c)
        || correct.iter().all(|c| !*c)
    {
        return Err(ModelError::DegenerateCalibration);
    }

    let mean = scores.iter().sum::<f64>() / n as f64;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64;
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
    let standardized: Vec<f64> = scores.iter().map(|s| (s - mean) / std).collect();

    let mut a = 0.0f64;
    let mut b = 0.0f64;
    let lr = 0.1;
    for _ in 0..500 {
        let mut grad_a = 0.0;
        let mut grad_b = 0.0;
        for (s, y) in standardized.iter().zip(correct) {
            let err = (if *y { 1.0 } else { 0.0 }) - sigmoid(a * s + b);
            grad_a += err * s;
            grad_b += err;
        }
        a += lr * grad_a / n as f64;
        b += lr * grad_b / n as f64;
    }

    Ok((a / std, b - a * mean / std))
}

/// Maps a raw score into (0, 1).
pub fn apply_calibration(slope: f64, offset: f64, score: f64) -> f64 {
    sigmoid(slope * score + offset)
}
