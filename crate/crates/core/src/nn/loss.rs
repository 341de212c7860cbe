use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Clamp applied to probabilities before taking logs.
pub const PROB_EPS: f64 = 1e-12;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax with max-subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn softmax_rows_inplace(z: &mut Array2<f64>) {
    for mut row in z.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// `−Σ target_i · ln(pred_i)` with `pred` clamped to `[ε, 1−ε]`.
pub fn cross_entropy(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "prediction has {} entries, target {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(-pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| if t == 0.0 { 0.0 } else { t * clamp_prob(p).ln() })
        .sum::<f64>())
}

/// Binary cross-entropy of a probability against a {0,1} (or soft) label.
pub fn binary_cross_entropy(p: f64, y: f64) -> f64 {
    let p = clamp_prob(p);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Derivative of [`binary_cross_entropy`] with respect to `p`. Zero where the
/// clamp is active.
pub(crate) fn binary_cross_entropy_grad(p: f64, y: f64) -> f64 {
    if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
        return 0.0;
    }
    -y / p + (1.0 - y) / (1.0 - p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn cross_entropy_closed_forms() {
        let near_zero = cross_entropy(&[1.0 - PROB_EPS, PROB_EPS], &[1.0, 0.0]).unwrap();
        assert!(near_zero.abs() < 1e-11);
        assert!((cross_entropy(&[0.5, 0.5], &[1.0, 0.0]).unwrap() - LN_2).abs() < 1e-15);
        assert!((cross_entropy(&[0.5, 0.5], &[0.5, 0.5]).unwrap() - LN_2).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_length_mismatch() {
        assert!(matches!(cross_entropy(&[0.5, 0.5], &[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn cross_entropy_is_finite_on_saturated_prediction() {
        let ce = cross_entropy(&[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((ce - (-(PROB_EPS.ln()))).abs() < 1e-9);
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let s = softmax(&[1000.0, 1000.0]);
        assert_eq!(s, vec![0.5, 0.5]);
        let s = softmax(&[-1e4, 0.0]);
        assert!(s[1] > 1.0 - 1e-12);
    }

    #[test]
    fn sigmoid_symmetry() {
        assert_eq!(sigmoid(0.0), 0.5);
        for x in [-30.0, -2.5, 0.3, 7.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
        assert_eq!(sigmoid(-1000.0), 0.0);
    }
}
