//! List-wise soft cross-entropy, used when a whole recommendation list is
//! labelled with graded targets (e.g. route coverage ratios).

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::models::iin::{constraint_loss, IinModel};
use crate::nn::loss::softmax;
use crate::nn::Gradients;

fn normalized_labels(scores: &[f64], labels: &[f64]) -> Result<Vec<f64>> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::Shape(format!(
            "{} scores vs {} labels (need equal, non-zero lengths)",
            scores.len(),
            labels.len()
        )));
    }
    if labels.iter().any(|&l| l.is_nan() || l < 0.0) {
        return Err(Error::InvalidInput("soft labels must be non-negative".into()));
    }
    let total: f64 = labels.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidInput("soft labels are all zero".into()));
    }
    Ok(labels.iter().map(|l| l / total).collect())
}

/// Cross-entropy between `softmax(scores)` and the labels normalized to sum 1.
pub fn listwise_soft_ce(scores: &[f64], soft_labels: &[f64]) -> Result<f64> {
    let q = normalized_labels(scores, soft_labels)?;
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    Ok(-scores
        .iter()
        .zip(&q)
        .map(|(&s, &q)| if q == 0.0 { 0.0 } else { q * (s - log_z) })
        .sum::<f64>())
}

/// Gradient of [`listwise_soft_ce`] with respect to the scores:
/// `softmax(scores) − q`.
pub fn listwise_soft_ce_grad(scores: &[f64], soft_labels: &[f64]) -> Result<Vec<f64>> {
    let q = normalized_labels(scores, soft_labels)?;
    Ok(softmax(scores).iter().zip(&q).map(|(p, q)| p - q).collect())
}

impl IinModel {
    /// List-wise loss over one list: soft cross-entropy of the per-item click
    /// probabilities, plus `alpha` times the summed per-item constraint.
    pub fn listwise_loss(&self, features: ArrayView2<f64>, bias: ArrayView2<f64>, soft_labels: &[f64]) -> Result<f64> {
        Ok(self.listwise_loss_and_gradients(features, bias, soft_labels)?.0)
    }

    pub fn listwise_loss_and_gradients(
        &self,
        features: ArrayView2<f64>,
        bias: ArrayView2<f64>,
        soft_labels: &[f64],
    ) -> Result<(f64, Vec<Gradients>)> {
        if features.nrows() != bias.nrows() {
            return Err(Error::Shape("features and bias disagree on list length".into()));
        }
        let (rel, logits, outs) = self.batch_outputs(features, bias)?;
        let scores: Vec<f64> = outs.iter().map(|o| o.p_click[0]).collect();
        let alpha = self.config.alpha;
        let loss = listwise_soft_ce(&scores, soft_labels)? + alpha * outs.iter().map(|o| constraint_loss(o.t)).sum::<f64>();
        let g = listwise_soft_ce_grad(&scores, soft_labels)?;
        let grad_p: Vec<[f64; 2]> = g.into_iter().map(|g| [g, 0.0]).collect();
        let grads = self.backprop(&rel, &logits, &outs, &grad_p, alpha)?;
        Ok((loss, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::test_support::{jitter, random_batch, small_config};
    use crate::nn::{max_relative_error, numeric_gradients};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_case_is_log_length() {
        let ce = listwise_soft_ce(&[0.3; 4], &[2.0; 4]).unwrap();
        assert!((ce - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_item_is_zero() {
        assert_eq!(listwise_soft_ce(&[5.0], &[0.2]).unwrap(), 0.0);
    }

    #[test]
    fn saturated_case_approaches_zero() {
        let ce = listwise_soft_ce(&[60.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(ce < 1e-12, "{ce}");
    }

    #[test]
    fn rejects_bad_labels() {
        assert!(listwise_soft_ce(&[1.0, 2.0], &[0.0, 0.0]).is_err());
        assert!(listwise_soft_ce(&[1.0, 2.0], &[1.0]).is_err());
        assert!(listwise_soft_ce(&[1.0], &[-1.0]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let scores = [0.3, -1.2, 0.8];
        let labels = [0.5, 0.1, 0.9];
        let g = listwise_soft_ce_grad(&scores, &labels).unwrap();
        for i in 0..3 {
            let mut up = scores;
            let mut down = scores;
            up[i] += 1e-6;
            down[i] -= 1e-6;
            let fd = (listwise_soft_ce(&up, &labels).unwrap() - listwise_soft_ce(&down, &labels).unwrap()) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn iin_listwise_gradient_check() {
        let cfg = small_config();
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = IinModel::new(&cfg, &mut rng).unwrap();
            jitter(&mut m, seed + 7);
            let batch = random_batch(&cfg, 3, seed + 40);
            let labels = [0.7, 0.2, 1.0];
            let (_, analytic) = m
                .listwise_loss_and_gradients(batch.features.view(), batch.bias.view(), &labels)
                .unwrap();
            let numeric = numeric_gradients(&mut m, 1e-5, |m| {
                m.listwise_loss(batch.features.view(), batch.bias.view(), &labels).unwrap()
            });
            let err = max_relative_error(&analytic, &numeric, 1e-6);
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }
}
