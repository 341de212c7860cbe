use ndarray::Zip;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::network::{Gradients, Network};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sgd,
    Adam,
}

/// Optimizer state for one network. Adam moments are allocated lazily on
/// the first step.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    first_moment: Option<Gradients>,
    second_moment: Option<Gradients>,
    steps: u64,
}

impl OptimizerState {
    pub fn new(algorithm: Algorithm, learning_rate: f64) -> Self {
        OptimizerState {
            algorithm,
            learning_rate,
            first_moment: None,
            second_moment: None,
            steps: 0,
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(Algorithm::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(Algorithm::Adam, learning_rate)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        net.check_gradients(grads)?;
        self.steps += 1;
        let lr = self.learning_rate;
        match self.algorithm {
            Algorithm::Sgd => {
                for (layer, g) in net.layers_mut().iter_mut().zip(&grads.layers) {
                    layer.weights.scaled_add(-lr, &g.weights);
                    layer.bias.scaled_add(-lr, &g.bias);
                }
            }
            Algorithm::Adam => {
                let m = self.first_moment.get_or_insert_with(|| Gradients::zeros_like(net));
                let v = self.second_moment.get_or_insert_with(|| Gradients::zeros_like(net));
                let t = self.steps as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                let update = |p: &mut f64, m: &mut f64, v: &mut f64, &g: &f64| {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                };
                for (((layer, g), m), v) in net
                    .layers_mut()
                    .iter_mut()
                    .zip(&grads.layers)
                    .zip(m.layers.iter_mut())
                    .zip(v.layers.iter_mut())
                {
                    Zip::from(&mut layer.weights)
                        .and(&mut m.weights)
                        .and(&mut v.weights)
                        .and(&g.weights)
                        .for_each(update);
                    Zip::from(&mut layer.bias)
                        .and(&mut m.bias)
                        .and(&mut v.bias)
                        .and(&g.bias)
                        .for_each(update);
                }
            }
        }
        Ok(())
    }
}
