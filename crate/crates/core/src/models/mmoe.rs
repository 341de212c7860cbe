//! Bias-tower baseline: a shallow tower over position and bias features adds
//! its logit to the main network's logit during training and is dropped at
//! inference.

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::error::Result;
use crate::models::{check_batch, check_dims, Batch, ClickModel, ModelConfig, ModelKind};
use crate::nn::{sigmoid, Activation, Gradients, HasNetworks, Head, Network};

#[derive(Debug, Clone, PartialEq)]
pub struct MmoeBiasModel {
    pub config: ModelConfig,
    pub bias_tower: Network,
    pub main_net: Network,
}

/// Numerically stable `BCE(sigmoid(z), y)`.
fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

impl MmoeBiasModel {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        let bias_tower = Network::mlp(
            &[config.bias_dim, config.bias_hidden, 1],
            Activation::Relu,
            Activation::Identity,
            Head::None,
            rng,
        )?;
        let h = config.main_hidden;
        let main_net = Network::mlp(
            &[config.feature_dim, h, h, 1],
            Activation::Relu,
            Activation::Identity,
            Head::None,
            rng,
        )?;
        Self::from_parts(config.clone(), bias_tower, main_net)
    }

    pub fn from_parts(config: ModelConfig, bias_tower: Network, main_net: Network) -> Result<Self> {
        check_dims(&bias_tower, config.bias_dim, 1, "bias tower")?;
        check_dims(&main_net, config.feature_dim, 1, "main network")?;
        Ok(MmoeBiasModel {
            config,
            bias_tower,
            main_net,
        })
    }

    pub fn click_prob(&self, x: &[f64], bias: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.bias_tower.forward(bias)?[0] + self.main_net.forward(x)?[0]))
    }
}

impl HasNetworks for MmoeBiasModel {
    fn networks(&self) -> Vec<&Network> {
        vec![&self.bias_tower, &self.main_net]
    }

    fn networks_mut(&mut self) -> Vec<&mut Network> {
        vec![&mut self.bias_tower, &mut self.main_net]
    }
}

impl ClickModel for MmoeBiasModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Mmoe
    }

    fn loss_and_gradients(&self, batch: &Batch) -> Result<(f64, Vec<Gradients>)> {
        check_batch(batch)?;
        let tower = self.bias_tower.forward_batch(batch.bias.view())?;
        let main = self.main_net.forward_batch(batch.features.view())?;
        let n = batch.len();
        let mut g = Array2::zeros((n, 1));
        let mut loss = 0.0;
        for i in 0..n {
            let z = tower.output()[[i, 0]] + main.output()[[i, 0]];
            let y = batch.clicks[i];
            loss += bce_with_logit(z, y);
            g[[i, 0]] = (sigmoid(z) - y) / n as f64;
        }
        Ok((
            loss / n as f64,
            vec![
                self.bias_tower.backward_batch(&tower, g.view())?,
                self.main_net.backward_batch(&main, g.view())?,
            ],
        ))
    }

    fn score(&self, features: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(self
            .main_net
            .forward_batch(features)?
            .output()
            .column(0)
            .iter()
            .map(|&z| sigmoid(z))
            .collect())
    }
}
