//! Reference model trained directly on true relevance labels.

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::error::Result;
use crate::models::{check_batch, check_dims, Batch, ClickModel, ModelConfig, ModelKind};
use crate::nn::{sigmoid, Activation, Gradients, HasNetworks, Head, Network};

#[derive(Debug, Clone, PartialEq)]
pub struct SkylineModel {
    pub config: ModelConfig,
    /// Outputs a logit; the score is its sigmoid.
    pub net: Network,
}

impl SkylineModel {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        let h = config.main_hidden;
        let net = Network::mlp(
            &[config.feature_dim, h, h, 1],
            Activation::Relu,
            Activation::Identity,
            Head::None,
            rng,
        )?;
        Self::from_parts(config.clone(), net)
    }

    pub fn from_parts(config: ModelConfig, net: Network) -> Result<Self> {
        check_dims(&net, config.feature_dim, 1, "skyline network")?;
        Ok(SkylineModel { config, net })
    }
}

impl HasNetworks for SkylineModel {
    fn networks(&self) -> Vec<&Network> {
        vec![&self.net]
    }

    fn networks_mut(&mut self) -> Vec<&mut Network> {
        vec![&mut self.net]
    }
}

impl ClickModel for SkylineModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Skyline
    }

    fn loss_and_gradients(&self, batch: &Batch) -> Result<(f64, Vec<Gradients>)> {
        check_batch(batch)?;
        let out = self.net.forward_batch(batch.features.view())?;
        let n = batch.len();
        let mut g = Array2::zeros((n, 1));
        let mut loss = 0.0;
        for i in 0..n {
            let z = out.output()[[i, 0]];
            let y = batch.relevance[i];
            loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
            g[[i, 0]] = (sigmoid(z) - y) / n as f64;
        }
        Ok((loss / n as f64, vec![self.net.backward_batch(&out, g.view())?]))
    }

    fn score(&self, features: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(self
            .net
            .forward_batch(features)?
            .output()
            .column(0)
            .iter()
            .map(|&z| sigmoid(z))
            .collect())
    }
}
