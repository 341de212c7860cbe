//! Position-aware baseline: `P(click) = P(seen | pos) · P(click | x, seen)`.
//! Only the second factor is used for ranking.

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::error::Result;
use crate::models::{check_batch, check_dims, Batch, ClickModel, ModelConfig, ModelKind};
use crate::nn::loss::{binary_cross_entropy, binary_cross_entropy_grad};
use crate::nn::{Activation, Gradients, HasNetworks, Head, Network};

#[derive(Debug, Clone, PartialEq)]
pub struct PalModel {
    pub config: ModelConfig,
    /// Position one-hot → P(seen).
    pub obs_net: Network,
    /// Features → P(click | seen).
    pub rel_net: Network,
}

impl PalModel {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        let obs_net = Network::mlp(
            &[config.position_cap, config.bias_hidden, 1],
            Activation::Relu,
            Activation::Sigmoid,
            Head::None,
            rng,
        )?;
        let h = config.main_hidden;
        let rel_net = Network::mlp(
            &[config.feature_dim, h, h, 1],
            Activation::Relu,
            Activation::Sigmoid,
            Head::None,
            rng,
        )?;
        Self::from_parts(config.clone(), obs_net, rel_net)
    }

    pub fn from_parts(config: ModelConfig, obs_net: Network, rel_net: Network) -> Result<Self> {
        check_dims(&obs_net, config.position_cap, 1, "observation network")?;
        check_dims(&rel_net, config.feature_dim, 1, "relevance network")?;
        Ok(PalModel {
            config,
            obs_net,
            rel_net,
        })
    }

    /// Click probability for one example.
    pub fn click_prob(&self, x: &[f64], position: &[f64]) -> Result<f64> {
        Ok(self.obs_net.forward(position)?[0] * self.rel_net.forward(x)?[0])
    }
}

impl HasNetworks for PalModel {
    fn networks(&self) -> Vec<&Network> {
        vec![&self.obs_net, &self.rel_net]
    }

    fn networks_mut(&mut self) -> Vec<&mut Network> {
        vec![&mut self.obs_net, &mut self.rel_net]
    }
}

impl ClickModel for PalModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Pal
    }

    fn loss_and_gradients(&self, batch: &Batch) -> Result<(f64, Vec<Gradients>)> {
        check_batch(batch)?;
        let obs = self.obs_net.forward_batch(batch.position.view())?;
        let rel = self.rel_net.forward_batch(batch.features.view())?;
        let n = batch.len();
        let mut g_obs = Array2::zeros((n, 1));
        let mut g_rel = Array2::zeros((n, 1));
        let mut loss = 0.0;
        for i in 0..n {
            let s = obs.output()[[i, 0]];
            let c = rel.output()[[i, 0]];
            let p = s * c;
            let y = batch.clicks[i];
            loss += binary_cross_entropy(p, y);
            let g = binary_cross_entropy_grad(p, y) / n as f64;
            g_obs[[i, 0]] = g * c;
            g_rel[[i, 0]] = g * s;
        }
        Ok((
            loss / n as f64,
            vec![
                self.obs_net.backward_batch(&obs, g_obs.view())?,
                self.rel_net.backward_batch(&rel, g_rel.view())?,
            ],
        ))
    }

    fn score(&self, features: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(self.rel_net.forward_batch(features)?.output().column(0).to_vec())
    }
}
