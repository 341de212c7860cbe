//! Implicit intention network.
//!
//! The click is marginalized over a latent relevance variable `r`:
//!
//! ```text
//! P(y=1 | x, pos, b) = P(y=1 | r=1, pos, b) P(r=1 | x) + P(y=1 | r=0, pos, b) P(r=0 | x)
//! ```
//!
//! The relevance network outputs `r = [P(r=1|x), P(r=0|x)]` through a
//! softmax. The bias network outputs four logits that become a 2×2 matrix
//! `t` with one softmax per column: `t[i][j]` is the probability of click
//! outcome `i` (0: click, 1: no click) given relevance column `j`
//! (0: relevant, 1: irrelevant). The click distribution is `r × t`.
//!
//! Training adds `alpha · relu(t[0][1] − t[0][0])`, which pins the first
//! component of `r` to mean "relevant".

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::encoding::position_encoding;
use crate::error::{Error, Result};
use crate::models::{check_batch, check_dims, Batch, ClickModel, ModelConfig, ModelKind};
use crate::nn::loss::{clamp_prob, softmax, PROB_EPS};
use crate::nn::{Activation, Gradients, HasNetworks, Head, Network};

#[derive(Debug, Clone, PartialEq)]
pub struct IinModel {
    pub config: ModelConfig,
    pub relevance_net: Network,
    pub bias_net: Network,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IinOutput {
    /// `[P(r=1|x), P(r=0|x)]`
    pub r: [f64; 2],
    /// Column-stochastic transition matrix; column 0 is r=1.
    pub t: [[f64; 2]; 2],
    /// `[P(y=1|x,pos,b), P(y=0|x,pos,b)]`
    pub p_click: [f64; 2],
}

/// `r × t` with `r` read as a 1×2 row vector.
pub fn click_distribution(r: [f64; 2], t: [[f64; 2]; 2]) -> [f64; 2] {
    [r[0] * t[0][0] + r[1] * t[0][1], r[0] * t[1][0] + r[1] * t[1][1]]
}

/// `relu(P(y=1|r=0) − P(y=1|r=1))`.
pub fn constraint_loss(t: [[f64; 2]; 2]) -> f64 {
    (t[0][1] - t[0][0]).max(0.0)
}

/// Two independent softmaxes over the columns of the 2×2 logit matrix laid
/// out row-major as `[l00, l01, l10, l11]`.
fn transition_from_logits(l: &[f64]) -> [[f64; 2]; 2] {
    let c0 = softmax(&[l[0], l[2]]);
    let c1 = softmax(&[l[1], l[3]]);
    [[c0[0], c1[0]], [c0[1], c1[1]]]
}

impl IinModel {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        let h = config.main_hidden;
        let relevance_net = Network::mlp(
            &[config.feature_dim, h, h, 2],
            Activation::Relu,
            Activation::Identity,
            Head::Softmax,
            rng,
        )?;
        let bias_net = Network::mlp(
            &[config.bias_dim, config.bias_hidden, 4],
            Activation::Relu,
            Activation::Identity,
            Head::None,
            rng,
        )?;
        Self::from_parts(config.clone(), relevance_net, bias_net)
    }

    pub fn from_parts(config: ModelConfig, relevance_net: Network, bias_net: Network) -> Result<Self> {
        check_dims(&relevance_net, config.feature_dim, 2, "relevance network")?;
        check_dims(&bias_net, config.bias_dim, 4, "bias network")?;
        if relevance_net.head() != Head::Softmax {
            return Err(Error::Shape("relevance network needs a softmax head".into()));
        }
        Ok(IinModel {
            config,
            relevance_net,
            bias_net,
        })
    }

    /// Bias-network input for a position and extra bias features.
    pub fn bias_input(&self, pos: usize, extra: &[f64]) -> Vec<f64> {
        let mut v = position_encoding(pos, self.config.position_cap);
        v.extend_from_slice(extra);
        v
    }

    pub fn transition(&self, bias: &[f64]) -> Result<[[f64; 2]; 2]> {
        Ok(transition_from_logits(&self.bias_net.forward(bias)?))
    }

    /// Single-example forward pass; `bias` is the full bias input
    /// (position one-hot followed by extra bias features).
    pub fn forward(&self, x: &[f64], bias: &[f64]) -> Result<IinOutput> {
        let r = self.relevance_net.forward(x)?;
        let r = [r[0], r[1]];
        let t = self.transition(bias)?;
        Ok(IinOutput {
            r,
            t,
            p_click: click_distribution(r, t),
        })
    }

    /// Pointwise loss for one example: cross-entropy of the click
    /// distribution plus the weighted ordering constraint.
    pub fn example_loss(&self, x: &[f64], bias: &[f64], click: bool) -> Result<f64> {
        let out = self.forward(x, bias)?;
        let idx = usize::from(!click);
        Ok(-clamp_prob(out.p_click[idx]).ln() + self.config.alpha * constraint_loss(out.t))
    }

    /// `P(r=1|x)`; position and bias are not inputs.
    pub fn relevance(&self, x: &[f64]) -> Result<f64> {
        Ok(self.relevance_net.forward(x)?[0])
    }

    pub(crate) fn batch_outputs(
        &self,
        features: ArrayView2<f64>,
        bias: ArrayView2<f64>,
    ) -> Result<(crate::nn::ForwardCache, crate::nn::ForwardCache, Vec<IinOutput>)> {
        let rel = self.relevance_net.forward_batch(features)?;
        let logits = self.bias_net.forward_batch(bias)?;
        let outs = rel
            .output()
            .rows()
            .into_iter()
            .zip(logits.output().rows())
            .map(|(r, l)| {
                let r = [r[0], r[1]];
                let t = transition_from_logits(l.as_slice().expect("contiguous row"));
                IinOutput {
                    r,
                    t,
                    p_click: click_distribution(r, t),
                }
            })
            .collect();
        Ok((rel, logits, outs))
    }

    /// Backpropagates per-example gradients on `p_click` plus the constraint
    /// weight into both networks.
    pub(crate) fn backprop(
        &self,
        rel: &crate::nn::ForwardCache,
        logits: &crate::nn::ForwardCache,
        outs: &[IinOutput],
        grad_p: &[[f64; 2]],
        constraint_weight: f64,
    ) -> Result<Vec<Gradients>> {
        let n = outs.len();
        let mut grad_r = Array2::zeros((n, 2));
        let mut grad_l = Array2::zeros((n, 4));
        for (i, (o, gp)) in outs.iter().zip(grad_p).enumerate() {
            let mut gt = [[0.0; 2]; 2];
            for j in 0..2 {
                grad_r[[i, j]] = gp[0] * o.t[0][j] + gp[1] * o.t[1][j];
                gt[0][j] = gp[0] * o.r[j];
                gt[1][j] = gp[1] * o.r[j];
            }
            if o.t[0][1] > o.t[0][0] {
                gt[0][1] += constraint_weight;
                gt[0][0] -= constraint_weight;
            }
            for j in 0..2 {
                let s = [o.t[0][j], o.t[1][j]];
                let dot = s[0] * gt[0][j] + s[1] * gt[1][j];
                grad_l[[i, j]] = s[0] * (gt[0][j] - dot);
                grad_l[[i, 2 + j]] = s[1] * (gt[1][j] - dot);
            }
        }
        Ok(vec![
            self.relevance_net.backward_batch(rel, grad_r.view())?,
            self.bias_net.backward_batch(logits, grad_l.view())?,
        ])
    }
}

impl HasNetworks for IinModel {
    fn networks(&self) -> Vec<&Network> {
        vec![&self.relevance_net, &self.bias_net]
    }

    fn networks_mut(&mut self) -> Vec<&mut Network> {
        vec![&mut self.relevance_net, &mut self.bias_net]
    }
}

impl ClickModel for IinModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Iin
    }

    fn loss_and_gradients(&self, batch: &Batch) -> Result<(f64, Vec<Gradients>)> {
        check_batch(batch)?;
        let (rel, logits, outs) = self.batch_outputs(batch.features.view(), batch.bias.view())?;
        let n = batch.len() as f64;
        let alpha = self.config.alpha;
        let mut loss = 0.0;
        let mut grad_p = Vec::with_capacity(outs.len());
        for (o, &y) in outs.iter().zip(&batch.clicks) {
            let idx = if y > 0.5 { 0 } else { 1 };
            let p = o.p_click[idx];
            loss += -clamp_prob(p).ln() + alpha * constraint_loss(o.t);
            let mut g = [0.0; 2];
            if (PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
                g[idx] = -1.0 / (p * n);
            }
            grad_p.push(g);
        }
        let grads = self.backprop(&rel, &logits, &outs, &grad_p, alpha / n)?;
        Ok((loss / n, grads))
    }

    fn score(&self, features: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(self.relevance_net.forward_batch(features)?.output().column(0).to_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasSurfaceEntry {
    pub pos: usize,
    pub bias: Vec<f64>,
    /// `P(y=1 | r=1, pos, b)`
    pub click_if_relevant: f64,
    /// `P(y=1 | r=0, pos, b)`
    pub click_if_irrelevant: f64,
}

/// Evaluates the first row of the transition matrix over a grid of
/// positions and extra bias vectors. An empty `bias_samples` means the model
/// has no extra bias features.
pub fn bias_surface(model: &IinModel, positions: &[usize], bias_samples: &[Vec<f64>]) -> Result<Vec<BiasSurfaceEntry>> {
    let empty = [Vec::new()];
    let samples: &[Vec<f64>] = if bias_samples.is_empty() { &empty } else { bias_samples };
    let mut out = Vec::with_capacity(positions.len() * samples.len());
    for &pos in positions {
        for b in samples {
            let t = model.transition(&model.bias_input(pos, b))?;
            out.push(BiasSurfaceEntry {
                pos,
                bias: b.clone(),
                click_if_relevant: t[0][0],
                click_if_irrelevant: t[0][1],
            });
        }
    }
    Ok(out)
}
