//! Trainable click models.
//!
//! Every model has a training path that sees the position and bias inputs,
//! and an inference scorer that only sees document features.

mod iin;
mod listwise;
mod mmoe;
mod pal;
mod skyline;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::checkpoint::NetworkRecord;
use crate::nn::{Gradients, HasNetworks, Network};

pub use iin::{bias_surface, click_distribution, constraint_loss, BiasSurfaceEntry, IinModel, IinOutput};
pub use listwise::{listwise_soft_ce, listwise_soft_ce_grad};
pub use mmoe::MmoeBiasModel;
pub use pal::PalModel;
pub use skyline::SkylineModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Iin,
    Pal,
    Mmoe,
    Skyline,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Iin, ModelKind::Pal, ModelKind::Mmoe, ModelKind::Skyline];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Iin => "iin",
            ModelKind::Pal => "pal",
            ModelKind::Mmoe => "mmoe",
            ModelKind::Skyline => "skyline",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "iin" => Ok(ModelKind::Iin),
            "pal" => Ok(ModelKind::Pal),
            "mmoe" | "mmoe-bias" => Ok(ModelKind::Mmoe),
            "skyline" => Ok(ModelKind::Skyline),
            other => Err(Error::Config(format!("unknown model `{other}` (expected iin|pal|mmoe|skyline)"))),
        }
    }
}

/// Architecture settings shared by all models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub feature_dim: usize,
    /// Width of the bias input: position one-hot plus any bias features.
    pub bias_dim: usize,
    pub position_cap: usize,
    pub main_hidden: usize,
    pub bias_hidden: usize,
    /// Weight of the IIN ordering constraint.
    pub alpha: f64,
}

impl ModelConfig {
    pub fn new(feature_dim: usize, bias_dim: usize, position_cap: usize) -> Self {
        ModelConfig {
            feature_dim,
            bias_dim,
            position_cap,
            main_hidden: 64,
            bias_hidden: 16,
            alpha: 100.0,
        }
    }
}

/// A mini-batch of training examples, one row per example.
#[derive(Debug, Clone)]
pub struct Batch {
    pub features: Array2<f64>,
    /// Position one-hot followed by extra bias features.
    pub bias: Array2<f64>,
    /// Position one-hot only.
    pub position: Array2<f64>,
    pub clicks: Vec<f64>,
    /// Binarized true relevance; used only by the skyline model.
    pub relevance: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.clicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clicks.is_empty()
    }
}

pub trait ClickModel: HasNetworks {
    fn kind(&self) -> ModelKind;

    /// Mean training loss over the batch.
    fn loss(&self, batch: &Batch) -> Result<f64> {
        Ok(self.loss_and_gradients(batch)?.0)
    }

    /// Mean training loss and its gradient for each network, in the order
    /// of [`HasNetworks::networks`].
    fn loss_and_gradients(&self, batch: &Batch) -> Result<(f64, Vec<Gradients>)>;

    /// Relevance score from document features alone.
    fn score(&self, features: ArrayView2<f64>) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Iin(IinModel),
    Pal(PalModel),
    Mmoe(MmoeBiasModel),
    Skyline(SkylineModel),
}

impl AnyModel {
    pub fn new<R: Rng + ?Sized>(kind: ModelKind, config: &ModelConfig, rng: &mut R) -> Result<Self> {
        Ok(match kind {
            ModelKind::Iin => AnyModel::Iin(IinModel::new(config, rng)?),
            ModelKind::Pal => AnyModel::Pal(PalModel::new(config, rng)?),
            ModelKind::Mmoe => AnyModel::Mmoe(MmoeBiasModel::new(config, rng)?),
            ModelKind::Skyline => AnyModel::Skyline(SkylineModel::new(config, rng)?),
        })
    }

    fn inner(&self) -> &dyn ClickModel {
        match self {
            AnyModel::Iin(m) => m,
            AnyModel::Pal(m) => m,
            AnyModel::Mmoe(m) => m,
            AnyModel::Skyline(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn ClickModel {
        match self {
            AnyModel::Iin(m) => m,
            AnyModel::Pal(m) => m,
            AnyModel::Mmoe(m) => m,
            AnyModel::Skyline(m) => m,
        }
    }

    /// Sets output-layer biases so that the untrained model predicts
    /// `base_rate` everywhere: the click rate for the click models, the
    /// relevant fraction for the skyline. Without this the IIN relevance
    /// softmax can saturate within the first few hundred steps, while the
    /// transition matrix is still far from the observed click rate, and
    /// never recover.
    ///
    /// The IIN columns are also split around the rate, relevant above and
    /// irrelevant below, with the relevance softmax at one half. With equal
    /// columns the relevance net gets no gradient until the bias net drifts
    /// apart by chance, and training stalls near AUC 0.5 for thousands of
    /// steps.
    pub fn init_output_prior(&mut self, base_rate: f64) -> Result<()> {
        if !(base_rate > 0.0 && base_rate < 1.0) {
            return Err(Error::InvalidInput(format!("base rate {base_rate} outside (0, 1)")));
        }
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let set = |net: &mut Network, values: &[f64]| {
            let last = net.layers_mut().last_mut().expect("networks have layers");
            for (b, &v) in last.bias.iter_mut().zip(values) {
                *b = v;
            }
        };
        match self {
            AnyModel::Iin(m) => {
                let spread = base_rate.min(1.0 - base_rate) / 2.0;
                let (rel, irr) = (logit(base_rate + spread), logit(base_rate - spread));
                set(&mut m.bias_net, &[rel, irr, 0.0, 0.0]);
            }
            AnyModel::Pal(m) => {
                let l = logit(base_rate.sqrt());
                set(&mut m.obs_net, &[l]);
                set(&mut m.rel_net, &[l]);
            }
            AnyModel::Mmoe(m) => set(&mut m.bias_tower, &[logit(base_rate)]),
            AnyModel::Skyline(m) => set(&mut m.net, &[logit(base_rate)]),
        }
        Ok(())
    }

    pub fn as_iin(&self) -> Option<&IinModel> {
        match self {
            AnyModel::Iin(m) => Some(m),
            _ => None,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            AnyModel::Iin(m) => &m.config,
            AnyModel::Pal(m) => &m.config,
            AnyModel::Mmoe(m) => &m.config,
            AnyModel::Skyline(m) => &m.config,
        }
    }

    pub fn to_json(&self) -> String {
        let ckpt = ModelCheckpoint {
            kind: self.kind(),
            alpha: self.config().alpha,
            config: self.config().clone(),
            networks: self.networks().into_iter().map(NetworkRecord::from).collect(),
        };
        serde_json::to_string_pretty(&ckpt).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: ModelCheckpoint = serde_json::from_str(text)?;
        let mut config = ckpt.config;
        config.alpha = ckpt.alpha;
        let nets = ckpt
            .networks
            .into_iter()
            .map(Network::try_from)
            .collect::<Result<Vec<_>>>()?;
        let mut nets = nets.into_iter();
        let mut next = || nets.next().ok_or_else(|| Error::InvalidInput("checkpoint is missing a network".into()));
        let model = match ckpt.kind {
            ModelKind::Iin => AnyModel::Iin(IinModel::from_parts(config, next()?, next()?)?),
            ModelKind::Pal => AnyModel::Pal(PalModel::from_parts(config, next()?, next()?)?),
            ModelKind::Mmoe => AnyModel::Mmoe(MmoeBiasModel::from_parts(config, next()?, next()?)?),
            ModelKind::Skyline => AnyModel::Skyline(SkylineModel::from_parts(config, next()?)?),
        };
        Ok(model)
    }
}

impl HasNetworks for AnyModel {
    fn networks(&self) -> Vec<&Network> {
        self.inner().networks()
    }

    fn networks_mut(&mut self) -> Vec<&mut Network> {
        self.inner_mut().networks_mut()
    }
}

impl ClickModel for AnyModel {
    fn kind(&self) -> ModelKind {
        self.inner().kind()
    }

    fn loss_and_gradients(&self, batch: &Batch) -> Result<(f64, Vec<Gradients>)> {
        self.inner().loss_and_gradients(batch)
    }

    fn score(&self, features: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.inner().score(features)
    }
}

/// On-disk model: the network checkpoints plus a kind tag and alpha.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelCheckpoint {
    kind: ModelKind,
    alpha: f64,
    config: ModelConfig,
    networks: Vec<NetworkRecord>,
}

pub(crate) fn check_dims(net: &Network, inputs: usize, outputs: usize, name: &str) -> Result<()> {
    if net.input_dim() != inputs || net.output_dim() != outputs {
        return Err(Error::Shape(format!(
            "{name} maps {} -> {}, expected {inputs} -> {outputs}",
            net.input_dim(),
            net.output_dim()
        )));
    }
    Ok(())
}

pub(crate) fn check_batch(batch: &Batch) -> Result<()> {
    let n = batch.clicks.len();
    if batch.features.nrows() != n || batch.bias.nrows() != n || batch.position.nrows() != n || batch.relevance.len() != n
    {
        return Err(Error::Shape("batch components disagree on the number of rows".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use crate::nn::{max_relative_error, numeric_gradients};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn every_model_passes_gradient_check() {
        let config = small_config();
        for kind in ModelKind::ALL {
            for seed in 0..3 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut model = AnyModel::new(kind, &config, &mut rng).unwrap();
                jitter(&mut model, seed + 7);
                let batch = random_batch(&config, 7, seed + 100);
                let (_, analytic) = model.loss_and_gradients(&batch).unwrap();
                let numeric = numeric_gradients(&mut model, 1e-5, |m| m.loss(&batch).unwrap());
                let err = max_relative_error(&analytic, &numeric, 1e-6);
                assert!(err < 1e-4, "{kind} seed {seed}: {err}");
            }
        }
    }

    #[test]
    fn output_prior_sets_initial_click_rate() {
        let config = small_config();
        let batch = random_batch(&config, 6, 9);
        for kind in ModelKind::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let mut model = AnyModel::new(kind, &config, &mut rng).unwrap();
            for net in model.networks_mut() {
                for layer in net.layers_mut() {
                    layer.weights.fill(0.0);
                }
            }
            model.init_output_prior(0.09).unwrap();
            let p = match &model {
                AnyModel::Iin(m) => m.forward(batch.features.row(0).as_slice().unwrap(), batch.bias.row(0).as_slice().unwrap()).unwrap().p_click[0],
                AnyModel::Pal(m) => m.click_prob(batch.features.row(0).as_slice().unwrap(), batch.position.row(0).as_slice().unwrap()).unwrap(),
                AnyModel::Mmoe(m) => m.click_prob(batch.features.row(0).as_slice().unwrap(), batch.bias.row(0).as_slice().unwrap()).unwrap(),
                AnyModel::Skyline(m) => m.score(batch.features.view()).unwrap()[0],
            };
            assert!((p - 0.09).abs() < 1e-12, "{kind}: {p}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(AnyModel::new(ModelKind::Iin, &config, &mut rng).unwrap().init_output_prior(1.0).is_err());
    }

    #[test]
    fn scores_ignore_position() {
        let config = small_config();
        for kind in ModelKind::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let model = AnyModel::new(kind, &config, &mut rng).unwrap();
            let batch = random_batch(&config, 5, 2);
            let s = model.score(batch.features.view()).unwrap();
            assert_eq!(s.len(), 5);
            assert!(s.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let config = small_config();
        for kind in ModelKind::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let model = AnyModel::new(kind, &config, &mut rng).unwrap();
            let back = AnyModel::from_json(&model.to_json()).unwrap();
            assert_eq!(back, model);
        }
    }

    #[test]
    fn kind_parsing() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.as_str().parse::<ModelKind>().unwrap(), kind);
        }
        assert!("dnn".parse::<ModelKind>().is_err());
    }
}
