//! Mini-batch training on a click log with periodic test-set AUC.

use std::collections::HashMap;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::auc::auc;
use crate::models::{AnyModel, Batch, ClickModel, IinModel, ModelConfig, ModelKind};
use crate::nn::{Algorithm, HasNetworks, OptimizerState};
use crate::ranker::feature_matrix;
use crate::sim::ClickLog;

/// Click records as dense matrices, ready for batching.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub features: Array2<f64>,
    pub bias: Array2<f64>,
    pub position: Array2<f64>,
    pub clicks: Vec<f64>,
    pub relevance: Vec<f64>,
    pub position_cap: usize,
}

impl TrainingSet {
    /// Converts a log; `dataset` supplies the true relevance of each record
    /// (needed only by the skyline model).
    pub fn from_log(log: &ClickLog, dataset: &Dataset, position_cap: usize) -> Result<Self> {
        if log.is_empty() {
            return Err(Error::InvalidInput("empty click log".into()));
        }
        if log.bias_dim < position_cap {
            return Err(Error::Shape(format!(
                "bias width {} is smaller than the position cap {position_cap}",
                log.bias_dim
            )));
        }
        let relevance: HashMap<(u64, usize), bool> = dataset
            .docs()
            .map(|d| ((d.query_id, d.doc_id), d.is_relevant()))
            .collect();
        let n = log.len();
        let mut features = Array2::zeros((n, log.feature_dim));
        let mut bias = Array2::zeros((n, log.bias_dim));
        let mut clicks = Vec::with_capacity(n);
        let mut rel = Vec::with_capacity(n);
        for (i, r) in log.records.iter().enumerate() {
            if r.features.len() != log.feature_dim || r.bias_features.len() != log.bias_dim {
                return Err(Error::Shape(format!("record {i} has inconsistent widths")));
            }
            features.row_mut(i).iter_mut().zip(&r.features).for_each(|(d, &v)| *d = v);
            bias.row_mut(i).iter_mut().zip(&r.bias_features).for_each(|(d, &v)| *d = v);
            clicks.push(f64::from(r.click));
            let is_rel = relevance.get(&(r.query_id, r.doc_id)).ok_or_else(|| {
                Error::InvalidInput(format!("record for unknown document ({}, {})", r.query_id, r.doc_id))
            })?;
            rel.push(f64::from(u8::from(*is_rel)));
        }
        let position = bias.slice(ndarray::s![.., ..position_cap]).to_owned();
        Ok(TrainingSet {
            features,
            bias,
            position,
            clicks,
            relevance: rel,
            position_cap,
        })
    }

    pub fn len(&self) -> usize {
        self.clicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clicks.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn bias_dim(&self) -> usize {
        self.bias.ncols()
    }

    pub fn batch(&self, rows: &[usize]) -> Batch {
        Batch {
            features: self.features.select(Axis(0), rows),
            bias: self.bias.select(Axis(0), rows),
            position: self.position.select(Axis(0), rows),
            clicks: rows.iter().map(|&i| self.clicks[i]).collect(),
            relevance: rows.iter().map(|&i| self.relevance[i]).collect(),
        }
    }

    /// Mean click label, or mean relevance for the skyline, kept away from
    /// 0 and 1.
    pub fn base_rate(&self, kind: ModelKind) -> f64 {
        let labels = if kind == ModelKind::Skyline { &self.relevance } else { &self.clicks };
        let mean = labels.iter().sum::<f64>() / labels.len().max(1) as f64;
        mean.clamp(1e-4, 1.0 - 1e-4)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig::new(self.feature_dim(), self.bias_dim(), self.position_cap)
    }
}

/// Held-out documents with binarized relevance labels.
#[derive(Debug, Clone)]
pub struct TestSet {
    pub features: Array2<f64>,
    pub labels: Vec<u8>,
}

impl TestSet {
    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        if dataset.num_docs() == 0 {
            return Err(Error::InvalidInput("empty test set".into()));
        }
        let docs: Vec<_> = dataset.docs().collect();
        let features = feature_matrix(docs.iter().copied(), dataset.feature_dim);
        let labels = docs.iter().map(|d| u8::from(d.is_relevant())).collect();
        Ok(TestSet { features, labels })
    }

    pub fn evaluate(&self, model: &dyn ClickModel) -> Result<f64> {
        let scores = model.score(self.features.view())?;
        auc(&scores, &self.labels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub algorithm: Algorithm,
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            steps: 70_000,
            batch_size: 256,
            learning_rate: 1e-3,
            algorithm: Algorithm::Adam,
            eval_every: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: usize,
    pub auc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: AnyModel,
    pub curve: Vec<EvalPoint>,
}

impl TrainOutcome {
    pub fn final_auc(&self) -> f64 {
        self.curve.last().map_or(f64::NAN, |p| p.auc)
    }
}

/// Initializes a model of `kind` from the schedule seed, with output biases
/// matched to the training set's base rate, and trains it.
pub fn train_and_eval(
    kind: ModelKind,
    config: &ModelConfig,
    train: &TrainingSet,
    test: &TestSet,
    schedule: &Schedule,
) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut model = AnyModel::new(kind, config, &mut rng)?;
    model.init_output_prior(train.base_rate(kind))?;
    train_model(model, train, test, schedule)
}

/// Trains an existing model. The log is shuffled with the schedule seed and
/// reshuffled at every epoch; the test AUC is recorded at step 0, every
/// `eval_every` steps and at the last step.
pub fn train_model(mut model: AnyModel, train: &TrainingSet, test: &TestSet, schedule: &Schedule) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if schedule.batch_size == 0 || schedule.eval_every == 0 {
        return Err(Error::Config("batch_size and eval_every must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed ^ 0x0073_6875_6666_6c65);
    let mut opts: Vec<OptimizerState> = model
        .networks()
        .iter()
        .map(|_| OptimizerState::new(schedule.algorithm, schedule.learning_rate))
        .collect();

    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let batch_size = schedule.batch_size.min(train.len());
    let mut rows = Vec::with_capacity(batch_size);

    let mut curve = vec![EvalPoint {
        step: 0,
        auc: test.evaluate(&model)?,
    }];
    for step in 1..=schedule.steps {
        rows.clear();
        while rows.len() < batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            rows.push(order[cursor]);
            cursor += 1;
        }
        let batch = train.batch(&rows);
        let (_, grads) = model.loss_and_gradients(&batch)?;
        for ((net, g), opt) in model.networks_mut().into_iter().zip(&grads).zip(&mut opts) {
            opt.step(net, g)?;
        }
        if step % schedule.eval_every == 0 || step == schedule.steps {
            curve.push(EvalPoint {
                step,
                auc: test.evaluate(&model)?,
            });
        }
    }
    if !model.networks().iter().all(|n| n.is_finite()) {
        return Err(Error::InvalidInput("training diverged to non-finite parameters".into()));
    }
    Ok(TrainOutcome { model, curve })
}

/// Largest deviation from 1 of any relevance or transition-column sum, and
/// the fraction of training rows whose constraint violation exceeds `tol`.
pub fn iin_structure_report(model: &IinModel, train: &TrainingSet, tol: f64) -> Result<(f64, f64)> {
    let mut max_dev: f64 = 0.0;
    let mut violations = 0usize;
    let chunk = 4096;
    let mut start = 0;
    while start < train.len() {
        let end = (start + chunk).min(train.len());
        let (_, _, outs) = model.batch_outputs(
            train.features.slice(ndarray::s![start..end, ..]),
            train.bias.slice(ndarray::s![start..end, ..]),
        )?;
        for o in outs {
            max_dev = max_dev.max((o.r[0] + o.r[1] - 1.0).abs());
            for j in 0..2 {
                max_dev = max_dev.max((o.t[0][j] + o.t[1][j] - 1.0).abs());
            }
            if crate::models::constraint_loss(o.t) > tol {
                violations += 1;
            }
        }
        start = end;
    }
    Ok((max_dev, violations as f64 / train.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthConfig};
    use crate::ranker::{train_production_ranker, RankerTrainConfig};
    use crate::sim::{simulate, ClickScenario, ScenarioId, SimBudget, SimConfig};

    fn fixture() -> (TrainingSet, TestSet) {
        let cfg = SynthConfig {
            queries: 30,
            docs_per_query: 20,
            feature_dim: 6,
            title_feature_index: 5,
            ..Default::default()
        };
        let (train, test) = generate_synthetic(&cfg, 2).unwrap().split_tail(10).unwrap();
        let ranker = train_production_ranker(&train, 0.2, &RankerTrainConfig::default(), 2).unwrap();
        let sim = SimConfig {
            k: 5,
            budget: SimBudget::IterationsPerQuery(5),
            position_cap: 10,
            ..Default::default()
        };
        let log = simulate(&train, &ranker, &ClickScenario::new(ScenarioId::S2, 5, 2), &sim).unwrap();
        (
            TrainingSet::from_log(&log, &train, 10).unwrap(),
            TestSet::from_dataset(&test).unwrap(),
        )
    }

    #[test]
    fn zero_steps_gives_initial_point_only() {
        let (train, test) = fixture();
        let schedule = Schedule {
            steps: 0,
            ..Default::default()
        };
        let out = train_and_eval(ModelKind::Iin, &train.model_config(), &train, &test, &schedule).unwrap();
        assert_eq!(out.curve.len(), 1);
        assert_eq!(out.curve[0].step, 0);
    }

    #[test]
    fn curves_are_deterministic_and_strictly_increasing() {
        let (train, test) = fixture();
        let schedule = Schedule {
            steps: 25,
            batch_size: 32,
            eval_every: 10,
            seed: 3,
            ..Default::default()
        };
        for kind in ModelKind::ALL {
            let a = train_and_eval(kind, &train.model_config(), &train, &test, &schedule).unwrap();
            let b = train_and_eval(kind, &train.model_config(), &train, &test, &schedule).unwrap();
            assert_eq!(a.curve, b.curve);
            let steps: Vec<usize> = a.curve.iter().map(|p| p.step).collect();
            assert_eq!(steps, vec![0, 10, 20, 25]);
        }
    }

    #[test]
    fn training_set_relevance_comes_from_dataset() {
        let (train, _) = fixture();
        assert_eq!(train.position.ncols(), 10);
        assert_eq!(train.bias_dim(), 10);
        assert!(train.relevance.contains(&1.0));
        // every row has exactly one position slot set
        for row in train.position.rows() {
            assert_eq!(row.sum(), 1.0);
        }
    }
}
