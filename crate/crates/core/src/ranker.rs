//! The production ranker: a deliberately small regression network trained on
//! a fraction of the labelled queries. Its ordering is what the simulated
//! users see.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{sample_groups, Dataset, QueryDocPair, QueryGroup, MAX_GRADE};
use crate::error::{Error, Result};
use crate::nn::{Activation, Head, Network, OptimizerState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerTrainConfig {
    pub hidden: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for RankerTrainConfig {
    fn default() -> Self {
        RankerTrainConfig {
            hidden: 32,
            steps: 300,
            batch_size: 32,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranker {
    pub network: Network,
}

/// A query's documents in display order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedList {
    pub query_id: u64,
    /// Document indices, best first.
    pub order: Vec<usize>,
    /// 1-based display position of each document index.
    pub positions: Vec<usize>,
}

impl RankedList {
    /// Sorts by descending score; ties go to the lower document index.
    pub fn from_scores(query_id: u64, scores: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut positions = vec![0; scores.len()];
        for (k, &doc) in order.iter().enumerate() {
            positions[doc] = k + 1;
        }
        RankedList {
            query_id,
            order,
            positions,
        }
    }
}

pub(crate) fn feature_matrix<'a>(docs: impl ExactSizeIterator<Item = &'a QueryDocPair>, dim: usize) -> Array2<f64> {
    let n = docs.len();
    let mut x = Array2::zeros((n, dim));
    for (mut row, doc) in x.rows_mut().into_iter().zip(docs) {
        row.iter_mut().zip(&doc.features).for_each(|(dst, &v)| *dst = v);
    }
    x
}

impl Ranker {
    pub fn score_batch(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(self.network.forward_batch(x)?.into_output().column(0).to_vec())
    }

    pub fn rank(&self, group: &QueryGroup) -> Result<RankedList> {
        if group.is_empty() {
            return Err(Error::InvalidInput(format!("query {} has no documents", group.query_id)));
        }
        let dim = group.docs[0].features.len();
        let x = feature_matrix(group.docs.iter(), dim);
        let scores = self.score_batch(x.view())?;
        Ok(RankedList::from_scores(group.query_id, &scores))
    }

    pub fn to_json(&self) -> String {
        self.network.to_json()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(Ranker {
            network: Network::from_json(text)?,
        })
    }
}

/// Trains the production ranker on `ceil(fraction × groups)` seeded-sampled
/// queries with pointwise squared error against grades scaled to [0, 1].
pub fn train_production_ranker(
    dataset: &Dataset,
    fraction: f64,
    config: &RankerTrainConfig,
    seed: u64,
) -> Result<Ranker> {
    if dataset.is_empty() {
        return Err(Error::Config("cannot train a ranker on an empty dataset".into()));
    }
    if config.batch_size == 0 || config.hidden == 0 {
        return Err(Error::Config("ranker batch_size and hidden must be positive".into()));
    }
    let selected = sample_groups(dataset.groups.len(), fraction, seed)?;
    let docs: Vec<&QueryDocPair> = selected.iter().flat_map(|&g| dataset.groups[g].docs.iter()).collect();
    if docs.is_empty() {
        return Err(Error::Config("selected ranker queries contain no documents".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7261_6e6b_6572);
    let mut network = Network::mlp(
        &[dataset.feature_dim, config.hidden, 1],
        Activation::Relu,
        Activation::Identity,
        Head::None,
        &mut rng,
    )?;
    let mut opt = OptimizerState::adam(config.learning_rate);

    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut cursor = order.len();
    for _ in 0..config.steps {
        let mut batch = Vec::with_capacity(config.batch_size);
        while batch.len() < config.batch_size.min(docs.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(docs[order[cursor]]);
            cursor += 1;
        }
        let x = feature_matrix(batch.iter().copied(), dataset.feature_dim);
        let cache = network.forward_batch(x.view())?;
        let n = batch.len() as f64;
        let mut upstream = cache.output().clone();
        for (g, doc) in upstream.column_mut(0).iter_mut().zip(&batch) {
            let target = doc.grade as f64 / MAX_GRADE as f64;
            *g = 2.0 * (*g - target) / n;
        }
        let grads = network.backward_batch(&cache, upstream.view())?;
        opt.step(&mut network, &grads)?;
    }
    Ok(Ranker { network })
}

/// Fraction of (relevant, irrelevant) document pairs within a query that the
/// ranker orders correctly; ties count half.
pub fn pairwise_accuracy(ranker: &Ranker, dataset: &Dataset) -> Result<f64> {
    let mut good = 0.0;
    let mut total = 0.0;
    for group in &dataset.groups {
        if group.is_empty() {
            continue;
        }
        let x = feature_matrix(group.docs.iter(), dataset.feature_dim);
        let scores = ranker.score_batch(x.view())?;
        for (i, a) in group.docs.iter().enumerate() {
            for (j, b) in group.docs.iter().enumerate() {
                if a.is_relevant() && !b.is_relevant() {
                    total += 1.0;
                    if scores[i] > scores[j] {
                        good += 1.0;
                    } else if scores[i] == scores[j] {
                        good += 0.5;
                    }
                }
            }
        }
    }
    if total == 0.0 {
        return Err(Error::InvalidInput("no relevant/irrelevant pairs".into()));
    }
    Ok(good / total)
}
