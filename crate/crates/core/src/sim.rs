//! Click simulation under the five bias scenarios.
//!
//! A query's documents are shown in the production ranker's order. Each
//! shown document is observed with a position-dependent probability (scaled
//! by a per-document weight in S5) and then clicked with a probability that
//! depends on whether it was observed and whether it is relevant. Every
//! iteration keeps the top five positions plus `k` documents sampled from
//! further down the list.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, QueryGroup};
use crate::encoding::{write_position_encoding, DEFAULT_POSITION_CAP};
use crate::error::{Error, Result};
use crate::ranker::Ranker;

/// Number of top positions always kept per iteration.
pub const TOP_POSITIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    S1,
    S2,
    S3,
    S4,
    S5,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 5] = [ScenarioId::S1, ScenarioId::S2, ScenarioId::S3, ScenarioId::S4, ScenarioId::S5];

    pub fn click_rule(self) -> ClickRule {
        match self {
            ScenarioId::S1 => ClickRule::ObservedRelevant,
            ScenarioId::S2 => ClickRule::ObservedAny,
            ScenarioId::S3 | ScenarioId::S5 => ClickRule::UnobservedRelevant,
            ScenarioId::S4 => ClickRule::Unobserved,
        }
    }

    /// Whether the scenario's observation depends on a document feature.
    pub fn uses_feature_bias(self) -> bool {
        self == ScenarioId::S5
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::S1 => "s1",
            ScenarioId::S2 => "s2",
            ScenarioId::S3 => "s3",
            ScenarioId::S4 => "s4",
            ScenarioId::S5 => "s5",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "s1" => Ok(ScenarioId::S1),
            "s2" => Ok(ScenarioId::S2),
            "s3" => Ok(ScenarioId::S3),
            "s4" => Ok(ScenarioId::S4),
            "s5" => Ok(ScenarioId::S5),
            other => Err(Error::Config(format!("unknown scenario `{other}` (expected s1..s5)"))),
        }
    }
}

/// Click probability tables. Each rule extends the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClickRule {
    /// Click iff observed and relevant.
    ObservedRelevant,
    /// Adds `1 / (min(pos, 5) + 3)` for observed irrelevant documents.
    ObservedAny,
    /// Adds 0.1 for unobserved relevant documents.
    UnobservedRelevant,
    /// Adds 0.01 for unobserved irrelevant documents.
    Unobserved,
}

pub fn click_prob(rule: ClickRule, pos: usize, relevant: bool, observed: bool) -> f64 {
    let level = match rule {
        ClickRule::ObservedRelevant => 1,
        ClickRule::ObservedAny => 2,
        ClickRule::UnobservedRelevant => 3,
        ClickRule::Unobserved => 4,
    };
    match (relevant, observed) {
        (true, true) => 1.0,
        (false, true) if level >= 2 => 1.0 / (pos.min(5) as f64 + 3.0),
        (true, false) if level >= 3 => 0.1,
        (false, false) if level >= 4 => 0.01,
        _ => 0.0,
    }
}

/// Min-max normalization onto [0.5, 1]; a zero-range list maps to 0.75.
pub fn normalize_omega(raw: &[f64]) -> Vec<f64> {
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    raw.iter()
        .map(|&v| if range > 0.0 { 0.5 + 0.5 * (v - min) / range } else { 0.75 })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ObservationModel {
    PositionOnly,
    /// A linear score `theta · features[indices]`, min-max normalized per
    /// query, scales the positional observation probability.
    PositionAndFeature { theta: Vec<f64>, feature_indices: Vec<usize> },
}

impl ObservationModel {
    /// Per-document weights for one query: all ones for `PositionOnly`,
    /// the normalized linear score otherwise.
    pub fn query_weights(&self, group: &QueryGroup) -> Vec<f64> {
        match self {
            ObservationModel::PositionOnly => vec![1.0; group.len()],
            ObservationModel::PositionAndFeature { theta, feature_indices } => {
                let raw: Vec<f64> = group
                    .docs
                    .iter()
                    .map(|d| theta.iter().zip(feature_indices).map(|(t, &j)| t * d.features[j]).sum())
                    .collect();
                if raw.is_empty() {
                    raw
                } else {
                    normalize_omega(&raw)
                }
            }
        }
    }

    /// Observation probability at a 1-based position given the document's
    /// weight (ignored for `PositionOnly`).
    pub fn observe_prob(&self, pos: usize, weight: f64) -> Result<f64> {
        if pos < 1 {
            return Err(Error::InvalidInput("positions are 1-based".into()));
        }
        let w = match self {
            ObservationModel::PositionOnly => 1.0,
            ObservationModel::PositionAndFeature { .. } => weight,
        };
        Ok(if pos <= TOP_POSITIONS { w / pos as f64 } else { 0.1 * w })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickScenario {
    pub id: ScenarioId,
    pub rule: ClickRule,
    pub observation: ObservationModel,
    /// Feature copied into the bias vector (S5 only).
    pub bias_feature: Option<usize>,
}

impl ClickScenario {
    /// Builds a scenario. For S5 the observation weight is a linear function
    /// of the title-length feature whose coefficient is drawn from `seed`.
    pub fn new(id: ScenarioId, title_feature_index: usize, seed: u64) -> Self {
        let (observation, bias_feature) = if id.uses_feature_bias() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x006f_6d65_6761);
            let mut theta: f64 = StandardNormal.sample(&mut rng);
            if theta == 0.0 {
                theta = 1.0;
            }
            (
                ObservationModel::PositionAndFeature {
                    theta: vec![theta],
                    feature_indices: vec![title_feature_index],
                },
                Some(title_feature_index),
            )
        } else {
            (ObservationModel::PositionOnly, None)
        };
        ClickScenario {
            id,
            rule: id.click_rule(),
            observation,
            bias_feature,
        }
    }

    /// Draws `(observed, clicked)` for a document.
    pub fn draw<R: Rng + ?Sized>(&self, pos: usize, weight: f64, relevant: bool, rng: &mut R) -> Result<(bool, bool)> {
        let p_obs = self.observation.observe_prob(pos, weight)?;
        let observed = rng.random::<f64>() < p_obs;
        let clicked = rng.random::<f64>() < click_prob(self.rule, pos, relevant, observed);
        Ok((observed, clicked))
    }

    pub fn bias_dim(&self, position_cap: usize) -> usize {
        position_cap + usize::from(self.bias_feature.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimBudget {
    IterationsPerQuery(usize),
    /// At least this many records; whole iterations over all queries are
    /// run until it is reached.
    TotalRecords(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Extra documents sampled below the top five per iteration.
    pub k: usize,
    pub budget: SimBudget,
    pub seed: u64,
    pub debug_latents: bool,
    pub position_cap: usize,
    pub workers: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            k: 15,
            budget: SimBudget::IterationsPerQuery(1),
            seed: 0,
            debug_latents: false,
            position_cap: DEFAULT_POSITION_CAP,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Latent {
    pub observed: bool,
    pub relevant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickRecord {
    pub query_id: u64,
    pub doc_id: usize,
    pub pos: usize,
    pub click: u8,
    /// Position one-hot, followed by the title-length value in S5.
    pub bias_features: Vec<f64>,
    pub features: Vec<f64>,
    pub latent: Option<Latent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClickLog {
    pub records: Vec<ClickRecord>,
    pub feature_dim: usize,
    pub bias_dim: usize,
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Random stream for one (query, iteration) pair, independent of how queries
/// are scheduled across workers.
pub fn stream_rng(seed: u64, query_id: u64, iteration: u64) -> ChaCha8Rng {
    let s = splitmix64(seed ^ splitmix64(query_id ^ splitmix64(iteration.wrapping_add(0x5eed))));
    ChaCha8Rng::seed_from_u64(s)
}

/// Records produced per iteration for a list of `m` documents.
pub fn records_per_iteration(m: usize, k: usize) -> usize {
    m.min(TOP_POSITIONS) + k.min(m.saturating_sub(TOP_POSITIONS))
}

pub fn simulate(dataset: &Dataset, ranker: &Ranker, scenario: &ClickScenario, config: &SimConfig) -> Result<ClickLog> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput("cannot simulate clicks on an empty dataset".into()));
    }
    if config.position_cap == 0 || config.workers == 0 {
        return Err(Error::Config("position_cap and workers must be positive".into()));
    }
    let per_iteration: usize = dataset.groups.iter().map(|g| records_per_iteration(g.len(), config.k)).sum();
    let iterations = match config.budget {
        SimBudget::IterationsPerQuery(n) => n,
        SimBudget::TotalRecords(n) => n.div_ceil(per_iteration.max(1)),
    };
    let bias_dim = scenario.bias_dim(config.position_cap);

    let mut order: Vec<&QueryGroup> = dataset.groups.iter().filter(|g| !g.is_empty()).collect();
    order.sort_by_key(|g| g.query_id);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let shards: Vec<Result<Vec<ClickRecord>>> = pool.install(|| {
        order
            .par_iter()
            .map(|group| simulate_query(group, ranker, scenario, config, iterations, bias_dim))
            .collect()
    });
    let mut records = Vec::with_capacity(per_iteration * iterations);
    for shard in shards {
        records.extend(shard?);
    }
    Ok(ClickLog {
        records,
        feature_dim: dataset.feature_dim,
        bias_dim,
    })
}

fn simulate_query(
    group: &QueryGroup,
    ranker: &Ranker,
    scenario: &ClickScenario,
    config: &SimConfig,
    iterations: usize,
    bias_dim: usize,
) -> Result<Vec<ClickRecord>> {
    let ranking = ranker.rank(group)?;
    let weights = scenario.observation.query_weights(group);
    let m = group.len();
    let top = m.min(TOP_POSITIONS);
    let tail = m - top;
    let extra = config.k.min(tail);
    let mut out = Vec::with_capacity(iterations * (top + extra));

    for it in 0..iterations {
        let mut rng = stream_rng(config.seed, group.query_id, it as u64);
        let mut shown: Vec<usize> = (0..top).collect();
        let mut sampled: Vec<usize> = index::sample(&mut rng, tail, extra).into_iter().map(|i| i + top).collect();
        sampled.sort_unstable();
        shown.extend(sampled);

        for rank_idx in shown {
            let doc_idx = ranking.order[rank_idx];
            let pos = rank_idx + 1;
            let doc = &group.docs[doc_idx];
            let relevant = doc.is_relevant();
            let (observed, clicked) = scenario.draw(pos, weights[doc_idx], relevant, &mut rng)?;

            let mut bias_features = vec![0.0; bias_dim];
            write_position_encoding(pos, &mut bias_features[..config.position_cap]);
            if let Some(j) = scenario.bias_feature {
                bias_features[config.position_cap] = doc.features[j];
            }
            out.push(ClickRecord {
                query_id: group.query_id,
                doc_id: doc.doc_id,
                pos,
                click: u8::from(clicked),
                bias_features,
                features: doc.features.clone(),
                latent: config.debug_latents.then_some(Latent { observed, relevant }),
            });
        }
    }
    Ok(out)
}

/// Click rate per position over the records present at that position.
/// Positions with no records are absent from the map.
pub fn empirical_position_ctr(log: &ClickLog) -> BTreeMap<usize, f64> {
    let mut counts: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    for r in &log.records {
        let e = counts.entry(r.pos).or_default();
        e.0 += u64::from(r.click);
        e.1 += 1;
    }
    counts
        .into_iter()
        .map(|(pos, (clicks, n))| (pos, clicks as f64 / n as f64))
        .collect()
}

impl ClickLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn click_rate(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.click as f64).sum::<f64>() / self.records.len() as f64
    }

    fn has_latents(&self) -> bool {
        self.records.first().is_some_and(|r| r.latent.is_some())
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["query_id".to_string(), "doc_id".into(), "pos".into(), "click".into()];
        cols.extend((1..=self.bias_dim).map(|i| format!("bias_{i}")));
        cols.extend((1..=self.feature_dim).map(|i| format!("feat_{i}")));
        if self.has_latents() {
            cols.push("o_latent".into());
            cols.push("r_latent".into());
        }
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let latents = self.has_latents();
        let mut out = self.csv_header();
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{},{},{},{}", r.query_id, r.doc_id, r.pos, r.click);
            for v in r.bias_features.iter().chain(&r.features) {
                let _ = write!(out, ",{v}");
            }
            if latents {
                let l = r.latent.unwrap_or(Latent {
                    observed: false,
                    relevant: false,
                });
                let _ = write!(out, ",{},{}", u8::from(l.observed), u8::from(l.relevant));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::InvalidInput("empty click log".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 4 || cols[..4] != ["query_id", "doc_id", "pos", "click"] {
            return Err(Error::InvalidInput(format!("unexpected click log header `{header}`")));
        }
        let bias_dim = cols.iter().filter(|c| c.starts_with("bias_")).count();
        let feature_dim = cols.iter().filter(|c| c.starts_with("feat_")).count();
        let latents = cols.last() == Some(&"r_latent");
        let expected = 4 + bias_dim + feature_dim + if latents { 2 } else { 0 };
        if cols.len() != expected {
            return Err(Error::InvalidInput(format!("unrecognized columns in `{header}`")));
        }

        let mut records = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let err = |tok: &str, msg: &str| Error::Parse {
                line: i + 1,
                token: tok.to_string(),
                message: msg.to_string(),
            };
            if fields.len() != expected {
                return Err(err(line, "wrong number of fields"));
            }
            let int = |s: &str| s.parse::<u64>().map_err(|_| err(s, "expected an integer"));
            let float = |s: &str| s.parse::<f64>().map_err(|_| err(s, "expected a number"));
            let click = int(fields[3])?;
            if click > 1 {
                return Err(err(fields[3], "click must be 0 or 1"));
            }
            let pos = int(fields[2])? as usize;
            if pos < 1 {
                return Err(err(fields[2], "positions are 1-based"));
            }
            let bias_features = fields[4..4 + bias_dim].iter().map(|s| float(s)).collect::<Result<Vec<_>>>()?;
            let features = fields[4 + bias_dim..4 + bias_dim + feature_dim]
                .iter()
                .map(|s| float(s))
                .collect::<Result<Vec<_>>>()?;
            let latent = if latents {
                Some(Latent {
                    observed: int(fields[expected - 2])? == 1,
                    relevant: int(fields[expected - 1])? == 1,
                })
            } else {
                None
            };
            records.push(ClickRecord {
                query_id: int(fields[0])?,
                doc_id: int(fields[1])? as usize,
                pos,
                click: click as u8,
                bias_features,
                features,
                latent,
            });
        }
        Ok(ClickLog {
            records,
            feature_dim,
            bias_dim,
        })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}
