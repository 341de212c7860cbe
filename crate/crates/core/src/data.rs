//! Learning-to-rank data: LETOR text parsing, relevance binarization and a
//! seeded synthetic generator producing data of the same shape.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest relevance grade in LETOR data.
pub const MAX_GRADE: u8 = 4;

/// One query-document pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryDocPair {
    pub query_id: u64,
    /// Index of the document within its query's list.
    pub doc_id: usize,
    pub features: Vec<f64>,
    pub grade: u8,
}

impl QueryDocPair {
    pub fn is_relevant(&self) -> bool {
        binarize_relevance(self.grade)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryGroup {
    pub query_id: u64,
    pub docs: Vec<QueryDocPair>,
}

impl QueryGroup {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub groups: Vec<QueryGroup>,
    pub feature_dim: usize,
    /// Feature playing the role of title length (the extra bias feature).
    pub title_feature_index: usize,
}

impl Dataset {
    pub fn new(groups: Vec<QueryGroup>, feature_dim: usize, title_feature_index: usize) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if title_feature_index >= feature_dim {
            return Err(Error::Config(format!(
                "title_feature_index {title_feature_index} out of range for feature_dim {feature_dim}"
            )));
        }
        for group in &groups {
            for doc in &group.docs {
                if doc.query_id != group.query_id {
                    return Err(Error::InvalidInput(format!(
                        "document with qid {} inside group {}",
                        doc.query_id, group.query_id
                    )));
                }
                if doc.features.len() != feature_dim {
                    return Err(Error::Shape(format!(
                        "document {} of query {} has {} features, expected {feature_dim}",
                        doc.doc_id,
                        doc.query_id,
                        doc.features.len()
                    )));
                }
                if doc.grade > MAX_GRADE {
                    return Err(Error::InvalidInput(format!("grade {} out of range", doc.grade)));
                }
            }
        }
        Ok(Dataset {
            groups,
            feature_dim,
            title_feature_index,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn num_docs(&self) -> usize {
        self.groups.iter().map(QueryGroup::len).sum()
    }

    pub fn docs(&self) -> impl Iterator<Item = &QueryDocPair> {
        self.groups.iter().flat_map(|g| g.docs.iter())
    }

    /// Looks up a document by query id and position in the query's list.
    pub fn doc(&self, query_id: u64, doc_id: usize) -> Option<&QueryDocPair> {
        self.groups
            .iter()
            .find(|g| g.query_id == query_id)
            .and_then(|g| g.docs.get(doc_id))
    }

    /// Splits off the last `n` groups into a second dataset.
    pub fn split_tail(mut self, n: usize) -> Result<(Dataset, Dataset)> {
        if n == 0 || n >= self.groups.len() {
            return Err(Error::Config(format!(
                "cannot split {} test queries off {} groups",
                n,
                self.groups.len()
            )));
        }
        let tail = self.groups.split_off(self.groups.len() - n);
        let head = Dataset {
            groups: self.groups,
            feature_dim: self.feature_dim,
            title_feature_index: self.title_feature_index,
        };
        let tail = Dataset {
            groups: tail,
            feature_dim: self.feature_dim,
            title_feature_index: self.title_feature_index,
        };
        Ok((head, tail))
    }

    /// Writes the dataset as LETOR text, one pair per line.
    pub fn to_letor(&self) -> String {
        let mut out = String::new();
        for doc in self.docs() {
            out.push_str(&format_letor_line(doc));
            out.push('\n');
        }
        out
    }

    pub fn write_letor(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_letor()).map_err(|e| Error::io(path, e))
    }
}

/// A document is relevant iff its grade is greater than two.
pub fn binarize_relevance(grade: u8) -> bool {
    grade > 2
}

/// Parses one LETOR line: `<grade> qid:<qid> <fid>:<value> ... [# comment]`.
///
/// Feature ids are 1-based; absent ids are zero-filled up to `feature_dim`.
/// The returned pair has `doc_id` 0; loaders assign positional ids.
pub fn parse_letor_line(line: &str, feature_dim: usize) -> Result<QueryDocPair> {
    parse_line_numbered(line, feature_dim, 1)
}

fn parse_line_numbered(line: &str, feature_dim: usize, line_no: usize) -> Result<QueryDocPair> {
    let err = |token: &str, message: &str| Error::Parse {
        line: line_no,
        token: token.to_string(),
        message: message.to_string(),
    };
    let body = line.split('#').next().unwrap_or("");
    let mut tokens = body.split_whitespace();

    let grade_tok = tokens.next().ok_or_else(|| err("", "missing grade"))?;
    let grade: i64 = grade_tok
        .parse()
        .map_err(|_| err(grade_tok, "grade is not an integer"))?;
    if !(0..=MAX_GRADE as i64).contains(&grade) {
        return Err(err(grade_tok, "grade outside [0, 4]"));
    }

    let qid_tok = tokens.next().ok_or_else(|| err("", "missing qid"))?;
    let query_id: u64 = qid_tok
        .strip_prefix("qid:")
        .ok_or_else(|| err(qid_tok, "expected qid:<id>"))?
        .parse()
        .map_err(|_| err(qid_tok, "qid is not an integer"))?;

    let mut features = vec![0.0; feature_dim];
    for tok in tokens {
        let (fid, value) = tok
            .split_once(':')
            .ok_or_else(|| err(tok, "expected <fid>:<value>"))?;
        let fid: usize = fid.parse().map_err(|_| err(tok, "feature id is not an integer"))?;
        if fid == 0 || fid > feature_dim {
            return Err(err(tok, "feature id outside [1, D]"));
        }
        let value: f64 = value.parse().map_err(|_| err(tok, "feature value is not a number"))?;
        if !value.is_finite() {
            return Err(err(tok, "feature value is not finite"));
        }
        features[fid - 1] = value;
    }

    Ok(QueryDocPair {
        query_id,
        doc_id: 0,
        features,
        grade: grade as u8,
    })
}

/// Formats a pair as a LETOR line. Values use the shortest representation
/// that parses back to the same `f64`.
pub fn format_letor_line(pair: &QueryDocPair) -> String {
    let mut line = format!("{} qid:{}", pair.grade, pair.query_id);
    for (i, v) in pair.features.iter().enumerate() {
        let _ = write!(line, " {}:{}", i + 1, v);
    }
    line
}

/// Parses LETOR text into a dataset. Groups appear in order of each qid's
/// first occurrence; doc ids follow file order within the query.
pub fn parse_dataset(text: &str, feature_dim: usize, title_feature_index: usize) -> Result<Dataset> {
    let mut groups: Vec<QueryGroup> = Vec::new();
    let mut index: HashMap<u64, usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.split('#').next().unwrap_or("").trim().is_empty() {
            continue;
        }
        let mut pair = parse_line_numbered(line, feature_dim, i + 1)?;
        let slot = *index.entry(pair.query_id).or_insert_with(|| {
            groups.push(QueryGroup {
                query_id: pair.query_id,
                docs: Vec::new(),
            });
            groups.len() - 1
        });
        pair.doc_id = groups[slot].docs.len();
        groups[slot].docs.push(pair);
    }
    Dataset::new(groups, feature_dim, title_feature_index)
}

pub fn load_dataset(path: impl AsRef<Path>, feature_dim: usize, title_feature_index: usize) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, feature_dim, title_feature_index)
}

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub queries: usize,
    pub docs_per_query: usize,
    pub feature_dim: usize,
    /// Standard deviation of the Gaussian noise added to the latent score.
    pub noise: f64,
    /// Fraction of documents whose grade binarizes to relevant.
    pub relevant_fraction: f64,
    pub title_feature_index: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            queries: 200,
            docs_per_query: 30,
            feature_dim: 16,
            noise: 1.0,
            relevant_fraction: 0.2,
            title_feature_index: 15,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.queries == 0 || self.docs_per_query == 0 || self.feature_dim == 0 {
            return Err(Error::Config(
                "queries, docs_per_query and feature_dim must be positive".into(),
            ));
        }
        if !(self.relevant_fraction > 0.0 && self.relevant_fraction < 1.0) {
            return Err(Error::Config("relevant_fraction must lie in (0, 1)".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("noise must be a non-negative number".into()));
        }
        if self.title_feature_index >= self.feature_dim {
            return Err(Error::Config(format!(
                "title_feature_index {} out of range for feature_dim {}",
                self.title_feature_index, self.feature_dim
            )));
        }
        Ok(())
    }
}

// Share of the non-relevant mass given to grades 0, 1, 2 and of the relevant
// mass given to grades 3, 4. Roughly follows the MSLR grade histogram.
const IRRELEVANT_SPLIT: [f64; 3] = [0.55, 0.30, 0.15];
const RELEVANT_SPLIT: [f64; 2] = [0.65, 0.35];

/// Generates a synthetic dataset.
///
/// Features are standard normal. A hidden unit-norm weight vector (zero on
/// the title feature) plus Gaussian noise defines a latent score, and grades
/// are assigned by global quantiles of that score.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = config.feature_dim;

    let mut weights: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    weights[config.title_feature_index] = 0.0;
    let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        weights.iter_mut().for_each(|w| *w /= norm);
    }

    let mut groups = Vec::with_capacity(config.queries);
    let mut latent = Vec::with_capacity(config.queries * config.docs_per_query);
    for q in 0..config.queries {
        let query_id = q as u64 + 1;
        let mut docs = Vec::with_capacity(config.docs_per_query);
        for doc_id in 0..config.docs_per_query {
            let features: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let eps: f64 = StandardNormal.sample(&mut rng);
            let score = features.iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>() + config.noise * eps;
            latent.push(score);
            docs.push(QueryDocPair {
                query_id,
                doc_id,
                features,
                grade: 0,
            });
        }
        groups.push(QueryGroup { query_id, docs });
    }

    let grades = quantile_grades(&latent, config.relevant_fraction);
    for (doc, grade) in groups.iter_mut().flat_map(|g| g.docs.iter_mut()).zip(grades) {
        doc.grade = grade;
    }
    Dataset::new(groups, dim, config.title_feature_index)
}

/// Assigns grades 0..=4 by rank of the latent score so that `relevant_fraction`
/// of the items (rounded) end up with grade 3 or 4.
fn quantile_grades(latent: &[f64], relevant_fraction: f64) -> Vec<u8> {
    let n = latent.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| latent[a].total_cmp(&latent[b]).then(a.cmp(&b)));

    let n_irrelevant = n - ((relevant_fraction * n as f64).round() as usize).min(n);
    let mut bounds = Vec::with_capacity(5);
    let mut acc = 0.0;
    for share in IRRELEVANT_SPLIT {
        acc += share;
        bounds.push((acc * n_irrelevant as f64).round() as usize);
    }
    let n_relevant = n - n_irrelevant;
    bounds[2] = n_irrelevant;
    bounds.push(n_irrelevant + (RELEVANT_SPLIT[0] * n_relevant as f64).round() as usize);
    bounds.push(n);

    let mut grades = vec![0u8; n];
    let mut grade = 0u8;
    for (rank, &idx) in order.iter().enumerate() {
        while rank >= bounds[grade as usize] {
            grade += 1;
        }
        grades[idx] = grade;
    }
    grades
}

/// Per-feature min-max scaling to [0, 1], fitted on one dataset and applied
/// unchanged to others. Zero-range features map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(dataset: &Dataset) -> Self {
        let dim = dataset.feature_dim;
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for doc in dataset.docs() {
            for (j, &v) in doc.features.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        for j in 0..dim {
            if !min[j].is_finite() {
                min[j] = 0.0;
                max[j] = 0.0;
            }
        }
        FeatureScaler { min, max }
    }

    pub fn transform(&self, features: &mut [f64]) {
        for (j, v) in features.iter_mut().enumerate() {
            let range = self.max[j] - self.min[j];
            *v = if range > 0.0 { (*v - self.min[j]) / range } else { 0.0 };
        }
    }

    pub fn apply(&self, dataset: &mut Dataset) {
        for group in &mut dataset.groups {
            for doc in &mut group.docs {
                self.transform(&mut doc.features);
            }
        }
    }
}

/// Picks `ceil(fraction * groups)` group indices with a seeded shuffle,
/// returned in ascending order.
pub(crate) fn sample_groups(n_groups: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction {fraction} outside (0, 1]")));
    }
    // Guard the ceiling against representation error (0.01 * 300 = 3.0000000000000004).
    let want = (fraction * n_groups as f64 - 1e-9).ceil().max(0.0) as usize;
    let want = want.min(n_groups);
    if want == 0 {
        return Err(Error::Config("no query groups selected".into()));
    }
    let mut idx: Vec<usize> = (0..n_groups).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx.truncate(want);
    idx.sort_unstable();
    Ok(idx)
}
