//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are rejected so
//! that typos do not silently fall back to defaults. A run manifest is itself
//! a valid config: its bookkeeping keys (`status`, `version`,
//! `failed_stage`) are accepted and ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::SynthConfig;
use crate::error::{Error, Result};
use crate::models::ModelKind;
use crate::sim::ScenarioId;

const MANIFEST_KEYS: [&str; 3] = ["status", "version", "failed_stage"];

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SynthConfig),
    /// A LETOR file; the last `test_queries` groups become the test split.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub feature_dim: usize,
    /// Required by S5; optional for file datasets.
    pub title_feature_index: Option<usize>,
    pub test_queries: usize,
    pub seed: u64,
    pub scenarios: Vec<ScenarioId>,
    pub k: usize,
    /// Minimum number of click records to simulate per scenario.
    pub click_budget: usize,
    pub debug_latents: bool,
    /// Write each scenario's click log during `run` (hundreds of MB at the
    /// default budget).
    pub save_logs: bool,
    pub workers: usize,
    pub position_cap: usize,
    pub ranker_fraction: f64,
    pub ranker_steps: usize,
    pub ranker_hidden: usize,
    pub models: Vec<ModelKind>,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub alpha: f64,
    pub eval_every: usize,
    pub out: PathBuf,
}

impl ExperimentConfig {
    /// Defaults for everything except `feature_dim`, which every config
    /// must state.
    pub fn with_feature_dim(feature_dim: usize) -> Self {
        let synth = SynthConfig {
            feature_dim,
            title_feature_index: feature_dim.saturating_sub(1),
            ..SynthConfig::default()
        };
        ExperimentConfig {
            title_feature_index: Some(synth.title_feature_index),
            source: DataSource::Synthetic(synth),
            feature_dim,
            test_queries: 100,
            seed: 1,
            scenarios: ScenarioId::ALL.to_vec(),
            k: 15,
            click_budget: 500_000,
            debug_latents: false,
            save_logs: false,
            workers: 1,
            position_cap: crate::encoding::DEFAULT_POSITION_CAP,
            ranker_fraction: 0.01,
            ranker_steps: 300,
            ranker_hidden: 32,
            models: vec![ModelKind::Iin, ModelKind::Pal, ModelKind::Mmoe, ModelKind::Skyline],
            steps: 3_000,
            batch_size: 256,
            learning_rate: 1e-3,
            alpha: 100.0,
            eval_every: 1000,
            out: PathBuf::from("out"),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", i + 1)))?;
            let key = key.trim().to_string();
            if kv.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", i + 1)));
            }
        }
        Self::from_map(kv)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn from_map(mut kv: BTreeMap<String, String>) -> Result<Self> {
        let feature_dim: usize = parse_value("feature_dim", &kv.remove("feature_dim").ok_or_else(|| {
            Error::Config("missing required key `feature_dim`".into())
        })?)?;
        let mut cfg = Self::with_feature_dim(feature_dim);
        let mut synth = match &cfg.source {
            DataSource::Synthetic(s) => s.clone(),
            DataSource::File(_) => unreachable!("defaults are synthetic"),
        };
        let dataset = kv.remove("dataset");
        let title = kv.remove("title_feature_index");

        let mut take = |key: &str| kv.remove(key);
        macro_rules! set {
            ($key:literal, $slot:expr) => {
                if let Some(v) = take($key) {
                    $slot = parse_value($key, &v)?;
                }
            };
        }
        set!("queries", synth.queries);
        set!("docs_per_query", synth.docs_per_query);
        set!("noise", synth.noise);
        set!("relevant_fraction", synth.relevant_fraction);
        set!("test_queries", cfg.test_queries);
        set!("seed", cfg.seed);
        set!("k", cfg.k);
        set!("click_budget", cfg.click_budget);
        set!("debug_latents", cfg.debug_latents);
        set!("save_logs", cfg.save_logs);
        set!("workers", cfg.workers);
        set!("position_cap", cfg.position_cap);
        set!("ranker_fraction", cfg.ranker_fraction);
        set!("ranker_steps", cfg.ranker_steps);
        set!("ranker_hidden", cfg.ranker_hidden);
        set!("steps", cfg.steps);
        set!("batch_size", cfg.batch_size);
        set!("lr", cfg.learning_rate);
        set!("alpha", cfg.alpha);
        set!("eval_every", cfg.eval_every);
        if let Some(v) = take("scenario") {
            cfg.scenarios = parse_scenarios(&v)?;
        }
        match (take("models"), take("model")) {
            (Some(_), Some(_)) => return Err(Error::Config("give either `model` or `models`, not both".into())),
            (Some(v), None) | (None, Some(v)) => cfg.models = parse_models(&v)?,
            (None, None) => {}
        }
        if let Some(v) = take("out") {
            cfg.out = PathBuf::from(v);
        }
        for key in MANIFEST_KEYS {
            take(key);
        }
        if let Some(key) = kv.keys().next() {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }

        cfg.title_feature_index = match title {
            Some(v) => Some(parse_value("title_feature_index", &v)?),
            None => None,
        };
        cfg.source = match dataset {
            Some(path) => DataSource::File(PathBuf::from(path)),
            None => {
                synth.feature_dim = feature_dim;
                synth.title_feature_index = cfg.title_feature_index.unwrap_or(feature_dim.saturating_sub(1));
                cfg.title_feature_index = Some(synth.title_feature_index);
                DataSource::Synthetic(synth)
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if let DataSource::Synthetic(s) = &self.source {
            s.validate()?;
        }
        if let Some(t) = self.title_feature_index {
            if t >= self.feature_dim {
                return Err(Error::Config(format!(
                    "title_feature_index {t} out of range for feature_dim {}",
                    self.feature_dim
                )));
            }
        }
        if self.scenarios.is_empty() {
            return Err(Error::Config("no scenario given".into()));
        }
        if self.scenarios.iter().any(|s| s.uses_feature_bias()) && self.title_feature_index.is_none() {
            return Err(Error::Config(
                "scenario s5 needs `title_feature_index` for this dataset".into(),
            ));
        }
        if self.models.is_empty() {
            return Err(Error::Config("no model given".into()));
        }
        if self.test_queries == 0 {
            return Err(Error::Config("test_queries must be positive".into()));
        }
        if self.batch_size == 0 || self.eval_every == 0 || self.workers == 0 || self.position_cap == 0 {
            return Err(Error::Config(
                "batch_size, eval_every, workers and position_cap must be positive".into(),
            ));
        }
        if !(self.ranker_fraction > 0.0 && self.ranker_fraction <= 1.0) {
            return Err(Error::Config("ranker_fraction must lie in (0, 1]".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("lr must be a positive number".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config("alpha must be a non-negative number".into()));
        }
        Ok(())
    }

    /// Serializes back to `key = value` lines that [`ExperimentConfig::parse`]
    /// reads to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("feature_dim", self.feature_dim.to_string());
        match &self.source {
            DataSource::Synthetic(c) => {
                put("queries", c.queries.to_string());
                put("docs_per_query", c.docs_per_query.to_string());
                put("noise", c.noise.to_string());
                put("relevant_fraction", c.relevant_fraction.to_string());
            }
            DataSource::File(p) => put("dataset", p.display().to_string()),
        }
        if let Some(t) = self.title_feature_index {
            put("title_feature_index", t.to_string());
        }
        put("test_queries", self.test_queries.to_string());
        put("seed", self.seed.to_string());
        put(
            "scenario",
            self.scenarios.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(","),
        );
        put("k", self.k.to_string());
        put("click_budget", self.click_budget.to_string());
        put("debug_latents", self.debug_latents.to_string());
        put("save_logs", self.save_logs.to_string());
        put("workers", self.workers.to_string());
        put("position_cap", self.position_cap.to_string());
        put("ranker_fraction", self.ranker_fraction.to_string());
        put("ranker_steps", self.ranker_steps.to_string());
        put("ranker_hidden", self.ranker_hidden.to_string());
        put(
            "models",
            self.models.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(","),
        );
        put("steps", self.steps.to_string());
        put("batch_size", self.batch_size.to_string());
        put("lr", self.learning_rate.to_string());
        put("alpha", self.alpha.to_string());
        put("eval_every", self.eval_every.to_string());
        put("out", self.out.display().to_string());
        s
    }

    pub fn synth_config(&self) -> Option<&SynthConfig> {
        match &self.source {
            DataSource::Synthetic(s) => Some(s),
            DataSource::File(_) => None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

pub fn parse_scenarios(value: &str) -> Result<Vec<ScenarioId>> {
    if value.trim().eq_ignore_ascii_case("all") {
        return Ok(ScenarioId::ALL.to_vec());
    }
    value
        .split(',')
        .map(|s| parse_value::<ScenarioId>("scenario", s.trim()))
        .collect()
}

pub fn parse_models(value: &str) -> Result<Vec<ModelKind>> {
    if value.trim().eq_ignore_ascii_case("all") {
        return Ok(ModelKind::ALL.to_vec());
    }
    value
        .split(',')
        .map(|s| parse_value::<ModelKind>("model", s.trim()))
        .collect()
}
