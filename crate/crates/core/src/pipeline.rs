//! Pipeline stages behind the command-line subcommands. Each stage reads its
//! inputs from, and writes its outputs to, the run directory:
//!
//! ```text
//! data/train.txt data/test.txt   gen-data      (LETOR)
//! ranker.json                    train-ranker
//! clicks_<scenario>.csv          simulate
//! models/<scenario>_<model>.json train
//! curves/<scenario>_<model>.csv  train         (step,auc)
//! bias_surface_<scenario>.csv    train         (IIN only)
//! summary.csv                    evaluate      (method,s1,...)
//! manifest.txt                   run
//! curves.csv                     report
//! ```
//!
//! `run` executes every stage but hands click logs to training in memory;
//! they are only written when the config sets `save_logs`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{DataSource, ExperimentConfig};
use crate::data::{generate_synthetic, load_dataset, Dataset, FeatureScaler};
use crate::error::{Error, Result};
use crate::eval::{train_and_eval, EvalPoint, Schedule, TestSet, TrainOutcome, TrainingSet};
use crate::models::{bias_surface, AnyModel, BiasSurfaceEntry, ClickModel, ModelKind};
use crate::nn::Algorithm;
use crate::ranker::{train_production_ranker, Ranker, RankerTrainConfig};
use crate::sim::{simulate, splitmix64, ClickLog, ClickScenario, ScenarioId, SimBudget, SimConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Derives an independent stage seed from the master seed and a label.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    label
        .bytes()
        .fold(splitmix64(master), |h, b| splitmix64(h ^ u64::from(b)))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn title_index(cfg: &ExperimentConfig) -> usize {
    cfg.title_feature_index.unwrap_or(0)
}

pub fn train_path(out: &Path) -> PathBuf {
    out.join("data").join("train.txt")
}

pub fn test_path(out: &Path) -> PathBuf {
    out.join("data").join("test.txt")
}

pub fn ranker_path(out: &Path) -> PathBuf {
    out.join("ranker.json")
}

pub fn clicks_path(out: &Path, scenario: ScenarioId) -> PathBuf {
    out.join(format!("clicks_{scenario}.csv"))
}

pub fn model_path(out: &Path, scenario: ScenarioId, kind: ModelKind) -> PathBuf {
    out.join("models").join(format!("{scenario}_{kind}.json"))
}

pub fn curve_path(out: &Path, scenario: ScenarioId, kind: ModelKind) -> PathBuf {
    out.join("curves").join(format!("{scenario}_{kind}.csv"))
}

pub fn bias_surface_path(out: &Path, scenario: ScenarioId) -> PathBuf {
    out.join(format!("bias_surface_{scenario}.csv"))
}

pub fn summary_path(out: &Path) -> PathBuf {
    out.join("summary.csv")
}

pub fn manifest_path(out: &Path) -> PathBuf {
    out.join("manifest.txt")
}

/// Builds the train/test split from the configured source.
pub fn build_datasets(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let full = match &cfg.source {
        DataSource::Synthetic(s) => {
            let mut s = s.clone();
            s.queries += cfg.test_queries;
            generate_synthetic(&s, derive_seed(cfg.seed, "data"))?
        }
        DataSource::File(path) => load_dataset(path, cfg.feature_dim, title_index(cfg))?,
    };
    full.split_tail(cfg.test_queries)
}

/// Writes `data/train.txt` and `data/test.txt`.
pub fn cmd_gen_data(cfg: &ExperimentConfig) -> Result<()> {
    let (train, test) = build_datasets(cfg)?;
    write_file(&train_path(&cfg.out), &train.to_letor())?;
    write_file(&test_path(&cfg.out), &test.to_letor())
}

/// Loads both splits and min-max scales them with bounds fitted on train.
pub fn load_scaled(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let mut train = load_dataset(train_path(&cfg.out), cfg.feature_dim, title_index(cfg))?;
    let mut test = load_dataset(test_path(&cfg.out), cfg.feature_dim, title_index(cfg))?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} has an empty split; run gen-data first",
            cfg.out.join("data").display()
        )));
    }
    let scaler = FeatureScaler::fit(&train);
    scaler.apply(&mut train);
    scaler.apply(&mut test);
    Ok((train, test))
}

pub fn fit_ranker(cfg: &ExperimentConfig, train: &Dataset) -> Result<Ranker> {
    let rc = RankerTrainConfig {
        hidden: cfg.ranker_hidden,
        steps: cfg.ranker_steps,
        ..RankerTrainConfig::default()
    };
    train_production_ranker(train, cfg.ranker_fraction, &rc, derive_seed(cfg.seed, "ranker"))
}

pub fn cmd_train_ranker(cfg: &ExperimentConfig) -> Result<()> {
    let (train, _) = load_scaled(cfg)?;
    let ranker = fit_ranker(cfg, &train)?;
    write_file(&ranker_path(&cfg.out), &ranker.to_json())
}

fn load_ranker(cfg: &ExperimentConfig) -> Result<Ranker> {
    Ranker::from_json(&read_file(&ranker_path(&cfg.out))?)
}

pub fn scenario_for(cfg: &ExperimentConfig, id: ScenarioId) -> ClickScenario {
    ClickScenario::new(id, title_index(cfg), derive_seed(cfg.seed, &format!("sim:{id}")))
}

pub fn simulate_scenario(cfg: &ExperimentConfig, train: &Dataset, ranker: &Ranker, id: ScenarioId) -> Result<ClickLog> {
    let sim = SimConfig {
        k: cfg.k,
        budget: SimBudget::TotalRecords(cfg.click_budget),
        seed: derive_seed(cfg.seed, &format!("sim:{id}")),
        debug_latents: cfg.debug_latents,
        position_cap: cfg.position_cap,
        workers: cfg.workers,
    };
    simulate(train, ranker, &scenario_for(cfg, id), &sim)
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<()> {
    let (train, _) = load_scaled(cfg)?;
    let ranker = load_ranker(cfg)?;
    for &id in &cfg.scenarios {
        let log = simulate_scenario(cfg, &train, &ranker, id)?;
        log.write_csv(clicks_path(&cfg.out, id))?;
    }
    Ok(())
}

pub fn schedule_for(cfg: &ExperimentConfig, id: ScenarioId) -> Schedule {
    Schedule {
        steps: cfg.steps,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        algorithm: Algorithm::Adam,
        eval_every: cfg.eval_every,
        seed: derive_seed(cfg.seed, &format!("train:{id}")),
    }
}

/// Results of training every configured model on one scenario's log.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub scenario: ScenarioId,
    pub click_rate: f64,
    pub records: usize,
    pub models: Vec<(ModelKind, TrainOutcome)>,
    pub bias_surface: Vec<BiasSurfaceEntry>,
}

/// Evenly spaced quantiles of the extra bias columns, used as the bias grid
/// of the reported transition surface.
fn bias_samples(train: &TrainingSet) -> Vec<Vec<f64>> {
    let extra = train.bias_dim() - train.position_cap;
    if extra == 0 {
        return Vec::new();
    }
    let n = train.len();
    [0.1, 0.5, 0.9]
        .iter()
        .map(|q| {
            (0..extra)
                .map(|j| {
                    let mut col: Vec<f64> = train.bias.column(train.position_cap + j).to_vec();
                    col.sort_by(f64::total_cmp);
                    col[((n - 1) as f64 * q).round() as usize]
                })
                .collect()
        })
        .collect()
}

pub fn train_scenario(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &TestSet,
    log: &ClickLog,
    id: ScenarioId,
) -> Result<ScenarioOutcome> {
    let set = TrainingSet::from_log(log, train, cfg.position_cap)?;
    let mut model_config = set.model_config();
    model_config.alpha = cfg.alpha;
    let schedule = schedule_for(cfg, id);
    let mut models = Vec::with_capacity(cfg.models.len());
    let mut surface = Vec::new();
    for &kind in &cfg.models {
        let outcome = train_and_eval(kind, &model_config, &set, test, &schedule)?;
        if let Some(iin) = outcome.model.as_iin() {
            let positions: Vec<usize> = (1..=cfg.position_cap).collect();
            surface = bias_surface(iin, &positions, &bias_samples(&set))?;
        }
        models.push((kind, outcome));
    }
    Ok(ScenarioOutcome {
        scenario: id,
        click_rate: log.click_rate(),
        records: log.len(),
        models,
        bias_surface: surface,
    })
}

pub fn curve_csv(curve: &[EvalPoint]) -> String {
    let mut s = String::from("step,auc\n");
    for p in curve {
        let _ = writeln!(s, "{},{}", p.step, p.auc);
    }
    s
}

pub fn parse_curve_csv(text: &str) -> Result<Vec<EvalPoint>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("step,auc") {
        return Err(Error::InvalidInput("curve CSV must start with `step,auc`".into()));
    }
    let mut out: Vec<EvalPoint> = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || Error::Parse {
            line: i + 2,
            token: line.to_string(),
            message: "expected `step,auc`".into(),
        };
        let (step, auc) = line.split_once(',').ok_or_else(bad)?;
        let point = EvalPoint {
            step: step.trim().parse().map_err(|_| bad())?,
            auc: auc.trim().parse().map_err(|_| bad())?,
        };
        if out.last().is_some_and(|p| p.step >= point.step) || !(0.0..=1.0).contains(&point.auc) {
            return Err(bad());
        }
        out.push(point);
    }
    if out.is_empty() {
        return Err(Error::InvalidInput("curve CSV has no points".into()));
    }
    Ok(out)
}

pub fn bias_surface_csv(entries: &[BiasSurfaceEntry]) -> String {
    let mut s = String::from("pos,bias,click_if_relevant,click_if_irrelevant\n");
    for e in entries {
        let bias: Vec<String> = e.bias.iter().map(f64::to_string).collect();
        let _ = writeln!(
            s,
            "{},{},{},{}",
            e.pos,
            bias.join(";"),
            e.click_if_relevant,
            e.click_if_irrelevant
        );
    }
    s
}

/// `(pos, mean P(y=1|r=1), mean P(y=1|r=0))` averaged over the bias grid.
pub fn average_surface(entries: &[BiasSurfaceEntry]) -> Vec<(usize, f64, f64)> {
    let mut acc: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
    for e in entries {
        let a = acc.entry(e.pos).or_default();
        a.0 += e.click_if_relevant;
        a.1 += e.click_if_irrelevant;
        a.2 += 1;
    }
    acc.into_iter()
        .map(|(pos, (r, i, n))| (pos, r / n as f64, i / n as f64))
        .collect()
}

fn write_outcome(cfg: &ExperimentConfig, outcome: &ScenarioOutcome) -> Result<()> {
    for (kind, result) in &outcome.models {
        write_file(&model_path(&cfg.out, outcome.scenario, *kind), &result.model.to_json())?;
        write_file(&curve_path(&cfg.out, outcome.scenario, *kind), &curve_csv(&result.curve))?;
    }
    if !outcome.bias_surface.is_empty() {
        write_file(
            &bias_surface_path(&cfg.out, outcome.scenario),
            &bias_surface_csv(&outcome.bias_surface),
        )?;
    }
    Ok(())
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<()> {
    let (train, test) = load_scaled(cfg)?;
    let test = TestSet::from_dataset(&test)?;
    for &id in &cfg.scenarios {
        let log = ClickLog::read_csv(clicks_path(&cfg.out, id))?;
        let outcome = train_scenario(cfg, &train, &test, &log, id)?;
        write_outcome(cfg, &outcome)?;
    }
    Ok(())
}

/// Final AUC per (model, scenario).
pub type Summary = BTreeMap<(ModelKind, ScenarioId), f64>;

/// Table with methods as rows and scenarios as columns.
pub fn summary_csv(summary: &Summary) -> String {
    let mut models: Vec<ModelKind> = summary.keys().map(|k| k.0).collect();
    let mut scenarios: Vec<ScenarioId> = summary.keys().map(|k| k.1).collect();
    models.dedup();
    scenarios.sort();
    scenarios.dedup();
    let mut s = String::from("method");
    for sc in &scenarios {
        let _ = write!(s, ",{sc}");
    }
    s.push('\n');
    for m in models {
        s.push_str(m.as_str());
        for sc in &scenarios {
            match summary.get(&(m, *sc)) {
                Some(v) => {
                    let _ = write!(s, ",{v:.6}");
                }
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

pub fn parse_summary_csv(text: &str) -> Result<Summary> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::InvalidInput("empty summary".into()))?;
    let mut cols = header.split(',');
    if cols.next() != Some("method") {
        return Err(Error::InvalidInput("summary must start with a `method` column".into()));
    }
    let scenarios: Vec<ScenarioId> = cols
        .map(|c| c.parse().map_err(|_| Error::InvalidInput(format!("bad scenario column `{c}`"))))
        .collect::<Result<_>>()?;
    let mut out = Summary::new();
    for line in lines {
        let mut cells = line.split(',');
        let name = cells.next().unwrap_or_default();
        let kind: ModelKind = name
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad method `{name}`")))?;
        for (sc, cell) in scenarios.iter().zip(cells) {
            if !cell.is_empty() {
                let v = cell
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad AUC `{cell}`")))?;
                out.insert((kind, *sc), v);
            }
        }
    }
    Ok(out)
}

/// Scores every saved model on the test split and writes `summary.csv`.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<Summary> {
    let (_, test) = load_scaled(cfg)?;
    let test = TestSet::from_dataset(&test)?;
    let mut summary = Summary::new();
    for &id in &cfg.scenarios {
        for &kind in &cfg.models {
            let model = AnyModel::from_json(&read_file(&model_path(&cfg.out, id, kind))?)?;
            if model.kind() != kind {
                return Err(Error::InvalidInput(format!(
                    "{} holds a {} model",
                    model_path(&cfg.out, id, kind).display(),
                    model.kind()
                )));
            }
            summary.insert((kind, id), test.evaluate(&model)?);
        }
    }
    write_file(&summary_path(&cfg.out), &summary_csv(&summary))?;
    Ok(summary)
}

fn write_manifest(cfg: &ExperimentConfig, status: &str, failed: Option<&str>) -> Result<()> {
    let mut text = format!("# iinlab run manifest; re-run with `iinlab run --config` on this file\nversion = {VERSION}\nstatus = {status}\n");
    if let Some(stage) = failed {
        let _ = writeln!(text, "failed_stage = {stage}");
    }
    text.push_str(&cfg.to_text());
    write_file(&manifest_path(&cfg.out), &text)
}

/// Runs every stage and returns the summary. The manifest is written first
/// with `status = incomplete` and rewritten as complete at the end.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Summary> {
    cfg.validate()?;
    write_manifest(cfg, "incomplete", None)?;
    let result = run_stages(cfg);
    match &result {
        Ok(_) => write_manifest(cfg, "complete", None)?,
        Err(Error::Stage { stage, .. }) => write_manifest(cfg, "incomplete", Some(stage))?,
        Err(_) => {}
    }
    result
}

fn run_stages(cfg: &ExperimentConfig) -> Result<Summary> {
    cmd_gen_data(cfg).map_err(|e| Error::stage("gen-data", e))?;
    let (train, test) = load_scaled(cfg).map_err(|e| Error::stage("gen-data", e))?;
    let ranker = fit_ranker(cfg, &train).map_err(|e| Error::stage("train-ranker", e))?;
    write_file(&ranker_path(&cfg.out), &ranker.to_json()).map_err(|e| Error::stage("train-ranker", e))?;
    let test = TestSet::from_dataset(&test).map_err(|e| Error::stage("evaluate", e))?;
    for &id in &cfg.scenarios {
        let log = simulate_scenario(cfg, &train, &ranker, id).map_err(|e| Error::stage("simulate", e))?;
        if cfg.save_logs {
            log.write_csv(clicks_path(&cfg.out, id)).map_err(|e| Error::stage("simulate", e))?;
        }
        let outcome = train_scenario(cfg, &train, &test, &log, id).map_err(|e| Error::stage("train", e))?;
        write_outcome(cfg, &outcome).map_err(|e| Error::stage("train", e))?;
    }
    cmd_evaluate(cfg).map_err(|e| Error::stage("evaluate", e))
}

/// Merges all curve CSVs of a run directory into `curves.csv`
/// (`scenario,method,step,auc`) and returns the final-step summary.
pub fn cmd_report(run_dir: &Path) -> Result<Summary> {
    let dir = run_dir.join("curves");
    let expected = "curves/<scenario>_<method>.csv (e.g. curves/s1_iin.csv)";
    let entries = fs::read_dir(&dir).map_err(|_| {
        Error::InvalidInput(format!("{} has no curves directory; expected {expected}", run_dir.display()))
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidInput(format!("{} is empty; expected {expected}", dir.display())));
    }
    let mut merged = String::from("scenario,method,step,auc\n");
    let mut summary = Summary::new();
    let mut problems = Vec::new();
    for path in &files {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let parsed = stem
            .split_once('_')
            .and_then(|(s, m)| Some((s.parse::<ScenarioId>().ok()?, m.parse::<ModelKind>().ok()?)));
        let Some((scenario, kind)) = parsed else {
            problems.push(format!("{}: name is not <scenario>_<method>.csv", path.display()));
            continue;
        };
        match read_file(path).and_then(|t| parse_curve_csv(&t)) {
            Ok(curve) => {
                for p in &curve {
                    let _ = writeln!(merged, "{scenario},{kind},{},{}", p.step, p.auc);
                }
                summary.insert((kind, scenario), curve.last().map_or(f64::NAN, |p| p.auc));
            }
            Err(e) => problems.push(format!("{}: {e}", path.display())),
        }
    }
    if !problems.is_empty() {
        return Err(Error::InvalidInput(problems.join("; ")));
    }
    write_file(&run_dir.join("curves.csv"), &merged)?;
    Ok(summary)
}
