//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use iinlab::config::ExperimentConfig;
use iinlab::encoding::position_encoding;
use iinlab::eval::{acr, auc, fcr_avg, fsr_avg, iin_structure_report, yr_avg, Exact, NavigationSession, Route, TrainingSet};
use iinlab::models::{AnyModel, Batch, ClickModel, ModelConfig, ModelKind};
use iinlab::nn::{max_relative_error, numeric_gradients, HasNetworks};
use iinlab::pipeline::{self, Summary};
use iinlab::sim::{click_prob, ClickLog, ClickScenario, ScenarioId};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

// Click probabilities written out per scenario, cell by cell.
fn expected_click_prob(scenario: ScenarioId, pos: usize, relevant: bool, observed: bool) -> f64 {
    let noise = match pos {
        1 => 0.25,
        2 => 0.2,
        3 => 1.0 / 6.0,
        4 => 1.0 / 7.0,
        _ => 0.125,
    };
    match (scenario, relevant, observed) {
        (_, true, true) => 1.0,
        (ScenarioId::S1, _, _) => 0.0,
        (_, false, true) => noise,
        (ScenarioId::S2, _, _) => 0.0,
        (_, true, false) => 0.1,
        (ScenarioId::S4, false, false) => 0.01,
        _ => 0.0,
    }
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut mismatches = Vec::new();
    for s in ScenarioId::ALL {
        for pos in 1..=20 {
            for (r, o) in [(true, true), (true, false), (false, true), (false, false)] {
                let got = click_prob(s.click_rule(), pos, r, o);
                let want = expected_click_prob(s, pos, r, o);
                if got != want {
                    mismatches.push(format!("{s} pos {pos} r={r} o={o}: {got} vs {want}"));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatches.is_empty() && elapsed < Duration::from_secs(1);
    verdict(pass, format!("400 cells, {} mismatches, {}", mismatches.len(), secs(elapsed)))
}

fn criterion_2() -> Verdict {
    const MIN_DRAWS: u64 = 100_000;
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let mut cells = 0;
    for (k, s) in ScenarioId::ALL.into_iter().enumerate() {
        let scenario = ClickScenario::new(s, 0, 11);
        let weight = if s.uses_feature_bias() { 0.75 } else { 1.0 };
        for pos in 1..=8usize {
            let base = if pos <= 5 { 1.0 / pos as f64 } else { 0.1 };
            let p_obs = weight * base;
            for relevant in [true, false] {
                let mut rng = ChaCha8Rng::seed_from_u64((k * 1000 + pos * 10 + usize::from(relevant)) as u64);
                // [observed][clicked] counts
                let mut counts = [[0u64; 2]; 2];
                let reachable = [p_obs < 1.0, p_obs > 0.0];
                loop {
                    let done = (0..2).all(|o| !reachable[o] || counts[o][0] + counts[o][1] >= MIN_DRAWS);
                    if done {
                        break;
                    }
                    let (o, c) = scenario.draw(pos, weight, relevant, &mut rng).unwrap();
                    counts[usize::from(o)][usize::from(c)] += 1;
                }
                for observed in [false, true] {
                    let o = usize::from(observed);
                    if !reachable[o] {
                        continue;
                    }
                    cells += 1;
                    let n = (counts[o][0] + counts[o][1]) as f64;
                    let rate = counts[o][1] as f64 / n;
                    let p = click_prob(s.click_rule(), pos, relevant, observed);
                    let se = (p * (1.0 - p) / n).sqrt();
                    let z = if se == 0.0 {
                        if rate == p { 0.0 } else { f64::INFINITY }
                    } else {
                        (rate - p).abs() / se
                    };
                    worst = worst.max(z);
                    if z > 3.0 {
                        failures.push(format!("{s} pos {pos} r={relevant} o={observed}: {rate} vs {p}"));
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(60);
    verdict(
        pass,
        format!("{cells} cells, worst |z| {worst:.2}, {} outside 3 SE, {}", failures.len(), secs(elapsed)),
    )
}

fn random_batch(config: &ModelConfig, n: usize, rng: &mut ChaCha8Rng) -> Batch {
    let cap = config.position_cap;
    let mut features = Array2::zeros((n, config.feature_dim));
    let mut bias = Array2::zeros((n, config.bias_dim));
    let mut position = Array2::zeros((n, cap));
    let mut clicks = Vec::new();
    let mut relevance = Vec::new();
    for i in 0..n {
        for j in 0..config.feature_dim {
            features[[i, j]] = rng.random_range(-1.0..1.0);
        }
        let enc = position_encoding(rng.random_range(1..=cap + 2), cap);
        for (j, v) in enc.into_iter().enumerate() {
            position[[i, j]] = v;
            bias[[i, j]] = v;
        }
        for j in cap..config.bias_dim {
            bias[[i, j]] = rng.random_range(0.0..1.0);
        }
        clicks.push(f64::from(rng.random_bool(0.4)));
        relevance.push(f64::from(rng.random_bool(0.3)));
    }
    Batch { features, bias, position, clicks, relevance }
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let config = ModelConfig::new(6, 5, 4);
    // (architecture, model kind, network index within the model)
    let architectures = [
        ("relevance net", ModelKind::Iin, 0),
        ("bias net", ModelKind::Iin, 1),
        ("pal", ModelKind::Pal, usize::MAX),
        ("mmoe", ModelKind::Mmoe, usize::MAX),
        ("skyline", ModelKind::Skyline, usize::MAX),
    ];
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    for seed in 0..5u64 {
        for &(name, kind, net) in &architectures {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut model = AnyModel::new(kind, &config, &mut rng).unwrap();
            // Off the zero-bias initialization, where the IIN ordering
            // constraint sits exactly on its kink.
            for n in model.networks_mut() {
                for i in 0..n.param_count() {
                    let v = n.param(i) + rng.random_range(-0.1..0.1);
                    n.set_param(i, v);
                }
            }
            let batch = random_batch(&config, 8, &mut rng);
            let (_, analytic) = model.loss_and_gradients(&batch).unwrap();
            let numeric = numeric_gradients(&mut model, 1e-5, |m| m.loss(&batch).unwrap());
            let err = if net == usize::MAX {
                max_relative_error(&analytic, &numeric, 1e-6)
            } else {
                max_relative_error(&analytic[net..=net], &numeric[net..=net], 1e-6)
            };
            let w = worst.entry(name).or_default();
            *w = w.max(err);
        }
    }
    let elapsed = start.elapsed();
    let max = worst.values().copied().fold(0.0, f64::max);
    let per: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    verdict(
        max < 1e-4 && elapsed < Duration::from_secs(60),
        format!("max relative error {max:.2e} ({}), {}", per.join(", "), secs(elapsed)),
    )
}

fn pair_count_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1.0;
                wins += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut worst: f64 = 0.0;
    for instance in 0..1000 {
        let n = rng.random_range(2..=50);
        let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.4))).collect();
        labels[0] = 1;
        labels[1] = 0;
        // alternate between heavily tied and continuous scores
        let scores: Vec<f64> = (0..n)
            .map(|_| if instance % 2 == 0 { f64::from(rng.random_range(0..6)) } else { rng.random_range(-3.0..3.0) })
            .collect();
        let got = auc(&scores, &labels).unwrap();
        worst = worst.max((got - pair_count_auc(&scores, &labels)).abs());
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= 1e-12 && elapsed < Duration::from_secs(10),
        format!("1000 instances, max |diff| {worst:.1e}, {}", secs(elapsed)),
    )
}

fn route(ids: &[u64]) -> Route {
    const LENGTHS: [u64; 11] = [0, 3, 5, 2, 4, 6, 1, 7, 2, 3, 5];
    Route::new(ids.iter().map(|&id| (id, LENGTHS[id as usize]))).unwrap()
}

fn session(recommended: &[&[u64]], actual: &[u64], selected: usize) -> NavigationSession {
    NavigationSession {
        recommended: recommended.iter().map(|r| route(r)).collect(),
        actual: route(actual),
        selected: Some(selected),
    }
}

fn criterion_8() -> Verdict {
    let sessions = vec![
        session(&[&[1, 2, 3], &[1, 4]], &[1, 2, 3], 1),
        session(&[&[1, 4], &[1, 2, 3]], &[1, 2, 3], 2),
        session(&[&[5, 6]], &[5, 6, 7], 1),
        session(&[&[2, 9], &[8]], &[8, 9], 2),
        session(&[&[10]], &[10], 1),
        session(&[&[3, 4], &[5]], &[1, 6], 2),
        session(&[&[7, 8, 9], &[7, 10]], &[7, 10], 2),
        session(&[&[2, 4, 6]], &[2, 4, 6, 8], 1),
        session(&[&[1, 5], &[2], &[3]], &[1, 2, 3, 5], 1),
        session(&[&[9, 10], &[6]], &[4], 2),
    ];
    let r = |n, d| Exact::new(n, d);
    let first_acr = [r(1, 1), r(3, 10), r(1, 2), r(3, 5), r(1, 1), r(0, 1), r(7, 12), r(5, 6), r(9, 16), r(0, 1)];
    let mut bad = Vec::new();
    for (i, (s, want)) in sessions.iter().zip(first_acr).enumerate() {
        let got = acr(&s.recommended[0], &s.actual).unwrap();
        if got != want {
            bad.push(format!("acr[{i}] {got} vs {want}"));
        }
    }
    let checks = [
        ("fcr", fcr_avg(&sessions).unwrap(), r(1291, 2400)),
        ("yr", yr_avg(&sessions).unwrap(), r(2, 5)),
        ("fsr", fsr_avg(&sessions).unwrap(), r(1, 2)),
    ];
    for (name, got, want) in checks {
        if got != want {
            bad.push(format!("{name} {got} vs {want}"));
        }
    }
    // Showing the driven route first moves FCR to 1 and YR down.
    let replaced: Vec<NavigationSession> = sessions
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.recommended[0] = s.actual.clone();
            s
        })
        .collect();
    if fcr_avg(&replaced).unwrap() != r(1, 1) || yr_avg(&replaced).unwrap() > r(2, 5) {
        bad.push("replacing the first route did not move FCR/YR oppositely".into());
    }
    verdict(bad.is_empty(), if bad.is_empty() { "10 sessions exact".to_string() } else { bad.join("; ") })
}

const SEEDS: [u64; 3] = [1, 2, 3];
const COMPARED: [ModelKind; 3] = [ModelKind::Iin, ModelKind::Pal, ModelKind::Mmoe];

fn desk_config(seed: u64, out: PathBuf) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::with_feature_dim(16);
    cfg.seed = seed;
    cfg.models = COMPARED.to_vec();
    cfg.save_logs = true;
    cfg.out = out;
    cfg
}

struct DeskRuns {
    configs: Vec<ExperimentConfig>,
    summaries: Vec<Summary>,
    per_run: Vec<Duration>,
}

fn desk_runs(root: &Path) -> DeskRuns {
    let mut runs = DeskRuns { configs: Vec::new(), summaries: Vec::new(), per_run: Vec::new() };
    for seed in SEEDS {
        let cfg = desk_config(seed, root.join(format!("seed{seed}")));
        let start = Instant::now();
        let summary = pipeline::cmd_run(&cfg).expect("desk-scale run");
        runs.per_run.push(start.elapsed());
        runs.configs.push(cfg);
        runs.summaries.push(summary);
    }
    runs
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn criterion_5(runs: &DeskRuns) -> Verdict {
    let mut max_dev: f64 = 0.0;
    let mut worst_violation: f64 = 0.0;
    for cfg in &runs.configs {
        let (train, _) = pipeline::load_scaled(cfg).unwrap();
        for &s in &cfg.scenarios {
            let log = ClickLog::read_csv(pipeline::clicks_path(&cfg.out, s)).unwrap();
            let set = TrainingSet::from_log(&log, &train, cfg.position_cap).unwrap();
            let text = fs::read_to_string(pipeline::model_path(&cfg.out, s, ModelKind::Iin)).unwrap();
            let model = AnyModel::from_json(&text).unwrap();
            let (dev, violating) = iin_structure_report(model.as_iin().unwrap(), &set, 1e-6).unwrap();
            max_dev = max_dev.max(dev);
            worst_violation = worst_violation.max(violating);
        }
    }
    verdict(
        max_dev <= 1e-9 && worst_violation <= 1e-3,
        format!(
            "max column-sum deviation {max_dev:.1e}, worst fraction above 1e-6 violation {:.4}% (15 models)",
            100.0 * worst_violation
        ),
    )
}

fn criterion_6(runs: &DeskRuns) -> Verdict {
    let med = |kind, s| median(runs.summaries.iter().map(|sum| sum[&(kind, s)]).collect());
    let mut ok = true;
    let mut parts = Vec::new();
    for s in ScenarioId::ALL {
        let (iin, pal, mmoe) = (med(ModelKind::Iin, s), med(ModelKind::Pal, s), med(ModelKind::Mmoe, s));
        let pass = if s == ScenarioId::S1 {
            (iin - pal).abs() <= 0.01
        } else {
            iin - pal >= 0.003 && iin - mmoe >= 0.003
        };
        ok &= pass;
        parts.push(format!(
            "{s} iin {iin:.4} pal {pal:.4} mmoe {mmoe:.4}{}",
            if pass { "" } else { " (miss)" }
        ));
    }
    let slowest = runs.per_run.iter().max().copied().unwrap_or_default();
    parts.push(format!("slowest seed {} for 5 scenarios", secs(slowest)));
    verdict(ok, parts.join("; "))
}

fn read_surface(path: &Path) -> BTreeMap<usize, (f64, f64, usize)> {
    let mut acc: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
    for line in fs::read_to_string(path).unwrap().lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let a = acc.entry(cells[0].parse().unwrap()).or_default();
        a.0 += cells[2].parse::<f64>().unwrap();
        a.1 += cells[3].parse::<f64>().unwrap();
        a.2 += 1;
    }
    acc
}

/// Non-increasing, except for at most one rise of at most 0.02.
fn decays(curve: &[f64]) -> bool {
    let rises: Vec<f64> = curve.windows(2).map(|w| w[1] - w[0]).filter(|&d| d > 0.0).collect();
    rises.is_empty() || (rises.len() == 1 && rises[0] <= 0.02)
}

fn criterion_7(runs: &DeskRuns) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for cfg in &runs.configs {
        for s in [ScenarioId::S2, ScenarioId::S3, ScenarioId::S4] {
            let surface = read_surface(&pipeline::bias_surface_path(&cfg.out, s));
            let mean = |pick: fn(&(f64, f64, usize)) -> f64| -> Vec<f64> {
                (1..=5).map(|p| surface[&p]).map(|e| pick(&e) / e.2 as f64).collect()
            };
            let rel = mean(|e| e.0);
            let irr = mean(|e| e.1);
            let pass = decays(&rel) && decays(&irr);
            ok &= pass;
            if !pass {
                parts.push(format!("seed {} {s}: r=1 {rel:.3?} r=0 {irr:.3?}", cfg.seed));
            }
        }
    }
    let detail = if ok { "S2-S4 x 3 seeds non-increasing over positions 1-5".to_string() } else { parts.join("; ") };
    verdict(ok, detail)
}

fn criterion_9(root: &Path) -> Verdict {
    let start = Instant::now();
    let run = |name: &str, workers: usize| {
        let mut cfg = ExperimentConfig::with_feature_dim(16);
        cfg.click_budget = 60_000;
        cfg.steps = 400;
        cfg.eval_every = 200;
        cfg.workers = workers;
        cfg.out = root.join(name);
        pipeline::cmd_run(&cfg).expect("determinism run");
        fs::read(pipeline::summary_path(&cfg.out)).unwrap()
    };
    let a = run("w1a", 1);
    let b = run("w1b", 1);
    let c = run("w4", 4);
    verdict(
        a == b && a == c,
        format!(
            "same seed {}, workers 1 vs 4 {}, {}",
            if a == b { "identical" } else { "differs" },
            if a == c { "identical" } else { "differs" },
            secs(start.elapsed())
        ),
    )
}

fn main() {
    let root = tempfile::tempdir().expect("temp dir");
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut report = |id, name, v: Verdict| {
        println!("criterion {id} [{}] {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((id, name, v));
    };
    report(1, "simulator exactness", criterion_1());
    report(2, "simulator Monte Carlo", criterion_2());
    report(3, "gradient correctness", criterion_3());
    report(4, "AUC oracle", criterion_4());
    let runs = desk_runs(root.path());
    report(5, "structural invariants after training", criterion_5(&runs));
    report(6, "AUC ordering", criterion_6(&runs));
    report(7, "bias-surface shape", criterion_7(&runs));
    report(8, "route metrics", criterion_8());
    report(9, "determinism", criterion_9(root.path()));

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
