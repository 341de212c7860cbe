use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use iinlab::config::{parse_models, parse_scenarios, ExperimentConfig};
use iinlab::pipeline::{self, Summary};
use iinlab::Result;

#[derive(Parser, Debug)]
#[command(name = "iinlab", version, about = "Position-bias debiasing laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the train/test datasets in LETOR format.
    GenData(Overrides),
    /// Train the production ranker on the generated training split.
    TrainRanker(Overrides),
    /// Simulate click logs for the configured scenarios.
    Simulate(Overrides),
    /// Train the configured models on the simulated click logs.
    Train(Overrides),
    /// Score saved models on the test split and write the summary table.
    Evaluate(Overrides),
    /// Run every stage and write a manifest.
    Run(Overrides),
    /// Merge the curves of a run directory and print its summary.
    Report {
        /// Run directory (defaults to the configured output directory).
        run_dir: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// s1..s5, a comma-separated list, or `all`.
    #[arg(long)]
    scenario: Option<String>,
    /// iin, pal, mmoe, skyline, a comma-separated list, or `all`.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::with_feature_dim(16),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.scenario {
            cfg.scenarios = parse_scenarios(v)?;
        }
        if let Some(v) = &self.model {
            cfg.models = parse_models(v)?;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_summary(summary: &Summary) {
    print!("{}", pipeline::summary_csv(summary));
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenData(o) => pipeline::cmd_gen_data(&o.resolve()?),
        Command::TrainRanker(o) => pipeline::cmd_train_ranker(&o.resolve()?),
        Command::Simulate(o) => pipeline::cmd_simulate(&o.resolve()?),
        Command::Train(o) => pipeline::cmd_train(&o.resolve()?),
        Command::Evaluate(o) => pipeline::cmd_evaluate(&o.resolve()?).map(|s| print_summary(&s)),
        Command::Run(o) => pipeline::cmd_run(&o.resolve()?).map(|s| print_summary(&s)),
        Command::Report { run_dir, overrides } => {
            let dir = match run_dir {
                Some(d) => d,
                None => overrides.resolve()?.out,
            };
            pipeline::cmd_report(&dir).map(|s| print_summary(&s))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
