use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use surrogate_core::config::{resolve_seed, CliConfig};
use surrogate_core::forest::metrics_from_confusion;
use surrogate_core::pipeline::{Pipeline, Stage, StageOutcome};
use surrogate_core::schema::{ingest_path, ParameterSchema};
use surrogate_core::{Error, Result};

const SEED_ENV: &str = "SURROGATE_SEED";

#[derive(Debug, Parser)]
#[command(name = "surrogate", version, about = "Random-forest surrogate for agent-based policy simulations")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides SURROGATE_SEED and the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for training, generation and emulation.
    #[arg(long, global = true, value_name = "K")]
    workers: Option<usize>,
    /// 100 trees and 10^5 generated configurations.
    #[arg(long, global = true)]
    desk_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate the parameter schema and, if configured, the corpus against it.
    SchemaCheck,
    /// Write a synthetic run corpus from the toy world.
    Toygen,
    /// Split the corpus into valid and invalid runs.
    Ingest,
    /// Label runs and assign the train/test split.
    Label,
    /// Fit the forest on the training split.
    Train,
    /// Score the forest on the test split and print the confusion matrix.
    Eval,
    /// Sample new configurations.
    Generate,
    /// Classify the generated configurations.
    Emulate,
    /// Aggregate predictions into report tables.
    Report,
    /// Every stage in order.
    RunAll,
}

fn load_config(cli: &Cli) -> Result<CliConfig> {
    let mut config = match &cli.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    let env = std::env::var(SEED_ENV).ok();
    config.seed = resolve_seed(cli.seed, env.as_deref(), config.seed)?;
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    if cli.desk_scale {
        config.desk_scale();
    }
    Ok(config)
}

fn schema_check(config: &CliConfig) -> Result<()> {
    let schema = match &config.schema {
        Some(p) => ParameterSchema::load(p)?,
        None => ParameterSchema::default_schema(),
    };
    println!(
        "schema ok: {} continuous, {} discrete, {} regions, {} policies (baseline {})",
        schema.continuous().len(),
        schema.discrete().len(),
        schema.region().alternatives.len(),
        schema.policy().alternatives.len(),
        schema.baseline_policy()
    );
    if let Some(corpus) = &config.corpus {
        let c = ingest_path(corpus, &schema)?;
        println!("corpus: {} runs, {} valid, {} invalid", c.records.len(), c.n_valid(), c.n_invalid());
    }
    Ok(())
}

fn report_stage(stage: Stage, outcome: StageOutcome) {
    let word = match outcome {
        StageOutcome::Ran => "ran",
        StageOutcome::Skipped => "skipped",
    };
    println!("{stage}: {word}");
}

fn print_evaluation(pipeline: &Pipeline) -> Result<()> {
    let e = pipeline.evaluation()?;
    println!("{}", e.confusion);
    let m = metrics_from_confusion(&e.confusion);
    let f = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "accuracy {}  precision {}  recall {}  f1 {}",
        f(m.accuracy),
        f(m.precision),
        f(m.recall),
        f(m.f1)
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(k) = cli.workers {
        if k == 0 {
            return Err(Error::InvalidArgument("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let config = load_config(cli)?;
    let stage = match cli.command {
        Command::SchemaCheck => return schema_check(&config),
        Command::RunAll => None,
        Command::Toygen => Some(Stage::Toygen),
        Command::Ingest => Some(Stage::Ingest),
        Command::Label => Some(Stage::Label),
        Command::Train => Some(Stage::Train),
        Command::Eval => Some(Stage::Eval),
        Command::Generate => Some(Stage::Generate),
        Command::Emulate => Some(Stage::Emulate),
        Command::Report => Some(Stage::Report),
    };
    let mut pipeline = Pipeline::open(config)?;
    match stage {
        Some(s) => {
            let outcome = pipeline.run_stage(s)?;
            report_stage(s, outcome);
            if s == Stage::Eval {
                print_evaluation(&pipeline)?;
            }
        }
        None => {
            for s in pipeline.stages() {
                let outcome = pipeline.run_stage(s)?;
                report_stage(s, outcome);
            }
            print_evaluation(&pipeline)?;
            println!("report: {}", pipeline.report_dir().display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), e);
            ExitCode::FAILURE
        }
    }
}
