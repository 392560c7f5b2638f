//! Command line shell around the benchmark library. Parsing and exit-code
//! mapping live here; everything else is in `eegbench_cli`.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use eegbench_cli::commands;
use eegbench_cli::config::{ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(
    name = "eegbench",
    version,
    about = "Semi-synthetic EEG artifact removal benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate semi-synthetic pair sets and save them to disk
    Generate(RunArgs),
    /// Train the configured models, saving loss curves and checkpoints
    Train(TrainArgs),
    /// Score baselines or a saved checkpoint on the test split
    Evaluate(EvaluateArgs),
    /// Full protocol: regenerate, train, and evaluate per seed, then aggregate
    Benchmark(RunArgs),
    /// Turn a benchmark results directory into plot-ready series
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the seeds list with this single seed
    #[arg(long)]
    seed: Option<u64>,
    /// Problem size preset
    #[arg(long, value_parser = ["desk", "paper"])]
    scale: Option<String>,
    /// Artifact family to mix in
    #[arg(long, value_parser = ["ocular", "myogenic"])]
    artifact: Option<String>,
    /// Synthesize surrogate banks instead of loading real ones
    #[arg(long)]
    surrogate: bool,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory holding the real segment banks
    #[arg(long)]
    data: Option<PathBuf>,
    /// Method to run (repeatable); defaults to the full roster
    #[arg(long = "method")]
    methods: Vec<String>,
    /// Epoch budget applied to every model
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Use a dataset directory written by `generate` instead of regenerating
    #[arg(long)]
    generated: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Checkpoint directory for evaluating a trained model method
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Use a dataset directory written by `generate` instead of regenerating
    #[arg(long)]
    generated: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Results directory written by `benchmark`
    results_dir: PathBuf,
    /// Also render SVG charts next to the CSV series
    #[arg(long)]
    svg: bool,
}

fn overrides(args: &RunArgs) -> Overrides {
    Overrides {
        artifact: args.artifact.clone(),
        scale: args.scale.clone(),
        seed: args.seed,
        methods: (!args.methods.is_empty()).then(|| args.methods.clone()),
        epochs: args.epochs,
        surrogate: args.surrogate,
        out: args.out.clone(),
        data: args.data.clone(),
    }
}

fn resolve(args: &RunArgs) -> Result<ExperimentConfig> {
    ExperimentConfig::resolve(args.config.as_deref(), &overrides(args))
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => {
            commands::generate::run(&resolve(&args)?)?;
            Ok(())
        }
        Command::Train(args) => commands::train::run(&resolve(&args.run)?, args.generated.as_deref()),
        Command::Evaluate(args) => commands::evaluate::run(
            &resolve(&args.run)?,
            args.checkpoint.as_deref(),
            args.generated.as_deref(),
        ),
        Command::Benchmark(args) => {
            let outcome = commands::benchmark::run(&resolve(&args)?)?;
            if outcome.succeeded == 0 {
                anyhow::bail!("all {} benchmark runs failed", outcome.failed);
            }
            if outcome.failed > 0 {
                eprintln!(
                    "warning: {} of {} runs failed; details in the run manifest",
                    outcome.failed,
                    outcome.failed + outcome.succeeded
                );
            }
            Ok(())
        }
        Command::Report(args) => {
            commands::report::run(&args.results_dir, args.svg)?;
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = dispatch(cli) {
        eprintln!("error: {err:#}");
        let code = if err.is::<eegbench_cli::ConfigError>() {
            2
        } else {
            1
        };
        std::process::exit(code);
    }
}
