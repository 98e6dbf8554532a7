//! Command-line runner: `run` one config, `sweep` a key over values,
//! `summarize` metrics CSVs, `check` a config without running.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use fedspectrum::config::ExperimentConfig;
use fedspectrum::experiment::{format_summary, run_experiment, summarize};

#[derive(Parser)]
#[command(
    name = "fedspectrum",
    version,
    about = "Federated spectrum-access simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (key=value text).
    #[arg(long)]
    config: PathBuf,
    /// Directory for the metrics CSV.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its metrics CSV.
    Run(RunArgs),
    /// Run the base config once per listed value of one key.
    Sweep {
        #[command(flatten)]
        base: RunArgs,
        /// Config key to vary.
        #[arg(long)]
        key: String,
        /// Comma-separated values for the key.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
    },
    /// Aggregate metrics CSVs into a per-(regime, K) summary table.
    Summarize {
        /// Metrics CSVs produced by `run` or `sweep`.
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
    /// Validate a config and exit.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load_config(path: &Path, seed_override: Option<u64>) -> anyhow::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_file(path)
        .with_context(|| format!("loading config {}", path.display()))?;
    if let Some(seed) = seed_override {
        config.seeds = vec![seed];
    }
    Ok(config)
}

fn config_stem(path: &Path) -> anyhow::Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .context("config path has no usable file stem")
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run(args) => {
            let config = load_config(&args.config, args.seed_override)?;
            std::fs::create_dir_all(&args.out)?;
            let out = args.out.join(format!("{}.csv", config_stem(&args.config)?));
            let path = run_experiment(&config, &out)?;
            println!("{}", path.display());
        }
        Command::Sweep { base, key, values } => {
            if values.is_empty() {
                bail!("--values must list at least one value");
            }
            let stem = config_stem(&base.config)?;
            std::fs::create_dir_all(&base.out)?;
            for value in &values {
                let mut config = load_config(&base.config, base.seed_override)?;
                config
                    .set(&key, value)
                    .with_context(|| format!("applying {key}={value}"))?;
                config.validate()?;
                let out = base.out.join(format!("{stem}_{key}_{value}.csv"));
                let path = run_experiment(&config, &out)?;
                println!("{}", path.display());
            }
        }
        Command::Summarize { csv } => {
            let rows = summarize(&csv)?;
            print!("{}", format_summary(&rows));
        }
        Command::Check { config } => {
            load_config(&config, None)?;
            println!("ok");
        }
    }
    Ok(())
}
