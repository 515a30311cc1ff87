//! Staged pipeline runner.
//!
//! Stages run in the order `split → pretrain → train-head → continual →
//! eval`, each persisting its artifacts into the output directory so later
//! stages (or a resumed `run-all`) can pick up from disk.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use tabshift_core::pipeline::{run_pipeline, Pipeline, RunConfig, Stage};
use tabshift_core::report::{render_summary, RunReport};

/// Environment variable that overrides the output directory.
const OUT_ENV: &str = "TABSHIFT_OUT";

#[derive(Parser)]
#[command(name = "tabshift", version, about = "Tabular learning under distribution shift")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory (also read from TABSHIFT_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partition the dataset into in-distribution and OOD rows.
    Split,
    /// Contrastively pretrain the encoder on the in-distribution rows.
    Pretrain,
    /// Train the linear probe and the supervised comparator.
    TrainHead,
    /// Estimate parameter importance and run the anchored adaptation.
    Continual,
    /// Evaluate every model on the holdout and OOD rows.
    Eval,
    /// Run every stage in order.
    RunAll {
        /// Reuse artifacts of already-completed stages.
        #[arg(long)]
        resume: bool,
        /// Stop after this stage.
        #[arg(long)]
        stage: Option<String>,
    },
    /// Print the human summary of an existing run report.
    Report,
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .context("--config <path> is required")?;
    let mut cfg = RunConfig::from_toml_file(path)
        .with_context(|| format!("loading config {}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    } else if let Ok(out) = std::env::var(OUT_ENV) {
        if !out.is_empty() {
            cfg.out_dir = PathBuf::from(out);
        }
    }
    Ok(cfg)
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;

    let report = match &cli.command {
        Command::Split => Pipeline::new(cfg)?.run_single(Stage::Split)?,
        Command::Pretrain => Pipeline::new(cfg)?.run_single(Stage::Pretrain)?,
        Command::TrainHead => Pipeline::new(cfg)?.run_single(Stage::Head)?,
        Command::Continual => Pipeline::new(cfg)?.run_single(Stage::Continual)?,
        Command::Eval => Pipeline::new(cfg)?.run_single(Stage::Eval)?,
        Command::RunAll { resume, stage } => {
            let upto = match stage {
                Some(name) => name.parse::<Stage>()?,
                None => Stage::Eval,
            };
            if *resume || upto != Stage::Eval {
                Pipeline::new(cfg)?.run(upto, *resume)?
            } else {
                run_pipeline(cfg, false)?
            }
        }
        Command::Report => {
            let path = cfg.out_dir.join("report.json");
            if !path.exists() {
                bail!("no report at {}; run the pipeline first", path.display());
            }
            RunReport::load(&path)?
        }
    };

    print!("{}", render_summary(&report));
    Ok(())
}
