//! Command-line orchestration: configuration, run directories and manifests.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::Overrides;
use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "ptg", version, about = "Generate and evaluate data-driven periodic tables")]
pub struct Cli {
    /// Worker threads for restarts and forest fitting.
    #[arg(long, global = true, env = "PTG_WORKERS")]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every restart and write tables, traces and a manifest.
    Generate(GenerateArgs),
    /// Continue an interrupted `generate` from its checkpoints.
    Resume(RunDirArgs),
    /// Cross-validate the tables of a run against the standard table.
    Evaluate(EvaluateArgs),
    /// Export feature landscapes for one table of a run.
    Landscape(LandscapeArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// TOML run configuration; omitted keys take the reference defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Chain length; burn-in is set to half of it.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunDirArgs {
    /// Run directory written by `generate`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// `formula,target` CSV; defaults to `data.compounds` of the run config.
    #[arg(long)]
    pub compounds: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LandscapeArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Feature name, or `all`.
    #[arg(long)]
    pub feature: String,
    /// Restart index; defaults to the selected or most likely table.
    #[arg(long)]
    pub restart: Option<usize>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => {
            let cfg = match &a.config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            let overrides = Overrides {
                seed: a.seed,
                restarts: a.restarts,
                iterations: a.iters,
                out: a.out,
            };
            let out = commands::generate(cfg, &overrides)?;
            println!("run written to {}", out.display());
        }
        Command::Resume(a) => {
            commands::check_nonempty(&a.out)?;
            let out = commands::resume(&a.out)?;
            println!("run completed in {}", out.display());
        }
        Command::Evaluate(a) => {
            commands::check_nonempty(&a.out)?;
            let ranking = commands::evaluate(&a.out, a.compounds.as_deref())?;
            println!("rank  descriptor        MAE (±sd)            RMSE (±sd)");
            for (i, r) in ranking.iter().enumerate() {
                println!(
                    "{:>4}  {:<16}  {:.4} (±{:.4})  {:.4} (±{:.4})",
                    i + 1,
                    r.descriptor,
                    r.mae_mean,
                    r.mae_std,
                    r.rmse_mean,
                    r.rmse_std
                );
            }
        }
        Command::Landscape(a) => {
            commands::check_nonempty(&a.out)?;
            let files = commands::landscapes(&a.out, &a.feature, a.restart)?;
            println!("{} files written", files.len());
        }
    }
    Ok(())
}
