use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use mraugment_cli::commands;
use mraugment_cli::config::{help_text, parse_epochs, Overrides, RunConfig};

/// Synthetic accelerated-MRI data and physics-consistent augmentation.
#[derive(Debug, Parser)]
#[command(name = "mraugment", version)]
struct Cli {
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Augmentation mode: mraugment, naive or object-level.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Epoch range `A..B` (end exclusive) or a single epoch.
    #[arg(long, global = true, value_parser = parse_epochs)]
    epochs: Option<(u64, u64)>,
    /// Worker threads. Outputs do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// List every config key with its default and exit.
    #[arg(long)]
    help_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic multi-coil dataset.
    Simulate,
    /// Augment the dataset and write training pairs with a manifest.
    Augment,
    /// Test the noise of an augmentation run for i.i.d. Gaussianity.
    ValidateNoise,
    /// Reconstruct dataset slices or augmented pairs.
    Recon,
    /// Score reconstructions against their references.
    Metrics,
}

fn run(cli: Cli) -> Result<ExitCode> {
    if cli.help_config {
        print!("{}", help_text());
        return Ok(ExitCode::SUCCESS);
    }
    let Some(command) = cli.command else {
        anyhow::bail!("no subcommand given; see --help");
    };
    let overrides = Overrides {
        seed: cli.seed,
        mode: cli.mode,
        epochs: cli.epochs,
        workers: cli.workers,
    };
    let cfg = RunConfig::load(cli.config.as_deref(), std::env::vars(), &overrides)?;
    match command {
        Command::Simulate => {
            let ds = commands::simulate(&cfg)?;
            eprintln!("wrote {} slices to {}", ds.slices().len(), ds.root().display());
        }
        Command::Augment => {
            let records = commands::augment(&cfg)?;
            eprintln!("wrote {} pairs to {}", records.len(), cfg.output.display());
        }
        Command::ValidateNoise => {
            let v = commands::validate_noise_run(&cfg)?;
            let n = &v.noise;
            eprintln!(
                "{} samples: mean ({:.3e}, {:.3e}) var ({:.4e}, {:.4e}) corr {:.4} KS p {:.4}; replay mismatches {}",
                n.samples, n.mean_re, n.mean_im, n.var_re, n.var_im, n.correlation, n.ks_p_value,
                v.replay_mismatches
            );
            println!("{}", if v.pass { "PASS" } else { "FAIL" });
            if !v.pass {
                return Ok(ExitCode::from(3));
            }
        }
        Command::Recon => {
            let entries = commands::recon(&cfg)?;
            eprintln!("wrote {} reconstructions", entries.len());
        }
        Command::Metrics => {
            let rows = commands::metrics(&cfg)?;
            eprintln!("scored {} reconstructions", rows.len());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
