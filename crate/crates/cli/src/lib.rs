//! Command-line front end for `bspinn`: analytic pricing, training, evaluation,
//! finite-difference oracle runs and synthetic data generation.
//!
//! The binary is a thin wrapper around [`run`]; everything here writes its
//! human-readable output to the supplied writer so it can be tested in-process.

// NaN-rejecting `!(x > 0.0)` checks are intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

pub use config::RunConfig;

/// Version string recorded in run manifests.
pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Parser)]
#[command(
    name = "bspinn",
    version,
    about = "Physics-informed neural network option pricing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form call and put prices.
    Price(PriceArgs),
    /// Fit the network to a contract's series; writes checkpoint, history and manifest.
    Train { config: PathBuf },
    /// Score a trained checkpoint; writes the metrics row and plot data.
    Evaluate {
        config: PathBuf,
        /// Defaults to `checkpoint.txt` in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Crank-Nicolson reference solution and its error against the closed form.
    Oracle { config: PathBuf },
    /// Generate a BSM-consistent series and contract file.
    Synth { config: PathBuf },
}

#[derive(Debug, Clone, clap::Args)]
pub struct PriceArgs {
    #[arg(long)]
    pub spot: f64,
    #[arg(long)]
    pub strike: f64,
    #[arg(long, default_value_t = bspinn::market::DEFAULT_RATE, allow_negative_numbers = true)]
    pub rate: f64,
    /// Required unless `--tenor` is 0.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Years to expiry.
    #[arg(long)]
    pub tenor: f64,
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Price(args) => commands::price(args, out),
        Command::Train { config } => commands::train(&RunConfig::load(config)?, out),
        Command::Evaluate { config, checkpoint } => {
            commands::evaluate(&RunConfig::load(config)?, checkpoint.as_deref(), out)
        }
        Command::Oracle { config } => commands::oracle(&RunConfig::load(config)?, out),
        Command::Synth { config } => commands::synth(&RunConfig::load(config)?, out),
    }
}
