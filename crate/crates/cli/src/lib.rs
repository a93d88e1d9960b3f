//! The `scloc` command line: synthetic data, hierarchy, training,
//! localisation and evaluation over one run directory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use scloc_core::synth::SceneKind;

pub mod commands;
pub mod config;
pub mod store;

pub use config::{Overrides, Preset, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingInput(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "scloc",
    version,
    about = "Hierarchical scene-coordinate localisation on synthetic scenes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a scene, a camera trajectory and rendered frames.
    Synth(Common),
    /// Build the two-level label hierarchy over the scene points.
    Quantize(Common),
    /// Train the network on the training split.
    Train(Common),
    /// Estimate poses for the test split.
    Localize(Common),
    /// Score estimated poses against ground truth.
    Eval(Common),
    /// Sparse training across several propagation widths.
    SweepZ(Common),
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub scene: Option<SceneKind>,
    /// Label propagation half-width.
    #[arg(long)]
    pub z: Option<usize>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long)]
    pub frames: Option<usize>,
}

impl Common {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            scene: self.scene,
            z: self.z,
            preset: self.preset,
            no_augment: self.no_augment,
            frames: self.frames,
        }
    }

    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        RunConfig::resolve(self.config.as_deref(), std::env::vars(), &self.overrides())
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let (name, common) = match &cli.command {
        Command::Synth(c) => ("synth", c),
        Command::Quantize(c) => ("quantize", c),
        Command::Train(c) => ("train", c),
        Command::Localize(c) => ("localize", c),
        Command::Eval(c) => ("eval", c),
        Command::SweepZ(c) => ("sweep-z", c),
    };
    let cfg = common.resolve()?;
    commands::dispatch(name, &cfg)
}
