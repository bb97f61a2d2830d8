//! `semspace` operator commands.
//!
//! Each subcommand takes its options from flags, falling back to the table of
//! the same name in the `--config` TOML file. Every run that writes artifacts
//! also writes a manifest recording the resolved options and the SHA-256 of
//! each input and output, which `replay` uses to rerun and compare.

pub mod commands;
pub mod manifest;
pub mod settings;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{
    AttributeArgs, BuildStsArgs, EvalArgs, ProjectArgs, ReplayArgs, ServeArgs, TrainArgs, TripletsArgs, ValidateArgs,
};

#[derive(Debug, Parser)]
#[command(name = "semspace", version, about = "Embedding-space exploration engine for museum collections")]
pub struct Cli {
    /// TOML file with one table per subcommand; flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a catalog and its embedding files; prints the validation report.
    Validate(ValidateArgs),
    /// Build a 2D projection cache for one view mode.
    Project(ProjectArgs),
    /// Train a head over frozen embeddings.
    Train(TrainArgs),
    /// Score a head on STS pairs and/or a classification head on labelled items.
    Eval(EvalArgs),
    /// Integrated-gradients attribution for one item.
    Attribute(AttributeArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Sample ten other-category negatives per anchor into a triplet file.
    Triplets(TripletsArgs),
    /// Build In-Context STS pairs from anchor, positive, negative rows.
    BuildSts(BuildStsArgs),
    /// Rerun a command from its manifest and compare output hashes.
    Replay(ReplayArgs),
}

/// Process exit status: 0 success, 1 validation failure. Runtime errors exit 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    ValidationFailed,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::ValidationFailed => 1,
        }
    }
}

pub const RUNTIME_ERROR: u8 = 2;

pub fn run(cli: Cli) -> anyhow::Result<Status> {
    let config = settings::ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::Validate(a) => commands::validate::run(config.resolve("validate", a)?),
        Command::Project(a) => commands::project::run(config.resolve("project", a)?),
        Command::Train(a) => commands::train::run(config.resolve("train", a)?),
        Command::Eval(a) => commands::eval::run(config.resolve("eval", a)?),
        Command::Attribute(a) => commands::attribute::run(config.resolve("attribute", a)?),
        Command::Serve(a) => commands::serve::run(config.resolve("serve", a)?),
        Command::Triplets(a) => commands::prepare::triplets(config.resolve("triplets", a)?),
        Command::BuildSts(a) => commands::prepare::build_sts(config.resolve("build_sts", a)?),
        Command::Replay(a) => commands::replay::run(a),
    }
}
