//! Command-line pipeline for the desk-scale benchmark: demonstrations,
//! policy and classifier training, paired evaluation and solver ablations.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use sip_core::{Error, ErrorCategory};

use crate::config::{RunConfig, EVAL_MODES};

#[derive(Debug, Parser)]
#[command(
    name = "sip-bench",
    version,
    about = "Difficulty-adaptive interpolant policy benchmark"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// Flags taking precedence over the config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub task: Option<String>,
    /// Restricts evaluation to one of min, max, adaptive.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    #[arg(long, global = true)]
    pub preset: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Record scripted-expert demonstrations.
    GenDemos,
    /// Train the action-chunk policy field.
    Train,
    /// Train the difficulty classifier and its accuracy-vs-size curve.
    TrainClassifier,
    /// Paired evaluation of min, max and adaptive inference budgets.
    Eval,
    /// Steps by solver by mode by last-step grid on fixed budgets.
    Ablate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GenDemos => "gen-demos",
            Command::Train => "train",
            Command::TrainClassifier => "train-classifier",
            Command::Eval => "eval",
            Command::Ablate => "ablate",
        }
    }
}

/// Loads the config (or defaults) and applies flag overrides.
pub fn resolve_config(o: &Overrides) -> sip_core::Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(p) = &o.out {
        cfg.out = p.clone();
    }
    if let Some(t) = &o.task {
        cfg.task = t.parse::<sip_core::envs::TaskKind>()?.name().to_string();
    }
    if let Some(m) = &o.mode {
        if !EVAL_MODES.contains(&m.as_str()) {
            return Err(Error::InvalidConfig(format!(
                "unknown --mode `{m}` (expected min, max or adaptive)"
            )));
        }
        cfg.eval.modes = vec![m.clone()];
    }
    if let Some(p) = &o.preset {
        cfg.eval.preset = p.parse::<sip_core::difficulty::Preset>()?.to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_IO: i32 = 5;

/// Process exit code for a failed command.
pub fn exit_code(e: &Error) -> i32 {
    let mut inner = e;
    while let Error::InEpisode { source, .. } = inner {
        inner = source;
    }
    if matches!(inner, Error::Io(_)) {
        return EXIT_IO;
    }
    match e.category() {
        ErrorCategory::Config => EXIT_CONFIG,
        ErrorCategory::Data => EXIT_DATA,
        ErrorCategory::Numeric => EXIT_NUMERIC,
    }
}

pub fn run(cli: &Cli) -> sip_core::Result<commands::CommandOutput> {
    let cfg = resolve_config(&cli.overrides)?;
    let f = match cli.command {
        Command::GenDemos => commands::gen_demos_cmd,
        Command::Train => commands::train_cmd,
        Command::TrainClassifier => commands::train_classifier_cmd,
        Command::Eval => commands::eval_cmd,
        Command::Ablate => commands::ablate_cmd,
    };
    commands::run_logged(cli.command.name(), &cfg, &mut std::io::stdout().lock(), f)
}
