//! `betrayal`: staged command-line pipeline from Diplomacy game logs to
//! betrayal-prediction reports.

mod commands;
mod config;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use betrayal_core::cohort::Task;
use betrayal_core::gamelog::GameLogError;
use betrayal_core::lingcues::LingError;
use betrayal_core::pipeline::PipelineError;
use betrayal_core::relations::RelationError;
use betrayal_core::synth::SynthError;

use commands::{Ctx, InputError};
use config::{Config, ConfigError};

#[derive(Debug, Parser)]
#[command(name = "betrayal", version, about = "Betrayal analysis of Diplomacy game logs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Debug, Args)]
struct Common {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory of lexicon files replacing the built-in ones.
    #[arg(long, global = true)]
    lexicons: Option<PathBuf>,
    /// Output directory for all artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    task: Option<Task>,
    /// Fail when the matched cohort is imbalanced at p < 0.05.
    #[arg(long, global = true)]
    strict_balance: bool,
    #[arg(long, global = true)]
    convoy_as_friendly: bool,
    /// Require two friendly acts in each direction.
    #[arg(long, global = true)]
    strict_reciprocity: bool,
    /// Recompute even when inputs are unchanged.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse, validate and normalize JSONL game logs.
    Ingest {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Label acts, stable friendships, betrayals and transition statistics.
    Relate {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Match never-betrayed friendships to betrayals.
    Cohort,
    /// Build labeled, featurized instances for a task.
    Featurize {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Grid-search and fit the final model.
    Train,
    /// Nested cross-validated evaluation.
    Evaluate,
    /// Generate a synthetic corpus with planted cue effects.
    Synth {
        #[arg(long)]
        games: Option<usize>,
        #[arg(long)]
        hazard: Option<f64>,
        /// All effect sizes 1.0.
        #[arg(long)]
        null_effects: bool,
    },
    /// Ranking, cue curves and figures from trained artifacts.
    Report,
    /// Whole pipeline from a corpus to report.
    Run {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
}

fn settings(cli: &Cli) -> Result<Config, ConfigError> {
    let c = &cli.common;
    let mut config = match &c.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let mut set = |key: &str, value: Option<String>| match value {
        Some(v) => config.set(key, &v),
        None => Ok(()),
    };
    set("seed", c.seed.map(|s| s.to_string()))?;
    set("lexicons", c.lexicons.as_ref().map(|p| p.display().to_string()))?;
    set("out", c.out.as_ref().map(|p| p.display().to_string()))?;
    set("task", c.task.map(|t| t.to_string()))?;
    set("strict_balance", c.strict_balance.then(|| "true".into()))?;
    set("convoy_as_friendly", c.convoy_as_friendly.then(|| "true".into()))?;
    set("strict_reciprocity", c.strict_reciprocity.then(|| "true".into()))?;
    if let Command::Synth {
        games,
        hazard,
        null_effects,
    } = &cli.command
    {
        set("synth.games", games.map(|g| g.to_string()))?;
        set("synth.hazard", hazard.map(|h| h.to_string()))?;
        set("synth.effects", null_effects.then(|| "null".into()))?;
    }
    Ok(config)
}

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    let ctx = Ctx {
        config: settings(cli)?,
        force: cli.common.force,
    };
    match &cli.command {
        Command::Ingest { paths } => commands::ingest(&ctx, paths),
        Command::Relate { corpus } => commands::relate(&ctx, corpus.as_deref()),
        Command::Cohort => commands::cohort(&ctx),
        Command::Featurize { corpus } => commands::featurize(&ctx, corpus.as_deref()),
        Command::Train => commands::train(&ctx),
        Command::Evaluate => commands::evaluate(&ctx),
        Command::Synth { .. } => commands::synth(&ctx),
        Command::Report => commands::report(&ctx),
        Command::Run { corpus } => commands::run(&ctx, corpus.as_deref()),
    }
}

/// 2 for bad input (files, config, corpus content), 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    let input = err.chain().any(|e| {
        e.is::<InputError>()
            || e.is::<ConfigError>()
            || e.is::<GameLogError>()
            || e.is::<LingError>()
            || e.is::<SynthError>()
            || e.is::<RelationError>()
            || matches!(
                e.downcast_ref::<PipelineError>(),
                Some(PipelineError::Relation(_) | PipelineError::Lexicon(_))
            )
    });
    if input {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
