//! `editgate`: manage an edit memory, route queries, train the relevance
//! filter, run evaluations, and serve the whole thing over HTTP.

mod commands;
mod config;
mod remote;
mod server;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use editgate_core::Error;

use crate::config::Config;

#[derive(Parser)]
#[command(name = "editgate", version, about = "Adaptive knowledge-edit routing engine")]
struct Cli {
    /// Path to the TOML config file.
    #[arg(long, global = true, default_value = "editgate.toml")]
    config: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render edits into their stored forms and write a form cache.
    Augment {
        /// Line-delimited JSON edits: {"id"?, "query", "answer"}.
        #[arg(long)]
        edits: PathBuf,
        /// Output cache path, one {"edit_id", "form", "text"} line per form.
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply edits to the memory and write the snapshot.
    Edit {
        /// Line-delimited JSON edits: {"id"?, "query", "answer"}.
        #[arg(long)]
        edits: PathBuf,
        /// Optional form cache from `augment`; cached edits skip augmentation.
        #[arg(long)]
        augmented: Option<PathBuf>,
    },
    /// Route one query and print the answer with its routing decision.
    Query {
        /// The query text.
        #[arg(long)]
        q: String,
    },
    /// Train the relevance filter and write its weights.
    TrainFilter {
        /// Line-delimited JSON samples: {"query", "edit_text", "label", "kind"}.
        #[arg(long)]
        samples: PathBuf,
        /// Output weights path.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: TrainingFlags,
    },
    /// Evaluate a dataset under an editing setting and write a report.
    Eval {
        #[arg(long)]
        setting: EvalSetting,
        /// Line-delimited JSON records.
        #[arg(long)]
        dataset: PathBuf,
        /// Output report path (JSON).
        #[arg(long)]
        report: PathBuf,
    },
    /// Start the HTTP service on the configured address.
    Serve,
}

#[derive(Debug, Args)]
struct TrainingFlags {
    /// Gradient-descent learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Seed for general-sample subsampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Keep probability for general samples.
    #[arg(long, value_name = "RATE")]
    general_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EvalSetting {
    Single,
    Sequential,
    Incremental,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_code(&error))
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let config = Config::load(&cli.config)?;
    match &cli.command {
        Command::Augment { edits, out } => commands::cmd_augment(&config, edits, out),
        Command::Edit { edits, augmented } => {
            commands::cmd_edit(&config, edits, augmented.as_deref())
        }
        Command::Query { q } => commands::cmd_query(&config, q),
        Command::TrainFilter { samples, out, flags } => {
            commands::cmd_train_filter(&config, samples, out, flags)
        }
        Command::Eval { setting, dataset, report } => {
            commands::cmd_eval(&config, *setting, dataset, report)
        }
        Command::Serve => commands::cmd_serve(&config),
    }
}

/// Exit codes: 2 usage or invalid input, 3 schema or file-format problems,
/// 4 backend or embedding failures, 5 untrained filter.
fn exit_code(error: &Error) -> u8 {
    match error {
        Error::InvalidInput(_) | Error::Io(_) => 2,
        Error::Schema { .. } | Error::DimensionMismatch { .. } => 3,
        Error::Backend { .. } | Error::Embedding(_) => 4,
        Error::NotTrained(_) => 5,
    }
}
