//! The `demaudit` command line: one subcommand per pipeline stage, a shared
//! config, and CSV/JSON reports tagged with the config hash.

pub mod config;
mod context;
mod stages;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use context::Ctx;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad config, arguments, or missing inputs. Exit status 1.
    #[error("{0}")]
    Validation(String),
    /// Inputs that exist but cannot be used. Exit status 2.
    #[error(transparent)]
    Data(#[from] demaudit_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "demaudit", version, about = "Demographic audit statistics for image-text corpora")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set sae.k=8`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub sets: Vec<String>,
    /// Worker threads (overrides `threads`); results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, validate and filter images and person boxes.
    Ingest,
    /// Build the caption inverted index.
    Index,
    /// Annotator agreement, consensus labels, balanced sample, detection recall.
    Agree,
    /// Gender and race composition at box and image level, box statistics.
    AuditComposition,
    /// Relative change of group shares among crime-keyword captions.
    AuditCrime {
        /// Use every indexed term as the keyword set.
        #[arg(long)]
        all_terms: bool,
    },
    /// Country mention counts.
    AuditGeo,
    /// Caption sentiment by group.
    AuditSentiment,
    /// Hate content rate over a threshold grid.
    Hcr {
        /// Threshold; repeat for a grid (overrides `hcr.taus`).
        #[arg(long = "tau")]
        taus: Vec<f64>,
    },
    /// Train sparse autoencoders on caption embeddings.
    SaeTrain,
    /// Count feature activations per identity.
    SaeStats,
    /// Identity–topic PMI over the clustering sweep.
    TopicsPmi,
    /// Per-category dataset, embedding and generation bias.
    TransferBias,
    /// Linear fit of embedding bias on dataset bias.
    TransferFit,
    /// Collect stage summaries and report hashes.
    Report,
    /// Run every stage from ingest to report.
    Pipeline,
    /// Write a synthetic fixture in every input format.
    Synth {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 1000)]
        images: usize,
        #[arg(long, default_value_t = 1729)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        dim: usize,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Index => "index",
            Command::Agree => "agree",
            Command::AuditComposition => "audit-composition",
            Command::AuditCrime { .. } => "audit-crime",
            Command::AuditGeo => "audit-geo",
            Command::AuditSentiment => "audit-sentiment",
            Command::Hcr { .. } => "hcr",
            Command::SaeTrain => "sae-train",
            Command::SaeStats => "sae-stats",
            Command::TopicsPmi => "topics-pmi",
            Command::TransferBias => "transfer-bias",
            Command::TransferFit => "transfer-fit",
            Command::Report => "report",
            Command::Pipeline => "pipeline",
            Command::Synth { .. } => "synth",
        }
    }
}

/// Parses arguments and runs one subcommand; returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    if let Command::Synth { dir, images, seed, dim } = &cli.command {
        return stages::synth(dir, *images, *seed, *dim);
    }
    let mut sets = cli.sets.clone();
    if let Some(t) = cli.threads {
        sets.push(format!("threads={t}"));
    }
    // Stage flags become config keys so they count toward the config hash.
    match &cli.command {
        Command::AuditCrime { all_terms: true } => sets.push("audit.crime_all_terms=true".into()),
        Command::Hcr { taus } if !taus.is_empty() => {
            let list: Vec<String> = taus.iter().map(|t| format!("{t:?}")).collect();
            sets.push(format!("hcr.taus=[{}]", list.join(", ")));
        }
        _ => {}
    }
    if let Some(o) = &cli.out {
        sets.push(format!("out_dir={}", toml::Value::String(o.display().to_string())));
    }
    let loaded = config::load(cli.config.as_deref(), &sets)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(loaded.config.threads)
        .build()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    pool.install(|| stages::dispatch(&cli.command, &loaded))
}
