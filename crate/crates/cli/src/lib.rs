//! The `qfine` command line and HTTP service.

use qfine::augment::AugmentError;
use qfine::corpus::CorpusError;
use qfine::embedder::EmbedError;
use qfine::metrics::MetricsError;
use qfine::pipeline::{PipelineConfig, PipelineError};
use qfine::querygen::QueryGenError;
use qfine::ragpipe::RagError;
use qfine::retriever::RetrieverError;
use qfine::trainer::TrainError;

pub mod args;
pub mod commands;
pub mod overrides;
pub mod serve;

pub use args::Cli;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    QueryGen(#[from] QueryGenError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Retriever(#[from] RetrieverError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Rag(#[from] RagError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("ablation below thresholds: Hit@1 delta {hit1:+.4}, MRR delta {mrr:+.4}")]
    AblationBelowThreshold { hit1: f64, mrr: f64 },
    #[error("server: {0}")]
    Server(String),
}

impl CliError {
    /// Process exit code: 2 for bad invocations and configs, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Pipeline(PipelineError::InvalidConfig(_)) => 2,
            _ => 1,
        }
    }
}

/// The config file (or defaults) with every `--set` override applied.
pub fn resolve_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let base = match &cli.config {
        Some(path) => PipelineConfig::load(path).map_err(|e| CliError::Config(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    overrides::apply_overrides(&base, &cli.overrides)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = resolve_config(&cli)?;
    commands::dispatch(cli.command, config)
}
