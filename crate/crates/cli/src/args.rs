//! Command-line surface.

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "qfine", version, about = "Multi-angle query generation and retriever fine-tuning for Q&A retrieval")]
pub struct Cli {
    /// TOML run config. Relative paths inside it resolve against its directory.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,

    /// Override any config value, e.g. `--set train.epochs=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,

    /// More log output (-v info, -vv debug).
    #[arg(long, short, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the bundled-style synthetic corpus.
    SynthCorpus(SynthCorpusArgs),
    /// Validate a corpus and optionally split it by pair.
    Ingest(IngestArgs),
    /// Generate typed query variants for every pair.
    Genqueries(GenqueriesArgs),
    /// Mine hard-negative triples, optionally withholding eval queries.
    Mine(MineArgs),
    /// Write a freshly initialized model.
    InitModel(InitModelArgs),
    /// Fine-tune a model on a triple file.
    Train(TrainArgs),
    /// Embed the corpus answers into a vector index.
    Index(IndexArgs),
    /// Query a dense index (or BM25 with --bm25).
    Search(SearchArgs),
    /// Ranking metrics for an eval query file.
    EvalRetrieval(EvalRetrievalArgs),
    /// Text metrics for predictions against references.
    EvalGeneration(EvalGenerationArgs),
    /// Retrieve, generate and score end to end.
    RagEval(RagEvalArgs),
    /// Semantic distance of generated queries to their source questions.
    Diversity(DiversityArgs),
    /// Run every stage from the config.
    Run,
    /// Compare the fine-tuned model with its untrained initialization.
    Ablate,
    /// Serve retrieval-augmented answers over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Synthetic,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeneratorArg {
    Echo,
    Chat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Rouge1Arg {
    Recall,
    F1,
}

#[derive(Debug, Args)]
pub struct SynthCorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub pairs: usize,
    #[arg(long, default_value_t = 20_250_101)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CorpusArg {
    /// Corpus file; defaults to `paths.corpus` from the config.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    /// Fraction of pairs to put in the test half.
    #[arg(long, requires_all = ["train_out", "test_out"])]
    pub split: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub train_out: Option<PathBuf>,
    #[arg(long)]
    pub test_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenqueriesArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Query source; defaults to `querygen.source`.
    #[arg(long = "client", alias = "source", value_enum)]
    pub source: Option<SourceArg>,
    /// Comma-separated query types.
    #[arg(long, value_delimiter = ',')]
    pub types: Vec<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n_neg: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Withhold this many queries per pair; requires --eval-out.
    #[arg(long, requires = "eval_out")]
    pub holdout: Option<usize>,
    #[arg(long)]
    pub eval_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InitModelArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub feat_dim: Option<usize>,
    #[arg(long)]
    pub emb_dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[arg(long)]
    pub triples: PathBuf,
    /// Starting model; a fresh one from the config when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RetrieverArgs {
    #[arg(long, required_unless_present = "bm25", requires = "model")]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Rank with BM25 over the corpus instead of a dense index.
    #[arg(long, conflicts_with_all = ["index", "model"])]
    pub bm25: bool,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[command(flatten)]
    pub retriever: RetrieverArgs,
    #[arg(long)]
    pub query: String,
    #[arg(long, short, default_value_t = 3)]
    pub k: usize,
    /// Print the ranked list as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvalRetrievalArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[command(flatten)]
    pub retriever: RetrieverArgs,
    /// Eval query file; the corpus questions when absent.
    #[arg(long)]
    pub eval_queries: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub k_set: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalGenerationArgs {
    /// JSONL of `{"id", "text"}` records.
    #[arg(long)]
    pub predictions: PathBuf,
    /// JSONL of `{"id", "text"}` records.
    #[arg(long)]
    pub references: PathBuf,
    /// Model used for the BERT-style metric.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub rouge1_mode: Option<Rouge1Arg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RagEvalArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub eval_queries: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub generator: Option<GeneratorArg>,
    #[arg(long, short)]
    pub k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub k_set: Vec<usize>,
    /// Directory for reports and per-query answers.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiversityArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long, value_enum)]
    pub generator: Option<GeneratorArg>,
}
