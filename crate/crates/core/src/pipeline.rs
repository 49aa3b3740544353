//! Stage orchestration: configuration, full runs, the fine-tuning ablation
//! and the run manifest.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{
    self, mine_triples, original_question_queries, partition_triples, AugmentError, EvalQuery,
};
use crate::client::{ChatCompletionsClient, DecodingParams, EndpointConfig};
use crate::corpus::{load_corpus, Corpus, CorpusError, CorpusFormat};
use crate::embedder::{init_model, EmbedError, EmbeddingModel, DEFAULT_EMB_DIM, DEFAULT_FEAT_DIM};
use crate::metrics::{GenerationMetricOptions, GenerationReport, MetricsError, RetrievalReport};
use crate::querygen::{
    generate_queries_with, synthesize_queries, write_queries, GenerateOptions, GeneratedQuery,
    PromptLanguage, QueryGenError, QueryType,
};
use crate::ragpipe::{
    evaluate_end2end, EchoGenerator, GeneratorClient, RagError, RagOptions, RagPipeline,
    DEFAULT_MAX_INPUT_TOKENS,
};
use crate::retriever::{build_index, DenseRetriever, RetrieverError, VectorIndex, DEFAULT_TOP_K};
use crate::trainer::{train, TrainConfig, TrainError, TrainLog};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Generate,
    Mine,
    Partition,
    Train,
    Index,
    Evaluate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Ingest => "ingest",
            Stage::Generate => "generate",
            Stage::Mine => "mine",
            Stage::Partition => "partition",
            Stage::Train => "train",
            Stage::Index => "index",
            Stage::Evaluate => "evaluate",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StageError {
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
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("stage {stage} failed: {source}")]
    StageFailure {
        stage: Stage,
        #[source]
        source: StageError,
    },
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Into<StageError>> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError::StageFailure {
            stage,
            source: e.into(),
        })
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> StageError {
    StageError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub corpus: PathBuf,
    pub output_dir: PathBuf,
    /// Query file reused when the generate stage is disabled.
    pub queries: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            corpus: PathBuf::from("data/synthetic_corpus.jsonl"),
            output_dir: PathBuf::from("runs/synthetic"),
            queries: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageToggles {
    pub generate: bool,
    pub train: bool,
    pub evaluate: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        Self {
            generate: true,
            train: true,
            evaluate: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuerySource {
    /// Seeded offline rewrites.
    #[default]
    Synthetic,
    /// The chat endpoint in `endpoints.querygen`.
    Llm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryGenConfig {
    pub source: QuerySource,
    pub types: Vec<QueryType>,
    pub k_per_type: usize,
    pub seed: u64,
    pub language: PromptLanguage,
    pub max_concurrency: usize,
    pub system_prompt: String,
}

impl Default for QueryGenConfig {
    fn default() -> Self {
        Self {
            source: QuerySource::Synthetic,
            types: QueryType::ALL.to_vec(),
            k_per_type: crate::querygen::DEFAULT_K_PER_TYPE,
            seed: 1,
            language: PromptLanguage::English,
            max_concurrency: 4,
            system_prompt: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub n_neg: usize,
    pub holdout_per_pair: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            n_neg: augment::DEFAULT_N_NEG,
            holdout_per_pair: 3,
            seed: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub feat_dim: usize,
    pub emb_dim: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            feat_dim: DEFAULT_FEAT_DIM,
            emb_dim: DEFAULT_EMB_DIM,
            seed: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    /// Echoes the top context; offline and deterministic.
    #[default]
    Echo,
    /// The chat endpoint in `endpoints.generator`.
    Chat,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalQueries {
    /// Generated queries withheld by the partition stage.
    #[default]
    HeldOut,
    /// The corpus questions themselves.
    OriginalQuestions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k_set: Vec<usize>,
    pub top_k: usize,
    pub max_input_tokens: usize,
    pub queries: EvalQueries,
    pub generator: GeneratorKind,
    pub decoding: DecodingParams,
    pub metrics: GenerationMetricOptions,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k_set: crate::metrics::DEFAULT_K_SET.to_vec(),
            top_k: DEFAULT_TOP_K,
            max_input_tokens: DEFAULT_MAX_INPUT_TOKENS,
            queries: EvalQueries::HeldOut,
            generator: GeneratorKind::Echo,
            decoding: DecodingParams::default(),
            metrics: GenerationMetricOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointsConfig {
    pub querygen: EndpointConfig,
    pub generator: EndpointConfig,
}

/// Minimum fine-tuned minus untrained gains for an ablation to pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationThresholds {
    pub min_hit1_delta: f64,
    pub min_mrr_delta: f64,
}

impl Default for AblationThresholds {
    fn default() -> Self {
        Self {
            min_hit1_delta: 0.20,
            min_mrr_delta: 0.15,
        }
    }
}

/// Everything a run needs. Serialized as TOML; every field has a default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub stages: StageToggles,
    pub querygen: QueryGenConfig,
    pub augment: AugmentConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub endpoints: EndpointsConfig,
    pub ablation: AblationThresholds,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::InvalidConfig(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }

    /// Reads a TOML file. Relative paths inside it are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative_to(base);
        }
        Ok(cfg)
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.corpus);
        fix(&mut self.paths.output_dir);
        if let Some(q) = self.paths.queries.as_mut() {
            fix(q);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::InvalidConfig(m.to_string()));
        if self.querygen.types.is_empty() {
            return bad("querygen.types is empty");
        }
        if self.querygen.k_per_type == 0 {
            return bad("querygen.k_per_type must be at least 1");
        }
        if self.augment.n_neg == 0 {
            return bad("augment.n_neg must be at least 1");
        }
        if self.model.feat_dim == 0 || self.model.emb_dim == 0 {
            return bad("model dimensions must be positive");
        }
        if self.eval.k_set.is_empty() || self.eval.k_set.contains(&0) || self.eval.top_k == 0 {
            return bad("eval k values must be positive");
        }
        if !self.stages.generate && self.paths.queries.is_none() {
            return bad("paths.queries is required when the generate stage is disabled");
        }
        if self.eval.queries == EvalQueries::HeldOut
            && self.stages.evaluate
            && self.augment.holdout_per_pair == 0
        {
            return bad("held-out evaluation needs augment.holdout_per_pair >= 1");
        }
        if self.trains() {
            self.train
                .validate()
                .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }

    /// Training runs when enabled with a positive epoch count.
    pub fn trains(&self) -> bool {
        self.stages.train && self.train.epochs > 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub artifacts: Vec<ArtifactRecord>,
}

/// Written as `manifest.json` at the end of every run, successful or not.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub crate_version: String,
    pub config: PipelineConfig,
    pub stages: Vec<StageRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl RunManifest {
    pub fn artifact(&self, path: &str) -> Option<&ArtifactRecord> {
        self.stages
            .iter()
            .flat_map(|s| &s.artifacts)
            .find(|a| a.path == path)
    }

    pub fn read(path: &Path) -> Result<Self, StageError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| io_err(path, e))
    }
}

pub fn sha256_file(path: &Path) -> Result<String, StageError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct Recorder {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Recorder {
    fn new(config: &PipelineConfig, dir: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| io_err(dir, e))
            .at(Stage::Ingest)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                manifest_version: MANIFEST_VERSION,
                crate_version: env!("CARGO_PKG_VERSION").to_string(),
                config: config.clone(),
                stages: Vec::new(),
                failure: None,
            },
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, stage: Stage, files: &[&str]) -> Result<(), PipelineError> {
        let mut artifacts = Vec::with_capacity(files.len());
        for name in files {
            let p = self.path(name);
            let bytes = std::fs::read(&p).map_err(|e| io_err(&p, e)).at(stage)?;
            artifacts.push(ArtifactRecord {
                path: name.to_string(),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            });
        }
        self.manifest.stages.push(StageRecord { stage, artifacts });
        Ok(())
    }

    fn write(&mut self, failure: Option<&PipelineError>) -> Result<(), PipelineError> {
        self.manifest.failure = failure.map(|e| e.to_string());
        let p = self.path(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(&p, text + "\n")
            .map_err(|e| io_err(&p, e))
            .at(Stage::Evaluate)
    }
}

/// In-memory results of a run, alongside the files on disk.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub manifest: RunManifest,
    pub corpus: Corpus,
    pub queries: Vec<GeneratedQuery>,
    pub eval_queries: Vec<EvalQuery>,
    pub model: EmbeddingModel,
    pub train_log: TrainLog,
    pub index: VectorIndex,
    pub retrieval: Option<RetrievalReport>,
    pub generation: Option<GenerationReport>,
}

struct Prepared {
    corpus: Corpus,
    queries: Vec<GeneratedQuery>,
    train_set: augment::TripleSet,
    eval_queries: Vec<EvalQuery>,
}

fn prepare(config: &PipelineConfig, rec: &mut Recorder) -> Result<Prepared, PipelineError> {
    let corpus = load_corpus(&config.paths.corpus, CorpusFormat::Jsonl).at(Stage::Ingest)?;
    log::info!("ingest: {} pairs from {}", corpus.len(), config.paths.corpus.display());

    let queries = if config.stages.generate {
        let q = match config.querygen.source {
            QuerySource::Synthetic => synthesize_queries(
                &corpus,
                &config.querygen.types,
                config.querygen.k_per_type,
                config.querygen.seed,
            )
            .at(Stage::Generate)?,
            QuerySource::Llm => {
                let client = ChatCompletionsClient::new(config.endpoints.querygen.clone());
                let opts = GenerateOptions {
                    k_per_type: config.querygen.k_per_type,
                    max_concurrency: config.querygen.max_concurrency,
                    system_prompt: config.querygen.system_prompt.clone(),
                    language: config.querygen.language,
                    decoding: DecodingParams::default(),
                };
                let out = generate_queries_with(&corpus, &config.querygen.types, &opts, &client)
                    .at(Stage::Generate)?;
                for f in &out.failures {
                    log::warn!("generate: {} / {}: {:?}", f.qa_id, f.query_type, f.kind);
                }
                out.queries
            }
        };
        write_queries(&rec.path("queries.jsonl"), &q).at(Stage::Generate)?;
        rec.record(Stage::Generate, &["queries.jsonl"])?;
        q
    } else {
        let p = config.paths.queries.as_ref().expect("validated");
        crate::querygen::read_queries(p).at(Stage::Generate)?
    };
    log::info!("generate: {} queries", queries.len());

    let triples = mine_triples(&queries, &corpus, config.augment.n_neg, config.augment.seed)
        .at(Stage::Mine)?;
    augment::write_triples(&rec.path("triples.jsonl"), &triples).at(Stage::Mine)?;
    rec.record(Stage::Mine, &["triples.jsonl"])?;

    let (train_set, held_out) =
        partition_triples(&triples, config.augment.holdout_per_pair, config.augment.seed)
            .at(Stage::Partition)?;
    let eval_queries = match config.eval.queries {
        EvalQueries::HeldOut => held_out,
        EvalQueries::OriginalQuestions => original_question_queries(&corpus),
    };
    augment::write_triples(&rec.path("train_triples.jsonl"), &train_set).at(Stage::Partition)?;
    augment::write_eval_queries(&rec.path("eval_queries.jsonl"), &eval_queries)
        .at(Stage::Partition)?;
    rec.record(Stage::Partition, &["train_triples.jsonl", "eval_queries.jsonl"])?;
    log::info!(
        "partition: {} training triples, {} eval queries",
        train_set.triples.len(),
        eval_queries.len()
    );
    Ok(Prepared {
        corpus,
        queries,
        train_set,
        eval_queries,
    })
}

fn empty_log(config: &TrainConfig) -> TrainLog {
    TrainLog {
        config: config.clone(),
        seed: config.seed,
        epochs: Vec::new(),
        wall_time: Duration::ZERO,
    }
}

/// Trains (or not) and indexes one arm; files go under `prefix`.
fn train_and_index(
    config: &PipelineConfig,
    prepared: &Prepared,
    initial: EmbeddingModel,
    trains: bool,
    rec: &mut Recorder,
    prefix: &str,
) -> Result<(EmbeddingModel, TrainLog, VectorIndex), PipelineError> {
    let (model, log) = if trains {
        train(initial, &prepared.train_set, &prepared.corpus, &config.train).at(Stage::Train)?
    } else {
        (initial, empty_log(&config.train))
    };
    if let Some(last) = log.epochs.last() {
        log::info!(
            "train: {} epochs, final mean loss {:.4} ({:.1?})",
            log.epochs.len(),
            last.mean_loss,
            log.wall_time
        );
    }
    let model_file = format!("{prefix}model.bin");
    let log_file = format!("{prefix}train_log.jsonl");
    model.persist(&rec.path(&model_file)).at(Stage::Train)?;
    log.write(&rec.path(&log_file)).at(Stage::Train)?;
    rec.record(Stage::Train, &[&model_file, &log_file])?;

    let index = build_index(&model, &prepared.corpus).at(Stage::Index)?;
    let index_file = format!("{prefix}index.bin");
    index.persist(&rec.path(&index_file)).at(Stage::Index)?;
    rec.record(Stage::Index, &[&index_file])?;
    Ok((model, log, index))
}

/// The generator selected by `eval.generator`.
pub fn generator_for(config: &PipelineConfig) -> Box<dyn GeneratorClient> {
    match config.eval.generator {
        GeneratorKind::Echo => Box::new(EchoGenerator),
        GeneratorKind::Chat => Box::new(ChatCompletionsClient::new(config.endpoints.generator.clone())),
    }
}

/// Scores generation for both ablation arms alike: the BERT-style metric
/// always uses the untrained initialization.
fn evaluate_arm(
    config: &PipelineConfig,
    prepared: &Prepared,
    model: &EmbeddingModel,
    index: &VectorIndex,
    scorer: &EmbeddingModel,
    rec: &mut Recorder,
    prefix: &str,
) -> Result<(RetrievalReport, GenerationReport), PipelineError> {
    let retriever = DenseRetriever::new(index, model).at(Stage::Evaluate)?;
    let generator = generator_for(config);
    let pipeline = RagPipeline {
        corpus: &prepared.corpus,
        retriever: &retriever,
        generator: generator.as_ref(),
        options: RagOptions {
            k: config.eval.top_k,
            max_input_tokens: config.eval.max_input_tokens,
            decoding: config.eval.decoding.clone(),
        },
    };
    let report = evaluate_end2end(
        &pipeline,
        &prepared.eval_queries,
        &config.eval.k_set,
        scorer,
        &config.eval.metrics,
    )
    .at(Stage::Evaluate)?;
    let r_file = format!("{prefix}retrieval_report.jsonl");
    let g_file = format!("{prefix}generation_report.jsonl");
    report.retrieval.write_jsonl(&rec.path(&r_file)).at(Stage::Evaluate)?;
    report.generation.write_jsonl(&rec.path(&g_file)).at(Stage::Evaluate)?;
    rec.record(Stage::Evaluate, &[&r_file, &g_file])?;
    Ok((report.retrieval, report.generation))
}

fn finish<T>(rec: &mut Recorder, result: Result<T, PipelineError>) -> Result<T, PipelineError> {
    match result {
        Ok(v) => {
            rec.write(None)?;
            Ok(v)
        }
        Err(e) => {
            if let Err(w) = rec.write(Some(&e)) {
                log::error!("could not write manifest after failure: {w}");
            }
            Err(e)
        }
    }
}

/// Runs generate, mine, partition, train, index and evaluate in that order,
/// writing each stage's files under `paths.output_dir` and a manifest with
/// their SHA-256 digests. On failure, files of completed stages are left in
/// place and the manifest records the error.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineRun, PipelineError> {
    config.validate()?;
    let mut rec = Recorder::new(config, &config.paths.output_dir)?;
    let result = (|| {
        let prepared = prepare(config, &mut rec)?;
        let initial =
            init_model(config.model.feat_dim, config.model.emb_dim, config.model.seed).at(Stage::Train)?;
        let scorer = config.stages.evaluate.then(|| initial.clone());
        let (model, train_log, index) =
            train_and_index(config, &prepared, initial, config.trains(), &mut rec, "")?;
        let (retrieval, generation) = match scorer {
            Some(scorer) => {
                let (r, g) = evaluate_arm(config, &prepared, &model, &index, &scorer, &mut rec, "")?;
                (Some(r), Some(g))
            }
            None => (None, None),
        };
        Ok((prepared, model, train_log, index, retrieval, generation))
    })();
    let (prepared, model, train_log, index, retrieval, generation) = finish(&mut rec, result)?;
    Ok(PipelineRun {
        manifest: rec.manifest,
        corpus: prepared.corpus,
        queries: prepared.queries,
        eval_queries: prepared.eval_queries,
        model,
        train_log,
        index,
        retrieval,
        generation,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub retrieval: RetrievalReport,
    pub generation: GenerationReport,
}

/// Fine-tuned against untrained, on the same corpus, eval queries and seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub untrained: ArmReport,
    pub finetuned: ArmReport,
    /// `finetuned - untrained`, metric by metric.
    pub delta: ArmReport,
    pub thresholds: AblationThresholds,
}

impl AblationReport {
    pub fn hit1_delta(&self) -> Option<f64> {
        self.delta.retrieval.hit.get(&1).copied()
    }

    pub fn mrr_delta(&self) -> f64 {
        self.delta.retrieval.mrr
    }

    /// Both thresholds met. Fails when Hit@1 was not measured.
    pub fn passes(&self) -> bool {
        self.hit1_delta()
            .is_some_and(|d| d >= self.thresholds.min_hit1_delta)
            && self.mrr_delta() >= self.thresholds.min_mrr_delta
    }

    /// One line per metric: untrained, fine-tuned, delta.
    pub fn table(&self) -> String {
        let mut s = format!("{:<12} {:>3} {:>9} {:>9} {:>9}\n", "metric", "k", "untrained", "finetuned", "delta");
        let rows = self
            .untrained
            .retrieval
            .records()
            .into_iter()
            .chain(self.untrained.generation.records())
            .zip(
                self.finetuned
                    .retrieval
                    .records()
                    .into_iter()
                    .chain(self.finetuned.generation.records()),
            );
        for (u, f) in rows {
            let k = u.k.map_or("-".to_string(), |k| k.to_string());
            s.push_str(&format!(
                "{:<12} {:>3} {:>9.4} {:>9.4} {:>+9.4}\n",
                u.metric,
                k,
                u.value,
                f.value,
                f.value - u.value
            ));
        }
        s
    }
}

fn diff_maps(
    a: &std::collections::BTreeMap<usize, f64>,
    b: &std::collections::BTreeMap<usize, f64>,
) -> std::collections::BTreeMap<usize, f64> {
    b.iter().map(|(k, v)| (*k, v - a[k])).collect()
}

fn delta(untrained: &ArmReport, finetuned: &ArmReport) -> ArmReport {
    let (ur, fr) = (&untrained.retrieval, &finetuned.retrieval);
    let (ug, fg) = (&untrained.generation, &finetuned.generation);
    ArmReport {
        retrieval: RetrievalReport {
            n_queries: fr.n_queries,
            mrr: fr.mrr - ur.mrr,
            hit: diff_maps(&ur.hit, &fr.hit),
            precision: diff_maps(&ur.precision, &fr.precision),
            ndcg: diff_maps(&ur.ndcg, &fr.ndcg),
        },
        generation: GenerationReport {
            n_items: fg.n_items,
            rouge1: fg.rouge1 - ug.rouge1,
            rouge_l: fg.rouge_l - ug.rouge_l,
            bleu: [0, 1, 2, 3].map(|i| fg.bleu[i] - ug.bleu[i]),
            bert_p: fg.bert_p - ug.bert_p,
            bert_r: fg.bert_r - ug.bert_r,
            bert_f1: fg.bert_f1 - ug.bert_f1,
        },
    }
}

/// Evaluates the untrained initialization and the fine-tuned model on the
/// same held-out queries. Only the training stage differs between the arms;
/// their files go under `untrained/` and `finetuned/` in the output
/// directory, next to `ablation_report.json`.
pub fn run_ablation(config: &PipelineConfig) -> Result<AblationReport, PipelineError> {
    let mut config = config.clone();
    config.stages.evaluate = true;
    config.validate()?;
    let mut rec = Recorder::new(&config, &config.paths.output_dir)?;
    let result = (|| {
        for arm in ["untrained", "finetuned"] {
            let d = rec.path(arm);
            std::fs::create_dir_all(&d).map_err(|e| io_err(&d, e)).at(Stage::Train)?;
        }
        let prepared = prepare(&config, &mut rec)?;
        let initial =
            init_model(config.model.feat_dim, config.model.emb_dim, config.model.seed).at(Stage::Train)?;
        let scorer = initial.clone();

        let (m, _, idx) = train_and_index(&config, &prepared, initial.clone(), false, &mut rec, "untrained/")?;
        let (r, g) = evaluate_arm(&config, &prepared, &m, &idx, &scorer, &mut rec, "untrained/")?;
        let untrained = ArmReport { retrieval: r, generation: g };
        drop((m, idx));

        let (m, _, idx) =
            train_and_index(&config, &prepared, initial, config.trains(), &mut rec, "finetuned/")?;
        let (r, g) = evaluate_arm(&config, &prepared, &m, &idx, &scorer, &mut rec, "finetuned/")?;
        let finetuned = ArmReport { retrieval: r, generation: g };

        let report = AblationReport {
            delta: delta(&untrained, &finetuned),
            untrained,
            finetuned,
            thresholds: config.ablation.clone(),
        };
        let p = rec.path("ablation_report.json");
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(&p, text + "\n").map_err(|e| io_err(&p, e)).at(Stage::Evaluate)?;
        rec.record(Stage::Evaluate, &["ablation_report.json"])?;
        Ok(report)
    })();
    finish(&mut rec, result)
}
