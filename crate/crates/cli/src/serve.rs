//! HTTP service over loaded, immutable artifacts.
//!
//! `POST /v1/query` takes `{"query": text, "k"?: n}` and answers with
//! `{"answer", "contexts": [{"doc_id", "score", "text"}]}`. `GET /v1/health`
//! reports the crate version and the fingerprints of what was loaded.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::info;
use qfine::corpus::{load_corpus, Corpus, CorpusFormat};
use qfine::embedder::EmbeddingModel;
use qfine::pipeline::{generator_for, GeneratorKind, PipelineConfig};
use qfine::ragpipe::{GeneratorClient, RagError, RagOptions, RagPipeline};
use qfine::retriever::{DenseRetriever, RankedList, VectorIndex};
use serde::{Deserialize, Serialize};

use crate::args::{GeneratorArg, ServeArgs};
use crate::CliError;

/// Everything a request reads. Nothing in here is mutated after startup.
pub struct AppState {
    pub corpus: Corpus,
    pub index: VectorIndex,
    pub model: EmbeddingModel,
    pub generator: Box<dyn GeneratorClient>,
    pub options: RagOptions,
}

impl AppState {
    /// Fails when the index was built with a different model.
    pub fn new(
        corpus: Corpus,
        index: VectorIndex,
        model: EmbeddingModel,
        generator: Box<dyn GeneratorClient>,
        options: RagOptions,
    ) -> Result<Self, CliError> {
        index.check_model(&model)?;
        if let Some(id) = index.doc_ids().iter().find(|id| !corpus.contains(id)) {
            return Err(CliError::Usage(format!("index document {id} is not in the corpus")));
        }
        Ok(Self {
            corpus,
            index,
            model,
            generator,
            options,
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    pub query: String,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Context {
    pub doc_id: String,
    pub score: f64,
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct QueryResponse {
    pub answer: String,
    pub contexts: Vec<Context>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contexts: Vec<Context>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub model_fingerprint: String,
    pub index_model_fingerprint: String,
    pub index_checksum: String,
    pub documents: usize,
}

fn error(status: StatusCode, message: impl Into<String>, contexts: Vec<Context>) -> Response {
    (
        status,
        Json(ErrorBody {
            error: message.into(),
            contexts,
        }),
    )
        .into_response()
}

fn contexts(corpus: &Corpus, hits: &RankedList) -> Vec<Context> {
    hits.hits
        .iter()
        .map(|h| Context {
            doc_id: h.doc_id.clone(),
            score: h.score,
            text: corpus.get(&h.doc_id).map(|qa| qa.answer.clone()).unwrap_or_default(),
        })
        .collect()
}

fn answer(state: &AppState, query: &str, k: usize) -> Response {
    if state.model.embed(query).degenerate {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "query has no features", Vec::new());
    }
    let retriever = match DenseRetriever::new(&state.index, &state.model) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), Vec::new()),
    };
    let pipeline = RagPipeline {
        corpus: &state.corpus,
        retriever: &retriever,
        generator: state.generator.as_ref(),
        options: state.options.clone(),
    };
    match pipeline.answer_with_id("", query, k) {
        Ok(a) => Json(QueryResponse {
            contexts: contexts(&state.corpus, &a.hits),
            answer: a.answer_text,
        })
        .into_response(),
        Err(RagError::Generator { source, hits, .. }) => error(
            StatusCode::BAD_GATEWAY,
            format!("generator failed: {source}"),
            contexts(&state.corpus, &hits),
        ),
        Err(RagError::QueryAloneExceedsCap { tokens, cap }) => error(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("query too long: {tokens} tokens, cap {cap}"),
            Vec::new(),
        ),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), Vec::new()),
    }
}

async fn query(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: QueryRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed body: {e}"), Vec::new()),
    };
    let k = req.k.unwrap_or(state.options.k);
    if k == 0 {
        return error(StatusCode::BAD_REQUEST, "k must be at least 1", Vec::new());
    }
    match tokio::task::spawn_blocking(move || answer(&state, &req.query, k)).await {
        Ok(r) => r,
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), Vec::new()),
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        model_fingerprint: state.model.fingerprint_hex(),
        index_model_fingerprint: format!("{:016x}", state.index.model_fingerprint()),
        index_checksum: format!("{:016x}", state.index.checksum()),
        documents: state.index.len(),
    })
}

async fn log_requests(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let path = req.uri().path().to_string();
    let start = Instant::now();
    let res = next.run(req).await;
    info!(
        "{method} {path} {} {:.1}ms",
        res.status().as_u16(),
        start.elapsed().as_secs_f64() * 1e3
    );
    res
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/query", post(query))
        .route("/v1/health", get(health))
        .layer(middleware::from_fn(log_requests))
        .with_state(state)
}

pub fn serve_command(a: ServeArgs, config: &PipelineConfig) -> Result<(), CliError> {
    let corpus_path = a.corpus.corpus.as_ref().unwrap_or(&config.paths.corpus);
    let corpus = load_corpus(corpus_path, CorpusFormat::Jsonl)?;
    let index = VectorIndex::restore(&a.index)?;
    let model = EmbeddingModel::restore(&a.model)?;
    let mut cfg = config.clone();
    match a.generator {
        Some(GeneratorArg::Echo) => cfg.eval.generator = GeneratorKind::Echo,
        Some(GeneratorArg::Chat) => cfg.eval.generator = GeneratorKind::Chat,
        None => {}
    }
    let options = RagOptions {
        k: cfg.eval.top_k,
        max_input_tokens: cfg.eval.max_input_tokens,
        decoding: cfg.eval.decoding.clone(),
    };
    let state = AppState::new(corpus, index, model, generator_for(&cfg), options)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Server(e.to_string()))?;
    runtime.block_on(serve(Arc::new(state), a.addr))
}

pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> Result<(), CliError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::Server(format!("bind {addr}: {e}")))?;
    eprintln!(
        "serving {} documents on http://{}",
        state.index.len(),
        listener.local_addr().map_err(|e| CliError::Server(e.to_string()))?
    );
    axum::serve(listener, router(state))
        .await
        .map_err(|e| CliError::Server(e.to_string()))
}
