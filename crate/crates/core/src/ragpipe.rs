//! Retrieve, build the connected prompt, generate.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::augment::EvalQuery;
use crate::client::{ClientError, DecodingParams};
use crate::corpus::Corpus;
use crate::embedder::{tokenize, EmbeddingModel};
use crate::metrics::{
    evaluate_generation, GenerationMetricOptions, GenerationReport, Judgments, MetricsError,
    RetrievalReport,
};
use crate::retriever::{DenseRetriever, RankedList, Retriever, RetrieverError, VectorIndex, DEFAULT_TOP_K};

pub const SYSTEM_PROMPT: &str = "You are an expert in the field of intellectual property who is good at answering questions based on given documents. Please answer the questions based on the given documents.";

pub const DEFAULT_MAX_INPUT_TOKENS: usize = 4096;

/// Everything sent to the generator for one query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub included_doc_ids: Vec<String>,
    /// Texts of the included contexts, in rank order.
    pub context_texts: Vec<String>,
    /// Set when retrieved contexts were dropped to respect the cap.
    pub truncated: bool,
}

impl PromptBundle {
    /// Tokens in system and user text, counted with the project tokenizer.
    pub fn token_count(&self) -> usize {
        tokenize(&self.system_text).len() + tokenize(&self.user_text).len()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RagError {
    #[error("prompt without any context already has {tokens} tokens (cap {cap})")]
    QueryAloneExceedsCap { tokens: usize, cap: usize },
    #[error("retrieved document {0} is not in the corpus")]
    UnknownDocument(String),
    #[error("generator failed: {source}")]
    Generator {
        #[source]
        source: ClientError,
        /// The prompt that failed, for replay.
        prompt: Box<PromptBundle>,
        hits: Box<RankedList>,
    },
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error(transparent)]
    Retrieval(#[from] RetrieverError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn user_text(query: &str, contexts: &[&str]) -> String {
    format!("Question: {query}\nContext: {}", contexts.join("\n\n"))
}

/// Builds the prompt for `query` from rank-ordered `(doc_id, text)` pairs.
///
/// Contexts are dropped whole from the tail until the token count of system
/// plus user text is at most `max_input_tokens`.
pub fn assemble_prompt(
    query: &str,
    docs: &[(&str, &str)],
    max_input_tokens: usize,
) -> Result<PromptBundle, RagError> {
    let base = tokenize(SYSTEM_PROMPT).len() + tokenize(&user_text(query, &[])).len();
    if base > max_input_tokens {
        return Err(RagError::QueryAloneExceedsCap {
            tokens: base,
            cap: max_input_tokens,
        });
    }
    // The separators carry no tokens, so counts add up per context.
    let mut used = base;
    let mut keep = 0;
    for (_, text) in docs {
        let t = tokenize(text).len();
        if used + t > max_input_tokens {
            break;
        }
        used += t;
        keep += 1;
    }
    let kept = &docs[..keep];
    let texts: Vec<&str> = kept.iter().map(|(_, t)| *t).collect();
    Ok(PromptBundle {
        system_text: SYSTEM_PROMPT.to_string(),
        user_text: user_text(query, &texts),
        included_doc_ids: kept.iter().map(|(id, _)| id.to_string()).collect(),
        context_texts: texts.iter().map(|t| t.to_string()).collect(),
        truncated: keep < docs.len(),
    })
}

/// A generation backend for assembled prompts.
pub trait GeneratorClient: Send + Sync {
    fn complete(&self, prompt: &PromptBundle, decoding: &DecodingParams) -> Result<String, ClientError>;
}

/// Stub that answers with the first included context verbatim, or the
/// empty string when there is none.
#[derive(Clone, Copy, Debug, Default)]
pub struct EchoGenerator;

impl GeneratorClient for EchoGenerator {
    fn complete(&self, prompt: &PromptBundle, _: &DecodingParams) -> Result<String, ClientError> {
        Ok(prompt.context_texts.first().cloned().unwrap_or_default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RagAnswer {
    pub query: String,
    pub hits: RankedList,
    pub prompt: PromptBundle,
    pub answer_text: String,
    pub latency_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RagOptions {
    pub k: usize,
    pub max_input_tokens: usize,
    pub decoding: DecodingParams,
}

impl Default for RagOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_TOP_K,
            max_input_tokens: DEFAULT_MAX_INPUT_TOKENS,
            decoding: DecodingParams::default(),
        }
    }
}

/// Retrieval over `corpus` wired to a generator.
pub struct RagPipeline<'a> {
    pub corpus: &'a Corpus,
    pub retriever: &'a dyn Retriever,
    pub generator: &'a dyn GeneratorClient,
    pub options: RagOptions,
}

impl RagPipeline<'_> {
    pub fn answer(&self, query: &str) -> Result<RagAnswer, RagError> {
        self.answer_with_id("", query, self.options.k)
    }

    pub fn answer_with_id(&self, query_id: &str, query: &str, k: usize) -> Result<RagAnswer, RagError> {
        let start = Instant::now();
        let hits = self.retriever.retrieve(query_id, query, k)?;
        self.generate(query, hits, start)
    }

    fn generate(&self, query: &str, hits: RankedList, start: Instant) -> Result<RagAnswer, RagError> {
        let docs = hits
            .hits
            .iter()
            .map(|h| {
                self.corpus
                    .get(&h.doc_id)
                    .map(|qa| (h.doc_id.as_str(), qa.answer.as_str()))
                    .ok_or_else(|| RagError::UnknownDocument(h.doc_id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let prompt = assemble_prompt(query, &docs, self.options.max_input_tokens)?;
        let answer_text = match self.generator.complete(&prompt, &self.options.decoding) {
            Ok(t) => t,
            Err(source) => {
                return Err(RagError::Generator {
                    source,
                    prompt: Box::new(prompt),
                    hits: Box::new(hits),
                })
            }
        };
        Ok(RagAnswer {
            query: query.to_string(),
            hits,
            prompt,
            answer_text,
            latency_ms: start.elapsed().as_millis() as u64,
        })
    }
}

/// One-shot dense RAG answer.
pub fn answer(
    query: &str,
    corpus: &Corpus,
    index: &VectorIndex,
    model: &EmbeddingModel,
    generator: &dyn GeneratorClient,
    options: &RagOptions,
) -> Result<RagAnswer, RagError> {
    let retriever = DenseRetriever::new(index, model)?;
    RagPipeline {
        corpus,
        retriever: &retriever,
        generator,
        options: options.clone(),
    }
    .answer(query)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EndToEndReport {
    pub retrieval: RetrievalReport,
    pub generation: GenerationReport,
    pub answers: Vec<RagAnswer>,
}

/// One pass over `eval_queries`: the full ranking feeds the retrieval
/// report, its top `options.k` feed the prompt, and the generated answer is
/// scored against the positive pair's answer text. `model` scores the
/// BERT-style metrics.
pub fn evaluate_end2end(
    pipeline: &RagPipeline<'_>,
    eval_queries: &[EvalQuery],
    k_set: &[usize],
    model: &EmbeddingModel,
    metric_options: &GenerationMetricOptions,
) -> Result<EndToEndReport, RagError> {
    if eval_queries.is_empty() {
        return Err(RagError::EmptyEvalSet);
    }
    let mut ranked = Vec::with_capacity(eval_queries.len());
    let mut answers = Vec::with_capacity(eval_queries.len());
    let mut predictions = BTreeMap::new();
    let mut references = BTreeMap::new();
    for q in eval_queries {
        let start = Instant::now();
        let full = pipeline.retriever.retrieve(&q.id, &q.text, pipeline.retriever.len())?;
        let mut top = full.clone();
        top.hits.truncate(pipeline.options.k);
        let ans = pipeline.generate(&q.text, top, start)?;
        let reference = pipeline
            .corpus
            .get(&q.positive_answer_id)
            .ok_or_else(|| RagError::UnknownDocument(q.positive_answer_id.clone()))?;
        predictions.insert(q.id.clone(), ans.answer_text.clone());
        references.insert(q.id.clone(), reference.answer.clone());
        ranked.push(full);
        answers.push(ans);
    }
    let retrieval =
        RetrievalReport::from_rankings(&ranked, &Judgments::from_eval_queries(eval_queries), k_set)?;
    let generation = evaluate_generation(&predictions, &references, model, metric_options)?;
    Ok(EndToEndReport {
        retrieval,
        generation,
        answers,
    })
}
