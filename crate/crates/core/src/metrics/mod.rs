//! Retrieval and generation evaluation.

mod bertscore;
mod diversity;
mod report;
mod retrieval;
mod text;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::augment::EvalQuery;
use crate::embedder::EmbeddingModel;
use crate::retriever::{retrieve_all, Retriever, RetrieverError};
pub use bertscore::{bert_prf, BertScore};
pub use diversity::{diversity_report, DiversityRow, DiversityTable};
pub use report::{GenerationReport, MetricRecord, RetrievalReport};
pub use retrieval::{hit_at_k, mrr, ndcg_at_k, precision_at_k, Judgments};
pub use text::{
    bleu, lcs_len, ngram_profile, rouge1, rouge1_with, rouge_l, NgramProfile, Rouge1Mode, TextPair,
};

pub const DEFAULT_K_SET: [usize; 2] = [1, 3];

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("no judgment for query {0}")]
    MissingJudgment(String),
    #[error("query {0} has no positive relevance grade")]
    ZeroIdealGain(String),
    #[error("negative or non-finite grade for query {0}")]
    InvalidGrade(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("reference text has no tokens")]
    EmptyReference,
    #[error("text has no tokens")]
    EmptyText,
    #[error("prediction and reference ids differ (first difference: {0})")]
    IdSetMismatch(String),
    #[error("query references unknown pair {0}")]
    DanglingQueryReference(String),
    #[error(transparent)]
    Retrieval(#[from] RetrieverError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Jsonl(#[from] crate::jsonl::JsonlError),
}

/// Ranks the whole collection for every query, then computes Hit@k,
/// Precision@k and NDCG@k for each k in `k_set` and MRR over the full
/// ranking.
pub fn evaluate_retrieval(
    retriever: &dyn Retriever,
    eval_queries: &[EvalQuery],
    k_set: &[usize],
) -> Result<RetrievalReport, MetricsError> {
    if eval_queries.is_empty() {
        return Err(MetricsError::EmptyEvalSet);
    }
    let ranked = retrieve_all(retriever, eval_queries, None)?;
    let judgments = Judgments::from_eval_queries(eval_queries);
    RetrievalReport::from_rankings(&ranked, &judgments, k_set)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationMetricOptions {
    pub rouge1_mode: Rouge1Mode,
    pub rouge_l_beta: f64,
    pub bleu_strict: bool,
}

impl Default for GenerationMetricOptions {
    fn default() -> Self {
        Self {
            rouge1_mode: Rouge1Mode::Recall,
            rouge_l_beta: 1.0,
            bleu_strict: false,
        }
    }
}

/// Per-item generation scores. A candidate without tokens scores 0 on
/// every metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationScores {
    pub rouge1: f64,
    pub rouge_l: f64,
    pub bleu: [f64; 4],
    pub bert: BertScore,
}

pub fn score_generation(
    candidate: &str,
    reference: &str,
    model: &EmbeddingModel,
    options: &GenerationMetricOptions,
) -> Result<GenerationScores, MetricsError> {
    let pair = TextPair::new(candidate, reference);
    if pair.reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    if pair.candidate.is_empty() {
        return Ok(GenerationScores {
            rouge1: 0.0,
            rouge_l: 0.0,
            bleu: [0.0; 4],
            bert: BertScore {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
            },
        });
    }
    let b = bleu(&pair, 4, options.bleu_strict)?;
    Ok(GenerationScores {
        rouge1: rouge1_with(&pair, options.rouge1_mode)?,
        rouge_l: rouge_l(&pair, options.rouge_l_beta)?,
        bleu: [b[0], b[1], b[2], b[3]],
        bert: bert_prf(&pair, model)?,
    })
}

/// Macro-averages per-item scores; items are visited in id order.
pub fn evaluate_generation(
    predictions: &BTreeMap<String, String>,
    references: &BTreeMap<String, String>,
    model: &EmbeddingModel,
    options: &GenerationMetricOptions,
) -> Result<GenerationReport, MetricsError> {
    if let Some(id) = predictions
        .keys()
        .find(|k| !references.contains_key(*k))
        .or_else(|| references.keys().find(|k| !predictions.contains_key(*k)))
    {
        return Err(MetricsError::IdSetMismatch(id.clone()));
    }
    if references.is_empty() {
        return Err(MetricsError::EmptyEvalSet);
    }
    let scores = references
        .iter()
        .map(|(id, r)| score_generation(&predictions[id], r, model, options))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GenerationReport::from_scores(&scores))
}
