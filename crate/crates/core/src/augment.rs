//! Positive/negative training triples and train/eval partitioning.
//!
//! Each generated query is paired with the answer of the pair it was
//! generated from (positive) and with answers drawn at random from the rest
//! of the corpus (negatives).

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::jsonl::{self, JsonlError};
use crate::querygen::{GeneratedQuery, QueryType};
use crate::rng::{derive_seed, SeededRng};

pub const DEFAULT_N_NEG: usize = 1;

const MINE_STREAM: u64 = 0x6d696e65;
const HOLDOUT_STREAM: u64 = 0x686f6c64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingTriple {
    pub query_text: String,
    pub positive_answer_id: String,
    pub negative_answer_ids: Vec<String>,
    /// Type of the generated query this triple came from, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_type: Option<QueryType>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleSet {
    pub triples: Vec<TrainingTriple>,
    pub corpus_name: String,
    pub seed: u64,
}

/// A held-out query with its single relevant answer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalQuery {
    pub id: String,
    pub text: String,
    pub positive_answer_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_type: Option<QueryType>,
}

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("corpus has {corpus_len} entries; need at least {needed} for n_neg={n_neg}")]
    CorpusTooSmall {
        corpus_len: usize,
        n_neg: usize,
        needed: usize,
    },
    #[error("query references unknown pair {0}")]
    DanglingQueryReference(String),
    #[error("pair {qa_id} has {available} queries, cannot hold out {requested}")]
    InsufficientQueries {
        qa_id: String,
        available: usize,
        requested: usize,
    },
    #[error("n_neg must be at least 1")]
    InvalidNegativeCount,
    #[error("triple file is empty")]
    EmptyTripleFile,
    #[error(transparent)]
    Io(#[from] JsonlError),
}

/// One triple per query, negatives sampled without replacement from the
/// answers of every other pair whose answer text differs from the positive's.
///
/// Sampling for query `i` uses its own stream derived from `(seed, i)`, so
/// the output is a pure function of the inputs.
pub fn mine_triples(
    queries: &[GeneratedQuery],
    corpus: &Corpus,
    n_neg: usize,
    seed: u64,
) -> Result<TripleSet, AugmentError> {
    if n_neg == 0 {
        return Err(AugmentError::InvalidNegativeCount);
    }
    if corpus.len() < n_neg + 1 {
        return Err(AugmentError::CorpusTooSmall {
            corpus_len: corpus.len(),
            n_neg,
            needed: n_neg + 1,
        });
    }
    let entries = corpus.entries();
    let mut pools: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut triples = Vec::with_capacity(queries.len());
    for (qi, q) in queries.iter().enumerate() {
        let pos = corpus
            .index_of(&q.source_qa_id)
            .ok_or_else(|| AugmentError::DanglingQueryReference(q.source_qa_id.clone()))?;
        let pool = pools.entry(pos).or_insert_with(|| {
            let answer = entries[pos].answer.as_str();
            (0..entries.len())
                .filter(|&j| j != pos && entries[j].answer != answer)
                .collect()
        });
        if pool.len() < n_neg {
            return Err(AugmentError::CorpusTooSmall {
                corpus_len: corpus.len(),
                n_neg,
                needed: n_neg + 1 + (corpus.len() - 1 - pool.len()),
            });
        }
        let mut rng = SeededRng::with_stream(derive_seed(seed, &[qi as u64]), MINE_STREAM);
        let negative_answer_ids = rng
            .sample_indices(pool.len(), n_neg)
            .into_iter()
            .map(|k| entries[pool[k]].id.clone())
            .collect();
        triples.push(TrainingTriple {
            query_text: q.text.clone(),
            positive_answer_id: q.source_qa_id.clone(),
            negative_answer_ids,
            query_type: Some(q.query_type),
        });
    }
    Ok(TripleSet {
        triples,
        corpus_name: corpus.name().to_string(),
        seed,
    })
}

/// Withholds `holdout_per_pair` triples of every pair as evaluation queries.
///
/// Eval query ids are `"{pair id}#{n}"` with `n` counting that pair's
/// held-out queries in input order. Both outputs keep input order.
pub fn partition_triples(
    tripleset: &TripleSet,
    holdout_per_pair: usize,
    seed: u64,
) -> Result<(TripleSet, Vec<EvalQuery>), AugmentError> {
    if holdout_per_pair == 0 {
        return Ok((tripleset.clone(), Vec::new()));
    }
    let mut by_pair: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in tripleset.triples.iter().enumerate() {
        by_pair.entry(&t.positive_answer_id).or_default().push(i);
    }
    let mut held = HashSet::new();
    for (pair, idxs) in &by_pair {
        if idxs.len() <= holdout_per_pair {
            return Err(AugmentError::InsufficientQueries {
                qa_id: pair.to_string(),
                available: idxs.len(),
                requested: holdout_per_pair,
            });
        }
        let mut rng = SeededRng::with_stream(
            derive_seed(seed, &[crate::rng::label_seed(pair)]),
            HOLDOUT_STREAM,
        );
        for k in rng.sample_indices(idxs.len(), holdout_per_pair) {
            held.insert(idxs[k]);
        }
    }
    let mut train = Vec::new();
    let mut eval = Vec::new();
    let mut counters: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, t) in tripleset.triples.iter().enumerate() {
        if held.contains(&i) {
            let n = counters.entry(&t.positive_answer_id).or_insert(0);
            eval.push(EvalQuery {
                id: format!("{}#{}", t.positive_answer_id, n),
                text: t.query_text.clone(),
                positive_answer_id: t.positive_answer_id.clone(),
                query_type: t.query_type,
            });
            *n += 1;
        } else {
            train.push(t.clone());
        }
    }
    Ok((
        TripleSet {
            triples: train,
            corpus_name: tripleset.corpus_name.clone(),
            seed: tripleset.seed,
        },
        eval,
    ))
}

/// Original questions as evaluation queries, one per pair (id = pair id).
pub fn original_question_queries(corpus: &Corpus) -> Vec<EvalQuery> {
    corpus
        .entries()
        .iter()
        .map(|qa| EvalQuery {
            id: qa.id.clone(),
            text: qa.question.clone(),
            positive_answer_id: qa.id.clone(),
            query_type: None,
        })
        .collect()
}

/// Checks that every id a triple mentions exists in `corpus`.
pub fn validate_triples(tripleset: &TripleSet, corpus: &Corpus) -> Result<(), AugmentError> {
    for t in &tripleset.triples {
        for id in std::iter::once(&t.positive_answer_id).chain(&t.negative_answer_ids) {
            if !corpus.contains(id) {
                return Err(AugmentError::DanglingQueryReference(id.clone()));
            }
        }
    }
    Ok(())
}

/// Writes one triple per line. Corpus name and seed are not part of the
/// line format; callers that need them record them in the run manifest.
pub fn write_triples(path: &Path, tripleset: &TripleSet) -> Result<(), AugmentError> {
    Ok(jsonl::write_records(path, &tripleset.triples)?)
}

pub fn read_triples(path: &Path, corpus_name: &str, seed: u64) -> Result<TripleSet, AugmentError> {
    let triples: Vec<TrainingTriple> = jsonl::read_records(path)?
        .into_iter()
        .map(|(_, t)| t)
        .collect();
    Ok(TripleSet {
        triples,
        corpus_name: corpus_name.to_string(),
        seed,
    })
}

pub fn write_eval_queries(path: &Path, queries: &[EvalQuery]) -> Result<(), AugmentError> {
    Ok(jsonl::write_records(path, queries)?)
}

pub fn read_eval_queries(path: &Path) -> Result<Vec<EvalQuery>, AugmentError> {
    Ok(jsonl::read_records(path)?
        .into_iter()
        .map(|(_, q)| q)
        .collect())
}
