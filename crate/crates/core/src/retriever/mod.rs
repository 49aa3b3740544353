//! Exact cosine top-k search and an Okapi BM25 baseline.

mod bm25;
mod dense;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::augment::EvalQuery;
pub use bm25::{Bm25Index, DEFAULT_B, DEFAULT_K1};
pub use dense::{build_index, search, DenseRetriever, VectorIndex, INDEX_FORMAT_VERSION};

pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum RetrieverError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("answer {0} has no features")]
    DegenerateText(String),
    #[error("index was built with model {index:016x}, query model is {model:016x}")]
    FingerprintMismatch { index: u64, model: u64 },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("unsupported index format version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt index file: {0}")]
    CorruptFile(String),
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub doc_id: String,
    pub score: f64,
}

/// Hits ordered by descending score, ties by ascending doc id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub hits: Vec<Hit>,
    /// Set when the query embedded to the zero vector.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl RankedList {
    /// 1-based rank of `doc_id`, if present.
    pub fn rank_of(&self, doc_id: &str) -> Option<usize> {
        self.hits.iter().position(|h| h.doc_id == doc_id).map(|i| i + 1)
    }
}

/// Anything that ranks corpus entries for a text query.
pub trait Retriever: Send + Sync {
    fn retrieve(&self, query_id: &str, query: &str, k: usize) -> Result<RankedList, RetrieverError>;

    /// Number of indexed documents.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The total order used for every ranking: score descending, then doc id.
pub(crate) fn hit_order(a: &(f64, &str), b: &(f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

pub(crate) fn top_k(mut scored: Vec<(f64, &str)>, k: usize) -> Vec<Hit> {
    if k < scored.len() {
        scored.select_nth_unstable_by(k, hit_order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(hit_order);
    scored
        .into_iter()
        .map(|(score, id)| Hit {
            doc_id: id.to_string(),
            score,
        })
        .collect()
}

/// Ranks every query. `k = None` ranks the whole collection.
pub fn retrieve_all(
    retriever: &dyn Retriever,
    queries: &[EvalQuery],
    k: Option<usize>,
) -> Result<Vec<RankedList>, RetrieverError> {
    let k = k.unwrap_or_else(|| retriever.len());
    queries
        .iter()
        .map(|q| retriever.retrieve(&q.id, &q.text, k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_order_and_ties() {
        let scored = vec![(0.5, "b"), (0.9, "z"), (0.5, "a"), (0.1, "c"), (0.9, "y")];
        let ids: Vec<_> = top_k(scored.clone(), 10).into_iter().map(|h| h.doc_id).collect();
        assert_eq!(ids, ["y", "z", "a", "b", "c"]);
        let ids3: Vec<_> = top_k(scored, 3).into_iter().map(|h| h.doc_id).collect();
        assert_eq!(ids3, ["y", "z", "a"]);
    }

    #[test]
    fn rank_of() {
        let l = RankedList {
            query_id: "q".into(),
            hits: vec![
                Hit { doc_id: "a".into(), score: 1.0 },
                Hit { doc_id: "b".into(), score: 0.5 },
            ],
            degenerate: false,
        };
        assert_eq!(l.rank_of("b"), Some(2));
        assert_eq!(l.rank_of("x"), None);
    }
}
