//! Greedy token-matching similarity in the style of BERTScore, using the
//! project embedder on single tokens.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::text::TextPair;
use super::MetricsError;
use crate::embedder::{dot, EmbeddingModel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BertScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// `P` averages, over candidate tokens, the best similarity to any reference
/// token; `R` is the same with roles swapped; `F1 = 2PR / (P + R)`.
/// Similarity is `max(0, cosine)` of the tokens' embeddings.
pub fn bert_prf(pair: &TextPair, model: &EmbeddingModel) -> Result<BertScore, MetricsError> {
    if pair.candidate.is_empty() || pair.reference.is_empty() {
        return Err(MetricsError::EmptyText);
    }
    let mut cache: HashMap<&str, Vec<f64>> = HashMap::new();
    for t in pair.candidate.iter().chain(&pair.reference) {
        cache.entry(t).or_insert_with(|| model.embed(t).values);
    }
    let sim = |a: &str, b: &str| -> f64 {
        if a == b {
            return 1.0;
        }
        dot(&cache[a], &cache[b]).clamp(0.0, 1.0)
    };
    let greedy = |from: &[String], to: &[String]| -> f64 {
        from.iter()
            .map(|a| to.iter().map(|b| sim(a, b)).fold(0.0, f64::max))
            .sum::<f64>()
            / from.len() as f64
    };
    let precision = greedy(&pair.candidate, &pair.reference);
    let recall = greedy(&pair.reference, &pair.candidate);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(BertScore {
        precision,
        recall,
        f1,
    })
}
