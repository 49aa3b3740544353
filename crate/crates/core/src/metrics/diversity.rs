//! Semantic distance between generated queries and their source questions.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::corpus::Corpus;
use crate::embedder::{cosine, EmbeddingModel};
use crate::querygen::{GeneratedQuery, QueryType};

/// Label in the `qa_id` column of the per-type summary rows.
pub const MEAN_ROW_LABEL: &str = "__mean__";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityRow {
    pub qa_id: String,
    pub query_type: QueryType,
    /// `1 - cosine` to the original question, in `[0, 2]`.
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiversityTable {
    pub rows: Vec<DiversityRow>,
    pub mean_by_type: BTreeMap<QueryType, f64>,
}

pub fn diversity_report(
    generated: &[GeneratedQuery],
    corpus: &Corpus,
    model: &EmbeddingModel,
) -> Result<DiversityTable, MetricsError> {
    let mut question_cache: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut rows = Vec::with_capacity(generated.len());
    let mut sums: BTreeMap<QueryType, (f64, usize)> = BTreeMap::new();
    for q in generated {
        let qa = corpus
            .get(&q.source_qa_id)
            .ok_or_else(|| MetricsError::DanglingQueryReference(q.source_qa_id.clone()))?;
        let orig = question_cache
            .entry(qa.id.as_str())
            .or_insert_with(|| model.embed(&qa.question).values);
        let cos = cosine(&model.embed(&q.text).values, orig).expect("same model, same dims");
        let distance = (1.0 - cos).clamp(0.0, 2.0);
        let e = sums.entry(q.query_type).or_insert((0.0, 0));
        e.0 += distance;
        e.1 += 1;
        rows.push(DiversityRow {
            qa_id: q.source_qa_id.clone(),
            query_type: q.query_type,
            distance,
        });
    }
    Ok(DiversityTable {
        rows,
        mean_by_type: sums.into_iter().map(|(t, (s, n))| (t, s / n as f64)).collect(),
    })
}

impl DiversityTable {
    /// Comma-separated `qa_id,query_type,distance`, one row per query,
    /// followed by one `__mean__` row per query type.
    pub fn write_csv(&self, path: &Path) -> Result<(), MetricsError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        for (t, m) in &self.mean_by_type {
            w.serialize(DiversityRow {
                qa_id: MEAN_ROW_LABEL.to_string(),
                query_type: *t,
                distance: *m,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}
