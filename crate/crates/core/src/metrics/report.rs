use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::retrieval::{hit_at_k, mrr, ndcg_at_k, precision_at_k, Judgments};
use super::{GenerationScores, MetricsError};
use crate::jsonl;
use crate::retriever::RankedList;

/// One line of a report file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub value: f64,
}

impl MetricRecord {
    fn new(metric: &str, k: Option<usize>, value: f64) -> Self {
        Self {
            metric: metric.to_string(),
            k,
            value,
        }
    }
}

fn write_records(path: &Path, records: &[MetricRecord]) -> Result<(), MetricsError> {
    Ok(jsonl::write_records(path, records)?)
}

fn table(records: &[MetricRecord]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<12} {:>3} {:>8}", "metric", "k", "value");
    for r in records {
        let k = r.k.map_or("-".to_string(), |k| k.to_string());
        let _ = writeln!(s, "{:<12} {:>3} {:>8.4}", r.metric, k, r.value);
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub n_queries: usize,
    pub mrr: f64,
    pub hit: BTreeMap<usize, f64>,
    pub precision: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
}

impl RetrievalReport {
    pub fn from_rankings(
        ranked: &[RankedList],
        judgments: &Judgments,
        k_set: &[usize],
    ) -> Result<Self, MetricsError> {
        let mut report = RetrievalReport {
            n_queries: ranked.len(),
            mrr: mrr(ranked, judgments)?,
            hit: BTreeMap::new(),
            precision: BTreeMap::new(),
            ndcg: BTreeMap::new(),
        };
        for &k in k_set {
            report.hit.insert(k, hit_at_k(ranked, judgments, k)?);
            report.precision.insert(k, precision_at_k(ranked, judgments, k)?);
            report.ndcg.insert(k, ndcg_at_k(ranked, judgments, k)?);
        }
        Ok(report)
    }

    /// MRR first, then Precision, Hit and NDCG for each k.
    pub fn records(&self) -> Vec<MetricRecord> {
        let mut out = vec![MetricRecord::new("MRR", None, self.mrr)];
        for (name, map) in [("Precision", &self.precision), ("Hit", &self.hit), ("NDCG", &self.ndcg)] {
            out.extend(map.iter().map(|(&k, &v)| MetricRecord::new(name, Some(k), v)));
        }
        out
    }

    pub fn table(&self) -> String {
        table(&self.records())
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), MetricsError> {
        write_records(path, &self.records())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub n_items: usize,
    pub rouge1: f64,
    pub rouge_l: f64,
    /// BLEU-1 through BLEU-4.
    pub bleu: [f64; 4],
    pub bert_p: f64,
    pub bert_r: f64,
    pub bert_f1: f64,
}

impl GenerationReport {
    /// Macro averages, summed in the given order.
    pub fn from_scores(scores: &[GenerationScores]) -> Self {
        let n = scores.len() as f64;
        let avg = |f: &dyn Fn(&GenerationScores) -> f64| scores.iter().map(f).sum::<f64>() / n;
        GenerationReport {
            n_items: scores.len(),
            rouge1: avg(&|s| s.rouge1),
            rouge_l: avg(&|s| s.rouge_l),
            bleu: [0, 1, 2, 3].map(|i| avg(&|s| s.bleu[i])),
            bert_p: avg(&|s| s.bert.precision),
            bert_r: avg(&|s| s.bert.recall),
            bert_f1: avg(&|s| s.bert.f1),
        }
    }

    pub fn records(&self) -> Vec<MetricRecord> {
        let mut out = vec![
            MetricRecord::new("ROUGE-1", None, self.rouge1),
            MetricRecord::new("ROUGE-L", None, self.rouge_l),
        ];
        for (i, v) in self.bleu.iter().enumerate() {
            out.push(MetricRecord::new(&format!("BLEU-{}", i + 1), None, *v));
        }
        out.push(MetricRecord::new("BERT-P", None, self.bert_p));
        out.push(MetricRecord::new("BERT-R", None, self.bert_r));
        out.push(MetricRecord::new("BERT-F1", None, self.bert_f1));
        out
    }

    pub fn table(&self) -> String {
        table(&self.records())
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), MetricsError> {
        write_records(path, &self.records())
    }
}
