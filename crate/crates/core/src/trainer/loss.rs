//! Temperature-scaled softmax contrastive loss and its exact gradient.

use std::collections::BTreeMap;

use super::TrainError;
use crate::embedder::{dot, EmbeddingModel, Projected};

/// A triple with answer texts looked up.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ResolvedTriple {
    pub query: String,
    pub positive: (String, String),
    /// `(answer id, answer text)` pairs.
    pub negatives: Vec<(String, String)>,
}

impl ResolvedTriple {
    pub fn new(query: impl Into<String>, positive: (&str, &str), negatives: &[(&str, &str)]) -> Self {
        Self {
            query: query.into(),
            positive: (positive.0.to_string(), positive.1.to_string()),
            negatives: negatives
                .iter()
                .map(|(i, t)| (i.to_string(), t.to_string()))
                .collect(),
        }
    }
}

/// Gradient of the projection restricted to the feature columns it touches.
/// Missing columns are zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseGradient {
    pub emb_dim: usize,
    pub columns: BTreeMap<u32, Vec<f64>>,
}

impl SparseGradient {
    pub fn get(&self, row: usize, col: u32) -> f64 {
        self.columns.get(&col).map_or(0.0, |c| c[row])
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.columns
            .values()
            .flat_map(|c| c.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            emb_dim: self.emb_dim,
            columns: self
                .columns
                .iter()
                .map(|(&k, v)| (k, v.iter().map(|x| x * c).collect()))
                .collect(),
        }
    }

    /// Dense `emb_dim x feat_dim` matrix in row-major order.
    pub fn to_dense(&self, feat_dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.emb_dim * feat_dim];
        for (&col, v) in &self.columns {
            for (row, x) in v.iter().enumerate() {
                out[row * feat_dim + col as usize] = *x;
            }
        }
        out
    }

    fn add_outer(&mut self, projected: &Projected, d_raw: &[f64]) {
        for &(idx, f) in &projected.features.entries {
            let col = self
                .columns
                .entry(idx)
                .or_insert_with(|| vec![0.0; d_raw.len()]);
            for (g, d) in col.iter_mut().zip(d_raw) {
                *g += f * d;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchLoss {
    pub loss: f64,
    pub gradient: SparseGradient,
}

/// Candidate answers for one query: the positive first, then explicit
/// negatives, then (optionally) the other positives of the batch. A
/// candidate whose id equals the positive's is skipped; in-batch candidates
/// whose text equals the positive's are skipped as well.
fn candidates(batch: &[ResolvedTriple], i: usize, inbatch: bool) -> Vec<(&str, &str)> {
    let t = &batch[i];
    let (pos_id, pos_text) = (&t.positive.0, &t.positive.1);
    let mut out: Vec<(&str, &str)> = vec![(pos_id, pos_text)];
    for (id, text) in &t.negatives {
        if id != pos_id && !out.iter().any(|(o, _)| o == id) {
            out.push((id, text));
        }
    }
    if inbatch {
        for (j, other) in batch.iter().enumerate() {
            let (id, text) = (&other.positive.0, &other.positive.1);
            if j == i || id == pos_id || text == pos_text || out.iter().any(|(o, _)| o == id) {
                continue;
            }
            out.push((id, text));
        }
    }
    out
}

fn canonical(batch: &[ResolvedTriple]) -> Vec<ResolvedTriple> {
    let mut b = batch.to_vec();
    b.sort();
    b
}

struct Forward {
    batch: Vec<ResolvedTriple>,
    queries: Vec<Projected>,
    docs: BTreeMap<String, Projected>,
}

fn forward(model: &EmbeddingModel, batch: &[ResolvedTriple]) -> Result<Forward, TrainError> {
    let batch = canonical(batch);
    let mut queries = Vec::with_capacity(batch.len());
    let mut docs = BTreeMap::new();
    for t in &batch {
        let q = model.project_text(&t.query);
        if q.norm == 0.0 {
            return Err(TrainError::DegenerateText {
                role: "query",
                id: t.positive.0.clone(),
                text: t.query.clone(),
            });
        }
        queries.push(q);
        for (id, text) in std::iter::once(&t.positive).chain(&t.negatives) {
            if !docs.contains_key(id) {
                let p = model.project_text(text);
                if p.norm == 0.0 {
                    return Err(TrainError::DegenerateText {
                        role: "answer",
                        id: id.clone(),
                        text: text.clone(),
                    });
                }
                docs.insert(id.clone(), p);
            }
        }
    }
    Ok(Forward { batch, queries, docs })
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Mean over the batch of `logsumexp(z) - z_pos`, `z = cosine / tau`.
///
/// The batch is sorted before any reduction, so the result does not depend
/// on the order of `batch`.
pub fn batch_loss(
    model: &EmbeddingModel,
    batch: &[ResolvedTriple],
    tau: f64,
    use_inbatch_negatives: bool,
) -> Result<BatchLoss, TrainError> {
    run(model, batch, tau, use_inbatch_negatives, true)
}

/// Loss only, skipping the backward pass.
pub fn batch_loss_value(
    model: &EmbeddingModel,
    batch: &[ResolvedTriple],
    tau: f64,
    use_inbatch_negatives: bool,
) -> Result<f64, TrainError> {
    Ok(run(model, batch, tau, use_inbatch_negatives, false)?.loss)
}

fn run(
    model: &EmbeddingModel,
    batch: &[ResolvedTriple],
    tau: f64,
    inbatch: bool,
    backward: bool,
) -> Result<BatchLoss, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let fw = forward(model, batch)?;
    let emb_dim = model.emb_dim();
    let n = fw.batch.len() as f64;
    let q_unit: Vec<Vec<f64>> = fw.queries.iter().map(Projected::unit).collect();
    let d_unit: BTreeMap<&str, Vec<f64>> = fw.docs.iter().map(|(k, p)| (k.as_str(), p.unit())).collect();

    let mut total = 0.0;
    let mut g_q: Vec<Vec<f64>> = vec![vec![0.0; emb_dim]; fw.batch.len()];
    let mut g_d: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for i in 0..fw.batch.len() {
        let cands = candidates(&fw.batch, i, inbatch);
        let z: Vec<f64> = cands
            .iter()
            .map(|(id, _)| dot(&q_unit[i], &d_unit[id]) / tau)
            .collect();
        let lse = log_sum_exp(&z);
        total += lse - z[0];
        if !backward {
            continue;
        }
        for (j, (id, _)) in cands.iter().enumerate() {
            let p = (z[j] - lse).exp();
            let ds = (p - if j == 0 { 1.0 } else { 0.0 }) / (tau * n);
            let gd = g_d.entry(id).or_insert_with(|| vec![0.0; emb_dim]);
            for k in 0..emb_dim {
                g_q[i][k] += ds * d_unit[id][k];
                gd[k] += ds * q_unit[i][k];
            }
        }
    }
    let mut gradient = SparseGradient {
        emb_dim,
        columns: BTreeMap::new(),
    };
    if backward {
        for (i, g) in g_q.iter().enumerate() {
            gradient.add_outer(&fw.queries[i], &through_norm(g, &q_unit[i], fw.queries[i].norm));
        }
        for (id, g) in &g_d {
            let p = &fw.docs[*id];
            gradient.add_outer(p, &through_norm(g, &d_unit[id], p.norm));
        }
    }
    Ok(BatchLoss {
        loss: total / n,
        gradient,
    })
}

/// Pulls a gradient on `e = r / |r|` back to `r`: `(g - (g.e) e) / |r|`.
fn through_norm(g: &[f64], e: &[f64], norm: f64) -> Vec<f64> {
    let ge = dot(g, e);
    g.iter().zip(e).map(|(gk, ek)| (gk - ge * ek) / norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::init_model;

    fn model() -> EmbeddingModel {
        init_model(1 << 10, 16, 3).unwrap()
    }

    #[test]
    fn symmetric_negative_gives_ln2() {
        let m = model();
        let b = [ResolvedTriple::new("q text", ("p", "same answer"), &[("n", "same answer")])];
        let l = batch_loss(&m, &b, 1.0, false).unwrap();
        assert!((l.loss - std::f64::consts::LN_2).abs() < 1e-12, "{}", l.loss);
    }

    #[test]
    fn loss_positive() {
        let m = model();
        let b = [
            ResolvedTriple::new("alpha query", ("a", "alpha answer"), &[("b", "beta answer")]),
            ResolvedTriple::new("beta query", ("b", "beta answer"), &[("c", "gamma answer")]),
        ];
        for inbatch in [false, true] {
            for tau in [0.05, 1.0] {
                assert!(batch_loss(&m, &b, tau, inbatch).unwrap().loss > 0.0);
            }
        }
    }

    #[test]
    fn permutation_invariant_bitwise() {
        let m = model();
        let mut b = vec![
            ResolvedTriple::new("one", ("a", "first doc"), &[("b", "second doc")]),
            ResolvedTriple::new("two", ("b", "second doc"), &[("c", "third doc")]),
            ResolvedTriple::new("three", ("c", "third doc"), &[("a", "first doc")]),
        ];
        let l1 = batch_loss(&m, &b, 0.05, true).unwrap();
        b.reverse();
        let l2 = batch_loss(&m, &b, 0.05, true).unwrap();
        assert_eq!(l1.loss.to_bits(), l2.loss.to_bits());
        assert_eq!(l1.gradient, l2.gradient);
    }

    #[test]
    fn degenerate_query_reported() {
        let m = model();
        let b = [ResolvedTriple::new("!!!", ("a", "doc"), &[("b", "other")])];
        assert!(matches!(
            batch_loss(&m, &b, 0.05, true),
            Err(TrainError::DegenerateText { role: "query", .. })
        ));
    }

    #[test]
    fn inbatch_candidates_skip_duplicates() {
        let b = [
            ResolvedTriple::new("q1", ("a", "x"), &[("b", "y")]),
            ResolvedTriple::new("q2", ("b", "y"), &[("a", "x")]),
            ResolvedTriple::new("q3", ("c", "x"), &[("b", "y")]),
            ResolvedTriple::new("q4", ("a", "x"), &[("d", "z")]),
        ];
        let ids = |i| candidates(&b, i, true).iter().map(|c| c.0).collect::<Vec<_>>();
        assert_eq!(ids(0), ["a", "b"]);
        assert_eq!(ids(1), ["b", "a", "c"]);
        assert_eq!(ids(3), ["a", "d", "b"]);
        assert_eq!(candidates(&b, 1, false).len(), 2);
    }

    #[test]
    fn loss_value_matches_full() {
        let m = model();
        let b = [
            ResolvedTriple::new("alpha query", ("a", "alpha answer"), &[("b", "beta answer")]),
            ResolvedTriple::new("beta query", ("b", "beta answer"), &[("c", "gamma answer")]),
        ];
        assert_eq!(
            batch_loss_value(&m, &b, 0.1, true).unwrap(),
            batch_loss(&m, &b, 0.1, true).unwrap().loss
        );
    }
}
