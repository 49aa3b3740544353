//! Ranking metrics over [`RankedList`]s.

use std::collections::BTreeMap;

use super::MetricsError;
use crate::augment::EvalQuery;
use crate::retriever::RankedList;

/// Relevance grades per query. Binary judgments give the single relevant
/// document grade 1; every unlisted document has grade 0.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Judgments {
    grades: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Judgments {
    pub fn binary<I, Q, D>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (Q, D)>,
        Q: Into<String>,
        D: Into<String>,
    {
        Self {
            grades: pairs
                .into_iter()
                .map(|(q, d)| (q.into(), BTreeMap::from([(d.into(), 1.0)])))
                .collect(),
        }
    }

    pub fn graded(grades: BTreeMap<String, BTreeMap<String, f64>>) -> Result<Self, MetricsError> {
        for (q, docs) in &grades {
            if docs.values().any(|g| !(*g >= 0.0) || !g.is_finite()) {
                return Err(MetricsError::InvalidGrade(q.clone()));
            }
        }
        Ok(Self { grades })
    }

    pub fn from_eval_queries(queries: &[EvalQuery]) -> Self {
        Self::binary(queries.iter().map(|q| (q.id.clone(), q.positive_answer_id.clone())))
    }

    fn for_query(&self, query_id: &str) -> Result<&BTreeMap<String, f64>, MetricsError> {
        self.grades
            .get(query_id)
            .ok_or_else(|| MetricsError::MissingJudgment(query_id.to_string()))
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> Result<f64, MetricsError> {
        Ok(self.for_query(query_id)?.get(doc_id).copied().unwrap_or(0.0))
    }
}

fn check(ranked: &[RankedList], k: usize) -> Result<(), MetricsError> {
    if k == 0 {
        return Err(MetricsError::InvalidK);
    }
    if ranked.is_empty() {
        return Err(MetricsError::EmptyEvalSet);
    }
    Ok(())
}

fn mean_over<F>(ranked: &[RankedList], mut f: F) -> Result<f64, MetricsError>
where
    F: FnMut(&RankedList) -> Result<f64, MetricsError>,
{
    let mut sum = 0.0;
    for r in ranked {
        sum += f(r)?;
    }
    Ok(sum / ranked.len() as f64)
}

/// Fraction of queries with a relevant document in the top `k`.
pub fn hit_at_k(ranked: &[RankedList], judgments: &Judgments, k: usize) -> Result<f64, MetricsError> {
    check(ranked, k)?;
    mean_over(ranked, |r| {
        let g = judgments.for_query(&r.query_id)?;
        let hit = r.hits.iter().take(k).any(|h| g.get(&h.doc_id).is_some_and(|x| *x > 0.0));
        Ok(if hit { 1.0 } else { 0.0 })
    })
}

/// Mean reciprocal rank of the first relevant document (0 if not returned).
pub fn mrr(ranked: &[RankedList], judgments: &Judgments) -> Result<f64, MetricsError> {
    check(ranked, 1)?;
    mean_over(ranked, |r| {
        let g = judgments.for_query(&r.query_id)?;
        Ok(r.hits
            .iter()
            .position(|h| g.get(&h.doc_id).is_some_and(|x| *x > 0.0))
            .map_or(0.0, |i| 1.0 / (i + 1) as f64))
    })
}

/// Mean over queries of (relevant documents in the top `k`) / `k`.
pub fn precision_at_k(ranked: &[RankedList], judgments: &Judgments, k: usize) -> Result<f64, MetricsError> {
    check(ranked, k)?;
    mean_over(ranked, |r| {
        let g = judgments.for_query(&r.query_id)?;
        let tp = r
            .hits
            .iter()
            .take(k)
            .filter(|h| g.get(&h.doc_id).is_some_and(|x| *x > 0.0))
            .count();
        Ok(tp as f64 / k as f64)
    })
}

fn dcg(grades: impl Iterator<Item = f64>) -> f64 {
    grades
        .enumerate()
        .map(|(i, rel)| (2f64.powf(rel) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// Mean DCG@k / IDCG@k with gain `2^rel - 1` and discount `log2(i + 1)`.
pub fn ndcg_at_k(ranked: &[RankedList], judgments: &Judgments, k: usize) -> Result<f64, MetricsError> {
    check(ranked, k)?;
    mean_over(ranked, |r| {
        let g = judgments.for_query(&r.query_id)?;
        let actual = dcg(r.hits.iter().take(k).map(|h| g.get(&h.doc_id).copied().unwrap_or(0.0)));
        let mut ideal: Vec<f64> = g.values().copied().collect();
        ideal.sort_by(|a, b| b.total_cmp(a));
        let ideal = dcg(ideal.into_iter().take(k));
        if ideal <= 0.0 {
            return Err(MetricsError::ZeroIdealGain(r.query_id.clone()));
        }
        Ok(actual / ideal)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retriever::Hit;

    /// Query `q{i}` with its relevant doc `rel` placed at `rank` (0 = absent)
    /// among `n` docs.
    fn list(i: usize, rank: usize, n: usize) -> RankedList {
        let mut hits: Vec<Hit> = (0..n)
            .map(|j| Hit {
                doc_id: format!("x{j}"),
                score: 1.0 - j as f64 * 0.01,
            })
            .collect();
        if rank > 0 {
            hits[rank - 1].doc_id = "rel".into();
        }
        RankedList {
            query_id: format!("q{i}"),
            hits,
            degenerate: false,
        }
    }

    fn judg(n: usize) -> Judgments {
        Judgments::binary((0..n).map(|i| (format!("q{i}"), "rel")))
    }

    #[test]
    fn ranks_1_2_4() {
        let r = [list(0, 1, 5), list(1, 2, 5), list(2, 4, 5)];
        let j = judg(3);
        assert!((hit_at_k(&r, &j, 3).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((mrr(&r, &j).unwrap() - 1.75 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn bounds() {
        let top = [list(0, 1, 3), list(1, 1, 3)];
        let absent = [list(0, 0, 3), list(1, 0, 3)];
        let j = judg(2);
        assert_eq!(hit_at_k(&top, &j, 1).unwrap(), 1.0);
        assert_eq!(mrr(&top, &j).unwrap(), 1.0);
        assert_eq!(hit_at_k(&absent, &j, 3).unwrap(), 0.0);
        assert_eq!(mrr(&absent, &j).unwrap(), 0.0);
        assert_eq!(ndcg_at_k(&absent, &j, 3).unwrap(), 0.0);
    }

    #[test]
    fn precision_single_relevant() {
        let j = judg(2);
        let p = precision_at_k(&[list(0, 1, 3), list(1, 3, 3)], &j, 3).unwrap();
        assert!((p - 0.333).abs() < 5e-4);
        assert_eq!(precision_at_k(&[list(0, 4, 5)], &j, 3).unwrap(), 0.0);
    }

    #[test]
    fn ndcg_values() {
        let j = judg(1);
        assert_eq!(ndcg_at_k(&[list(0, 1, 3)], &j, 3).unwrap(), 1.0);
        let v = ndcg_at_k(&[list(0, 2, 3)], &j, 3).unwrap();
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((v - 0.6309).abs() < 1e-4);
    }

    #[test]
    fn graded_ndcg_and_zero_ideal() {
        let mut g = BTreeMap::new();
        g.insert("q0".to_string(), BTreeMap::from([("x0".to_string(), 1.0), ("x1".to_string(), 2.0)]));
        let j = Judgments::graded(g).unwrap();
        let r = [list(0, 0, 3)];
        // ranking x0 (rel 1), x1 (rel 2): DCG = 1 + 3/log2(3); ideal = 3 + 1/log2(3)
        let want = (1.0 + 3.0 / 3f64.log2()) / (3.0 + 1.0 / 3f64.log2());
        assert!((ndcg_at_k(&r, &j, 2).unwrap() - want).abs() < 1e-12);

        let mut z = BTreeMap::new();
        z.insert("q0".to_string(), BTreeMap::from([("x0".to_string(), 0.0)]));
        let jz = Judgments::graded(z).unwrap();
        assert!(matches!(ndcg_at_k(&r, &jz, 2), Err(MetricsError::ZeroIdealGain(_))));
    }

    #[test]
    fn missing_judgment_and_empty() {
        let j = judg(1);
        assert!(matches!(hit_at_k(&[list(5, 1, 2)], &j, 1), Err(MetricsError::MissingJudgment(q)) if q == "q5"));
        assert!(matches!(mrr(&[], &j), Err(MetricsError::EmptyEvalSet)));
    }

    /// Brute force over every placement of the relevant doc in lists of up to 8.
    #[test]
    fn exhaustive_micro_suite() {
        let j = judg(1);
        for n in 1..=8 {
            for rank in 0..=n {
                let r = [list(0, rank, n)];
                for k in 1..=8 {
                    let in_top = rank >= 1 && rank <= k;
                    let ndcg = if in_top { 1.0 / ((rank + 1) as f64).log2() } else { 0.0 };
                    assert_eq!(hit_at_k(&r, &j, k).unwrap(), if in_top { 1.0 } else { 0.0 });
                    assert_eq!(precision_at_k(&r, &j, k).unwrap(), if in_top { 1.0 / k as f64 } else { 0.0 });
                    assert!((ndcg_at_k(&r, &j, k).unwrap() - ndcg).abs() < 1e-15);
                    if k > 1 {
                        assert!(hit_at_k(&r, &j, k).unwrap() >= hit_at_k(&r, &j, k - 1).unwrap());
                        assert!(ndcg_at_k(&r, &j, k).unwrap() >= ndcg_at_k(&r, &j, k - 1).unwrap());
                    }
                }
            }
        }
    }
}
