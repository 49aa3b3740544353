use std::collections::HashMap;

use super::{top_k, RankedList, Retriever, RetrieverError};
use crate::corpus::Corpus;
use crate::embedder::tokenize;

pub const DEFAULT_K1: f64 = 1.5;
pub const DEFAULT_B: f64 = 0.75;

/// Okapi BM25 over answer texts, tokenized like the embedder.
///
/// `idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1)`; each distinct query term
/// contributes `idf * tf (k1 + 1) / (tf + k1 (1 - b + b dl / avgdl))`.
/// Documents scoring zero are not returned.
#[derive(Clone, Debug)]
pub struct Bm25Index {
    k1: f64,
    b: f64,
    doc_ids: Vec<String>,
    doc_len: Vec<usize>,
    avgdl: f64,
    /// term -> (doc index, term frequency), doc indices ascending
    postings: HashMap<String, Vec<(usize, u32)>>,
}

impl Bm25Index {
    pub fn build(corpus: &Corpus, k1: f64, b: f64) -> Result<Self, RetrieverError> {
        if corpus.is_empty() {
            return Err(RetrieverError::EmptyCorpus);
        }
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        let mut doc_len = Vec::with_capacity(corpus.len());
        for (i, qa) in corpus.entries().iter().enumerate() {
            let toks = tokenize(&qa.answer).tokens;
            doc_len.push(toks.len());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in toks {
                *tf.entry(t).or_insert(0) += 1;
            }
            for (t, c) in tf {
                postings.entry(t).or_default().push((i, c));
            }
        }
        let total: usize = doc_len.iter().sum();
        Ok(Self {
            k1,
            b,
            doc_ids: corpus.ids().map(str::to_string).collect(),
            avgdl: total as f64 / corpus.len() as f64,
            doc_len,
            postings,
        })
    }

    pub fn with_defaults(corpus: &Corpus) -> Result<Self, RetrieverError> {
        Self::build(corpus, DEFAULT_K1, DEFAULT_B)
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_ids.len() as f64;
        let df = self.df(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Score of every document, in corpus order.
    pub fn scores(&self, query: &str) -> Vec<f64> {
        let mut scores = vec![0.0; self.doc_ids.len()];
        let mut seen = std::collections::HashSet::new();
        for term in tokenize(query).tokens {
            if !seen.insert(term.clone()) {
                continue;
            }
            let Some(list) = self.postings.get(&term) else {
                continue;
            };
            let idf = self.idf(&term);
            for &(doc, tf) in list {
                let tf = f64::from(tf);
                let norm = 1.0 - self.b + self.b * self.doc_len[doc] as f64 / self.avgdl;
                scores[doc] += idf * tf * (self.k1 + 1.0) / (tf + self.k1 * norm);
            }
        }
        scores
    }

    pub fn search(&self, query: &str, k: usize) -> Result<RankedList, RetrieverError> {
        self.retrieve("", query, k)
    }
}

impl Retriever for Bm25Index {
    fn retrieve(&self, query_id: &str, query: &str, k: usize) -> Result<RankedList, RetrieverError> {
        if k == 0 {
            return Err(RetrieverError::InvalidK);
        }
        let scored = self
            .scores(query)
            .into_iter()
            .zip(self.doc_ids.iter().map(String::as_str))
            .filter(|(s, _)| *s > 0.0)
            .collect();
        Ok(RankedList {
            query_id: query_id.to_string(),
            hits: top_k(scored, k),
            degenerate: false,
        })
    }

    fn len(&self) -> usize {
        self.doc_ids.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::QAPair;
    use crate::embedder::{cosine, init_model};

    fn corpus(answers: &[&str]) -> Corpus {
        let entries = answers
            .iter()
            .enumerate()
            .map(|(i, a)| QAPair::new(format!("d{i}"), "q", *a))
            .collect();
        Corpus::new("c", entries).unwrap()
    }

    #[test]
    fn idf_two_docs() {
        let b = Bm25Index::with_defaults(&corpus(&["apple pie", "banana split"])).unwrap();
        assert!((b.idf("apple") - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn unique_term_ranks_first() {
        let b = Bm25Index::with_defaults(&corpus(&["fee schedule", "annual renewal fee", "fee waiver"])).unwrap();
        let r = b.search("renewal", 3).unwrap();
        assert_eq!(r.hits.len(), 1);
        assert_eq!(r.hits[0].doc_id, "d1");
    }

    #[test]
    fn no_corpus_terms() {
        let b = Bm25Index::with_defaults(&corpus(&["fee schedule"])).unwrap();
        assert!(b.search("zebra", 3).unwrap().hits.is_empty());
    }

    #[test]
    fn hand_computed_score() {
        // N=3, df(fee)=2, dl = [2, 3, 1], avgdl = 2
        let b = Bm25Index::build(&corpus(&["fee fee", "x y z", "fee"]), 1.2, 0.5).unwrap();
        let idf = ((3.0 - 2.0 + 0.5) / (2.0 + 0.5) + 1.0f64).ln();
        let s0 = idf * 2.0 * 2.2 / (2.0 + 1.2 * (0.5 + 0.5 * 2.0 / 2.0));
        let s2 = idf * 2.2 / (1.0 + 1.2 * (0.5 + 0.5 * 1.0 / 2.0));
        let s = b.scores("fee fee");
        assert!((s[0] - s0).abs() < 1e-12 && s[1] == 0.0 && (s[2] - s2).abs() < 1e-12);
        let r = b.search("fee", 5).unwrap();
        assert_eq!(r.hits.iter().map(|h| h.doc_id.as_str()).collect::<Vec<_>>(), ["d0", "d2"]);
    }

    #[test]
    fn transposition_breaks_bm25_not_dense() {
        let c = corpus(&["patent", "trademark"]);
        let b = Bm25Index::with_defaults(&c).unwrap();
        assert_eq!(b.scores("paetnt")[0], 0.0);
        let m = init_model(1 << 14, 64, 1).unwrap();
        let s = cosine(&m.embed("paetnt").values, &m.embed("patent").values).unwrap();
        assert!(s > 0.0, "{s}");
    }
}
