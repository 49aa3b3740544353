//! Token-overlap generation metrics: ROUGE-1, ROUGE-L and BLEU.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::embedder::tokenize;

/// Candidate and reference token sequences, tokenized like the embedder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextPair {
    pub candidate: Vec<String>,
    pub reference: Vec<String>,
}

impl TextPair {
    pub fn new(candidate: &str, reference: &str) -> Self {
        Self {
            candidate: tokenize(candidate).tokens,
            reference: tokenize(reference).tokens,
        }
    }

    pub fn from_tokens<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> Self {
        let own = |v: &[S]| v.iter().map(|s| s.as_ref().to_string()).collect();
        Self {
            candidate: own(candidate),
            reference: own(reference),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rouge1Mode {
    /// Clipped unigram matches over reference length.
    #[default]
    Recall,
    F1,
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut m = BTreeMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Sum over candidate n-grams of `min(count in candidate, count in reference)`.
fn clipped_matches(cand: &[String], reference: &[String], n: usize) -> usize {
    let r = ngram_counts(reference, n);
    ngram_counts(cand, n)
        .into_iter()
        .map(|(g, c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum()
}

/// ROUGE-1 recall: clipped unigram matches over reference unigrams.
pub fn rouge1(pair: &TextPair) -> Result<f64, MetricsError> {
    rouge1_with(pair, Rouge1Mode::Recall)
}

pub fn rouge1_with(pair: &TextPair, mode: Rouge1Mode) -> Result<f64, MetricsError> {
    if pair.reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let m = clipped_matches(&pair.candidate, &pair.reference, 1) as f64;
    let recall = m / pair.reference.len() as f64;
    Ok(match mode {
        Rouge1Mode::Recall => recall,
        Rouge1Mode::F1 => {
            if m == 0.0 {
                0.0
            } else {
                let precision = m / pair.candidate.len() as f64;
                2.0 * precision * recall / (precision + recall)
            }
        }
    })
}

/// Length of the longest common subsequence, by dynamic programming.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure `(1 + b^2) R P / (b^2 R + P)` with `R = LCS / m`,
/// `P = LCS / n`.
pub fn rouge_l(pair: &TextPair, beta: f64) -> Result<f64, MetricsError> {
    if pair.candidate.is_empty() || pair.reference.is_empty() {
        return Err(MetricsError::EmptyText);
    }
    let lcs = lcs_len(&pair.candidate, &pair.reference) as f64;
    if lcs == 0.0 {
        return Ok(0.0);
    }
    let r = lcs / pair.reference.len() as f64;
    let p = lcs / pair.candidate.len() as f64;
    let b2 = beta * beta;
    Ok((1.0 + b2) * r * p / (b2 * r + p))
}

/// Per-order n-gram statistics behind a BLEU score.
#[derive(Clone, Debug, PartialEq)]
pub struct NgramProfile {
    /// Modified precision `p_n` for n = 1..=max_n (0 where the candidate
    /// has no n-grams of that order).
    pub precisions: Vec<f64>,
    /// Clipped match counts per order.
    pub matches: Vec<usize>,
    /// Candidate n-gram totals per order.
    pub totals: Vec<usize>,
    pub candidate_len: usize,
    pub reference_len: usize,
    pub brevity_penalty: f64,
}

pub fn ngram_profile(pair: &TextPair, max_n: usize) -> Result<NgramProfile, MetricsError> {
    if pair.reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let c = pair.candidate.len();
    let r = pair.reference.len();
    let mut precisions = Vec::with_capacity(max_n);
    let mut matches = Vec::with_capacity(max_n);
    let mut totals = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let total = c.saturating_sub(n - 1);
        let m = clipped_matches(&pair.candidate, &pair.reference, n);
        precisions.push(if total == 0 { 0.0 } else { m as f64 / total as f64 });
        matches.push(m);
        totals.push(total);
    }
    let brevity_penalty = if c == 0 {
        0.0
    } else if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    Ok(NgramProfile {
        precisions,
        matches,
        totals,
        candidate_len: c,
        reference_len: r,
        brevity_penalty,
    })
}

/// BLEU-k for k = 1..=max_n.
///
/// BLEU-k is `BP * exp(sum_{n<=N} ln(p_n) / N)` with uniform weights over
/// `N = min(k, c, r)` orders (or `N = k` when `strict`), and 0 if any
/// included `p_n` is 0. An empty candidate scores 0.
pub fn bleu(pair: &TextPair, max_n: usize, strict: bool) -> Result<Vec<f64>, MetricsError> {
    let profile = ngram_profile(pair, max_n)?;
    let (c, r) = (profile.candidate_len, profile.reference_len);
    Ok((1..=max_n)
        .map(|k| {
            if c == 0 {
                return 0.0;
            }
            let n_eff = if strict { k } else { k.min(c).min(r) };
            let ps = &profile.precisions[..n_eff];
            if ps.contains(&0.0) {
                return 0.0;
            }
            let log_mean = ps.iter().map(|p| p.ln()).sum::<f64>() / n_eff as f64;
            profile.brevity_penalty * log_mean.exp()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(c: &str, r: &str) -> TextPair {
        TextPair::new(c, r)
    }

    #[test]
    fn rouge1_examples() {
        assert_eq!(rouge1(&pair("a b c", "a b c")).unwrap(), 1.0);
        assert!((rouge1(&pair("the cat", "the cat sat")).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rouge1(&pair("x y", "a b")).unwrap(), 0.0);
        assert!(matches!(rouge1(&pair("a", "")), Err(MetricsError::EmptyReference)));
        assert_eq!(rouge1(&pair("", "a")).unwrap(), 0.0);
        // clipping: candidate repeats "the"
        assert!((rouge1(&pair("the the the", "the cat")).unwrap() - 0.5).abs() < 1e-12);
        let f = rouge1_with(&pair("the cat", "the cat sat"), Rouge1Mode::F1).unwrap();
        assert!((f - 0.8).abs() < 1e-12);
    }

    #[test]
    fn rouge_l_examples() {
        assert_eq!(rouge_l(&pair("a b c", "a b c"), 1.0).unwrap(), 1.0);
        assert_eq!(rouge_l(&pair("a b c", "a b c"), 3.0).unwrap(), 1.0);
        let p = pair("a c d b", "a b c d");
        assert_eq!(lcs_len(&p.candidate, &p.reference), 3);
        assert!((rouge_l(&p, 1.0).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(rouge_l(&pair("x", "y"), 1.0).unwrap(), 0.0);
        assert!(matches!(rouge_l(&pair("", "y"), 1.0), Err(MetricsError::EmptyText)));
    }

    #[test]
    fn bleu_examples() {
        let same = bleu(&pair("a b c d e", "a b c d e"), 4, false).unwrap();
        assert_eq!(same, vec![1.0; 4]);
        let short = bleu(&pair("a b c", "a b c d"), 4, false).unwrap();
        let bp = (1.0f64 - 4.0 / 3.0).exp();
        assert!((short[3] - bp).abs() < 1e-12);
        assert!((short[3] - 0.7165).abs() < 1e-4);
        assert_eq!(bleu(&pair("x y z", "a b c"), 4, false).unwrap(), vec![0.0; 4]);
        assert_eq!(bleu(&pair("", "a b"), 4, false).unwrap(), vec![0.0; 4]);
        // strict mode: 3-token candidate has no 4-grams
        assert_eq!(bleu(&pair("a b c", "a b c"), 4, true).unwrap()[3], 0.0);
        assert_eq!(bleu(&pair("a b c", "a b c"), 4, false).unwrap()[3], 1.0);
    }

    #[test]
    fn bleu_hand_value() {
        // c = 4, r = 5; p1 = 3/4, p2 = 1/3
        let b = bleu(&pair("a b x c", "a b c d e"), 2, false).unwrap();
        let bp = (1.0f64 - 5.0 / 4.0).exp();
        assert!((b[0] - bp * 0.75).abs() < 1e-12);
        assert!((b[1] - bp * (0.75f64 * (1.0 / 3.0)).sqrt()).abs() < 1e-12);
    }

    /// Longest common subsequence by checking every subsequence of `a`.
    fn lcs_brute(a: &[u8], b: &[u8]) -> usize {
        let is_subseq = |s: &[u8]| {
            let mut it = b.iter();
            s.iter().all(|x| it.any(|y| y == x))
        };
        let mut best = 0;
        for mask in 0u32..(1 << a.len()) {
            let s: Vec<u8> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| a[i]).collect();
            if s.len() > best && is_subseq(&s) {
                best = s.len();
            }
        }
        best
    }

    /// Clipped matches by explicit enumeration of distinct n-grams.
    fn clipped_brute(c: &[u8], r: &[u8], n: usize) -> usize {
        if c.len() < n {
            return 0;
        }
        let cg: Vec<&[u8]> = c.windows(n).collect();
        let rg: Vec<&[u8]> = if r.len() >= n { r.windows(n).collect() } else { Vec::new() };
        let mut distinct = cg.clone();
        distinct.sort();
        distinct.dedup();
        distinct
            .iter()
            .map(|g| cg.iter().filter(|x| x == &g).count().min(rg.iter().filter(|x| x == &g).count()))
            .sum()
    }

    proptest! {
        #[test]
        fn lcs_and_ngrams_match_brute_force(
            a in prop::collection::vec(0u8..4, 0..=8),
            b in prop::collection::vec(0u8..4, 0..=8),
        ) {
            prop_assert_eq!(lcs_len(&a, &b), lcs_brute(&a, &b));
            prop_assert_eq!(lcs_len(&a, &a), a.len());
            let sa: Vec<String> = a.iter().map(|x| x.to_string()).collect();
            let sb: Vec<String> = b.iter().map(|x| x.to_string()).collect();
            for n in 1..=4 {
                prop_assert_eq!(clipped_matches(&sa, &sb, n), clipped_brute(&a, &b, n));
            }
        }

        #[test]
        fn scores_in_unit_range(
            a in prop::collection::vec(0u8..5, 1..12),
            b in prop::collection::vec(0u8..5, 1..12),
        ) {
            let sa: Vec<String> = a.iter().map(|x| format!("w{x}")).collect();
            let sb: Vec<String> = b.iter().map(|x| format!("w{x}")).collect();
            let p = TextPair::from_tokens(&sa, &sb);
            for v in [rouge1(&p).unwrap(), rouge_l(&p, 1.0).unwrap()]
                .into_iter()
                .chain(bleu(&p, 4, false).unwrap())
            {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            let same = TextPair::from_tokens(&sa, &sa);
            prop_assert_eq!(rouge1(&same).unwrap(), 1.0);
            prop_assert_eq!(rouge_l(&same, 1.0).unwrap(), 1.0);
            prop_assert!(bleu(&same, 4, false).unwrap().iter().all(|&x| (x - 1.0).abs() < 1e-12));
        }
    }
}
