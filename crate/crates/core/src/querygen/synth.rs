//! Deterministic rule-based stand-in for the LLM query agent.

use super::stopwords::is_stopword;
use super::{GeneratedQuery, Origin, QueryGenError, QueryType};
use crate::corpus::QAPair;
use crate::embedder::tokenize;
use crate::rng::SeededRng;

const CONCEPT_FRAMES: &[&str] = &[
    "Can you explain the general principles behind this: ",
    "What are the broader considerations involved here: ",
    "In general terms, how should one understand this: ",
    "What is the underlying concept behind this: ",
];

const FACT_FRAMES: &[&str] = &[
    "What is the deadline to {}?",
    "Which form is needed to {}?",
    "How much is the fee to {}?",
    "Which office handles {}?",
];

const WEB_MAX_TOKENS: usize = 6;
const WEB_MIN_TOKENS: usize = 3;

/// Tokens of `text` with function words removed. Falls back to all tokens
/// when every token is a function word.
fn content_tokens(text: &str) -> Vec<String> {
    let all = tokenize(text).tokens;
    let content: Vec<String> = all.iter().filter(|t| !is_stopword(t)).cloned().collect();
    if content.is_empty() {
        all
    } else {
        content
    }
}

/// Produces one synthetic query of `query_type` from `qa.question`.
///
/// Rules, all deterministic in `(qa, query_type, seed)`:
/// - concept seeking: a seeded abstract interrogative frame is prepended;
/// - fact seeking: the content tokens are placed in a seeded single-fact frame;
/// - keyword: function words and punctuation are dropped;
/// - misspelled: one seeded transposition of two adjacent, differing
///   alphanumeric characters;
/// - web search: the first 3 to 6 (seeded) content tokens, lowercased.
pub fn synthesize_query(
    qa: &QAPair,
    query_type: QueryType,
    seed: u64,
) -> Result<GeneratedQuery, QueryGenError> {
    if tokenize(&qa.question).is_empty() {
        return Err(QueryGenError::EmptyQuestion(qa.id.clone()));
    }
    let mut rng = SeededRng::new(seed);
    let question = qa.question.trim();
    let text = match query_type {
        QueryType::ConceptSeeking => {
            let frame = CONCEPT_FRAMES[rng.below_usize(CONCEPT_FRAMES.len())];
            format!("{frame}{question}")
        }
        QueryType::FactSeeking => {
            let frame = FACT_FRAMES[rng.below_usize(FACT_FRAMES.len())];
            frame.replace("{}", &content_tokens(question).join(" "))
        }
        QueryType::Keyword => content_tokens(question).join(" "),
        QueryType::Misspelled => transpose_once(question, &mut rng),
        QueryType::WebSearch => {
            let toks = content_tokens(question);
            let hi = toks.len().min(WEB_MAX_TOKENS);
            let lo = toks.len().min(WEB_MIN_TOKENS);
            let n = lo + rng.below_usize(hi - lo + 1);
            toks[..n].join(" ")
        }
    };
    Ok(GeneratedQuery {
        source_qa_id: qa.id.clone(),
        query_type,
        text,
        origin: Origin::Synthetic,
    })
}

/// Swaps one seeded pair of adjacent, distinct alphanumeric characters.
/// Returns the input unchanged if no such pair exists.
fn transpose_once(text: &str, rng: &mut SeededRng) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    let candidates: Vec<usize> = (0..chars.len().saturating_sub(1))
        .filter(|&i| {
            chars[i].is_alphanumeric() && chars[i + 1].is_alphanumeric() && chars[i] != chars[i + 1]
        })
        .collect();
    if candidates.is_empty() {
        return text.to_string();
    }
    let i = candidates[rng.below_usize(candidates.len())];
    chars.swap(i, i + 1);
    chars.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn qa(q: &str) -> QAPair {
        QAPair::new("q1", q, "answer")
    }

    /// Plain dynamic-programming edit distance over chars.
    fn levenshtein(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut prev: Vec<usize> = (0..=b.len()).collect();
        for i in 1..=a.len() {
            let mut cur = vec![i; b.len() + 1];
            for j in 1..=b.len() {
                let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
                cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
            }
            prev = cur;
        }
        prev[b.len()]
    }

    #[test]
    fn misspelled_is_one_transposition() {
        let q = qa("How do I renew the annual fee for an invention patent?");
        for seed in 0..50 {
            let g = synthesize_query(&q, QueryType::Misspelled, seed).unwrap();
            assert_eq!(levenshtein(&q.question, &g.text), 2, "seed {seed}: {}", g.text);
            assert_eq!(g.text.chars().count(), q.question.chars().count());
        }
    }

    #[test]
    fn misspelled_han() {
        let q = qa("發明專利年費");
        let g = synthesize_query(&q, QueryType::Misspelled, 1).unwrap();
        assert_eq!(levenshtein(&q.question, &g.text), 2);
    }

    #[test]
    fn keyword_drops_function_words() {
        let q = qa("What is the legal status of the invention?");
        let g = synthesize_query(&q, QueryType::Keyword, 0).unwrap();
        let toks = tokenize(&g.text).tokens;
        for w in ["legal", "status", "invention"] {
            assert!(toks.iter().any(|t| t == w), "{w} missing from {:?}", g.text);
        }
        for w in ["what", "is", "the", "of"] {
            assert!(!toks.iter().any(|t| t == w), "{w} present in {:?}", g.text);
        }
        assert_eq!(g.text, "legal status invention");
    }

    #[test]
    fn deterministic() {
        let q = qa("Can I transfer my design patent from overseas?");
        for t in QueryType::ALL {
            for seed in [0, 1, 99] {
                assert_eq!(
                    synthesize_query(&q, t, seed).unwrap(),
                    synthesize_query(&q, t, seed).unwrap()
                );
            }
        }
    }

    #[test]
    fn outputs_differ_from_question() {
        let q = qa("Can I transfer my design patent from overseas during examination?");
        for t in QueryType::ALL {
            let g = synthesize_query(&q, t, 3).unwrap();
            assert_ne!(g.text, q.question, "{t:?}");
            assert_eq!(g.origin, Origin::Synthetic);
            assert_eq!(g.source_qa_id, "q1");
        }
    }

    #[test]
    fn web_search_bounded() {
        let q = qa("How do I renew the annual fee payment record for a design patent from overseas after grant?");
        let mut seen = HashSet::new();
        for seed in 0..40 {
            let g = synthesize_query(&q, QueryType::WebSearch, seed).unwrap();
            let n = tokenize(&g.text).len();
            assert!((3..=6).contains(&n), "{}", g.text);
            seen.insert(g.text);
        }
        assert!(seen.len() > 1);
    }

    #[test]
    fn empty_question_rejected() {
        let q = QAPair::new("e", "?!", "a");
        assert!(matches!(
            synthesize_query(&q, QueryType::Keyword, 0),
            Err(QueryGenError::EmptyQuestion(_))
        ));
    }

    #[test]
    fn vacuous_transposition_returns_input() {
        let q = qa("aaa");
        assert_eq!(synthesize_query(&q, QueryType::Misspelled, 0).unwrap().text, "aaa");
    }
}
