//! Deterministic synthetic patent-service Q&A corpus.
//!
//! Questions are composed from patent-office vocabulary (an action, a filing
//! object, a condition and a question frame) plus a per-pair procedure name.
//! Answers are written in a pseudo-word vocabulary that is disjoint between
//! answers: no token occurs in two different answers. Some answers repeat the
//! procedure name from their question, the rest share no token with it.
//!
//! The disjointness makes the corpus a clean testbed: lexical matching of a
//! query against answers is weak unless the procedure name appears in both,
//! and echoing a wrong answer shares no unigram with the right one.

use std::collections::BTreeMap;

use super::{Corpus, QAPair};
use crate::rng::{derive_seed, SeededRng};

const ACTIONS: &[&str] = &[
    "renew", "transfer", "amend", "withdraw", "restore", "correct", "translate", "file",
    "expedite", "cancel",
];

const OBJECTS: &[&str] = &[
    "invention patent",
    "utility model patent",
    "design patent",
    "patent application",
    "priority claim",
    "annual fee payment",
    "patent attorney registration",
    "technical report",
    "patent license",
    "assignment record",
    "divisional application",
    "examination request",
];

const CONDITIONS: &[&str] = &[
    "after the deadline",
    "through the online portal",
    "from overseas",
    "during examination",
    "before publication",
    "after grant",
    "without an agent",
    "with a foreign priority date",
    "for a small business",
    "in paper form",
];

const FRAMES: &[&str] = &[
    "How do I {a} the {e} {o} {c}?",
    "What is required to {a} a {e} {o} {c}?",
    "Can I {a} my {e} {o} {c}?",
    "Is it possible to {a} the {e} {o} {c}?",
    "Who should I contact to {a} a {e} {o} {c}?",
    "What happens if I {a} the {e} {o} {c}?",
];

const CONSONANTS: &[char] = &['b', 'd', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];
const VOWELS: &[char] = &['a', 'i', 'o', 'u'];

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpusConfig {
    pub n_pairs: usize,
    pub seed: u64,
    /// Probability that an answer repeats its question's procedure name.
    pub entity_in_answer_rate: f64,
    pub min_answer_words: usize,
    pub max_answer_words: usize,
}

impl Default for SyntheticCorpusConfig {
    fn default() -> Self {
        Self {
            n_pairs: 200,
            seed: 20_250_101,
            entity_in_answer_rate: 0.35,
            min_answer_words: 10,
            max_answer_words: 16,
        }
    }
}

/// Maps a word index to a unique three-syllable pseudo-word (CV CV CV).
/// Syllables have fixed length, so the mapping is injective.
fn pseudo_word(index: usize) -> String {
    let n_syll = CONSONANTS.len() * VOWELS.len();
    assert!(index < n_syll.pow(3), "pseudo-word space exhausted");
    let mut out = String::with_capacity(6);
    let mut k = index;
    for _ in 0..3 {
        let s = k % n_syll;
        k /= n_syll;
        out.push(CONSONANTS[s / VOWELS.len()]);
        out.push(VOWELS[s % VOWELS.len()]);
    }
    out
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Generates the corpus. Deterministic in `config`.
pub fn synthetic_corpus(config: &SyntheticCorpusConfig) -> Corpus {
    let total_combos = ACTIONS.len() * OBJECTS.len() * CONDITIONS.len();
    assert!(config.n_pairs <= total_combos, "at most {total_combos} pairs");
    assert!(config.min_answer_words >= 1 && config.min_answer_words <= config.max_answer_words);

    let mut rng = SeededRng::new(config.seed);
    let combos = rng.sample_indices(total_combos, config.n_pairs);

    // One shuffled pool of word ids serves both procedure names and answer words.
    let n_words = (CONSONANTS.len() * VOWELS.len()).pow(3);
    let mut word_ids: Vec<usize> = (0..n_words).collect();
    SeededRng::with_stream(config.seed, 1).shuffle(&mut word_ids);
    let mut next_word = word_ids.into_iter().map(pseudo_word);

    let mut entries = Vec::with_capacity(config.n_pairs);
    for (i, combo) in combos.into_iter().enumerate() {
        let mut pr = SeededRng::new(derive_seed(config.seed, &[i as u64]));
        let action = ACTIONS[combo % ACTIONS.len()];
        let object = OBJECTS[(combo / ACTIONS.len()) % OBJECTS.len()];
        let condition = CONDITIONS[combo / (ACTIONS.len() * OBJECTS.len())];
        let frame = FRAMES[pr.below_usize(FRAMES.len())];
        let entity = next_word.next().expect("word pool");
        let question = frame
            .replace("{a}", action)
            .replace("{e}", &capitalize(&entity))
            .replace("{o}", object)
            .replace("{c}", condition);

        let span = config.max_answer_words - config.min_answer_words + 1;
        let n_answer = config.min_answer_words + pr.below_usize(span);
        let mut words: Vec<String> = (0..n_answer)
            .map(|_| next_word.next().expect("word pool"))
            .collect();
        if pr.unit_f64() < config.entity_in_answer_rate {
            let at = pr.below_usize(words.len() + 1);
            words.insert(at, capitalize(&entity));
        }
        let comma = 2 + pr.below_usize(words.len().saturating_sub(3).max(1));
        let mut answer = String::new();
        for (j, w) in words.iter().enumerate() {
            if j > 0 {
                answer.push(' ');
            }
            if j == 0 {
                answer.push_str(&capitalize(w));
            } else {
                answer.push_str(w);
            }
            if j + 1 == comma && j + 1 < words.len() {
                answer.push(',');
            }
        }
        answer.push('.');

        let mut metadata = BTreeMap::new();
        metadata.insert("object".to_string(), object.to_string());
        metadata.insert("action".to_string(), action.to_string());
        entries.push(QAPair {
            id: format!("syn-{i:04}"),
            question,
            answer,
            metadata: Some(metadata),
        });
    }
    Corpus::new("synthetic", entries).expect("synthetic corpus is valid by construction")
}
