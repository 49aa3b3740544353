//! Multi-angle query generation.
//!
//! Each QA pair is rewritten into queries of five types, either by a chat
//! model through a [`GenerationClient`] or offline by [`synthesize_query`].

mod prompts;
mod stopwords;
mod synth;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub use crate::client::{ClientError, DecodingParams};
use crate::corpus::{Corpus, QAPair};
use crate::jsonl::{self, JsonlError};
use crate::rng::derive_seed;
pub use prompts::{context_block, render_prompt, render_prompt_in, template, PromptLanguage};
pub use stopwords::{is_stopword, CHINESE as CHINESE_STOPWORDS, ENGLISH as ENGLISH_STOPWORDS};
pub use synth::synthesize_query;

pub const DEFAULT_K_PER_TYPE: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryType {
    ConceptSeeking,
    FactSeeking,
    Keyword,
    Misspelled,
    WebSearch,
}

impl QueryType {
    pub const ALL: [QueryType; 5] = [
        QueryType::ConceptSeeking,
        QueryType::FactSeeking,
        QueryType::Keyword,
        QueryType::Misspelled,
        QueryType::WebSearch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryType::ConceptSeeking => "concept_seeking",
            QueryType::FactSeeking => "fact_seeking",
            QueryType::Keyword => "keyword",
            QueryType::Misspelled => "misspelled",
            QueryType::WebSearch => "web_search",
        }
    }

    /// Position in [`QueryType::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown query type {0:?}")]
pub struct UnknownQueryType(pub String);

impl FromStr for QueryType {
    type Err = UnknownQueryType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        let t = match norm.as_str() {
            "concept_seeking" | "concept" => QueryType::ConceptSeeking,
            "fact_seeking" | "fact" => QueryType::FactSeeking,
            "keyword" => QueryType::Keyword,
            "misspelled" | "misspelling" => QueryType::Misspelled,
            "web_search" | "web" => QueryType::WebSearch,
            _ => return Err(UnknownQueryType(s.to_string())),
        };
        Ok(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Llm,
    Synthetic,
}

/// One generated query, traceable to the QA pair it came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedQuery {
    pub source_qa_id: String,
    pub query_type: QueryType,
    pub text: String,
    pub origin: Origin,
}

/// A chat-completion backend.
pub trait GenerationClient: Send + Sync {
    fn complete(
        &self,
        system_prompt: &str,
        user_prompt: &str,
        decoding: &DecodingParams,
    ) -> Result<String, ClientError>;
}

impl<F> GenerationClient for F
where
    F: Fn(&str, &str, &DecodingParams) -> Result<String, ClientError> + Send + Sync,
{
    fn complete(
        &self,
        system_prompt: &str,
        user_prompt: &str,
        decoding: &DecodingParams,
    ) -> Result<String, ClientError> {
        self(system_prompt, user_prompt, decoding)
    }
}

/// Stub client that answers every prompt with the same text.
#[derive(Clone, Debug)]
pub struct FixedResponseClient(pub String);

impl GenerationClient for FixedResponseClient {
    fn complete(&self, _: &str, _: &str, _: &DecodingParams) -> Result<String, ClientError> {
        Ok(self.0.clone())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum QueryGenError {
    #[error("no queries found in completion")]
    NoQueriesFound,
    #[error("question of {0} has no tokens")]
    EmptyQuestion(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no query types requested")]
    NoTypes,
    #[error("k_per_type must be at least 1")]
    InvalidK,
    #[error("every generation request failed ({} failures)", .0.len())]
    AllFailed(Vec<GenerationFailure>),
    #[error(transparent)]
    Io(#[from] JsonlError),
}

#[derive(Clone, Debug, PartialEq)]
pub enum FailureKind {
    Client(ClientError),
    NoQueriesFound,
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureKind::Client(e) => write!(f, "{e}"),
            FailureKind::NoQueriesFound => f.write_str("no queries found in completion"),
        }
    }
}

/// A (pair, type) cell that produced nothing.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationFailure {
    pub qa_id: String,
    pub query_type: QueryType,
    pub kind: FailureKind,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GenerationOutcome {
    pub queries: Vec<GeneratedQuery>,
    pub failures: Vec<GenerationFailure>,
    pub per_pair_counts: BTreeMap<String, usize>,
}

#[derive(Clone, Debug)]
pub struct GenerateOptions {
    pub k_per_type: usize,
    /// Upper bound on in-flight client calls.
    pub max_concurrency: usize,
    pub system_prompt: String,
    pub language: PromptLanguage,
    pub decoding: DecodingParams,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            k_per_type: DEFAULT_K_PER_TYPE,
            max_concurrency: 4,
            system_prompt: String::new(),
            language: PromptLanguage::English,
            decoding: DecodingParams::default(),
        }
    }
}

static LIST_MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:[-*•·]+|[(（]?\d+[.)）、:：]|\d+\s+[-–])\s*").unwrap()
});

const QUOTES: &[char] = &['"', '\'', '“', '”', '‘', '’', '「', '」', '『', '』', '`'];

/// Extracts up to `expected_k` queries from a numbered, bulleted or plain
/// line-separated list. Lines ending in a colon are taken as headers.
pub fn parse_generated(raw: &str, expected_k: usize) -> Result<Vec<String>, QueryGenError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in raw.lines() {
        let line = line.trim();
        let line = LIST_MARKER.replace(line, "");
        let item = line.trim().trim_matches(QUOTES).trim();
        if item.is_empty() || item.ends_with(':') || item.ends_with('：') {
            continue;
        }
        if seen.insert(item.to_string()) {
            out.push(item.to_string());
        }
    }
    if out.is_empty() {
        return Err(QueryGenError::NoQueriesFound);
    }
    out.truncate(expected_k);
    Ok(out)
}

fn canonical_types(types: &[QueryType]) -> Vec<QueryType> {
    let mut t = types.to_vec();
    t.sort();
    t.dedup();
    t
}

fn check_inputs(corpus: &Corpus, types: &[QueryType], k: usize) -> Result<(), QueryGenError> {
    if corpus.is_empty() {
        return Err(QueryGenError::EmptyCorpus);
    }
    if types.is_empty() {
        return Err(QueryGenError::NoTypes);
    }
    if k == 0 {
        return Err(QueryGenError::InvalidK);
    }
    Ok(())
}

pub fn generate_queries(
    corpus: &Corpus,
    types: &[QueryType],
    k_per_type: usize,
    client: &dyn GenerationClient,
) -> Result<GenerationOutcome, QueryGenError> {
    let options = GenerateOptions {
        k_per_type,
        ..GenerateOptions::default()
    };
    generate_queries_with(corpus, types, &options, client)
}

/// One prompt/complete/parse round per (pair, type) cell. Cells run on up to
/// `max_concurrency` threads; output order is (pair, type, item) regardless.
pub fn generate_queries_with(
    corpus: &Corpus,
    types: &[QueryType],
    options: &GenerateOptions,
    client: &dyn GenerationClient,
) -> Result<GenerationOutcome, QueryGenError> {
    let k = options.k_per_type;
    check_inputs(corpus, types, k)?;
    let types = canonical_types(types);
    let cells: Vec<(&QAPair, QueryType)> = corpus
        .entries()
        .iter()
        .flat_map(|qa| types.iter().map(move |&t| (qa, t)))
        .collect();

    let run_cell = |(qa, t): (&QAPair, QueryType)| -> Result<Vec<String>, FailureKind> {
        let prompt = prompts::render_prompt_in(options.language, t, qa, k);
        let raw = client
            .complete(&options.system_prompt, &prompt, &options.decoding)
            .map_err(FailureKind::Client)?;
        parse_generated(&raw, k).map_err(|_| FailureKind::NoQueriesFound)
    };

    let workers = options.max_concurrency.clamp(1, cells.len());
    let next = AtomicUsize::new(0);
    let mut results: Vec<(usize, Result<Vec<String>, FailureKind>)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= cells.len() {
                            break;
                        }
                        local.push((i, run_cell(cells[i])));
                    }
                    local
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("generation worker panicked"))
            .collect()
    });
    results.sort_by_key(|(i, _)| *i);

    let mut outcome = GenerationOutcome::default();
    for qa in corpus.entries() {
        outcome.per_pair_counts.insert(qa.id.clone(), 0);
    }
    for (i, res) in results {
        let (qa, t) = cells[i];
        match res {
            Ok(texts) => {
                *outcome.per_pair_counts.get_mut(&qa.id).unwrap() += texts.len();
                outcome
                    .queries
                    .extend(texts.into_iter().map(|text| GeneratedQuery {
                        source_qa_id: qa.id.clone(),
                        query_type: t,
                        text,
                        origin: Origin::Llm,
                    }));
            }
            Err(kind) => {
                log::warn!("generation failed for {} / {t}: {kind}", qa.id);
                outcome.failures.push(GenerationFailure {
                    qa_id: qa.id.clone(),
                    query_type: t,
                    kind,
                });
            }
        }
    }
    if outcome.queries.is_empty() {
        return Err(QueryGenError::AllFailed(outcome.failures));
    }
    Ok(outcome)
}

/// Offline counterpart of [`generate_queries`]: `k_per_type` seeded
/// synthetic rewrites per (pair, type), textual duplicates within a cell
/// dropped.
pub fn synthesize_queries(
    corpus: &Corpus,
    types: &[QueryType],
    k_per_type: usize,
    seed: u64,
) -> Result<Vec<GeneratedQuery>, QueryGenError> {
    check_inputs(corpus, types, k_per_type)?;
    let types = canonical_types(types);
    let mut out = Vec::new();
    for (qi, qa) in corpus.entries().iter().enumerate() {
        for &t in &types {
            let mut seen = HashSet::new();
            for item in 0..k_per_type {
                let s = derive_seed(seed, &[qi as u64, t.index() as u64, item as u64]);
                let q = synthesize_query(qa, t, s)?;
                if seen.insert(q.text.clone()) {
                    out.push(q);
                }
            }
        }
    }
    Ok(out)
}

pub fn write_queries(path: &Path, queries: &[GeneratedQuery]) -> Result<(), QueryGenError> {
    Ok(jsonl::write_records(path, queries)?)
}

pub fn read_queries(path: &Path) -> Result<Vec<GeneratedQuery>, QueryGenError> {
    Ok(jsonl::read_records(path)?
        .into_iter()
        .map(|(_, q)| q)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(n: usize) -> Corpus {
        let entries = (0..n)
            .map(|i| {
                QAPair::new(
                    format!("p{i}"),
                    format!("How do I file form number {i} for a patent?"),
                    format!("Answer {i}"),
                )
            })
            .collect();
        Corpus::new("t", entries).unwrap()
    }

    #[test]
    fn parse_numbered() {
        assert_eq!(parse_generated("1. A\n2. B\n3. C", 3).unwrap(), ["A", "B", "C"]);
    }

    #[test]
    fn parse_dedupes() {
        assert_eq!(parse_generated("A\nA\nB", 3).unwrap(), ["A", "B"]);
    }

    #[test]
    fn parse_empty() {
        assert!(matches!(parse_generated("", 3), Err(QueryGenError::NoQueriesFound)));
        assert!(matches!(parse_generated("\n  \n", 3), Err(QueryGenError::NoQueriesFound)));
    }

    #[test]
    fn parse_markers_and_headers() {
        let raw = "Here are three queries:\n1) \"first one\"\n- second one\n（3）第三個\n• first one";
        assert_eq!(
            parse_generated(raw, 5).unwrap(),
            ["first one", "second one", "第三個"]
        );
        assert_eq!(parse_generated("a\nb\nc\nd", 2).unwrap(), ["a", "b"]);
    }

    #[test]
    fn counting_contract() {
        let c = corpus(2);
        let client = FixedResponseClient("1. x\n2. y\n3. z".into());
        let out = generate_queries(&c, &QueryType::ALL, 3, &client).unwrap();
        assert_eq!(out.queries.len(), 30);
        assert!(out.failures.is_empty());
        assert_eq!(out.per_pair_counts["p0"], 15);
        assert!(out.queries.iter().all(|q| q.origin == Origin::Llm));
    }

    #[test]
    fn partial_failure() {
        let c = corpus(2);
        let client = |_: &str, user: &str, _: &DecodingParams| {
            if user.contains("form number 1") && user.contains("keyword queries") {
                Err(ClientError::Status(503))
            } else {
                Ok("1. x\n2. y\n3. z".to_string())
            }
        };
        let out = generate_queries(&c, &QueryType::ALL, 3, &client).unwrap();
        assert_eq!(out.queries.len(), 27);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].qa_id, "p1");
        assert_eq!(out.failures[0].query_type, QueryType::Keyword);
        assert_eq!(out.failures[0].kind, FailureKind::Client(ClientError::Status(503)));
    }

    #[test]
    fn single_cell() {
        let c = corpus(1);
        let out = generate_queries(&c, &[QueryType::Keyword], 1, &FixedResponseClient("k".into())).unwrap();
        assert_eq!(out.queries.len(), 1);
        assert_eq!(out.queries[0].query_type, QueryType::Keyword);
    }

    #[test]
    fn all_failed() {
        let c = corpus(2);
        let client = |_: &str, _: &str, _: &DecodingParams| -> Result<String, ClientError> {
            Err(ClientError::Transport("down".into()))
        };
        match generate_queries(&c, &QueryType::ALL, 3, &client) {
            Err(QueryGenError::AllFailed(f)) => assert_eq!(f.len(), 10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ordering_independent_of_concurrency() {
        let c = corpus(5);
        let client = |_: &str, user: &str, _: &DecodingParams| {
            let n = user.len() % 7;
            std::thread::sleep(std::time::Duration::from_millis(n as u64));
            Ok(format!("1. {n}a\n2. {n}b"))
        };
        let types = [QueryType::WebSearch, QueryType::Keyword, QueryType::ConceptSeeking];
        let serial = generate_queries_with(
            &c,
            &types,
            &GenerateOptions { k_per_type: 2, max_concurrency: 1, ..Default::default() },
            &client,
        )
        .unwrap();
        let parallel = generate_queries_with(
            &c,
            &types,
            &GenerateOptions { k_per_type: 2, max_concurrency: 8, ..Default::default() },
            &client,
        )
        .unwrap();
        assert_eq!(serial, parallel);
        let order: Vec<_> = serial.queries.iter().map(|q| (q.source_qa_id.clone(), q.query_type)).collect();
        assert_eq!(order[0], ("p0".to_string(), QueryType::ConceptSeeking));
        assert_eq!(order[2], ("p0".to_string(), QueryType::Keyword));
        assert_eq!(order[4], ("p0".to_string(), QueryType::WebSearch));
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = corpus(1);
        let client = FixedResponseClient("x".into());
        assert!(matches!(generate_queries(&c, &[], 1, &client), Err(QueryGenError::NoTypes)));
        assert!(matches!(
            generate_queries(&c, &QueryType::ALL, 0, &client),
            Err(QueryGenError::InvalidK)
        ));
    }

    #[test]
    fn synthesized_queries_trace_to_corpus() {
        let c = corpus(4);
        let qs = synthesize_queries(&c, &QueryType::ALL, 3, 7).unwrap();
        assert!(!qs.is_empty());
        for q in &qs {
            assert!(c.contains(&q.source_qa_id));
            assert!(!q.text.is_empty());
            assert_eq!(q.origin, Origin::Synthetic);
        }
        assert_eq!(qs, synthesize_queries(&c, &QueryType::ALL, 3, 7).unwrap());
    }

    #[test]
    fn query_type_strings_roundtrip() {
        for t in QueryType::ALL {
            assert_eq!(t.as_str().parse::<QueryType>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{}\"", t.as_str()));
        }
        assert_eq!("Web-Search".parse::<QueryType>().unwrap(), QueryType::WebSearch);
        assert!("other".parse::<QueryType>().is_err());
    }

    #[test]
    fn jsonl_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.jsonl");
        let qs = synthesize_queries(&corpus(2), &QueryType::ALL, 2, 1).unwrap();
        write_queries(&p, &qs).unwrap();
        assert_eq!(read_queries(&p).unwrap(), qs);
    }
}
