//! Q&A corpora: loading, validation and seeded splits.

mod synthetic;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::jsonl::{self, JsonlError};
use crate::rng::SeededRng;

pub use synthetic::{synthetic_corpus, SyntheticCorpusConfig};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("holdout fraction {0} outside [0, 1]")]
    InvalidFraction(f64),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<JsonlError> for CorpusError {
    fn from(e: JsonlError) -> Self {
        match e {
            JsonlError::FileNotFound(p) => CorpusError::FileNotFound(p),
            JsonlError::Malformed { line, message } => CorpusError::MalformedRecord { line, message },
            JsonlError::Io { .. } => CorpusError::Io(e.to_string()),
        }
    }
}

/// One question/answer record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub id: String,
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<BTreeMap<String, String>>,
}

impl QAPair {
    pub fn new(id: impl Into<String>, question: impl Into<String>, answer: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            answer: answer.into(),
            metadata: None,
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.question.trim().is_empty() {
            return Err(format!("record {:?}: empty question", self.id));
        }
        if self.answer.trim().is_empty() {
            return Err(format!("record {:?}: empty answer", self.id));
        }
        Ok(())
    }
}

/// An ordered, id-unique collection of [`QAPair`]s. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    name: String,
    entries: Vec<QAPair>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus, rejecting invalid records and duplicate ids.
    /// An empty entry list is allowed here (split halves may be empty).
    pub fn new(name: impl Into<String>, entries: Vec<QAPair>) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            e.validate().map_err(|message| CorpusError::MalformedRecord { line: i + 1, message })?;
            if by_id.insert(e.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(e.id.clone()));
            }
        }
        Ok(Self {
            name: name.into(),
            entries,
            by_id,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn entries(&self) -> &[QAPair] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&QAPair> {
        self.by_id.get(id).map(|&i| &self.entries[i])
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        jsonl::write_records(path, &self.entries).map_err(Into::into)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    #[default]
    Jsonl,
}

/// Loads a corpus file. Entries keep file order; the corpus is named after the
/// file stem.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    match format {
        CorpusFormat::Jsonl => {
            let records: Vec<(usize, QAPair)> = jsonl::read_records(path)?;
            let mut seen = HashSet::with_capacity(records.len());
            let mut entries = Vec::with_capacity(records.len());
            for (line, rec) in records {
                rec.validate()
                    .map_err(|message| CorpusError::MalformedRecord { line, message })?;
                if !seen.insert(rec.id.clone()) {
                    return Err(CorpusError::DuplicateId(rec.id));
                }
                entries.push(rec);
            }
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "corpus".into());
            Corpus::new(name, entries)
        }
    }
}

/// Splits a corpus by QA pair into disjoint train and test halves.
///
/// `|test| = round(holdout_fraction * |corpus|)`. Membership is decided by a
/// seeded shuffle; both halves keep the original corpus order.
pub fn split_corpus(
    corpus: &Corpus,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(Corpus, Corpus), CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    if !(0.0..=1.0).contains(&holdout_fraction) {
        return Err(CorpusError::InvalidFraction(holdout_fraction));
    }
    let n = corpus.len();
    let n_test = (holdout_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let mut is_test = vec![false; n];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, e) in corpus.entries.iter().enumerate() {
        if is_test[i] {
            test.push(e.clone());
        } else {
            train.push(e.clone());
        }
    }
    Ok((
        Corpus::new(format!("{}-train", corpus.name), train)?,
        Corpus::new(format!("{}-test", corpus.name), test)?,
    ))
}
