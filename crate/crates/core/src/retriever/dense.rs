use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use xxhash_rust::xxh64::xxh64;

use super::{top_k, RankedList, Retriever, RetrieverError};
use crate::corpus::Corpus;
use crate::embedder::EmbeddingModel;

pub const INDEX_FORMAT_VERSION: u32 = 1;
const INDEX_MAGIC: &[u8; 8] = b"QFINDEX\0";
/// magic, version, n_docs, emb_dim, model fingerprint, checksum
const HEADER_LEN: usize = 8 + 4 + 8 + 8 + 8 + 8;

/// Unit answer embeddings in corpus order, tied to the model that made them.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorIndex {
    doc_ids: Vec<String>,
    emb_dim: usize,
    /// `doc_ids.len() x emb_dim`, row-major.
    vectors: Vec<f32>,
    model_fingerprint: u64,
}

pub fn build_index(model: &EmbeddingModel, corpus: &Corpus) -> Result<VectorIndex, RetrieverError> {
    if corpus.is_empty() {
        return Err(RetrieverError::EmptyCorpus);
    }
    let emb_dim = model.emb_dim();
    let mut vectors = Vec::with_capacity(corpus.len() * emb_dim);
    for qa in corpus.entries() {
        let e = model.embed(&qa.answer);
        if e.degenerate {
            return Err(RetrieverError::DegenerateText(qa.id.clone()));
        }
        vectors.extend(e.values.iter().map(|&x| x as f32));
    }
    Ok(VectorIndex {
        doc_ids: corpus.ids().map(str::to_string).collect(),
        emb_dim,
        vectors,
        model_fingerprint: model.fingerprint(),
    })
}

/// Brute-force cosine search. A query that embeds to the zero vector yields
/// an empty, `degenerate` list.
pub fn search(
    index: &VectorIndex,
    model: &EmbeddingModel,
    query: &str,
    k: usize,
) -> Result<RankedList, RetrieverError> {
    index.check_model(model)?;
    index.search_unchecked(model, "", query, k)
}

impl VectorIndex {
    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn emb_dim(&self) -> usize {
        self.emb_dim
    }

    pub fn model_fingerprint(&self) -> u64 {
        self.model_fingerprint
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.emb_dim..(i + 1) * self.emb_dim]
    }

    pub fn check_model(&self, model: &EmbeddingModel) -> Result<(), RetrieverError> {
        if model.fingerprint() != self.model_fingerprint {
            return Err(RetrieverError::FingerprintMismatch {
                index: self.model_fingerprint,
                model: model.fingerprint(),
            });
        }
        Ok(())
    }

    /// Cosine of a unit query vector against every stored vector.
    pub fn scores(&self, query: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                self.vector(i)
                    .iter()
                    .zip(query)
                    .map(|(&d, q)| f64::from(d) * q)
                    .sum()
            })
            .collect()
    }

    fn search_unchecked(
        &self,
        model: &EmbeddingModel,
        query_id: &str,
        query: &str,
        k: usize,
    ) -> Result<RankedList, RetrieverError> {
        if k == 0 {
            return Err(RetrieverError::InvalidK);
        }
        let e = model.embed(query);
        if e.degenerate {
            return Ok(RankedList {
                query_id: query_id.to_string(),
                hits: Vec::new(),
                degenerate: true,
            });
        }
        let scored = self
            .scores(&e.values)
            .into_iter()
            .zip(self.doc_ids.iter().map(String::as_str))
            .collect();
        Ok(RankedList {
            query_id: query_id.to_string(),
            hits: top_k(scored, k),
            degenerate: false,
        })
    }

    fn payload(&self) -> Vec<u8> {
        let mut p = Vec::new();
        for id in &self.doc_ids {
            p.extend_from_slice(&(id.len() as u32).to_le_bytes());
            p.extend_from_slice(id.as_bytes());
        }
        for v in &self.vectors {
            p.extend_from_slice(&v.to_le_bytes());
        }
        p
    }

    /// xxHash64 of the serialized doc-id table and vectors.
    pub fn checksum(&self) -> u64 {
        xxh64(&self.payload(), 0)
    }

    /// Writes the index file: header `{magic, version, n_docs, emb_dim,
    /// model_fingerprint, checksum}` (little-endian), then the doc-id table
    /// (`u32` byte length + UTF-8 per id) and the vectors as little-endian
    /// `f32`, row-major. The checksum covers everything after the header.
    pub fn persist(&self, path: &Path) -> Result<(), RetrieverError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let payload = self.payload();
        let mut w = io::BufWriter::new(File::create(path)?);
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&INDEX_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.doc_ids.len() as u64).to_le_bytes())?;
        w.write_all(&(self.emb_dim as u64).to_le_bytes())?;
        w.write_all(&self.model_fingerprint.to_le_bytes())?;
        w.write_all(&xxh64(&payload, 0).to_le_bytes())?;
        w.write_all(&payload)?;
        w.flush()?;
        Ok(())
    }

    pub fn restore(path: &Path) -> Result<Self, RetrieverError> {
        let mut bytes = Vec::new();
        File::open(path)
            .map_err(|e| match e.kind() {
                io::ErrorKind::NotFound => RetrieverError::FileNotFound(path.display().to_string()),
                _ => RetrieverError::Io(e),
            })?
            .read_to_end(&mut bytes)?;
        let corrupt = |m: &str| RetrieverError::CorruptFile(m.to_string());
        if bytes.len() < HEADER_LEN {
            return Err(corrupt("truncated header"));
        }
        if &bytes[..8] != INDEX_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != INDEX_FORMAT_VERSION {
            return Err(RetrieverError::UnsupportedVersion(version));
        }
        let n = u64_at(12) as usize;
        let emb_dim = u64_at(20) as usize;
        let model_fingerprint = u64_at(28);
        let checksum = u64_at(36);
        let payload = &bytes[HEADER_LEN..];
        if xxh64(payload, 0) != checksum {
            return Err(corrupt("checksum mismatch"));
        }
        let mut pos = 0usize;
        let mut doc_ids = Vec::with_capacity(n.min(payload.len()));
        for _ in 0..n {
            let len_bytes = payload
                .get(pos..pos + 4)
                .ok_or_else(|| corrupt("truncated doc-id table"))?;
            let len = u32::from_le_bytes(len_bytes.try_into().unwrap()) as usize;
            pos += 4;
            let id = payload
                .get(pos..pos + len)
                .ok_or_else(|| corrupt("truncated doc-id table"))?;
            doc_ids.push(String::from_utf8(id.to_vec()).map_err(|_| corrupt("doc id is not UTF-8"))?);
            pos += len;
        }
        let rest = &payload[pos..];
        if emb_dim == 0 || Some(rest.len()) != n.checked_mul(emb_dim).and_then(|x| x.checked_mul(4)) {
            return Err(corrupt("vector block length does not match header"));
        }
        let vectors = rest
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(Self {
            doc_ids,
            emb_dim,
            vectors,
            model_fingerprint,
        })
    }
}

/// A [`VectorIndex`] paired with the model it was built with.
pub struct DenseRetriever<'a> {
    index: &'a VectorIndex,
    model: &'a EmbeddingModel,
}

impl<'a> DenseRetriever<'a> {
    pub fn new(index: &'a VectorIndex, model: &'a EmbeddingModel) -> Result<Self, RetrieverError> {
        index.check_model(model)?;
        Ok(Self { index, model })
    }
}

impl Retriever for DenseRetriever<'_> {
    fn retrieve(&self, query_id: &str, query: &str, k: usize) -> Result<RankedList, RetrieverError> {
        self.index.search_unchecked(self.model, query_id, query, k)
    }

    fn len(&self) -> usize {
        self.index.len()
    }
}
