use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::sync::OnceLock;

use xxhash_rust::xxh64::{xxh64, Xxh64};

use super::features::{featurize_tokens, FeatureVector};
use super::tokenize::{tokenize, TokenSeq};
use crate::rng::SeededRng;

pub const DEFAULT_FEAT_DIM: usize = 1 << 18;
pub const DEFAULT_EMB_DIM: usize = 256;
pub const DEFAULT_HASH_SEED: u64 = 0x9E37_79B9_7F4A_7C15;

/// Current model file version.
pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_MAGIC: &[u8; 8] = b"QFMODEL\0";
/// magic, version, feat_dim, emb_dim, hash_seed, checksum
const HEADER_LEN: u64 = 8 + 4 + 8 + 8 + 8 + 8;
const CHECKSUM_OFFSET: u64 = HEADER_LEN - 8;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("invalid dimensions feat_dim={feat_dim} emb_dim={emb_dim}")]
    InvalidDims { feat_dim: usize, emb_dim: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Hashed-feature linear projection retriever.
///
/// The projection is `emb_dim x feat_dim`. In memory it is stored
/// feature-major (the `emb_dim` weights of each feature are contiguous),
/// which is what sparse inputs want; the file format is row-major.
#[derive(Clone, Debug)]
pub struct EmbeddingModel {
    feat_dim: usize,
    emb_dim: usize,
    hash_seed: u64,
    weights: Vec<f32>,
    fingerprint: OnceLock<u64>,
}

impl PartialEq for EmbeddingModel {
    fn eq(&self, other: &Self) -> bool {
        self.feat_dim == other.feat_dim
            && self.emb_dim == other.emb_dim
            && self.hash_seed == other.hash_seed
            && self.weights.len() == other.weights.len()
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Output of [`EmbeddingModel::embed`].
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
    /// Set when the text produced no features (or a zero projection); `values`
    /// is then the zero vector.
    pub degenerate: bool,
}

/// Unnormalized projection of a feature vector and its norm.
#[derive(Clone, Debug)]
pub(crate) struct Projected {
    pub features: FeatureVector,
    pub raw: Vec<f64>,
    pub norm: f64,
}

impl Projected {
    pub fn unit(&self) -> Vec<f64> {
        if self.norm == 0.0 {
            return vec![0.0; self.raw.len()];
        }
        self.raw.iter().map(|x| x / self.norm).collect()
    }
}

/// Initializes a model with the default hash seed.
///
/// Projection entries are iid uniform on `[-a, a]` with
/// `a = sqrt(6 / (feat_dim + emb_dim))`, drawn from [`SeededRng`] in
/// in-memory (feature-major) order.
pub fn init_model(feat_dim: usize, emb_dim: usize, seed: u64) -> Result<EmbeddingModel, EmbedError> {
    init_model_with_hash_seed(feat_dim, emb_dim, seed, DEFAULT_HASH_SEED)
}

pub fn init_model_with_hash_seed(
    feat_dim: usize,
    emb_dim: usize,
    seed: u64,
    hash_seed: u64,
) -> Result<EmbeddingModel, EmbedError> {
    if feat_dim == 0 || emb_dim == 0 || feat_dim > u32::MAX as usize {
        return Err(EmbedError::InvalidDims { feat_dim, emb_dim });
    }
    let n = feat_dim
        .checked_mul(emb_dim)
        .ok_or(EmbedError::InvalidDims { feat_dim, emb_dim })?;
    let a = init_bound(feat_dim, emb_dim);
    let mut rng = SeededRng::new(seed);
    let weights = (0..n)
        .map(|_| {
            let x = (a * (2.0 * rng.unit_f64() - 1.0)) as f32;
            if f64::from(x).abs() > a {
                // rounding to f32 stepped past the bound; take one ulp toward zero
                f32::from_bits(x.to_bits() - 1)
            } else {
                x
            }
        })
        .collect();
    Ok(EmbeddingModel {
        feat_dim,
        emb_dim,
        hash_seed,
        weights,
        fingerprint: OnceLock::new(),
    })
}

/// Half-width of the uniform initialization range.
pub fn init_bound(feat_dim: usize, emb_dim: usize) -> f64 {
    (6.0 / (feat_dim + emb_dim) as f64).sqrt()
}

impl EmbeddingModel {
    pub fn feat_dim(&self) -> usize {
        self.feat_dim
    }

    pub fn emb_dim(&self) -> usize {
        self.emb_dim
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    /// Weight at projection row `row` (embedding coordinate), column `col` (feature).
    pub fn weight(&self, row: usize, col: usize) -> f32 {
        self.weights[col * self.emb_dim + row]
    }

    pub(crate) fn set_weight(&mut self, row: usize, col: usize, value: f32) {
        self.weights[col * self.emb_dim + row] = value;
        self.fingerprint.take();
    }

    /// The `emb_dim` weights of feature `col`.
    pub(crate) fn column(&self, col: u32) -> &[f32] {
        let start = col as usize * self.emb_dim;
        &self.weights[start..start + self.emb_dim]
    }

    pub(crate) fn column_mut(&mut self, col: u32) -> &mut [f32] {
        self.fingerprint.take();
        let start = col as usize * self.emb_dim;
        &mut self.weights[start..start + self.emb_dim]
    }

    /// Iterates all weights in row-major (file) order.
    pub fn weights_row_major(&self) -> impl Iterator<Item = f32> + '_ {
        (0..self.emb_dim).flat_map(move |r| (0..self.feat_dim).map(move |c| self.weight(r, c)))
    }

    /// Multiplies every weight by `c`.
    pub fn scale(&mut self, c: f32) {
        self.fingerprint.take();
        for w in &mut self.weights {
            *w *= c;
        }
    }

    pub fn featurize(&self, tokens: &TokenSeq) -> FeatureVector {
        featurize_tokens(tokens, self.feat_dim, self.hash_seed)
    }

    pub(crate) fn project(&self, features: FeatureVector) -> Projected {
        let mut raw = vec![0.0f64; self.emb_dim];
        for &(idx, w) in &features.entries {
            for (acc, &p) in raw.iter_mut().zip(self.column(idx)) {
                *acc += f64::from(p) * w;
            }
        }
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        Projected { features, raw, norm }
    }

    pub(crate) fn project_text(&self, text: &str) -> Projected {
        self.project(self.featurize(&tokenize(text)))
    }

    /// Unit-norm embedding of `text`; empty or featureless text gives the zero
    /// vector with `degenerate` set.
    pub fn embed(&self, text: &str) -> Embedding {
        let p = self.project_text(text);
        Embedding {
            degenerate: p.norm == 0.0,
            values: p.unit(),
        }
    }

    /// Stable 64-bit fingerprint over dims, hash seed and all weights.
    pub fn fingerprint(&self) -> u64 {
        *self.fingerprint.get_or_init(|| {
            let mut h = Xxh64::new(0);
            h.update(&MODEL_FORMAT_VERSION.to_le_bytes());
            h.update(&(self.feat_dim as u64).to_le_bytes());
            h.update(&(self.emb_dim as u64).to_le_bytes());
            h.update(&self.hash_seed.to_le_bytes());
            let mut buf = Vec::with_capacity(4 * 4096);
            for chunk in self.weights.chunks(4096) {
                buf.clear();
                for w in chunk {
                    buf.extend_from_slice(&w.to_le_bytes());
                }
                h.update(&buf);
            }
            h.digest()
        })
    }

    pub fn fingerprint_hex(&self) -> String {
        format!("{:016x}", self.fingerprint())
    }

    /// Writes the versioned model file: header
    /// `{magic, version, feat_dim, emb_dim, hash_seed, checksum}` (little-endian)
    /// followed by the projection as little-endian `f32` in row-major order.
    /// The checksum is xxHash64 (seed 0) of the payload bytes.
    pub fn persist(&self, path: &Path) -> Result<(), EmbedError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.feat_dim as u64).to_le_bytes())?;
        w.write_all(&(self.emb_dim as u64).to_le_bytes())?;
        w.write_all(&self.hash_seed.to_le_bytes())?;
        w.write_all(&0u64.to_le_bytes())?;
        let mut hasher = Xxh64::new(0);
        let mut row = Vec::with_capacity(self.feat_dim * 4);
        for r in 0..self.emb_dim {
            row.clear();
            for c in 0..self.feat_dim {
                row.extend_from_slice(&self.weights[c * self.emb_dim + r].to_le_bytes());
            }
            hasher.update(&row);
            w.write_all(&row)?;
        }
        let mut file = w.into_inner().map_err(|e| e.into_error())?;
        file.seek(SeekFrom::Start(CHECKSUM_OFFSET))?;
        file.write_all(&hasher.digest().to_le_bytes())?;
        file.sync_all()?;
        Ok(())
    }

    /// Reads a model written by [`EmbeddingModel::persist`].
    pub fn restore(path: &Path) -> Result<Self, EmbedError> {
        let file = File::open(path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => EmbedError::FileNotFound(path.display().to_string()),
            _ => EmbedError::Io(e),
        })?;
        let file_len = file.metadata()?.len();
        let mut r = BufReader::new(file);
        let corrupt = |m: &str| EmbedError::CorruptFile(m.to_string());
        if file_len < HEADER_LEN {
            return Err(corrupt("truncated header"));
        }
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = read_u32(&mut r)?;
        if version != MODEL_FORMAT_VERSION {
            return Err(EmbedError::UnsupportedVersion(version));
        }
        let feat_dim = read_u64(&mut r)? as usize;
        let emb_dim = read_u64(&mut r)? as usize;
        let hash_seed = read_u64(&mut r)?;
        let checksum = read_u64(&mut r)?;
        if feat_dim == 0 || emb_dim == 0 || feat_dim > u32::MAX as usize {
            return Err(corrupt("invalid dimensions"));
        }
        let expected = (feat_dim as u64)
            .checked_mul(emb_dim as u64)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or_else(|| corrupt("invalid dimensions"))?;
        if file_len != expected {
            return Err(corrupt("payload length does not match header"));
        }
        let mut weights = vec![0f32; feat_dim * emb_dim];
        let mut hasher = Xxh64::new(0);
        let mut row = vec![0u8; feat_dim * 4];
        for rr in 0..emb_dim {
            r.read_exact(&mut row)?;
            hasher.update(&row);
            for (c, b) in row.chunks_exact(4).enumerate() {
                weights[c * emb_dim + rr] = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            }
        }
        if hasher.digest() != checksum {
            return Err(corrupt("checksum mismatch"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(corrupt("non-finite weight"));
        }
        Ok(Self {
            feat_dim,
            emb_dim,
            hash_seed,
            weights,
            fingerprint: OnceLock::new(),
        })
    }
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EmbedError> {
    if u.len() != v.len() {
        return Err(EmbedError::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Checksum of arbitrary bytes with the model-file hash.
pub fn checksum_bytes(bytes: &[u8]) -> u64 {
    xxh64(bytes, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn small(seed: u64) -> EmbeddingModel {
        init_model(1 << 10, 16, seed).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        assert_eq!(small(5), small(5));
        assert_eq!(small(5).fingerprint(), small(5).fingerprint());
    }

    #[test]
    fn init_within_bound() {
        let m = small(11);
        let a = init_bound(1 << 10, 16);
        assert!(m.weights.iter().all(|&w| f64::from(w).abs() <= a));
    }

    #[test]
    fn different_seeds_differ() {
        assert_ne!(small(1).fingerprint(), small(2).fingerprint());
    }

    #[test]
    fn invalid_dims() {
        assert!(matches!(init_model(0, 4, 0), Err(EmbedError::InvalidDims { .. })));
        assert!(matches!(init_model(4, 0, 0), Err(EmbedError::InvalidDims { .. })));
    }

    #[test]
    fn embed_unit_norm_and_degenerate() {
        let m = small(3);
        let e = m.embed("How do I pay the annual fee?");
        let n: f64 = e.values.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-6);
        assert!(!e.degenerate);
        let z = m.embed("");
        assert!(z.degenerate);
        assert!(z.values.iter().all(|&x| x == 0.0));
        assert_eq!(z.values.len(), 16);
    }

    #[test]
    fn embed_deterministic() {
        let m = small(3);
        assert_eq!(m.embed("專利年費"), m.embed("專利年費"));
    }

    #[test]
    fn cosine_basics() {
        assert!((cosine(&[3.0, 4.0], &[3.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(
            cosine(&[1.0], &[1.0, 2.0]),
            Err(EmbedError::DimensionMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn persist_restore_roundtrip() {
        let m = small(9);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        m.persist(&p).unwrap();
        let r = EmbeddingModel::restore(&p).unwrap();
        assert_eq!(m, r);
        assert_eq!(m.hash_seed(), r.hash_seed());
        assert_eq!(m.fingerprint(), r.fingerprint());
        for t in ["patent fee", "發明", "x"] {
            assert_eq!(m.embed(t), r.embed(t));
        }
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len() as u64, HEADER_LEN + 4 * (1 << 10) * 16);
        // payload is row-major: the first payload value is row 0, column 0, then column 1
        let h = HEADER_LEN as usize;
        assert_eq!(f32::from_le_bytes(bytes[h..h + 4].try_into().unwrap()), m.weight(0, 0));
        assert_eq!(f32::from_le_bytes(bytes[h + 4..h + 8].try_into().unwrap()), m.weight(0, 1));
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let m = small(9);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        m.persist(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(EmbeddingModel::restore(&p), Err(EmbedError::CorruptFile(_))));
        std::fs::write(&p, &bytes[..20]).unwrap();
        assert!(matches!(EmbeddingModel::restore(&p), Err(EmbedError::CorruptFile(_))));
    }

    #[test]
    fn flipped_payload_byte_is_corrupt() {
        let m = small(9);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        m.persist(&p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x01;
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(EmbeddingModel::restore(&p), Err(EmbedError::CorruptFile(_))));
    }

    #[test]
    fn future_version_unsupported() {
        let m = small(9);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        m.persist(&p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[8..12].copy_from_slice(&(MODEL_FORMAT_VERSION + 1).to_le_bytes());
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(
            EmbeddingModel::restore(&p),
            Err(EmbedError::UnsupportedVersion(v)) if v == MODEL_FORMAT_VERSION + 1
        ));
    }

    #[test]
    fn scaling_preserves_cosines() {
        let m = small(4);
        let texts = ["annual fee deadline", "design patent renewal", "發明專利"];
        // powers of two scale f32 weights exactly; other factors round once per weight
        for (c, tol) in [(4.0f32, 1e-12), (0.25, 1e-12), (3.7, 1e-6)] {
            let mut scaled = m.clone();
            scaled.scale(c);
            for a in texts {
                for b in texts {
                    let c1 = cosine(&m.embed(a).values, &m.embed(b).values).unwrap();
                    let c2 = cosine(&scaled.embed(a).values, &scaled.embed(b).values).unwrap();
                    assert!((c1 - c2).abs() < tol, "scale {c}: {c1} vs {c2}");
                }
            }
        }
    }

    #[test]
    fn cosine_symmetric_on_random_pairs() {
        let mut rng = SeededRng::new(17);
        for _ in 0..100 {
            let u: Vec<f64> = (0..8).map(|_| rng.unit_f64() - 0.5).collect();
            let v: Vec<f64> = (0..8).map(|_| rng.unit_f64() - 0.5).collect();
            assert_eq!(cosine(&u, &v).unwrap(), cosine(&v, &u).unwrap());
        }
    }
}
