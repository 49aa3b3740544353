//! Contrastive fine-tuning of the embedding projection.

mod gradcheck;
mod loss;
mod optim;

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::augment::TripleSet;
use crate::corpus::Corpus;
use crate::embedder::EmbeddingModel;
use crate::jsonl::{self, JsonlError};
use crate::rng::{derive_seed, SeededRng};
pub use gradcheck::{gradient_check, gradient_check_against, gradient_check_with, GradCheckOptions};
pub use loss::{batch_loss, batch_loss_value, BatchLoss, ResolvedTriple, SparseGradient};
pub use optim::{AdamParams, Optimizer, OptimizerKind};

const SHUFFLE_STREAM: u64 = 0x7368_7566;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("{role} text for {id} has no features: {text:?}")]
    DegenerateText {
        role: &'static str,
        id: String,
        text: String,
    },
    #[error("empty batch")]
    EmptyBatch,
    #[error("triple set is empty")]
    EmptyTripleSet,
    #[error("triple references unknown answer {0}")]
    UnknownAnswer(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {0}: non-finite loss")]
    NonFiniteLoss(usize),
    #[error(transparent)]
    Io(#[from] JsonlError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub tau: f64,
    pub use_inbatch_negatives: bool,
    pub optimizer: OptimizerKind,
    pub adam: AdamParams,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 32,
            learning_rate: 1e-3,
            tau: 0.05,
            use_inbatch_negatives: true,
            optimizer: OptimizerKind::Adam,
            adam: AdamParams::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be non-negative, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || (self.use_inbatch_negatives && self.batch_size < 2) {
            return bad(format!(
                "batch_size {} too small (in-batch negatives: {})",
                self.batch_size, self.use_inbatch_negatives
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Mean Frobenius norm of the batch gradients.
    pub grad_norm: f64,
    pub batches: usize,
}

/// Training history. Equality ignores `wall_time`, which is the only
/// non-deterministic field and is not written to log files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainLog {
    pub config: TrainConfig,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl PartialEq for TrainLog {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.seed == other.seed && self.epochs == other.epochs
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum LogLine {
    Config { config: TrainConfig, seed: u64 },
    Epoch(EpochRecord),
}

impl TrainLog {
    /// One JSON record per line: a `config` record followed by one `epoch`
    /// record per epoch.
    pub fn write(&self, path: &Path) -> Result<(), TrainError> {
        let mut lines = vec![LogLine::Config {
            config: self.config.clone(),
            seed: self.seed,
        }];
        lines.extend(self.epochs.iter().cloned().map(LogLine::Epoch));
        Ok(jsonl::write_records(path, &lines)?)
    }

    pub fn read(path: &Path) -> Result<Self, TrainError> {
        let mut log = TrainLog {
            config: TrainConfig::default(),
            seed: 0,
            epochs: Vec::new(),
            wall_time: Duration::ZERO,
        };
        for (_, line) in jsonl::read_records::<LogLine>(path)? {
            match line {
                LogLine::Config { config, seed } => {
                    log.config = config;
                    log.seed = seed;
                }
                LogLine::Epoch(e) => log.epochs.push(e),
            }
        }
        Ok(log)
    }
}

/// Looks up the answer texts of every triple.
pub fn resolve_triples(tripleset: &TripleSet, corpus: &Corpus) -> Result<Vec<ResolvedTriple>, TrainError> {
    let lookup = |id: &str| {
        corpus
            .get(id)
            .map(|qa| (id.to_string(), qa.answer.clone()))
            .ok_or_else(|| TrainError::UnknownAnswer(id.to_string()))
    };
    tripleset
        .triples
        .iter()
        .map(|t| {
            Ok(ResolvedTriple {
                query: t.query_text.clone(),
                positive: lookup(&t.positive_answer_id)?,
                negatives: t
                    .negative_answer_ids
                    .iter()
                    .map(|id| lookup(id))
                    .collect::<Result<_, _>>()?,
            })
        })
        .collect()
}

/// Trains `model` on `tripleset`. Each epoch shuffles the triples with a
/// stream derived from `(config.seed, epoch)` and walks them in consecutive
/// batches (the last one may be short). Single-threaded; the result is a
/// pure function of the inputs.
pub fn train(
    mut model: EmbeddingModel,
    tripleset: &TripleSet,
    corpus: &Corpus,
    config: &TrainConfig,
) -> Result<(EmbeddingModel, TrainLog), TrainError> {
    config.validate()?;
    if tripleset.triples.is_empty() {
        return Err(TrainError::EmptyTripleSet);
    }
    let start = Instant::now();
    let resolved = resolve_triples(tripleset, corpus)?;
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, config.adam);
    let mut order: Vec<usize> = (0..resolved.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let mut rng = SeededRng::with_stream(derive_seed(config.seed, &[epoch as u64]), SHUFFLE_STREAM);
        rng.shuffle(&mut order);
        let (mut loss_sum, mut norm_sum, mut batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<ResolvedTriple> = chunk.iter().map(|&i| resolved[i].clone()).collect();
            let out = batch_loss(&model, &batch, config.tau, config.use_inbatch_negatives)?;
            if !out.loss.is_finite() {
                return Err(TrainError::NonFiniteLoss(epoch));
            }
            loss_sum += out.loss;
            norm_sum += out.gradient.norm();
            batches += 1;
            optimizer.apply(&mut model, &out.gradient);
        }
        let rec = EpochRecord {
            epoch,
            mean_loss: loss_sum / batches as f64,
            grad_norm: norm_sum / batches as f64,
            batches,
        };
        log::info!(
            "epoch {epoch}: mean loss {:.6}, grad norm {:.6}",
            rec.mean_loss,
            rec.grad_norm
        );
        epochs.push(rec);
    }
    let wall_time = start.elapsed();
    log::info!("training finished in {:.2?}", wall_time);
    Ok((
        model,
        TrainLog {
            config: config.clone(),
            seed: config.seed,
            epochs,
            wall_time,
        },
    ))
}
