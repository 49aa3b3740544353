//! Central finite-difference check of the analytic loss gradient.

use super::loss::{batch_loss, batch_loss_value, ResolvedTriple, SparseGradient};
use super::TrainError;
use crate::embedder::EmbeddingModel;
use crate::rng::SeededRng;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckOptions {
    pub tau: f64,
    pub use_inbatch_negatives: bool,
    /// Number of sampled coordinates.
    pub samples: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            tau: 0.05,
            use_inbatch_negatives: true,
            samples: 128,
            seed: 0,
        }
    }
}

/// Max relative error between the analytic gradient and central differences
/// at step `eps`, with default options.
pub fn gradient_check(
    model: &EmbeddingModel,
    batch: &[ResolvedTriple],
    eps: f64,
) -> Result<f64, TrainError> {
    gradient_check_with(model, batch, eps, &GradCheckOptions::default())
}

pub fn gradient_check_with(
    model: &EmbeddingModel,
    batch: &[ResolvedTriple],
    eps: f64,
    options: &GradCheckOptions,
) -> Result<f64, TrainError> {
    let analytic = batch_loss(model, batch, options.tau, options.use_inbatch_negatives)?.gradient;
    gradient_check_against(model, batch, eps, options, &analytic)
}

/// Compares a supplied gradient against central differences.
///
/// Coordinates are drawn uniformly (seeded) from the rows of the feature
/// columns active in the batch; elsewhere the gradient is exactly zero. The
/// difference quotient divides by the realized step `w+ - w-` after rounding
/// to `f32`. The relative error of a coordinate is `|a - n| / max(|n|, f)`
/// with `f` = 1e-3 times the largest sampled `|n|`, so near-zero coordinates
/// do not turn rounding noise into large ratios.
pub fn gradient_check_against(
    model: &EmbeddingModel,
    batch: &[ResolvedTriple],
    eps: f64,
    options: &GradCheckOptions,
    analytic: &SparseGradient,
) -> Result<f64, TrainError> {
    if !(eps > 0.0) {
        return Err(TrainError::InvalidConfig(format!("eps must be positive, got {eps}")));
    }
    let mut cols: Vec<u32> = Vec::new();
    for t in batch {
        for text in std::iter::once(&t.query)
            .chain(std::iter::once(&t.positive.1))
            .chain(t.negatives.iter().map(|(_, x)| x))
        {
            cols.extend(model.featurize(&crate::embedder::tokenize(text)).indices());
        }
    }
    cols.sort_unstable();
    cols.dedup();
    if cols.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let mut rng = SeededRng::new(options.seed);
    let mut probe = model.clone();
    let mut pairs = Vec::with_capacity(options.samples);
    for _ in 0..options.samples {
        let col = cols[rng.below_usize(cols.len())];
        let row = rng.below_usize(model.emb_dim());
        let w0 = model.weight(row, col as usize);
        let plus = (f64::from(w0) + eps) as f32;
        let minus = (f64::from(w0) - eps) as f32;
        probe.set_weight(row, col as usize, plus);
        let lp = batch_loss_value(&probe, batch, options.tau, options.use_inbatch_negatives)?;
        probe.set_weight(row, col as usize, minus);
        let lm = batch_loss_value(&probe, batch, options.tau, options.use_inbatch_negatives)?;
        probe.set_weight(row, col as usize, w0);
        let numeric = (lp - lm) / (f64::from(plus) - f64::from(minus));
        pairs.push((analytic.get(row, col), numeric));
    }
    let scale = pairs.iter().map(|(_, n)| n.abs()).fold(0.0, f64::max);
    let floor = (1e-3 * scale).max(f64::MIN_POSITIVE);
    Ok(pairs
        .iter()
        .map(|(a, n)| (a - n).abs() / n.abs().max(floor))
        .fold(0.0, f64::max))
}
