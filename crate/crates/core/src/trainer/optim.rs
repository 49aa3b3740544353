//! Parameter update rules over sparse gradients.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::loss::SparseGradient;
use crate::embedder::EmbeddingModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Optimizer state. Adam is applied lazily: first and second moments exist
/// only for feature columns that have received a gradient, and only the
/// columns present in the current gradient are updated. Bias correction
/// uses the global step count.
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    adam: AdamParams,
    step: i32,
    moments: HashMap<u32, Moments>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, adam: AdamParams) -> Self {
        Self {
            kind,
            lr,
            adam,
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn apply(&mut self, model: &mut EmbeddingModel, grad: &SparseGradient) {
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (&col, g) in &grad.columns {
                    for (w, gk) in model.column_mut(col).iter_mut().zip(g) {
                        *w = (f64::from(*w) - self.lr * gk) as f32;
                    }
                }
            }
            OptimizerKind::Adam => {
                let AdamParams {
                    beta1,
                    beta2,
                    epsilon,
                } = self.adam;
                let bc1 = 1.0 - beta1.powi(self.step);
                let bc2 = 1.0 - beta2.powi(self.step);
                for (&col, g) in &grad.columns {
                    let st = self.moments.entry(col).or_insert_with(|| Moments {
                        m: vec![0.0; g.len()],
                        v: vec![0.0; g.len()],
                    });
                    let w = model.column_mut(col);
                    for k in 0..g.len() {
                        st.m[k] = beta1 * st.m[k] + (1.0 - beta1) * g[k];
                        st.v[k] = beta2 * st.v[k] + (1.0 - beta2) * g[k] * g[k];
                        let update = (st.m[k] / bc1) / ((st.v[k] / bc2).sqrt() + epsilon);
                        w[k] = (f64::from(w[k]) - self.lr * update) as f32;
                    }
                }
            }
        }
    }
}
