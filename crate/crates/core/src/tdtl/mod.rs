//! Transductive deep transfer learning.
//!
//! The objective is `λ1·L1 + λ2·L2` with
//! `L1 = −Σ l·ln y` over labelled source rows and
//! `L2 = Σ‖p − f(x)‖² + α·Σ‖p‖₁` over target rows, where `f` is the
//! softmax output and `p` the matching row of the learnable label matrix.
//! Steps alternate between the two terms; label rows are updated by a
//! proximal (soft-threshold) gradient step, so exact zeros appear.

mod loss;
mod train;

pub use loss::{
    cross_entropy_from_logits, cross_entropy_loss, prox_label_update, total_loss,
    transductive_loss, TransductiveLoss,
};
pub use train::{
    compose_batches, loss_history_csv, predict_network, predictions, train, train_source_only,
    Batch, StepLoss, TrainData, TrainedModel,
};

use rand::Rng;

use crate::error::{contract, Result};
use crate::linalg::Matrix;

/// Default sparsity weight.
pub const DEFAULT_ALPHA: f64 = 150.0;

/// One-hot source labels, `N_s×c`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotLabels {
    values: Matrix,
}

impl OneHotLabels {
    pub fn from_indices(labels: &[usize], classes: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(contract(format!("label {bad} out of range for {classes} classes")));
        }
        Ok(Self {
            values: Matrix::from_fn(labels.len(), classes, |i, j| if labels[i] == j { 1.0 } else { 0.0 }),
        })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn classes(&self) -> usize {
        self.values.cols()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        self.values.select_rows(idx)
    }
}

/// The learnable `N_t×c` target label matrix, rows aligned with `ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetLabelMatrix {
    values: Matrix,
    ids: Vec<String>,
}

impl TargetLabelMatrix {
    pub fn new(values: Matrix, ids: Vec<String>) -> Result<Self> {
        if values.rows() != ids.len() {
            return Err(contract(format!("{} label rows for {} target ids", values.rows(), ids.len())));
        }
        Ok(Self { values, ids })
    }

    /// Independent uniform(0, 1) entries.
    pub fn random<R: Rng + ?Sized>(ids: Vec<String>, classes: usize, rng: &mut R) -> Self {
        let values = Matrix::from_fn(ids.len(), classes, |_, _| rng.random::<f64>());
        Self { values, ids }
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Matrix {
        &mut self.values
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn zero_fraction(&self) -> f64 {
        let data = self.values.as_slice();
        if data.is_empty() {
            return 0.0;
        }
        data.iter().filter(|&&v| v == 0.0).count() as f64 / data.len() as f64
    }
}

/// Trade-off weights for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub alpha: f64,
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(contract(format!("alpha must be non-negative, got {alpha}")));
        }
        Ok(Self { lambda1, lambda2, alpha })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub epochs_max: usize,
    pub batch_size: usize,
    pub source_fraction: f64,
    /// `(λ1, λ2)` pairs cycled over global steps.
    pub alternation: Vec<(f64, f64)>,
    pub convergence_rel_tol: f64,
    pub convergence_window: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            epochs_max: 200,
            batch_size: 64,
            source_fraction: 0.5,
            alternation: vec![(1.0, 0.0), (0.0, 1.0)],
            convergence_rel_tol: 1e-4,
            convergence_window: 5,
        }
    }
}

impl TrainSchedule {
    pub fn source_per_batch(&self) -> usize {
        (self.batch_size as f64 * self.source_fraction).round() as usize
    }

    pub fn target_per_batch(&self) -> usize {
        self.batch_size.saturating_sub(self.source_per_batch())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.source_fraction > 0.0 && self.source_fraction < 1.0) {
            return Err(contract(format!("source fraction must lie in (0, 1), got {}", self.source_fraction)));
        }
        if self.source_per_batch() == 0 || self.target_per_batch() == 0 {
            return Err(contract(format!(
                "batch size {} with source fraction {} leaves a domain without samples",
                self.batch_size, self.source_fraction
            )));
        }
        if self.alternation.is_empty() {
            return Err(contract("alternation pattern is empty"));
        }
        if self.alternation.iter().any(|&(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(contract("alternation weights must be finite"));
        }
        if !(self.convergence_rel_tol >= 0.0) || self.convergence_window == 0 {
            return Err(contract("convergence needs rel_tol >= 0 and window >= 1"));
        }
        Ok(())
    }
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn predict_labels(labels: &TargetLabelMatrix) -> Vec<usize> {
    argmax_rows(labels.values())
}

pub(crate) fn argmax_rows(m: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .map(|i| {
            let row = m.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
