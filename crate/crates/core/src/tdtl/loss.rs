use crate::error::{contract, Error, Result};
use crate::linalg::{shrink, Matrix};

use super::LossWeights;

const ROW_SUM_TOL: f64 = 1e-6;

fn same_shape(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

/// Summed cross-entropy `−Σ l·ln y` of softmax rows against one-hot rows,
/// and its gradient with respect to the softmax input (`y − l`).
pub fn cross_entropy_loss(predictions: &Matrix, labels: &Matrix) -> Result<(f64, Matrix)> {
    same_shape("cross_entropy_loss", predictions, labels)?;
    let mut loss = 0.0;
    for i in 0..predictions.rows() {
        let row = predictions.row(i);
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(contract(format!("prediction row {i} sums to {sum}, not 1")));
        }
        for (y, l) in row.iter().zip(labels.row(i)) {
            if *l != 0.0 {
                loss -= l * y.max(f64::MIN_POSITIVE).ln();
            }
        }
    }
    Ok((loss, predictions.sub(labels)?))
}

/// Same loss computed from the softmax input with log-sum-exp.
pub fn cross_entropy_from_logits(logits: &Matrix, labels: &Matrix) -> Result<(f64, Matrix)> {
    same_shape("cross_entropy_from_logits", logits, labels)?;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        let z = logits.row(i);
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        for (j, (&zj, &lj)) in z.iter().zip(labels.row(i)).enumerate() {
            loss += lj * (lse - zj);
            grad[(i, j)] = (zj - lse).exp() - lj;
        }
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransductiveLoss {
    pub loss: f64,
    /// `−2(p − f)`, the gradient with respect to the network output.
    pub grad_outputs: Matrix,
    /// `2(p − f)`, the gradient of the smooth part with respect to `p`.
    pub grad_labels_smooth: Matrix,
}

/// `Σ‖p − f‖² + α·Σ‖p‖₁` with the gradients of its smooth part.
pub fn transductive_loss(labels: &Matrix, outputs: &Matrix, alpha: f64) -> Result<TransductiveLoss> {
    if !(alpha >= 0.0) {
        return Err(contract(format!("alpha must be non-negative, got {alpha}")));
    }
    same_shape("transductive_loss", labels, outputs)?;
    let diff = labels.sub(outputs)?;
    let sq: f64 = diff.as_slice().iter().map(|d| d * d).sum();
    let l1: f64 = labels.as_slice().iter().map(|p| p.abs()).sum();
    Ok(TransductiveLoss {
        loss: sq + alpha * l1,
        grad_outputs: diff.scale(-2.0),
        grad_labels_smooth: diff.scale(2.0),
    })
}

/// `λ1·l1 + λ2·l2`. A term whose weight is zero is skipped, so it may be left unevaluated (NaN).
pub fn total_loss(l1: f64, l2: f64, w: &LossWeights) -> f64 {
    let part = |lambda: f64, l: f64| if lambda == 0.0 { 0.0 } else { lambda * l };
    part(w.lambda1, l1) + part(w.lambda2, l2)
}

/// Proximal gradient step on label rows: `ST(p − η·g, η·α)` elementwise.
pub fn prox_label_update(rows: &Matrix, grad_smooth: &Matrix, eta: f64, alpha: f64) -> Result<Matrix> {
    same_shape("prox_label_update", rows, grad_smooth)?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(contract(format!("label step size must be positive, got {eta}")));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(contract(format!("alpha must be non-negative, got {alpha}")));
    }
    let tau = eta * alpha;
    let data = rows
        .as_slice()
        .iter()
        .zip(grad_smooth.as_slice())
        .map(|(p, g)| shrink(p - eta * g, tau))
        .collect();
    Matrix::from_vec(rows.rows(), rows.cols(), data)
}
