//! Small feed-forward network with exact manual backpropagation.
//!
//! Activations are stored with examples along rows: a batch is a
//! `batch × features` [`Matrix`] and dense weights are `in_dim × out_dim`,
//! so a dense layer computes `x·W + b`.

mod checkpoint;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{contract, Error, Result};
use crate::linalg::Matrix;

/// Standard deviation of freshly initialized dense weights.
pub const INIT_WEIGHT_STD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Relu,
    Tanh,
    Softmax,
    Dropout,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    /// Only meaningful for [`LayerKind::Dropout`].
    pub drop_rate: f64,
}

impl LayerSpec {
    pub fn dense(in_dim: usize, out_dim: usize) -> Self {
        Self {
            kind: LayerKind::Dense,
            in_dim,
            out_dim,
            drop_rate: 0.0,
        }
    }

    fn activation(kind: LayerKind, dim: usize) -> Self {
        Self {
            kind,
            in_dim: dim,
            out_dim: dim,
            drop_rate: 0.0,
        }
    }

    pub fn relu(dim: usize) -> Self {
        Self::activation(LayerKind::Relu, dim)
    }

    pub fn tanh(dim: usize) -> Self {
        Self::activation(LayerKind::Tanh, dim)
    }

    pub fn softmax(dim: usize) -> Self {
        Self::activation(LayerKind::Softmax, dim)
    }

    pub fn dropout(dim: usize, drop_rate: f64) -> Self {
        Self {
            drop_rate,
            ..Self::activation(LayerKind::Dropout, dim)
        }
    }
}

/// A validated chain of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    layers: Vec<LayerSpec>,
}

impl Architecture {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(contract("architecture has no layers"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim == 0 || l.out_dim == 0 {
                return Err(contract(format!("layer {i} has a zero dimension")));
            }
            if l.kind != LayerKind::Dense && l.in_dim != l.out_dim {
                return Err(contract(format!(
                    "activation layer {i} must keep its dimension ({} != {})",
                    l.in_dim, l.out_dim
                )));
            }
            if l.kind == LayerKind::Dropout && !(0.0..1.0).contains(&l.drop_rate) {
                return Err(contract(format!(
                    "dropout rate {} of layer {i} not in [0, 1)",
                    l.drop_rate
                )));
            }
            if l.kind == LayerKind::Softmax && i + 1 != layers.len() {
                return Err(contract(format!("softmax at layer {i} is not the final layer")));
            }
            if i > 0 && layers[i - 1].out_dim != l.in_dim {
                return Err(contract(format!(
                    "layer {} outputs {} but layer {i} expects {}",
                    i - 1,
                    layers[i - 1].out_dim,
                    l.in_dim
                )));
            }
        }
        if !layers.iter().any(|l| l.kind == LayerKind::Dense) {
            return Err(contract("architecture has no dense layer"));
        }
        Ok(Self { layers })
    }

    /// Dense backbone with ReLU and dropout after each hidden layer, then the
    /// transfer head: one dense layer into `classes` units, tanh, softmax.
    pub fn tdtl(input_dim: usize, hidden: &[usize], classes: usize, drop_rate: f64) -> Result<Self> {
        let mut layers = Vec::new();
        let mut prev = input_dim;
        for &h in hidden {
            layers.push(LayerSpec::dense(prev, h));
            layers.push(LayerSpec::relu(h));
            if drop_rate > 0.0 {
                layers.push(LayerSpec::dropout(h, drop_rate));
            }
            prev = h;
        }
        layers.push(LayerSpec::dense(prev, classes));
        layers.push(LayerSpec::tanh(classes));
        layers.push(LayerSpec::softmax(classes));
        Self::new(layers)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn ends_with_softmax(&self) -> bool {
        self.layers.last().map(|l| l.kind) == Some(LayerKind::Softmax)
    }

    pub fn dense_layer_count(&self) -> usize {
        self.layers.iter().filter(|l| l.kind == LayerKind::Dense).count()
    }
}

/// Weights and bias of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `in_dim × out_dim`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl DenseParams {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(in_dim, out_dim),
            bias: vec![0.0; out_dim],
        }
    }
}

/// Parameters of every dense layer, in network order. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub dense: Vec<DenseParams>,
}

/// Which learning rate a dense layer trains with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    /// All dense layers except the last.
    Backbone,
    /// The final dense layer (the transfer head).
    Transfer,
}

impl NetworkParams {
    pub fn zeros_like(arch: &Architecture) -> Self {
        Self {
            dense: arch
                .layers
                .iter()
                .filter(|l| l.kind == LayerKind::Dense)
                .map(|l| DenseParams::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    pub fn group_of(&self, dense_index: usize) -> ParamGroup {
        if dense_index + 1 == self.dense.len() {
            ParamGroup::Transfer
        } else {
            ParamGroup::Backbone
        }
    }

    /// Checks that shapes follow the architecture.
    pub fn check(&self, arch: &Architecture) -> Result<()> {
        let specs: Vec<&LayerSpec> = arch.layers.iter().filter(|l| l.kind == LayerKind::Dense).collect();
        if specs.len() != self.dense.len() {
            return Err(contract(format!(
                "architecture has {} dense layers, parameters have {}",
                specs.len(),
                self.dense.len()
            )));
        }
        for (i, (s, p)) in specs.iter().zip(&self.dense).enumerate() {
            if p.weight.shape() != (s.in_dim, s.out_dim) || p.bias.len() != s.out_dim {
                return Err(contract(format!(
                    "dense layer {i}: expected {}x{} weights, found {:?} with {} biases",
                    s.in_dim,
                    s.out_dim,
                    p.weight.shape(),
                    p.bias.len()
                )));
            }
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.dense.iter().map(|d| d.weight.as_slice().len() + d.bias.len()).sum()
    }

    /// `w ← w − η_group·∇w` on the layers of `group`.
    pub fn sgd_step(&mut self, grads: &NetworkParams, config: &OptimizerConfig, group: ParamGroup) -> Result<()> {
        if grads.dense.len() != self.dense.len() {
            return Err(contract("gradient/parameter layer count mismatch"));
        }
        let lr = match group {
            ParamGroup::Backbone => config.learning_rate_backbone,
            ParamGroup::Transfer => config.learning_rate_transfer,
        };
        for i in 0..self.dense.len() {
            if self.group_of(i) != group {
                continue;
            }
            let (p, g) = (&mut self.dense[i], &grads.dense[i]);
            p.weight.axpy(-lr, &g.weight)?;
            if p.bias.len() != g.bias.len() {
                return Err(contract("bias length mismatch"));
            }
            for (b, gb) in p.bias.iter_mut().zip(&g.bias) {
                *b -= lr * gb;
            }
        }
        Ok(())
    }

    /// Updates both groups, each with its own rate.
    pub fn sgd_step_all(&mut self, grads: &NetworkParams, config: &OptimizerConfig) -> Result<()> {
        self.sgd_step(grads, config, ParamGroup::Backbone)?;
        self.sgd_step(grads, config, ParamGroup::Transfer)
    }

    /// In-place `self += factor · other`.
    pub fn accumulate(&mut self, factor: f64, other: &NetworkParams) -> Result<()> {
        if self.dense.len() != other.dense.len() {
            return Err(contract("parameter layer count mismatch"));
        }
        for (a, b) in self.dense.iter_mut().zip(&other.dense) {
            a.weight.axpy(factor, &b.weight)?;
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += factor * y;
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.dense
            .iter()
            .all(|d| d.weight.all_finite() && d.bias.iter().all(|b| b.is_finite()))
    }
}

/// Learning rates for the two parameter groups and for the target label matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate_backbone: f64,
    pub learning_rate_transfer: f64,
    /// Step size of the proximal update on the target label matrix.
    pub learning_rate_labels: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate_backbone: 0.01,
            learning_rate_transfer: 0.005,
            learning_rate_labels: 0.05,
            seed: 42,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("backbone learning rate", self.learning_rate_backbone),
            ("transfer learning rate", self.learning_rate_transfer),
            ("label learning rate", self.learning_rate_labels),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(contract(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Weights ~ N(0, 0.01²), biases 0.
pub fn init_network<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<NetworkParams> {
    let normal = Normal::new(0.0, INIT_WEIGHT_STD).map_err(|e| contract(e.to_string()))?;
    let mut params = NetworkParams::zeros_like(arch);
    for layer in &mut params.dense {
        for w in layer.weight.as_mut_slice() {
            *w = normal.sample(rng);
        }
    }
    Ok(params)
}

/// Per-layer record of one forward pass. `activations[0]` is the input and
/// `activations[i + 1]` is the output of layer `i`.
#[derive(Debug, Clone)]
pub struct ActivationTape {
    activations: Vec<Matrix>,
    masks: Vec<Option<Matrix>>,
}

impl ActivationTape {
    /// Number of layers recorded.
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn layer_input(&self, layer: usize) -> &Matrix {
        &self.activations[layer]
    }

    pub fn layer_output(&self, layer: usize) -> &Matrix {
        &self.activations[layer + 1]
    }

    pub fn dropout_mask(&self, layer: usize) -> Option<&Matrix> {
        self.masks[layer].as_ref()
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].rows()
    }

    /// Output of the final layer.
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("tape always holds the input")
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Runs the network. Dropout is applied only when `train_mode` is set, with
/// kept units scaled by `1 / (1 − rate)`.
pub fn forward<R: Rng + ?Sized>(
    params: &NetworkParams,
    arch: &Architecture,
    x: &Matrix,
    train_mode: bool,
    rng: &mut R,
) -> Result<(Matrix, ActivationTape)> {
    params.check(arch)?;
    if x.cols() != arch.input_dim() {
        return Err(Error::Shape {
            op: "forward",
            left: x.shape(),
            right: (x.rows(), arch.input_dim()),
        });
    }
    let mut activations = Vec::with_capacity(arch.layers.len() + 1);
    let mut masks = Vec::with_capacity(arch.layers.len());
    activations.push(x.clone());
    let mut dense_idx = 0;
    for spec in &arch.layers {
        let input = activations.last().expect("non-empty");
        let (out, mask) = match spec.kind {
            LayerKind::Dense => {
                let p = &params.dense[dense_idx];
                dense_idx += 1;
                let mut out = input.matmul(&p.weight)?;
                for i in 0..out.rows() {
                    for (v, b) in out.row_mut(i).iter_mut().zip(&p.bias) {
                        *v += b;
                    }
                }
                (out, None)
            }
            LayerKind::Relu => (input.map(|v| v.max(0.0)), None),
            LayerKind::Tanh => (input.map(f64::tanh), None),
            LayerKind::Softmax => (softmax_rows(input), None),
            LayerKind::Dropout => {
                if train_mode && spec.drop_rate > 0.0 {
                    let keep = 1.0 - spec.drop_rate;
                    let scale = 1.0 / keep;
                    let mask = Matrix::from_fn(input.rows(), input.cols(), |_, _| {
                        if rng.random::<f64>() < keep {
                            scale
                        } else {
                            0.0
                        }
                    });
                    (input.hadamard(&mask)?, Some(mask))
                } else {
                    (input.clone(), None)
                }
            }
        };
        activations.push(out);
        masks.push(mask);
    }
    let output = activations.last().expect("non-empty").clone();
    Ok((output, ActivationTape { activations, masks }))
}

/// Gradients of a scalar loss whose gradient with respect to the network
/// output is `grad_output`.
pub fn backward(
    params: &NetworkParams,
    arch: &Architecture,
    tape: &ActivationTape,
    grad_output: &Matrix,
) -> Result<NetworkParams> {
    backward_from_layer(params, arch, tape, arch.layers.len(), grad_output)
}

/// Like [`backward`] but `grad_logits` is the gradient with respect to the
/// input of the final softmax layer.
pub fn backward_from_logits(
    params: &NetworkParams,
    arch: &Architecture,
    tape: &ActivationTape,
    grad_logits: &Matrix,
) -> Result<NetworkParams> {
    if !arch.ends_with_softmax() {
        return Err(contract("backward_from_logits needs a final softmax layer"));
    }
    backward_from_layer(params, arch, tape, arch.layers.len() - 1, grad_logits)
}

/// Backpropagates `grad` (taken w.r.t. the output of layer `end − 1`) down to the input.
fn backward_from_layer(
    params: &NetworkParams,
    arch: &Architecture,
    tape: &ActivationTape,
    end: usize,
    grad: &Matrix,
) -> Result<NetworkParams> {
    params.check(arch)?;
    if tape.len() != arch.layers.len() {
        return Err(contract(format!(
            "tape has {} layers, architecture has {}",
            tape.len(),
            arch.layers.len()
        )));
    }
    let expected = tape.activations[end].shape();
    if grad.shape() != expected {
        return Err(Error::Shape {
            op: "backward",
            left: grad.shape(),
            right: expected,
        });
    }
    let mut grads = NetworkParams::zeros_like(arch);
    let mut dense_idx = arch.layers[..end].iter().filter(|l| l.kind == LayerKind::Dense).count();
    let mut g = grad.clone();
    for layer in (0..end).rev() {
        let spec = &arch.layers[layer];
        let input = &tape.activations[layer];
        let output = &tape.activations[layer + 1];
        g = match spec.kind {
            LayerKind::Dense => {
                dense_idx -= 1;
                let p = &params.dense[dense_idx];
                let gw = input.t_matmul(&g)?;
                let mut gb = vec![0.0; g.cols()];
                for i in 0..g.rows() {
                    for (b, v) in gb.iter_mut().zip(g.row(i)) {
                        *b += v;
                    }
                }
                grads.dense[dense_idx] = DenseParams { weight: gw, bias: gb };
                if layer == 0 {
                    break;
                }
                g.matmul_t(&p.weight)?
            }
            LayerKind::Relu => Matrix::from_fn(g.rows(), g.cols(), |i, j| {
                if input[(i, j)] > 0.0 {
                    g[(i, j)]
                } else {
                    0.0
                }
            }),
            LayerKind::Tanh => Matrix::from_fn(g.rows(), g.cols(), |i, j| {
                let y = output[(i, j)];
                g[(i, j)] * (1.0 - y * y)
            }),
            LayerKind::Softmax => {
                let mut out = Matrix::zeros(g.rows(), g.cols());
                for i in 0..g.rows() {
                    let y = output.row(i);
                    let gi = g.row(i);
                    let inner: f64 = y.iter().zip(gi).map(|(a, b)| a * b).sum();
                    for (j, o) in out.row_mut(i).iter_mut().enumerate() {
                        *o = y[j] * (gi[j] - inner);
                    }
                }
                out
            }
            LayerKind::Dropout => match &tape.masks[layer] {
                Some(mask) => g.hadamard(mask)?,
                None => g,
            },
        };
    }
    debug_assert_eq!(dense_idx, 0);
    Ok(grads)
}
