use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use super::loss::{cross_entropy_from_logits, prox_label_update, total_loss, transductive_loss};
use super::{argmax_rows, LossWeights, OneHotLabels, TargetLabelMatrix, TrainSchedule};
use crate::data::PredictionRow;
use crate::error::{contract, Error, Result};
use crate::linalg::Matrix;
use crate::nn::{backward, backward_from_logits, forward, init_network, Architecture, NetworkParams, OptimizerConfig};
use crate::SeededRng;

/// Row indices into the source and target sets for one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

/// `slots` indices: a shuffled permutation of `0..n`, then uniform draws
/// with replacement for whatever is left.
fn fill_slots(n: usize, slots: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut out: Vec<usize> = (0..n).collect();
    out.shuffle(rng);
    out.truncate(slots);
    while out.len() < slots {
        out.push(rng.random_range(0..n));
    }
    out
}

/// One epoch of mixed batches. Each holds `round(batch_size·source_fraction)`
/// source rows and the rest target rows. There are enough batches for every
/// sample of the larger domain to appear once; the smaller domain is padded
/// by drawing with replacement.
pub fn compose_batches(
    source_count: usize,
    target_count: usize,
    schedule: &TrainSchedule,
    rng: &mut SeededRng,
) -> Result<Vec<Batch>> {
    schedule.validate()?;
    if source_count == 0 || target_count == 0 {
        return Err(contract("compose_batches needs samples in both domains"));
    }
    let (ks, kt) = (schedule.source_per_batch(), schedule.target_per_batch());
    let count = source_count.div_ceil(ks).max(target_count.div_ceil(kt));
    let src = fill_slots(source_count, count * ks, rng);
    let tgt = fill_slots(target_count, count * kt, rng);
    Ok((0..count)
        .map(|b| Batch {
            source: src[b * ks..(b + 1) * ks].to_vec(),
            target: tgt[b * kt..(b + 1) * kt].to_vec(),
        })
        .collect())
}

/// Source features with labels, target features with ids (target labels
/// are never seen here).
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub xs: &'a Matrix,
    pub ys: &'a [usize],
    pub xt: &'a Matrix,
    pub target_ids: &'a [String],
    pub classes: usize,
}

impl TrainData<'_> {
    fn validate(&self, arch: &Architecture) -> Result<()> {
        if self.classes < 2 {
            return Err(contract("training needs at least 2 classes"));
        }
        if arch.output_dim() != self.classes || !arch.ends_with_softmax() {
            return Err(contract(format!(
                "architecture must end in a {}-way softmax",
                self.classes
            )));
        }
        if self.xs.cols() != arch.input_dim() || self.xt.cols() != arch.input_dim() {
            return Err(Error::Shape {
                op: "train",
                left: self.xs.shape(),
                right: self.xt.shape(),
            });
        }
        if self.ys.len() != self.xs.rows() {
            return Err(contract(format!("{} labels for {} source rows", self.ys.len(), self.xs.rows())));
        }
        if self.target_ids.len() != self.xt.rows() {
            return Err(contract(format!(
                "{} target ids for {} target rows",
                self.target_ids.len(),
                self.xt.rows()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss {
    pub step: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: NetworkParams,
    pub labels: TargetLabelMatrix,
    pub loss_history: Vec<StepLoss>,
    pub epochs_run: usize,
}

/// Tracks relative change of the epoch-mean loss.
struct Convergence {
    tol: f64,
    window: usize,
    previous: Option<f64>,
    calm: usize,
}

impl Convergence {
    fn new(schedule: &TrainSchedule) -> Self {
        Self {
            tol: schedule.convergence_rel_tol,
            window: schedule.convergence_window,
            previous: None,
            calm: 0,
        }
    }

    /// Records an epoch mean; true once `window` consecutive changes were small.
    fn update(&mut self, mean: f64) -> bool {
        if let Some(prev) = self.previous {
            let rel = (mean - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
            self.calm = if rel < self.tol { self.calm + 1 } else { 0 };
        }
        self.previous = Some(mean);
        self.calm >= self.window
    }
}

/// Supervised part of one step: cross-entropy on source rows.
fn source_step(
    params: &NetworkParams,
    arch: &Architecture,
    x: &Matrix,
    onehot: &Matrix,
    lambda1: f64,
    rng: &mut SeededRng,
) -> Result<(f64, NetworkParams)> {
    let (_, tape) = forward(params, arch, x, true, rng)?;
    let logits = tape.layer_input(arch.layers().len() - 1);
    let (loss, grad) = cross_entropy_from_logits(logits, onehot)?;
    let grads = backward_from_logits(params, arch, &tape, &grad.scale(lambda1))?;
    Ok((loss, grads))
}

/// Runs the alternating schedule until `epochs_max` or convergence.
pub fn train(
    data: &TrainData,
    arch: &Architecture,
    schedule: &TrainSchedule,
    alpha: f64,
    optimizer: &OptimizerConfig,
    rng: &mut SeededRng,
) -> Result<TrainedModel> {
    data.validate(arch)?;
    schedule.validate()?;
    optimizer.validate()?;
    LossWeights::new(0.0, 0.0, alpha)?;
    let onehot = OneHotLabels::from_indices(data.ys, data.classes)?;
    let mut params = init_network(arch, rng)?;
    let mut labels = TargetLabelMatrix::random(data.target_ids.to_vec(), data.classes, rng);
    let mut history = Vec::new();
    let mut convergence = Convergence::new(schedule);
    let mut epochs_run = 0;
    let mut step = 0;

    for _ in 0..schedule.epochs_max {
        let batches = compose_batches(data.xs.rows(), data.xt.rows(), schedule, rng)?;
        let mut epoch_sum = 0.0;
        for batch in &batches {
            let (lambda1, lambda2) = schedule.alternation[step % schedule.alternation.len()];
            let weights = LossWeights::new(lambda1, lambda2, alpha)?;
            let mut grads = NetworkParams::zeros_like(arch);
            let (mut l1, mut l2) = (f64::NAN, f64::NAN);

            if lambda1 != 0.0 {
                let x = data.xs.select_rows(&batch.source);
                let (loss, g) = source_step(&params, arch, &x, &onehot.select_rows(&batch.source), lambda1, rng)?;
                l1 = loss;
                grads.accumulate(1.0, &g)?;
            }
            if lambda2 != 0.0 {
                let x = data.xt.select_rows(&batch.target);
                let (f, tape) = forward(&params, arch, &x, true, rng)?;
                let p = labels.values().select_rows(&batch.target);
                let tl = transductive_loss(&p, &f, alpha)?;
                l2 = tl.loss;
                grads.accumulate(1.0, &backward(&params, arch, &tape, &tl.grad_outputs.scale(lambda2))?)?;
                update_label_rows(
                    &mut labels,
                    &batch.target,
                    &tl.grad_labels_smooth.scale(lambda2),
                    optimizer.learning_rate_labels,
                    alpha * lambda2.abs(),
                )?;
            }

            let loss = total_loss(l1, l2, &weights);
            if !loss.is_finite() {
                return Err(Error::Divergence { step, loss });
            }
            params.sgd_step_all(&grads, optimizer)?;
            if !params.all_finite() {
                return Err(Error::Divergence { step, loss: f64::NAN });
            }
            history.push(StepLoss {
                step,
                lambda1,
                lambda2,
                loss,
            });
            epoch_sum += loss;
            step += 1;
        }
        epochs_run += 1;
        if convergence.update(epoch_sum / batches.len() as f64) {
            break;
        }
    }
    Ok(TrainedModel {
        params,
        labels,
        loss_history: history,
        epochs_run,
    })
}

/// Proximal step on the label rows touched by a batch. A row drawn more than
/// once gets the sum of its gradient rows and a single proximal step.
fn update_label_rows(
    labels: &mut TargetLabelMatrix,
    rows: &[usize],
    grad: &Matrix,
    eta: f64,
    alpha: f64,
) -> Result<()> {
    let classes = grad.cols();
    let mut order = Vec::new();
    let mut sums: HashMap<usize, Vec<f64>> = HashMap::new();
    for (k, &r) in rows.iter().enumerate() {
        let entry = sums.entry(r).or_insert_with(|| {
            order.push(r);
            vec![0.0; classes]
        });
        entry.iter_mut().zip(grad.row(k)).for_each(|(s, g)| *s += g);
    }
    let current = labels.values().select_rows(&order);
    let g = Matrix::from_fn(order.len(), classes, |i, j| sums[&order[i]][j]);
    let updated = prox_label_update(&current, &g, eta, alpha)?;
    let values = labels.values_mut();
    for (i, &r) in order.iter().enumerate() {
        values.row_mut(r).copy_from_slice(updated.row(i));
    }
    Ok(())
}

/// The no-adaptation baseline: the same network trained on source rows
/// only, with every step supervised.
pub fn train_source_only(
    xs: &Matrix,
    ys: &[usize],
    classes: usize,
    arch: &Architecture,
    schedule: &TrainSchedule,
    optimizer: &OptimizerConfig,
    rng: &mut SeededRng,
) -> Result<(NetworkParams, Vec<StepLoss>)> {
    let ids: Vec<String> = Vec::new();
    let data = TrainData {
        xs,
        ys,
        xt: &Matrix::zeros(0, xs.cols()),
        target_ids: &ids,
        classes,
    };
    data.validate(arch)?;
    schedule.validate()?;
    optimizer.validate()?;
    if xs.rows() == 0 {
        return Err(contract("no source samples"));
    }
    let onehot = OneHotLabels::from_indices(ys, classes)?;
    let mut params = init_network(arch, rng)?;
    let ks = schedule.source_per_batch();
    let mut history = Vec::new();
    let mut convergence = Convergence::new(schedule);
    let mut step = 0;
    for _ in 0..schedule.epochs_max {
        let count = xs.rows().div_ceil(ks);
        let slots = fill_slots(xs.rows(), count * ks, rng);
        let mut epoch_sum = 0.0;
        for chunk in slots.chunks(ks) {
            let x = xs.select_rows(chunk);
            let (loss, grads) = source_step(&params, arch, &x, &onehot.select_rows(chunk), 1.0, rng)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { step, loss });
            }
            params.sgd_step_all(&grads, optimizer)?;
            history.push(StepLoss {
                step,
                lambda1: 1.0,
                lambda2: 0.0,
                loss,
            });
            epoch_sum += loss;
            step += 1;
        }
        if convergence.update(epoch_sum / count as f64) {
            break;
        }
    }
    Ok((params, history))
}

/// Argmax of the network output in inference mode.
pub fn predict_network(params: &NetworkParams, arch: &Architecture, x: &Matrix) -> Result<Vec<usize>> {
    // inference draws no randomness; the rng is only a placeholder
    let mut rng = crate::seeded_rng(0);
    let (out, _) = forward(params, arch, x, false, &mut rng)?;
    Ok(argmax_rows(&out))
}

pub fn predictions(ids: &[String], predicted: &[usize], truth: &[Option<usize>]) -> Result<Vec<PredictionRow>> {
    if ids.len() != predicted.len() || ids.len() != truth.len() {
        return Err(contract("ids, predictions and truth differ in length"));
    }
    Ok(ids
        .iter()
        .zip(predicted)
        .zip(truth)
        .map(|((id, &p), &t)| PredictionRow {
            sample_id: id.clone(),
            predicted_class: p,
            true_class: t,
        })
        .collect())
}

/// `step,lambda1,lambda2,loss`.
pub fn loss_history_csv(history: &[StepLoss]) -> String {
    let mut out = String::from("step,lambda1,lambda2,loss\n");
    for h in history {
        let _ = writeln!(out, "{},{},{},{}", h.step, h.lambda1, h.lambda2, h.loss);
    }
    out
}
