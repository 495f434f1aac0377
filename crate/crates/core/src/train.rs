//! Mini-batch training with learning-rate decay, patience-based early
//! stopping on the test cost, and best-epoch weight restoration.
//!
//! Determinism contract: for a fixed config seed the whole trajectory is
//! bit-reproducible. Shuffling and dropout draw from seeds derived per
//! (epoch, step, sample), and batch gradients are reduced in a fixed order
//! even when samples are evaluated in parallel.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::axpy;
use crate::loss::{add_l2_grad, cost_grad_wrt_probs, weighted_cost, LossConfig};
use crate::metrics::MetricsBundle;
use crate::nn::CrdnnModel;
use crate::pipeline::WindowBatch;
use crate::seed::rng_for;

/// Samples per parallel gradient chunk; chunk boundaries are part of the
/// fixed reduction order.
const GRAD_CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Adam with bias correction.
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    /// Plain gradient descent, kept for the small-step descent property.
    Sgd,
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub initial_learning_rate: f64,
    /// Multiplicative decay applied per epoch.
    pub lr_decay: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            initial_learning_rate: 1e-4,
            lr_decay: 0.97,
            max_epochs: 200,
            early_stop_patience: 10,
            seed: 1,
            optimizer: OptimizerKind::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.initial_learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.lr_decay) || self.lr_decay == 0.0 {
            return Err(Error::Config("lr decay must be in (0, 1]".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_cost: f64,
    pub test_cost: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStopped,
    MaxEpochs,
}

/// Everything a training run reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub stop_epoch: usize,
    pub stop_reason: StopReason,
    pub best_epoch: usize,
    pub best_test_cost: f64,
    pub final_metrics: MetricsBundle,
    pub parameter_count: usize,
    /// Mean absolute weight per layer after restoration, plus the first conv
    /// layer's per-input-channel means.
    pub weight_magnitudes: Vec<(String, f64)>,
    pub input_channel_magnitudes: Vec<f64>,
}

enum Optimizer {
    Adam {
        m: Vec<f64>,
        v: Vec<f64>,
        t: u64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
    Sgd,
}

impl Optimizer {
    fn new(kind: OptimizerKind, len: usize) -> Self {
        match kind {
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => Optimizer::Adam {
                m: vec![0.0; len],
                v: vec![0.0; len],
                t: 0,
                beta1,
                beta2,
                epsilon,
            },
            OptimizerKind::Sgd => Optimizer::Sgd,
        }
    }

    /// Number of scalars this optimizer tracks (equals the parameter count).
    fn state_len(&self, fallback: usize) -> usize {
        match self {
            Optimizer::Adam { m, .. } => m.len(),
            Optimizer::Sgd => fallback,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        match self {
            Optimizer::Adam {
                m,
                v,
                t,
                beta1,
                beta2,
                epsilon,
            } => {
                *t += 1;
                let b1t = 1.0 - beta1.powi(*t as i32);
                let b2t = 1.0 - beta2.powi(*t as i32);
                for i in 0..params.len() {
                    m[i] = *beta1 * m[i] + (1.0 - *beta1) * grads[i];
                    v[i] = *beta2 * v[i] + (1.0 - *beta2) * grads[i] * grads[i];
                    let mhat = m[i] / b1t;
                    let vhat = v[i] / b2t;
                    params[i] -= lr * mhat / (vhat.sqrt() + *epsilon);
                }
            }
            Optimizer::Sgd => {
                for i in 0..params.len() {
                    params[i] -= lr * grads[i];
                }
            }
        }
    }
}

/// Averaged batch gradient with the L2 term, reduced in fixed chunk order.
pub fn batch_gradient(
    model: &CrdnnModel,
    batch: &WindowBatch,
    indices: &[usize],
    loss_cfg: &LossConfig,
    seed: u64,
    epoch: usize,
    step: usize,
) -> Result<Vec<f64>> {
    let m = indices.len();
    let n_params = model.count_parameters();
    let partials: Result<Vec<Vec<f64>>> = indices
        .par_chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(chunk_idx, chunk)| {
            let mut acc = vec![0.0; n_params];
            for (j, &i) in chunk.iter().enumerate() {
                let ordinal = (chunk_idx * GRAD_CHUNK + j) as u64;
                let tag = ((epoch as u64) << 40) ^ ((step as u64) << 20) ^ ordinal;
                let mut rng = rng_for(seed, "dropout", tag);
                let (probs, tape) = model.forward_train(&batch.windows[i], Some(&mut rng))?;
                let d = cost_grad_wrt_probs(&probs, &batch.targets[i], loss_cfg, m);
                let g = model.backward(&tape, &d);
                axpy(1.0, g.as_slice(), &mut acc);
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![0.0; n_params];
    for p in partials? {
        axpy(1.0, &p, &mut total);
    }
    add_l2_grad(model, loss_cfg, m, &mut total);
    Ok(total)
}

/// Inference-mode probabilities for every window, in order.
pub fn predict_batch(model: &CrdnnModel, batch: &WindowBatch) -> Result<Vec<Vec<f64>>> {
    batch
        .windows
        .par_iter()
        .map(|w| model.forward(w))
        .collect()
}

pub fn classify(probs: &[f64]) -> usize {
    let mut best = 0;
    for k in 1..probs.len() {
        if probs[k] > probs[best] {
            best = k;
        }
    }
    best
}

fn evaluate_cost(
    model: &CrdnnModel,
    batch: &WindowBatch,
    loss_cfg: &LossConfig,
) -> Result<(f64, f64, Vec<usize>)> {
    let probs = predict_batch(model, batch)?;
    let cost = weighted_cost(&probs, &batch.targets, model, loss_cfg)?;
    let preds: Vec<usize> = probs.iter().map(|p| classify(p)).collect();
    let truths: Vec<usize> = (0..batch.len()).map(|i| batch.target_class(i)).collect();
    let correct = preds
        .iter()
        .zip(truths.iter())
        .filter(|(p, t)| p == t)
        .count();
    Ok((cost, correct as f64 / batch.len() as f64, preds))
}

/// Trains the model in place: mini-batch gradient descent with per-epoch
/// learning-rate decay, stopping when the test cost has not improved for
/// `early_stop_patience` epochs (or at `max_epochs`), then restoring the
/// parameters of the best-test-cost epoch.
pub fn train(
    model: &mut CrdnnModel,
    train_set: &WindowBatch,
    test_set: &WindowBatch,
    train_cfg: &TrainConfig,
    loss_cfg: &LossConfig,
) -> Result<TrainReport> {
    train_cfg.validate()?;
    loss_cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training set has no windows".into()));
    }
    if test_set.is_empty() {
        return Err(Error::EmptyInput("test set has no windows".into()));
    }

    let n_params = model.count_parameters();
    let mut optimizer = Optimizer::new(train_cfg.optimizer, n_params);
    debug_assert_eq!(optimizer.state_len(n_params), n_params);

    let mut params = model.params_flat();
    let mut best_params = params.clone();
    let mut best_test_cost = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    let mut stop_epoch = train_cfg.max_epochs;

    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=train_cfg.max_epochs {
        let lr = train_cfg.initial_learning_rate * train_cfg.lr_decay.powi(epoch as i32 - 1);

        let mut rng = rng_for(train_cfg.seed, "shuffle", epoch as u64);
        order.shuffle(&mut rng);

        for (step, chunk) in order.chunks(train_cfg.batch_size).enumerate() {
            let grads = batch_gradient(
                model,
                train_set,
                chunk,
                loss_cfg,
                train_cfg.seed,
                epoch,
                step,
            )?;
            optimizer.step(&mut params, &grads, lr);
            model.set_params_flat(&params)?;
        }

        let (train_cost, _, _) = evaluate_cost(model, train_set, loss_cfg)?;
        let (test_cost, test_accuracy, _) = evaluate_cost(model, test_set, loss_cfg)?;
        if !train_cost.is_finite() || !test_cost.is_finite() {
            return Err(Error::Diverged {
                epoch,
                learning_rate: lr,
            });
        }
        epochs.push(EpochRecord {
            epoch,
            learning_rate: lr,
            train_cost,
            test_cost,
            test_accuracy,
        });

        if test_cost < best_test_cost {
            best_test_cost = test_cost;
            best_epoch = epoch;
            best_params.copy_from_slice(&params);
        } else if epoch - best_epoch >= train_cfg.early_stop_patience {
            stop_reason = StopReason::EarlyStopped;
            stop_epoch = epoch;
            break;
        }
        stop_epoch = epoch;
    }

    // restore the best-test-cost parameters
    model.set_params_flat(&best_params)?;

    let (_, _, preds) = evaluate_cost(model, test_set, loss_cfg)?;
    let truths: Vec<usize> = (0..test_set.len()).map(|i| test_set.target_class(i)).collect();
    let final_metrics = MetricsBundle::from_predictions(&preds, &truths)?;

    let magnitudes = model.weight_magnitudes();
    Ok(TrainReport {
        epochs,
        stop_epoch,
        stop_reason,
        best_epoch,
        best_test_cost,
        final_metrics,
        parameter_count: n_params,
        weight_magnitudes: magnitudes.per_layer,
        input_channel_magnitudes: magnitudes.per_input_channel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::nn::{Architecture, ModelConfig};
    use crate::pipeline::WindowMeta;

    fn tiny_model(seed: u64, dropout: f64) -> CrdnnModel {
        let cfg = ModelConfig {
            conv_filters: 4,
            conv_kernel: 3,
            reduce_units: [6, 6],
            rnn_units: 5,
            head_units: 6,
            dropout,
            ..ModelConfig::default()
        };
        CrdnnModel::new(Architecture::OneLstm, &cfg, seed).unwrap()
    }

    /// Small separable toy problem: class = which channel carries the bump.
    fn toy_batch(n: usize, seed: u64) -> WindowBatch {
        use rand::Rng;
        let mut rng = rng_for(seed, "toy", 0);
        let mut batch = WindowBatch::default();
        for i in 0..n {
            let class = i % 3;
            let mut w = Matrix::zeros(9, 5);
            for t in 0..9 {
                for c in 0..5 {
                    let base = if c == class { 1.5 } else { 0.0 };
                    w.set(t, c, base + rng.gen_range(-0.2..0.2));
                }
            }
            let mut target = vec![0.0; 3];
            target[class] = 1.0;
            batch.windows.push(w);
            batch.targets.push(target);
            batch.meta.push(WindowMeta {
                cycle: 0,
                anchor: i,
                t_final: i as f64,
            });
        }
        batch
    }

    fn fast_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            initial_learning_rate: 5e-3,
            lr_decay: 1.0,
            max_epochs: 40,
            early_stop_patience: 40,
            seed,
            optimizer: OptimizerKind::default(),
        }
    }

    #[test]
    fn overfits_a_small_separable_set() {
        let mut model = tiny_model(3, 0.0);
        let batch = toy_batch(24, 5);
        let test = toy_batch(12, 6);
        let loss = LossConfig::default().without_l2();
        let report = train(&mut model, &batch, &test, &fast_cfg(7), &loss).unwrap();
        let (_, acc, _) = evaluate_cost(&model, &batch, &loss).unwrap();
        assert!(acc > 0.99, "training accuracy {acc}, report {:?}", report.stop_reason);
    }

    #[test]
    fn full_batch_sgd_small_step_decreases_cost() {
        let mut model = tiny_model(11, 0.0);
        let batch = toy_batch(12, 13);
        let loss = LossConfig::default().without_l2();
        let (j0, _, _) = evaluate_cost(&model, &batch, &loss).unwrap();
        let indices: Vec<usize> = (0..batch.len()).collect();
        let grads = batch_gradient(&model, &batch, &indices, &loss, 1, 1, 0).unwrap();
        let mut params = model.params_flat();
        for (p, g) in params.iter_mut().zip(grads.iter()) {
            *p -= 1e-4 * g;
        }
        model.set_params_flat(&params).unwrap();
        let (j1, _, _) = evaluate_cost(&model, &batch, &loss).unwrap();
        assert!(j1 < j0, "cost should decrease: {j0} -> {j1}");
    }

    #[test]
    fn same_seed_reproduces_report_bit_exact() {
        let batch = toy_batch(20, 21);
        let test = toy_batch(10, 22);
        let loss = LossConfig::default();
        let mut cfg = fast_cfg(33);
        cfg.max_epochs = 6;

        let mut m1 = tiny_model(9, 0.2);
        let r1 = train(&mut m1, &batch, &test, &cfg, &loss).unwrap();
        let mut m2 = tiny_model(9, 0.2);
        let r2 = train(&mut m2, &batch, &test, &cfg, &loss).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(m1.params_flat(), m2.params_flat());
    }

    #[test]
    fn early_stopping_and_restoration_contract() {
        let batch = toy_batch(30, 41);
        let test = toy_batch(15, 42);
        let loss = LossConfig::default().without_l2();
        let cfg = TrainConfig {
            batch_size: 8,
            initial_learning_rate: 2e-2, // deliberately jumpy so test cost wobbles
            lr_decay: 1.0,
            max_epochs: 60,
            early_stop_patience: 5,
            seed: 43,
            optimizer: OptimizerKind::default(),
        };
        let mut model = tiny_model(17, 0.0);
        let report = train(&mut model, &batch, &test, &cfg, &loss).unwrap();

        let min_recorded = report
            .epochs
            .iter()
            .map(|e| e.test_cost)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(report.best_test_cost, min_recorded);

        if report.stop_reason == StopReason::EarlyStopped {
            assert_eq!(report.stop_epoch, report.best_epoch + cfg.early_stop_patience);
        }

        // restored parameters reproduce the recorded minimum test cost
        let (cost, _, _) = evaluate_cost(&model, &test, &loss).unwrap();
        assert_eq!(cost.to_bits(), report.best_test_cost.to_bits());
    }

    #[test]
    fn empty_training_set_rejected() {
        let mut model = tiny_model(1, 0.0);
        let empty = WindowBatch::default();
        let test = toy_batch(6, 2);
        assert!(matches!(
            train(&mut model, &empty, &test, &fast_cfg(1), &LossConfig::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn optimizer_updates_every_parameter() {
        // perturbation accounting: with an all-ones gradient every scalar
        // moves, and the count of moved scalars equals count_parameters
        let mut model = tiny_model(5, 0.0);
        let n = model.count_parameters();
        let mut optimizer = Optimizer::new(OptimizerKind::default(), n);
        let before = model.params_flat();
        let mut params = before.clone();
        optimizer.step(&mut params, &vec![1.0; n], 1e-3);
        let moved = params
            .iter()
            .zip(before.iter())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(moved, n);
    }
}
