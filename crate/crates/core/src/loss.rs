//! Class-weighted cost with L2 regularization.
//!
//! The per-sample cost applies a two-sided log loss to every class of the
//! softmax output and scales each class term by its weight:
//!
//! ```text
//! J = 1/m * sum_i sum_k [ -y_k log(h_k) - (1 - y_k) log(1 - h_k) ] * W_k
//!     + lambda/(2m) * sum(selected weight matrices squared)
//! ```
//!
//! Note the complement term: this is not the usual categorical cross-entropy
//! (which drops the `(1 - y) log(1 - h)` part). Probabilities are clamped to
//! `[1e-12, 1 - 1e-12]` before the logs. By default the L2 sum runs over the
//! two classification-head weight matrices only; an all-dense mode is
//! available.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::CrdnnModel;

pub const PROB_CLAMP: f64 = 1e-12;

/// Which weight matrices enter the L2 term. Biases never do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizedLayers {
    /// The two dense matrices of the classification head.
    HeadOnly,
    /// Every dense matrix, per-timestep and head.
    AllDense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Per-class weights for (travel, loading, unloading).
    pub class_weights: Vec<f64>,
    pub l2_lambda: f64,
    pub regularized: RegularizedLayers,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            class_weights: default_class_weights().to_vec(),
            l2_lambda: 1e-3,
            regularized: RegularizedLayers::HeadOnly,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.class_weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::Config(
                "class weights must be strictly positive".into(),
            ));
        }
        if self.l2_lambda < 0.0 {
            return Err(Error::Config("l2 lambda must be non-negative".into()));
        }
        Ok(())
    }

    pub fn without_l2(&self) -> LossConfig {
        LossConfig {
            l2_lambda: 0.0,
            ..self.clone()
        }
    }
}

/// The recommended weights for (travel, loading, unloading): the minority
/// classes cost more to miss.
pub fn default_class_weights() -> [f64; 3] {
    [1.0, 4.0, 7.0]
}

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Weighted data term of one sample (no regularizer, no 1/m).
pub fn sample_cost(prediction: &[f64], target: &[f64], weights: &[f64]) -> f64 {
    let mut j = 0.0;
    for k in 0..prediction.len() {
        let h = clamp_prob(prediction[k]);
        let y = target[k];
        j += (-y * h.ln() - (1.0 - y) * (1.0 - h).ln()) * weights[k];
    }
    j
}

/// Full batch cost `J` over `m` samples, including the L2 term computed from
/// the model's currently selected weight matrices.
pub fn weighted_cost(
    predictions: &[Vec<f64>],
    targets: &[Vec<f64>],
    model: &CrdnnModel,
    cfg: &LossConfig,
) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Input(format!(
            "{} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput("no samples to score".into()));
    }
    let m = predictions.len() as f64;
    let mut data_term = 0.0;
    for (i, (h, y)) in predictions.iter().zip(targets.iter()).enumerate() {
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite prediction at sample {i}"
            )));
        }
        data_term += sample_cost(h, y, &cfg.class_weights);
    }
    Ok(data_term / m + l2_cost(model, cfg, predictions.len()))
}

/// `lambda/(2m) * sum(selected theta^2)`.
pub fn l2_cost(model: &CrdnnModel, cfg: &LossConfig, m: usize) -> f64 {
    if cfg.l2_lambda == 0.0 {
        return 0.0;
    }
    let mask = model.l2_mask(cfg.regularized);
    let flat = model.params_flat();
    let ss: f64 = flat
        .iter()
        .zip(mask.iter())
        .filter(|(_, &sel)| sel)
        .map(|(v, _)| v * v)
        .sum();
    cfg.l2_lambda / (2.0 * m as f64) * ss
}

/// Gradient of the batch data term with respect to one sample's probability
/// vector: `dJ/dh_k = W_k * (-y_k/h_k + (1-y_k)/(1-h_k)) / m`.
pub fn cost_grad_wrt_probs(
    prediction: &[f64],
    target: &[f64],
    cfg: &LossConfig,
    m: usize,
) -> Vec<f64> {
    let minv = 1.0 / m as f64;
    prediction
        .iter()
        .zip(target.iter())
        .zip(cfg.class_weights.iter())
        .map(|((&h, &y), &w)| {
            let h = clamp_prob(h);
            w * (-y / h + (1.0 - y) / (1.0 - h)) * minv
        })
        .collect()
}

/// Adds the L2 gradient `lambda/m * theta` for selected weights onto a flat
/// gradient vector.
pub fn add_l2_grad(model: &CrdnnModel, cfg: &LossConfig, m: usize, flat_grad: &mut [f64]) {
    if cfg.l2_lambda == 0.0 {
        return;
    }
    let scale = cfg.l2_lambda / m as f64;
    let mask = model.l2_mask(cfg.regularized);
    let flat = model.params_flat();
    for ((g, &sel), v) in flat_grad.iter_mut().zip(mask.iter()).zip(flat.iter()) {
        if sel {
            *g += scale * v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Architecture, ModelConfig};

    fn tiny_model() -> CrdnnModel {
        let cfg = ModelConfig {
            conv_filters: 4,
            conv_kernel: 3,
            reduce_units: [5, 5],
            rnn_units: 4,
            head_units: 5,
            ..ModelConfig::default()
        };
        CrdnnModel::new(Architecture::OneLstm, &cfg, 2).unwrap()
    }

    #[test]
    fn recommended_weights() {
        assert_eq!(default_class_weights(), [1.0, 4.0, 7.0]);
    }

    #[test]
    fn uniform_prediction_matches_hand_evaluation() {
        // m=1, h=[1/3,1/3,1/3], y=[0,1,0], W=[1,4,7], lambda=0:
        // J = -log(2/3)*1 - log(1/3)*4 - log(2/3)*7
        let model = tiny_model();
        let cfg = LossConfig {
            l2_lambda: 0.0,
            ..LossConfig::default()
        };
        let h = vec![vec![1.0 / 3.0; 3]];
        let y = vec![vec![0.0, 1.0, 0.0]];
        let j = weighted_cost(&h, &y, &model, &cfg).unwrap();
        assert!((j - 7.638170019537754).abs() < 1e-12, "J = {j}");
    }

    #[test]
    fn perfect_prediction_costs_nothing() {
        let model = tiny_model();
        let cfg = LossConfig {
            l2_lambda: 0.0,
            ..LossConfig::default()
        };
        let h = vec![vec![0.0, 1.0, 0.0]]; // clamped internally
        let y = vec![vec![0.0, 1.0, 0.0]];
        let j = weighted_cost(&h, &y, &model, &cfg).unwrap();
        assert!(j.abs() < 1e-9, "J = {j}");
    }

    #[test]
    fn unit_weights_reduce_to_unweighted_oracle() {
        // independent unweighted two-sided cross-entropy
        fn unweighted(h: &[f64], y: &[f64]) -> f64 {
            h.iter()
                .zip(y.iter())
                .map(|(&h, &y)| {
                    let h = h.clamp(1e-12, 1.0 - 1e-12);
                    -y * h.ln() - (1.0 - y) * (1.0 - h).ln()
                })
                .sum()
        }
        let model = tiny_model();
        let cfg = LossConfig {
            class_weights: vec![1.0, 1.0, 1.0],
            l2_lambda: 0.0,
            regularized: RegularizedLayers::HeadOnly,
        };
        let h = vec![vec![0.2, 0.5, 0.3], vec![0.7, 0.1, 0.2]];
        let y = vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]];
        let j = weighted_cost(&h, &y, &model, &cfg).unwrap();
        let oracle = (unweighted(&h[0], &y[0]) + unweighted(&h[1], &y[1])) / 2.0;
        assert!((j - oracle).abs() < 1e-12);
    }

    #[test]
    fn l2_term_never_decreases_cost() {
        let model = tiny_model();
        let h = vec![vec![0.3, 0.4, 0.3]];
        let y = vec![vec![0.0, 0.0, 1.0]];
        let j0 = weighted_cost(&h, &y, &model, &LossConfig::default().without_l2()).unwrap();
        let j1 = weighted_cost(
            &h,
            &y,
            &model,
            &LossConfig {
                l2_lambda: 1e-2,
                ..LossConfig::default()
            },
        )
        .unwrap();
        assert!(j1 >= j0);
    }

    #[test]
    fn weight_scaling_scales_unregularized_cost() {
        let model = tiny_model();
        let h = vec![vec![0.6, 0.3, 0.1], vec![0.1, 0.8, 0.1]];
        let y = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        let base = LossConfig {
            l2_lambda: 0.0,
            ..LossConfig::default()
        };
        let scaled = LossConfig {
            class_weights: base.class_weights.iter().map(|w| w * 2.5).collect(),
            ..base.clone()
        };
        let j0 = weighted_cost(&h, &y, &model, &base).unwrap();
        let j1 = weighted_cost(&h, &y, &model, &scaled).unwrap();
        assert!((j1 - 2.5 * j0).abs() < 1e-12);

        // gradient scales uniformly, so a step direction is unchanged
        let g0 = cost_grad_wrt_probs(&h[0], &y[0], &base, 2);
        let g1 = cost_grad_wrt_probs(&h[0], &y[0], &scaled, 2);
        for (a, b) in g0.iter().zip(g1.iter()) {
            assert!((b - 2.5 * a).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_prediction_reports_sample_index() {
        let model = tiny_model();
        let h = vec![vec![0.5, 0.4, 0.1], vec![f64::NAN, 0.5, 0.5]];
        let y = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        match weighted_cost(&h, &y, &model, &LossConfig::default()) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("sample 1")),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = LossConfig::default();
        cfg.class_weights[1] = 0.0;
        assert!(cfg.validate().is_err());
        let cfg = LossConfig {
            l2_lambda: -1.0,
            ..LossConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
