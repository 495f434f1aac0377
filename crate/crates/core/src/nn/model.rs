//! The layered detection network: an ordered stack of conv, dense, recurrent
//! and head layers over a decimated telemetry window, producing class
//! probabilities for {travel, loading, unloading}.
//!
//! The stack has two phases. Layers up to and including the last recurrent
//! layer operate per timestep (time x features). Immediately after the last
//! recurrent layer the sequence is read out into a single vector — the final
//! timestep's activation, or for a bidirectional layer the concatenation of
//! the forward direction's final state and the backward direction's final
//! state — and the remaining layers operate on that vector.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::activation::{relu_in_place, softmax};
use crate::nn::conv::Conv1d;
use crate::nn::dense::Dense;
use crate::nn::lstm::{
    bilstm_sequence_forward_cached, LstmCellParams, LstmState, LstmStepCache,
};
use crate::seed::rng_for;

/// Declarative description of one layer. A model is an ordered list of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d { filters: usize, kernel: usize },
    DensePerStep { units: usize },
    Relu,
    Dropout { rate: f64 },
    Lstm { units: usize },
    BiLstm { units: usize },
    DenseHead { units: usize },
    Softmax,
}

/// The three recurrent-stack variants compared in the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    OneLstm,
    TwoLstm,
    TwoBiLstm,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [
        Architecture::OneLstm,
        Architecture::TwoLstm,
        Architecture::TwoBiLstm,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Architecture::OneLstm => "1 LSTM",
            Architecture::TwoLstm => "2 LSTMs",
            Architecture::TwoBiLstm => "2 BiLSTMs",
        }
    }

    pub fn key(&self) -> &'static str {
        match self {
            Architecture::OneLstm => "1lstm",
            Architecture::TwoLstm => "2lstm",
            Architecture::TwoBiLstm => "2bilstm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "1lstm" => Ok(Architecture::OneLstm),
            "2lstm" => Ok(Architecture::TwoLstm),
            "2bilstm" => Ok(Architecture::TwoBiLstm),
            other => Err(Error::Config(format!(
                "unknown architecture '{other}' (expected 1lstm, 2lstm or 2bilstm)"
            ))),
        }
    }
}

/// Width and regularization knobs of the default stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub class_count: usize,
    pub conv_filters: usize,
    pub conv_kernel: usize,
    /// Widths of the two dimension-reduction dense layers after the conv.
    pub reduce_units: [usize; 2],
    pub rnn_units: usize,
    /// Width of the first head dense layer.
    pub head_units: usize,
    pub dropout: f64,
    /// Initial forget-gate bias; set to 0.0 to disable the warm start.
    pub forget_bias: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_channels: 5,
            class_count: 3,
            conv_filters: 10,
            conv_kernel: 5,
            reduce_units: [32, 32],
            rnn_units: 32,
            head_units: 32,
            dropout: 0.2,
            forget_bias: 1.0,
        }
    }
}

impl ModelConfig {
    /// The layer stack for one of the three architectures: conv, two
    /// per-timestep dense layers, the recurrent stack, then a two-layer
    /// dense head ending in softmax. Dropout follows every dense and
    /// recurrent layer.
    pub fn specs(&self, arch: Architecture) -> Vec<LayerSpec> {
        let mut specs = vec![
            LayerSpec::Conv1d {
                filters: self.conv_filters,
                kernel: self.conv_kernel,
            },
            LayerSpec::Relu,
        ];
        for units in self.reduce_units {
            specs.push(LayerSpec::DensePerStep { units });
            specs.push(LayerSpec::Relu);
            specs.push(LayerSpec::Dropout { rate: self.dropout });
        }
        let recurrent: &[LayerSpec] = match arch {
            Architecture::OneLstm => &[LayerSpec::Lstm { units: 0 }],
            Architecture::TwoLstm => &[LayerSpec::Lstm { units: 0 }, LayerSpec::Lstm { units: 0 }],
            Architecture::TwoBiLstm => &[
                LayerSpec::BiLstm { units: 0 },
                LayerSpec::BiLstm { units: 0 },
            ],
        };
        for r in recurrent {
            specs.push(match r {
                LayerSpec::Lstm { .. } => LayerSpec::Lstm {
                    units: self.rnn_units,
                },
                LayerSpec::BiLstm { .. } => LayerSpec::BiLstm {
                    units: self.rnn_units,
                },
                _ => unreachable!(),
            });
            specs.push(LayerSpec::Dropout { rate: self.dropout });
        }
        specs.push(LayerSpec::DenseHead {
            units: self.head_units,
        });
        specs.push(LayerSpec::Relu);
        specs.push(LayerSpec::Dropout { rate: self.dropout });
        specs.push(LayerSpec::DenseHead {
            units: self.class_count,
        });
        specs.push(LayerSpec::Softmax);
        specs
    }
}

/// A materialized layer with its parameters.
#[derive(Debug, Clone)]
pub enum Layer {
    Conv1d(Conv1d),
    DensePerStep(Dense),
    Relu,
    Dropout(f64),
    Lstm(LstmCellParams),
    BiLstm {
        fwd: LstmCellParams,
        bwd: LstmCellParams,
    },
    DenseHead(Dense),
    Softmax,
}

impl Layer {
    pub fn parameter_count(&self) -> usize {
        match self {
            Layer::Conv1d(c) => c.parameter_count(),
            Layer::DensePerStep(d) | Layer::DenseHead(d) => d.parameter_count(),
            Layer::Lstm(p) => p.parameter_count(),
            Layer::BiLstm { fwd, bwd } => fwd.parameter_count() + bwd.parameter_count(),
            Layer::Relu | Layer::Dropout(_) | Layer::Softmax => 0,
        }
    }

}

/// How the sequence is collapsed to a vector at the phase boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadoutKind {
    /// Final timestep's activation.
    LastRow,
    /// `[forward final, backward final]` of a bidirectional layer.
    BiFinal { hidden: usize },
}

/// The working-cycle detection network.
#[derive(Debug, Clone)]
pub struct CrdnnModel {
    specs: Vec<LayerSpec>,
    layers: Vec<Layer>,
    /// Index of the first vector-phase layer (one past the last recurrent
    /// layer; falls back to the first head layer when no recurrent exists).
    boundary: usize,
    readout: ReadoutKind,
    input_channels: usize,
    class_count: usize,
}

impl CrdnnModel {
    /// Builds the default stack for an architecture and initializes
    /// parameters from `seed`.
    pub fn new(arch: Architecture, cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let mut model = Self::from_specs(cfg.specs(arch), cfg.input_channels, cfg.class_count)?;
        model.init_parameters(seed, cfg.forget_bias);
        Ok(model)
    }

    /// Materializes an explicit layer list, validating that adjacent shapes
    /// compose. Parameters start at zero; call [`CrdnnModel::init_parameters`]
    /// for a random start.
    pub fn from_specs(
        specs: Vec<LayerSpec>,
        input_channels: usize,
        class_count: usize,
    ) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Config("empty layer stack".into()));
        }
        match specs.last() {
            Some(LayerSpec::Softmax) => {}
            _ => return Err(Error::Config("layer stack must end in softmax".into())),
        }

        let last_recurrent = specs
            .iter()
            .rposition(|s| matches!(s, LayerSpec::Lstm { .. } | LayerSpec::BiLstm { .. }));
        let first_head = specs
            .iter()
            .position(|s| matches!(s, LayerSpec::DenseHead { .. } | LayerSpec::Softmax));
        let boundary = match (last_recurrent, first_head) {
            (Some(r), Some(h)) if h > r => r + 1,
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "recurrent layer appears after the classification head".into(),
                ))
            }
            (None, Some(h)) => h,
            (_, None) => unreachable!("softmax checked above"),
        };

        let mut layers = Vec::with_capacity(specs.len());
        let mut width = input_channels;
        let mut softmax_seen = false;
        for (i, spec) in specs.iter().enumerate() {
            if softmax_seen {
                return Err(Error::Config("softmax must be the last layer".into()));
            }
            let in_seq_phase = i < boundary;
            let layer = match spec {
                LayerSpec::Conv1d { filters, kernel } => {
                    if !in_seq_phase {
                        return Err(Error::Config("conv layer after readout".into()));
                    }
                    let conv = Conv1d::new(width, *kernel, *filters)?;
                    width = *filters;
                    Layer::Conv1d(conv)
                }
                LayerSpec::DensePerStep { units } => {
                    if !in_seq_phase {
                        return Err(Error::Config(
                            "per-timestep dense after readout; use a head layer".into(),
                        ));
                    }
                    let d = Dense::new(width, *units);
                    width = *units;
                    Layer::DensePerStep(d)
                }
                LayerSpec::Lstm { units } => {
                    let p = LstmCellParams::new(width, *units);
                    width = *units;
                    Layer::Lstm(p)
                }
                LayerSpec::BiLstm { units } => {
                    let fwd = LstmCellParams::new(width, *units);
                    let bwd = LstmCellParams::new(width, *units);
                    width = 2 * units;
                    Layer::BiLstm { fwd, bwd }
                }
                LayerSpec::DenseHead { units } => {
                    if in_seq_phase {
                        return Err(Error::Config("head dense inside the sequence phase".into()));
                    }
                    let d = Dense::new(width, *units);
                    width = *units;
                    Layer::DenseHead(d)
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(Error::Config(format!(
                            "dropout rate must be in [0, 1), got {rate}"
                        )));
                    }
                    Layer::Dropout(*rate)
                }
                LayerSpec::Softmax => {
                    softmax_seen = true;
                    Layer::Softmax
                }
            };
            layers.push(layer);
        }
        if width != class_count {
            return Err(Error::Config(format!(
                "stack output width {width} does not match class count {class_count}"
            )));
        }

        let readout = match last_recurrent.map(|r| &layers[r]) {
            Some(Layer::BiLstm { fwd, .. }) => ReadoutKind::BiFinal {
                hidden: fwd.hidden_size,
            },
            _ => ReadoutKind::LastRow,
        };

        Ok(CrdnnModel {
            specs,
            layers,
            boundary,
            readout,
            input_channels,
            class_count,
        })
    }

    /// Glorot-uniform weight init, zero biases, forget-gate bias warm start.
    /// Each layer draws from its own derived seed, so the result does not
    /// depend on iteration order.
    pub fn init_parameters(&mut self, seed: u64, forget_bias: f64) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let mut rng = rng_for(seed, "layer-init", i as u64);
            match layer {
                Layer::Conv1d(c) => {
                    let fan_in = c.channels * c.kernel;
                    let fan_out = c.filters() * c.kernel;
                    glorot_fill(&mut rng, c.weights.data_mut(), fan_in, fan_out);
                    c.bias.fill(0.0);
                }
                Layer::DensePerStep(d) | Layer::DenseHead(d) => {
                    let (fi, fo) = (d.input_size(), d.output_size());
                    glorot_fill(&mut rng, d.weights.data_mut(), fi, fo);
                    d.bias.fill(0.0);
                }
                Layer::Lstm(p) => init_lstm(&mut rng, p, forget_bias),
                Layer::BiLstm { fwd, bwd } => {
                    init_lstm(&mut rng, fwd, forget_bias);
                    init_lstm(&mut rng, bwd, forget_bias);
                }
                Layer::Relu | Layer::Dropout(_) | Layer::Softmax => {}
            }
        }
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub(crate) fn boundary(&self) -> usize {
        self.boundary
    }

    pub(crate) fn readout_kind(&self) -> ReadoutKind {
        self.readout
    }

    /// Total trainable scalar count, from the per-layer analytic formulas.
    pub fn count_parameters(&self) -> usize {
        self.layers.iter().map(Layer::parameter_count).sum()
    }

    /// Inference pass: dropout layers are a no-op, so the output depends only
    /// on parameters and input.
    pub fn forward(&self, window: &Matrix) -> Result<Vec<f64>> {
        let (probs, _) = self.forward_train(window, None)?;
        Ok(probs)
    }

    /// Training pass. When `dropout_rng` is given, dropout layers sample an
    /// inverted-dropout mask from it (in layer order); when absent they are
    /// the identity. Returns the class probabilities and the tape of cached
    /// intermediates for [`CrdnnModel::backward`].
    pub fn forward_train(
        &self,
        window: &Matrix,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Vec<f64>, Tape)> {
        if window.cols() != self.input_channels {
            return Err(Error::Shape(format!(
                "window has {} channels, model expects {}",
                window.cols(),
                self.input_channels
            )));
        }
        if window.rows() == 0 {
            return Err(Error::EmptyInput("window has no timesteps".into()));
        }

        let mut caches = Vec::with_capacity(self.layers.len());
        let mut seq = window.clone();

        for layer in &self.layers[..self.boundary] {
            seq = match layer {
                Layer::Conv1d(c) => {
                    let out = c.forward(&seq)?;
                    caches.push(Cache::Conv { input: seq });
                    out
                }
                Layer::DensePerStep(d) => {
                    let out = d.forward_seq(&seq)?;
                    caches.push(Cache::DenseSeq { input: seq });
                    out
                }
                Layer::Relu => {
                    let mut out = seq.clone();
                    relu_in_place(out.data_mut());
                    caches.push(Cache::ReluSeq { input: seq });
                    out
                }
                Layer::Dropout(rate) => {
                    let mask = sample_mask(&mut dropout_rng, *rate, seq.len());
                    let mut out = seq;
                    apply_mask(out.data_mut(), mask.as_deref());
                    caches.push(Cache::DropoutSeq { mask });
                    out
                }
                Layer::Lstm(p) => {
                    let initial = LstmState::zeros(p.hidden_size);
                    let (out, step_caches) = p.sequence_forward_cached(&seq, &initial)?;
                    caches.push(Cache::Lstm { steps: step_caches });
                    out
                }
                Layer::BiLstm { fwd, bwd } => {
                    let (out, f, b) = bilstm_sequence_forward_cached(fwd, bwd, &seq)?;
                    caches.push(Cache::BiLstm { fwd: f, bwd: b });
                    out
                }
                Layer::DenseHead(_) | Layer::Softmax => unreachable!("vector layer in seq phase"),
            };
        }

        let readout_rows = seq.rows();
        let mut vec_val = match self.readout {
            ReadoutKind::LastRow => seq.row(seq.rows() - 1).to_vec(),
            ReadoutKind::BiFinal { hidden } => {
                let mut v = Vec::with_capacity(2 * hidden);
                v.extend_from_slice(&seq.row(seq.rows() - 1)[..hidden]);
                v.extend_from_slice(&seq.row(0)[hidden..]);
                v
            }
        };
        let readout_cols = seq.cols();

        let mut probs = None;
        for layer in &self.layers[self.boundary..] {
            vec_val = match layer {
                Layer::DenseHead(d) => {
                    let out = d.forward(&vec_val)?;
                    caches.push(Cache::DenseVec { input: vec_val });
                    out
                }
                Layer::Relu => {
                    let mut out = vec_val.clone();
                    relu_in_place(&mut out);
                    caches.push(Cache::ReluVec { input: vec_val });
                    out
                }
                Layer::Dropout(rate) => {
                    let mask = sample_mask(&mut dropout_rng, *rate, vec_val.len());
                    let mut out = vec_val;
                    apply_mask(&mut out, mask.as_deref());
                    caches.push(Cache::DropoutVec { mask });
                    out
                }
                Layer::Softmax => {
                    let out = softmax(&vec_val);
                    caches.push(Cache::Softmax {
                        output: out.clone(),
                    });
                    probs = Some(out.clone());
                    out
                }
                _ => unreachable!("sequence layer in vector phase"),
            };
        }

        let probs = probs.expect("stack ends in softmax");
        debug_assert!(probs.iter().all(|p| p.is_finite()));
        Ok((
            probs.clone(),
            Tape {
                caches,
                readout_rows,
                readout_cols,
            },
        ))
    }

    /// Flattened copy of every trainable scalar, in layer order. Within a
    /// layer: weight matrices first (row-major), then biases; LSTM order is
    /// candidate, update, forget, output; bidirectional layers store the
    /// forward direction before the backward one. The model file stores
    /// exactly this sequence.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.count_parameters());
        for layer in &self.layers {
            visit_layer_params(layer, &mut |seg: &[f64], _| out.extend_from_slice(seg));
        }
        out
    }

    /// Writes back a flat parameter vector produced by [`params_flat`].
    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.count_parameters() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.count_parameters(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            visit_layer_params_mut(layer, &mut |seg: &mut [f64], _| {
                seg.copy_from_slice(&flat[offset..offset + seg.len()]);
                offset += seg.len();
            });
        }
        Ok(())
    }

    /// Layout of [`params_flat`]: one segment per weight matrix / bias vector.
    pub fn flat_segments(&self) -> Vec<FlatSegment> {
        let mut segs = Vec::new();
        let mut offset = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            visit_layer_params(layer, &mut |seg: &[f64], is_bias| {
                segs.push(FlatSegment {
                    layer: i,
                    offset,
                    len: seg.len(),
                    is_bias,
                });
                offset += seg.len();
            });
        }
        segs
    }

    /// Mask over [`params_flat`] marking the weight matrices that enter the
    /// L2 term (biases never do).
    pub fn l2_mask(&self, selector: crate::loss::RegularizedLayers) -> Vec<bool> {
        use crate::loss::RegularizedLayers;
        let mut mask = vec![false; self.count_parameters()];
        for seg in self.flat_segments() {
            if seg.is_bias {
                continue;
            }
            let selected = match (&self.layers[seg.layer], selector) {
                (Layer::DenseHead(_), _) => true,
                (Layer::DensePerStep(_), RegularizedLayers::AllDense) => true,
                _ => false,
            };
            if selected {
                mask[seg.offset..seg.offset + seg.len].fill(true);
            }
        }
        mask
    }

    /// Mean absolute weight per parameterized layer, plus a per-input-channel
    /// breakdown of the first conv layer. Reported after training to show
    /// how much attention each input variable receives.
    pub fn weight_magnitudes(&self) -> WeightMagnitudes {
        let mut per_layer = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut sum = 0.0;
            let mut n = 0usize;
            visit_layer_params(layer, &mut |seg: &[f64], is_bias| {
                if !is_bias {
                    sum += seg.iter().map(|v| v.abs()).sum::<f64>();
                    n += seg.len();
                }
            });
            if n > 0 {
                per_layer.push((format!("layer{:02} {}", i, layer_name(layer)), sum / n as f64));
            }
        }
        let mut per_input_channel = Vec::new();
        if let Some(Layer::Conv1d(c)) = self.layers.first() {
            for ch in 0..c.channels {
                let mut sum = 0.0;
                for f in 0..c.filters() {
                    for k in 0..c.kernel {
                        sum += c.weight(f, ch, k).abs();
                    }
                }
                per_input_channel.push(sum / (c.filters() * c.kernel) as f64);
            }
        }
        WeightMagnitudes {
            per_layer,
            per_input_channel,
        }
    }
}

/// One contiguous stretch of `params_flat`.
#[derive(Debug, Clone, Copy)]
pub struct FlatSegment {
    pub layer: usize,
    pub offset: usize,
    pub len: usize,
    pub is_bias: bool,
}

#[derive(Debug, Clone)]
pub struct WeightMagnitudes {
    pub per_layer: Vec<(String, f64)>,
    pub per_input_channel: Vec<f64>,
}

fn layer_name(layer: &Layer) -> &'static str {
    match layer {
        Layer::Conv1d(_) => "conv1d",
        Layer::DensePerStep(_) => "dense",
        Layer::Relu => "relu",
        Layer::Dropout(_) => "dropout",
        Layer::Lstm(_) => "lstm",
        Layer::BiLstm { .. } => "bilstm",
        Layer::DenseHead(_) => "dense_head",
        Layer::Softmax => "softmax",
    }
}

fn glorot_fill(rng: &mut ChaCha8Rng, data: &mut [f64], fan_in: usize, fan_out: usize) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in data {
        *v = rng.gen_range(-limit..limit);
    }
}

fn init_lstm(rng: &mut ChaCha8Rng, p: &mut LstmCellParams, forget_bias: f64) {
    let fan_in = p.input_size + p.hidden_size;
    let fan_out = p.hidden_size;
    for w in [
        &mut p.w_candidate,
        &mut p.w_update,
        &mut p.w_forget,
        &mut p.w_output,
    ] {
        glorot_fill(rng, w.data_mut(), fan_in, fan_out);
    }
    p.b_candidate.fill(0.0);
    p.b_update.fill(0.0);
    p.b_forget.fill(forget_bias);
    p.b_output.fill(0.0);
}

/// Visits every parameter segment of a layer in the flat order.
fn visit_layer_params(layer: &Layer, f: &mut impl FnMut(&[f64], bool)) {
    match layer {
        Layer::Conv1d(c) => {
            f(c.weights.data(), false);
            f(&c.bias, true);
        }
        Layer::DensePerStep(d) | Layer::DenseHead(d) => {
            f(d.weights.data(), false);
            f(&d.bias, true);
        }
        Layer::Lstm(p) => visit_lstm_params(p, f),
        Layer::BiLstm { fwd, bwd } => {
            visit_lstm_params(fwd, f);
            visit_lstm_params(bwd, f);
        }
        Layer::Relu | Layer::Dropout(_) | Layer::Softmax => {}
    }
}

fn visit_lstm_params(p: &LstmCellParams, f: &mut impl FnMut(&[f64], bool)) {
    f(p.w_candidate.data(), false);
    f(p.w_update.data(), false);
    f(p.w_forget.data(), false);
    f(p.w_output.data(), false);
    f(&p.b_candidate, true);
    f(&p.b_update, true);
    f(&p.b_forget, true);
    f(&p.b_output, true);
}

fn visit_layer_params_mut(layer: &mut Layer, f: &mut impl FnMut(&mut [f64], bool)) {
    match layer {
        Layer::Conv1d(c) => {
            f(c.weights.data_mut(), false);
            f(&mut c.bias, true);
        }
        Layer::DensePerStep(d) | Layer::DenseHead(d) => {
            f(d.weights.data_mut(), false);
            f(&mut d.bias, true);
        }
        Layer::Lstm(p) => visit_lstm_params_mut(p, f),
        Layer::BiLstm { fwd, bwd } => {
            visit_lstm_params_mut(fwd, f);
            visit_lstm_params_mut(bwd, f);
        }
        Layer::Relu | Layer::Dropout(_) | Layer::Softmax => {}
    }
}

fn visit_lstm_params_mut(p: &mut LstmCellParams, f: &mut impl FnMut(&mut [f64], bool)) {
    f(p.w_candidate.data_mut(), false);
    f(p.w_update.data_mut(), false);
    f(p.w_forget.data_mut(), false);
    f(p.w_output.data_mut(), false);
    f(&mut p.b_candidate, true);
    f(&mut p.b_update, true);
    f(&mut p.b_forget, true);
    f(&mut p.b_output, true);
}

/// Inverted-dropout mask: entries are `0` or `1/(1-rate)`.
fn sample_mask(
    rng: &mut Option<&mut ChaCha8Rng>,
    rate: f64,
    len: usize,
) -> Option<Vec<f64>> {
    let rng = rng.as_deref_mut()?;
    if rate == 0.0 {
        return None;
    }
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    Some(
        (0..len)
            .map(|_| if rng.gen::<f64>() < keep { scale } else { 0.0 })
            .collect(),
    )
}

fn apply_mask(data: &mut [f64], mask: Option<&[f64]>) {
    if let Some(mask) = mask {
        for (v, m) in data.iter_mut().zip(mask.iter()) {
            *v *= m;
        }
    }
}

/// Cached intermediates from one training forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    pub(crate) caches: Vec<Cache>,
    pub(crate) readout_rows: usize,
    pub(crate) readout_cols: usize,
}

impl Tape {
    pub fn probs(&self) -> &[f64] {
        match self.caches.last() {
            Some(Cache::Softmax { output }) => output,
            _ => unreachable!("stack ends in softmax"),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Cache {
    Conv { input: Matrix },
    DenseSeq { input: Matrix },
    DenseVec { input: Vec<f64> },
    ReluSeq { input: Matrix },
    ReluVec { input: Vec<f64> },
    DropoutSeq { mask: Option<Vec<f64>> },
    DropoutVec { mask: Option<Vec<f64>> },
    Lstm { steps: Vec<LstmStepCache> },
    BiLstm {
        fwd: Vec<LstmStepCache>,
        bwd: Vec<LstmStepCache>,
    },
    Softmax { output: Vec<f64> },
}

pub(crate) use mask_helpers::apply_mask_grad;

mod mask_helpers {
    /// Dropout backward: the same scaled mask applies to the gradient.
    pub fn apply_mask_grad(grad: &mut [f64], mask: Option<&[f64]>) {
        if let Some(mask) = mask {
            for (g, m) in grad.iter_mut().zip(mask.iter()) {
                *g *= m;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            input_channels: 5,
            class_count: 3,
            conv_filters: 4,
            conv_kernel: 3,
            reduce_units: [6, 6],
            rnn_units: 5,
            head_units: 6,
            dropout: 0.2,
            forget_bias: 1.0,
        }
    }

    #[test]
    fn default_two_lstm_parameter_count() {
        let model =
            CrdnnModel::new(Architecture::TwoLstm, &ModelConfig::default(), 1).unwrap();
        // conv 260 + dense 352 + dense 1056 + 2 x lstm 8320 + head 1056 + head 99
        assert_eq!(model.count_parameters(), 19_463);
        assert_eq!(model.params_flat().len(), 19_463);
    }

    #[test]
    fn analytic_counts_per_layer_kind() {
        let dense = Dense::new(32, 32);
        assert_eq!(dense.parameter_count(), 1056);
        let lstm = LstmCellParams::new(32, 32);
        assert_eq!(lstm.parameter_count(), 8320);
        let conv = Conv1d::new(5, 5, 10).unwrap();
        assert_eq!(conv.parameter_count(), 260);
    }

    #[test]
    fn all_architectures_build_and_compose() {
        for arch in Architecture::ALL {
            let model = CrdnnModel::new(arch, &ModelConfig::default(), 3).unwrap();
            let window = Matrix::zeros(9, 5);
            let probs = model.forward(&window).unwrap();
            assert_eq!(probs.len(), 3);
        }
    }

    #[test]
    fn zero_parameters_give_uniform_probabilities() {
        let cfg = tiny_cfg();
        let mut model = CrdnnModel::new(Architecture::TwoLstm, &cfg, 7).unwrap();
        let zeros = vec![0.0; model.count_parameters()];
        model.set_params_flat(&zeros).unwrap();
        let mut window = Matrix::zeros(9, 5);
        for (i, v) in window.data_mut().iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin();
        }
        let probs = model.forward(&window).unwrap();
        for p in &probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let model = CrdnnModel::new(Architecture::TwoBiLstm, &tiny_cfg(), 21).unwrap();
        let mut window = Matrix::zeros(15, 5);
        for (i, v) in window.data_mut().iter_mut().enumerate() {
            *v = ((i * 13 % 7) as f64 - 3.0) * 0.5;
        }
        let probs = model.forward(&window).unwrap();
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(probs.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn forward_is_deterministic_for_rebuilt_model() {
        let cfg = tiny_cfg();
        let mut window = Matrix::zeros(9, 5);
        for (i, v) in window.data_mut().iter_mut().enumerate() {
            *v = (i as f64).cos();
        }
        let a = CrdnnModel::new(Architecture::TwoBiLstm, &cfg, 99)
            .unwrap()
            .forward(&window)
            .unwrap();
        let b = CrdnnModel::new(Architecture::TwoBiLstm, &cfg, 99)
            .unwrap()
            .forward(&window)
            .unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn params_roundtrip_through_flat_vector() {
        let mut model = CrdnnModel::new(Architecture::OneLstm, &tiny_cfg(), 5).unwrap();
        let flat = model.params_flat();
        let mut mutated = flat.clone();
        for (i, v) in mutated.iter_mut().enumerate() {
            *v += (i % 3) as f64 * 0.01;
        }
        model.set_params_flat(&mutated).unwrap();
        assert_eq!(model.params_flat(), mutated);
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let model = CrdnnModel::new(Architecture::OneLstm, &tiny_cfg(), 5).unwrap();
        let window = Matrix::zeros(9, 4);
        assert!(matches!(model.forward(&window), Err(Error::Shape(_))));
    }

    #[test]
    fn misordered_stack_is_config_error() {
        // head dense before the recurrent layer
        let specs = vec![
            LayerSpec::DenseHead { units: 8 },
            LayerSpec::Lstm { units: 4 },
            LayerSpec::DenseHead { units: 3 },
            LayerSpec::Softmax,
        ];
        assert!(matches!(
            CrdnnModel::from_specs(specs, 5, 3),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn invalid_dropout_rate_rejected() {
        let specs = vec![
            LayerSpec::Lstm { units: 4 },
            LayerSpec::Dropout { rate: 1.0 },
            LayerSpec::DenseHead { units: 3 },
            LayerSpec::Softmax,
        ];
        assert!(matches!(
            CrdnnModel::from_specs(specs, 5, 3),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn l2_mask_selects_head_weight_matrices() {
        let model =
            CrdnnModel::new(Architecture::TwoLstm, &ModelConfig::default(), 1).unwrap();
        let mask = model.l2_mask(crate::loss::RegularizedLayers::HeadOnly);
        let selected = mask.iter().filter(|&&b| b).count();
        // 32x32 + 3x32 weight matrices, biases excluded
        assert_eq!(selected, 32 * 32 + 3 * 32);
    }
}
