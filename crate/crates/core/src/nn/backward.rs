//! Reverse-mode differentiation of the layer stack.
//!
//! Backprop is hand-derived per layer kind; there is no general autodiff
//! graph. The gradient of the vector phase flows backward to the readout,
//! is scattered into the sequence positions the readout came from, and then
//! flows backward through the per-timestep layers (BPTT inside the
//! recurrent ones).

use crate::error::Result;
use crate::linalg::Matrix;
use crate::loss::{add_l2_grad, cost_grad_wrt_probs, LossConfig};
use crate::nn::activation::softmax_backward;
use crate::nn::lstm::{bilstm_sequence_backward, LstmCellParams, LstmGrad};
use crate::nn::model::{apply_mask_grad, Cache, CrdnnModel, Layer, ReadoutKind, Tape};

/// Parameter gradients, flattened in the same order as
/// [`CrdnnModel::params_flat`]. Use [`CrdnnModel::flat_segments`] to address
/// an individual matrix or bias.
#[derive(Debug, Clone)]
pub struct Gradients {
    flat: Vec<f64>,
}

impl Gradients {
    pub fn zeros(len: usize) -> Self {
        Gradients {
            flat: vec![0.0; len],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.flat
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.flat
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        debug_assert_eq!(self.flat.len(), other.flat.len());
        for (a, b) in self.flat.iter_mut().zip(other.flat.iter()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.flat.iter_mut() {
            *v *= s;
        }
    }
}

/// Per-layer gradient holders used during the reverse walk.
enum LayerGrad {
    Conv { w: Matrix, b: Vec<f64> },
    Dense { w: Matrix, b: Vec<f64> },
    Lstm(LstmGrad),
    BiLstm { fwd: LstmGrad, bwd: LstmGrad },
    None,
}

fn zeros_like(layer: &Layer) -> LayerGrad {
    match layer {
        Layer::Conv1d(c) => LayerGrad::Conv {
            w: Matrix::zeros(c.weights.rows(), c.weights.cols()),
            b: vec![0.0; c.bias.len()],
        },
        Layer::DensePerStep(d) | Layer::DenseHead(d) => LayerGrad::Dense {
            w: Matrix::zeros(d.weights.rows(), d.weights.cols()),
            b: vec![0.0; d.bias.len()],
        },
        Layer::Lstm(p) => LayerGrad::Lstm(LstmGrad::zeros_like(p)),
        Layer::BiLstm { fwd, bwd } => LayerGrad::BiLstm {
            fwd: LstmGrad::zeros_like(fwd),
            bwd: LstmGrad::zeros_like(bwd),
        },
        Layer::Relu | Layer::Dropout(_) | Layer::Softmax => LayerGrad::None,
    }
}

fn flatten(grads: Vec<LayerGrad>, capacity: usize) -> Gradients {
    let mut flat = Vec::with_capacity(capacity);
    for g in grads {
        match g {
            LayerGrad::Conv { w, b } | LayerGrad::Dense { w, b } => {
                flat.extend_from_slice(w.data());
                flat.extend_from_slice(&b);
            }
            LayerGrad::Lstm(g) => flatten_lstm(&g, &mut flat),
            LayerGrad::BiLstm { fwd, bwd } => {
                flatten_lstm(&fwd, &mut flat);
                flatten_lstm(&bwd, &mut flat);
            }
            LayerGrad::None => {}
        }
    }
    Gradients { flat }
}

fn flatten_lstm(g: &LstmGrad, flat: &mut Vec<f64>) {
    flat.extend_from_slice(g.w_candidate.data());
    flat.extend_from_slice(g.w_update.data());
    flat.extend_from_slice(g.w_forget.data());
    flat.extend_from_slice(g.w_output.data());
    flat.extend_from_slice(&g.b_candidate);
    flat.extend_from_slice(&g.b_update);
    flat.extend_from_slice(&g.b_forget);
    flat.extend_from_slice(&g.b_output);
}

impl CrdnnModel {
    /// Backpropagates `dL/dprobs` through a cached forward pass and returns
    /// the parameter gradients.
    pub fn backward(&self, tape: &Tape, d_probs: &[f64]) -> Gradients {
        let layers = self.layers();
        let boundary = self.boundary();
        let mut layer_grads: Vec<LayerGrad> = layers.iter().map(zeros_like).collect();

        // vector phase, in reverse
        let mut d_vec = d_probs.to_vec();
        for idx in (boundary..layers.len()).rev() {
            match (&layers[idx], &tape.caches[idx]) {
                (Layer::Softmax, Cache::Softmax { output }) => {
                    d_vec = softmax_backward(output, &d_vec);
                }
                (Layer::DenseHead(d), Cache::DenseVec { input }) => {
                    let LayerGrad::Dense { w, b } = &mut layer_grads[idx] else {
                        unreachable!()
                    };
                    d_vec = d.backward(input, &d_vec, w, b);
                }
                (Layer::Relu, Cache::ReluVec { input }) => {
                    for (g, x) in d_vec.iter_mut().zip(input.iter()) {
                        if *x <= 0.0 {
                            *g = 0.0;
                        }
                    }
                }
                (Layer::Dropout(_), Cache::DropoutVec { mask }) => {
                    apply_mask_grad(&mut d_vec, mask.as_deref());
                }
                _ => unreachable!("layer/cache mismatch in vector phase"),
            }
        }

        // scatter the readout gradient back into sequence positions
        let rows = tape.readout_rows;
        let mut d_seq = Matrix::zeros(rows, tape.readout_cols);
        match self.readout_kind() {
            ReadoutKind::LastRow => {
                d_seq.row_mut(rows - 1).copy_from_slice(&d_vec);
            }
            ReadoutKind::BiFinal { hidden } => {
                d_seq.row_mut(rows - 1)[..hidden].copy_from_slice(&d_vec[..hidden]);
                d_seq.row_mut(0)[hidden..].copy_from_slice(&d_vec[hidden..]);
            }
        }

        // sequence phase, in reverse
        for idx in (0..boundary).rev() {
            d_seq = match (&layers[idx], &tape.caches[idx]) {
                (Layer::Conv1d(c), Cache::Conv { input }) => {
                    let LayerGrad::Conv { w, b } = &mut layer_grads[idx] else {
                        unreachable!()
                    };
                    c.backward(input, &d_seq, w, b)
                }
                (Layer::DensePerStep(d), Cache::DenseSeq { input }) => {
                    let LayerGrad::Dense { w, b } = &mut layer_grads[idx] else {
                        unreachable!()
                    };
                    d.backward_seq(input, &d_seq, w, b)
                }
                (Layer::Relu, Cache::ReluSeq { input }) => {
                    let mut out = d_seq;
                    for (g, x) in out.data_mut().iter_mut().zip(input.data().iter()) {
                        if *x <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    out
                }
                (Layer::Dropout(_), Cache::DropoutSeq { mask }) => {
                    let mut out = d_seq;
                    apply_mask_grad(out.data_mut(), mask.as_deref());
                    out
                }
                (Layer::Lstm(p), Cache::Lstm { steps }) => {
                    let LayerGrad::Lstm(g) = &mut layer_grads[idx] else {
                        unreachable!()
                    };
                    p.sequence_backward(steps, &d_seq, g)
                }
                (Layer::BiLstm { fwd, bwd }, Cache::BiLstm { fwd: fc, bwd: bc }) => {
                    let LayerGrad::BiLstm { fwd: gf, bwd: gb } = &mut layer_grads[idx] else {
                        unreachable!()
                    };
                    bilstm_backward_dispatch(fwd, bwd, fc, bc, &d_seq, gf, gb)
                }
                _ => unreachable!("layer/cache mismatch in sequence phase"),
            };
        }

        flatten(layer_grads, self.count_parameters())
    }

    /// Gradient of the full single-sample cost (data term plus L2 at `m = 1`)
    /// with respect to every parameter. Runs its own forward pass with
    /// dropout disabled.
    pub fn model_backward(
        &self,
        window: &Matrix,
        target: &[f64],
        loss_cfg: &LossConfig,
    ) -> Result<Gradients> {
        let (probs, tape) = self.forward_train(window, None)?;
        let d_probs = cost_grad_wrt_probs(&probs, target, loss_cfg, 1);
        let mut grads = self.backward(&tape, &d_probs);
        add_l2_grad(self, loss_cfg, 1, grads.as_mut_slice());
        Ok(grads)
    }
}

#[allow(clippy::too_many_arguments)]
fn bilstm_backward_dispatch(
    fwd: &LstmCellParams,
    bwd: &LstmCellParams,
    fwd_caches: &[crate::nn::lstm::LstmStepCache],
    bwd_caches: &[crate::nn::lstm::LstmStepCache],
    d_out: &Matrix,
    fwd_grad: &mut LstmGrad,
    bwd_grad: &mut LstmGrad,
) -> Matrix {
    bilstm_sequence_backward(fwd, bwd, fwd_caches, bwd_caches, d_out, fwd_grad, bwd_grad)
}
