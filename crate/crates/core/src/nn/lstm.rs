//! LSTM cell, sequence forward, bidirectional wrapper and backpropagation
//! through time.
//!
//! Gate layout follows the candidate/update/forget/output convention with the
//! previous activation concatenated ahead of the input:
//!
//! ```text
//! c~ = tanh(W_c [a(t-1), x(t)] + b_c)
//! Gu = sigma(W_u [a(t-1), x(t)] + b_u)
//! Gf = sigma(W_f [a(t-1), x(t)] + b_f)
//! Go = sigma(W_o [a(t-1), x(t)] + b_o)
//! c(t) = Gu * c~ + Gf * c(t-1)
//! a(t) = Go * tanh(c(t))
//! ```

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::activation::sigmoid;

/// Parameters of one LSTM cell. All four weight matrices have shape
/// `hidden x (hidden + input)`; all four biases have length `hidden`.
#[derive(Debug, Clone)]
pub struct LstmCellParams {
    pub w_candidate: Matrix,
    pub w_update: Matrix,
    pub w_forget: Matrix,
    pub w_output: Matrix,
    pub b_candidate: Vec<f64>,
    pub b_update: Vec<f64>,
    pub b_forget: Vec<f64>,
    pub b_output: Vec<f64>,
    pub input_size: usize,
    pub hidden_size: usize,
}

/// Cell and activation state. The activation is tanh-shaped and scaled by the
/// output gate, so its entries lie strictly inside (-1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub cell: Vec<f64>,
    pub activation: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            cell: vec![0.0; hidden],
            activation: vec![0.0; hidden],
        }
    }
}

/// Per-timestep intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmStepCache {
    pub concat: Vec<f64>, // [a(t-1), x(t)]
    pub candidate: Vec<f64>,
    pub gate_update: Vec<f64>,
    pub gate_forget: Vec<f64>,
    pub gate_output: Vec<f64>,
    pub cell_prev: Vec<f64>,
    pub cell: Vec<f64>,
    pub tanh_cell: Vec<f64>,
}

/// Parameter gradients, same shapes as [`LstmCellParams`].
#[derive(Debug, Clone)]
pub struct LstmGrad {
    pub w_candidate: Matrix,
    pub w_update: Matrix,
    pub w_forget: Matrix,
    pub w_output: Matrix,
    pub b_candidate: Vec<f64>,
    pub b_update: Vec<f64>,
    pub b_forget: Vec<f64>,
    pub b_output: Vec<f64>,
}

impl LstmGrad {
    pub fn zeros_like(p: &LstmCellParams) -> Self {
        let w = || Matrix::zeros(p.hidden_size, p.hidden_size + p.input_size);
        let b = || vec![0.0; p.hidden_size];
        LstmGrad {
            w_candidate: w(),
            w_update: w(),
            w_forget: w(),
            w_output: w(),
            b_candidate: b(),
            b_update: b(),
            b_forget: b(),
            b_output: b(),
        }
    }
}

impl LstmCellParams {
    pub fn new(input_size: usize, hidden_size: usize) -> Self {
        let w = || Matrix::zeros(hidden_size, hidden_size + input_size);
        let b = || vec![0.0; hidden_size];
        LstmCellParams {
            w_candidate: w(),
            w_update: w(),
            w_forget: w(),
            w_output: w(),
            b_candidate: b(),
            b_update: b(),
            b_forget: b(),
            b_output: b(),
            input_size,
            hidden_size,
        }
    }

    /// `4 * ((input + hidden) * hidden + hidden)`
    pub fn parameter_count(&self) -> usize {
        4 * ((self.input_size + self.hidden_size) * self.hidden_size + self.hidden_size)
    }

    /// One cell update. Returns the new state.
    pub fn step(&self, prev: &LstmState, x: &[f64]) -> Result<LstmState> {
        let (state, _) = self.step_cached(prev, x)?;
        Ok(state)
    }

    /// One cell update, also returning the intermediates needed by BPTT.
    pub fn step_cached(&self, prev: &LstmState, x: &[f64]) -> Result<(LstmState, LstmStepCache)> {
        if x.len() != self.input_size {
            return Err(Error::Shape(format!(
                "lstm expects input of {}, got {}",
                self.input_size,
                x.len()
            )));
        }
        let h = self.hidden_size;
        let mut concat = Vec::with_capacity(h + x.len());
        concat.extend_from_slice(&prev.activation);
        concat.extend_from_slice(x);

        let pre = |w: &Matrix, b: &[f64]| -> Vec<f64> {
            let mut z = w.matvec(&concat);
            for (zv, bv) in z.iter_mut().zip(b.iter()) {
                *zv += bv;
            }
            z
        };
        let candidate: Vec<f64> = pre(&self.w_candidate, &self.b_candidate)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let gate_update: Vec<f64> = pre(&self.w_update, &self.b_update)
            .into_iter()
            .map(sigmoid)
            .collect();
        let gate_forget: Vec<f64> = pre(&self.w_forget, &self.b_forget)
            .into_iter()
            .map(sigmoid)
            .collect();
        let gate_output: Vec<f64> = pre(&self.w_output, &self.b_output)
            .into_iter()
            .map(sigmoid)
            .collect();

        let mut cell = vec![0.0; h];
        let mut tanh_cell = vec![0.0; h];
        let mut activation = vec![0.0; h];
        for i in 0..h {
            cell[i] = gate_update[i] * candidate[i] + gate_forget[i] * prev.cell[i];
            tanh_cell[i] = cell[i].tanh();
            activation[i] = gate_output[i] * tanh_cell[i];
        }

        let cache = LstmStepCache {
            concat,
            candidate,
            gate_update,
            gate_forget,
            gate_output,
            cell_prev: prev.cell.clone(),
            cell: cell.clone(),
            tanh_cell,
        };
        Ok((LstmState { cell, activation }, cache))
    }

    /// Runs the cell over a time x features window starting from `initial`
    /// (windows are independent, so zeros at each window start). Row `t` of
    /// the output is the activation after consuming input row `t`.
    pub fn sequence_forward(&self, window: &Matrix, initial: &LstmState) -> Result<Matrix> {
        let (out, _) = self.sequence_forward_cached(window, initial)?;
        Ok(out)
    }

    pub fn sequence_forward_cached(
        &self,
        window: &Matrix,
        initial: &LstmState,
    ) -> Result<(Matrix, Vec<LstmStepCache>)> {
        if window.rows() == 0 {
            return Err(Error::EmptyInput("lstm window has no timesteps".into()));
        }
        let mut state = initial.clone();
        let mut out = Matrix::zeros(window.rows(), self.hidden_size);
        let mut caches = Vec::with_capacity(window.rows());
        for t in 0..window.rows() {
            let (next, cache) = self.step_cached(&state, window.row(t))?;
            out.row_mut(t).copy_from_slice(&next.activation);
            caches.push(cache);
            state = next;
        }
        Ok((out, caches))
    }

    /// BPTT over a cached sequence. `d_out` carries dL/da(t) per row; returns
    /// dL/dx per row and accumulates parameter gradients into `grad`.
    pub fn sequence_backward(
        &self,
        caches: &[LstmStepCache],
        d_out: &Matrix,
        grad: &mut LstmGrad,
    ) -> Matrix {
        let h = self.hidden_size;
        let steps = caches.len();
        let mut d_in = Matrix::zeros(steps, self.input_size);
        let mut d_act_next = vec![0.0; h]; // dL/da(t) arriving from t+1
        let mut d_cell_next = vec![0.0; h]; // dL/dc(t) arriving from t+1

        for t in (0..steps).rev() {
            let cache = &caches[t];
            // total gradient on a(t): external + recurrent
            let mut d_act = d_out.row(t).to_vec();
            for (dv, nv) in d_act.iter_mut().zip(d_act_next.iter()) {
                *dv += nv;
            }

            let mut d_candidate_pre = vec![0.0; h];
            let mut d_update_pre = vec![0.0; h];
            let mut d_forget_pre = vec![0.0; h];
            let mut d_output_pre = vec![0.0; h];
            let mut d_cell_prev = vec![0.0; h];
            for i in 0..h {
                let go = cache.gate_output[i];
                let th = cache.tanh_cell[i];
                let d_cell = d_act[i] * go * (1.0 - th * th) + d_cell_next[i];

                let gu = cache.gate_update[i];
                let gf = cache.gate_forget[i];
                let cand = cache.candidate[i];

                d_output_pre[i] = d_act[i] * th * go * (1.0 - go);
                d_update_pre[i] = d_cell * cand * gu * (1.0 - gu);
                d_forget_pre[i] = d_cell * cache.cell_prev[i] * gf * (1.0 - gf);
                d_candidate_pre[i] = d_cell * gu * (1.0 - cand * cand);
                d_cell_prev[i] = d_cell * gf;
            }

            grad.w_candidate.add_outer(&d_candidate_pre, &cache.concat);
            grad.w_update.add_outer(&d_update_pre, &cache.concat);
            grad.w_forget.add_outer(&d_forget_pre, &cache.concat);
            grad.w_output.add_outer(&d_output_pre, &cache.concat);
            for i in 0..h {
                grad.b_candidate[i] += d_candidate_pre[i];
                grad.b_update[i] += d_update_pre[i];
                grad.b_forget[i] += d_forget_pre[i];
                grad.b_output[i] += d_output_pre[i];
            }

            // d_concat = sum of W^T d_gate_pre over the four gates
            let mut d_concat = self.w_candidate.matvec_transpose(&d_candidate_pre);
            let add = |acc: &mut [f64], v: Vec<f64>| {
                for (a, b) in acc.iter_mut().zip(v.into_iter()) {
                    *a += b;
                }
            };
            add(&mut d_concat, self.w_update.matvec_transpose(&d_update_pre));
            add(&mut d_concat, self.w_forget.matvec_transpose(&d_forget_pre));
            add(&mut d_concat, self.w_output.matvec_transpose(&d_output_pre));

            d_act_next.copy_from_slice(&d_concat[..h]);
            d_in.row_mut(t).copy_from_slice(&d_concat[h..]);
            d_cell_next = d_cell_prev;
        }
        d_in
    }
}

/// Bidirectional pass: a forward cell over `t = 0..T` and an independent
/// backward cell over `t = T..0`, concatenated per timestep. Row `t` is
/// `[fwd(t), bwd(t)]` where `bwd(t)` is the backward cell's state after it
/// has consumed rows `T-1 ..= t`.
pub fn bilstm_sequence_forward(
    fwd: &LstmCellParams,
    bwd: &LstmCellParams,
    window: &Matrix,
) -> Result<Matrix> {
    let (out, _, _) = bilstm_sequence_forward_cached(fwd, bwd, window)?;
    Ok(out)
}

pub fn bilstm_sequence_forward_cached(
    fwd: &LstmCellParams,
    bwd: &LstmCellParams,
    window: &Matrix,
) -> Result<(Matrix, Vec<LstmStepCache>, Vec<LstmStepCache>)> {
    if fwd.hidden_size != bwd.hidden_size {
        return Err(Error::Shape(format!(
            "bilstm direction hidden sizes differ: {} vs {}",
            fwd.hidden_size, bwd.hidden_size
        )));
    }
    let h = fwd.hidden_size;
    let time = window.rows();
    let (fwd_out, fwd_caches) = fwd.sequence_forward_cached(window, &LstmState::zeros(h))?;

    let reversed = reverse_rows(window);
    let (bwd_out, bwd_caches) = bwd.sequence_forward_cached(&reversed, &LstmState::zeros(h))?;

    let mut out = Matrix::zeros(time, 2 * h);
    for t in 0..time {
        out.row_mut(t)[..h].copy_from_slice(fwd_out.row(t));
        // backward step T-1-t consumed original rows T-1 ..= t
        out.row_mut(t)[h..].copy_from_slice(bwd_out.row(time - 1 - t));
    }
    Ok((out, fwd_caches, bwd_caches))
}

/// Backward for the bidirectional pass. `d_out` is time x 2*hidden in output
/// alignment; returns dL/dx and accumulates into both direction gradients.
pub fn bilstm_sequence_backward(
    fwd: &LstmCellParams,
    bwd: &LstmCellParams,
    fwd_caches: &[LstmStepCache],
    bwd_caches: &[LstmStepCache],
    d_out: &Matrix,
    fwd_grad: &mut LstmGrad,
    bwd_grad: &mut LstmGrad,
) -> Matrix {
    let h = fwd.hidden_size;
    let time = d_out.rows();

    let mut d_fwd = Matrix::zeros(time, h);
    let mut d_bwd = Matrix::zeros(time, h); // in backward processing order
    for t in 0..time {
        d_fwd.row_mut(t).copy_from_slice(&d_out.row(t)[..h]);
        d_bwd
            .row_mut(time - 1 - t)
            .copy_from_slice(&d_out.row(t)[h..]);
    }

    let d_in_fwd = fwd.sequence_backward(fwd_caches, &d_fwd, fwd_grad);
    let d_in_bwd_rev = bwd.sequence_backward(bwd_caches, &d_bwd, bwd_grad);

    // un-reverse the backward direction's input gradient and sum
    let mut d_in = d_in_fwd;
    for t in 0..time {
        let rev_row = d_in_bwd_rev.row(time - 1 - t).to_vec();
        for (a, b) in d_in.row_mut(t).iter_mut().zip(rev_row.iter()) {
            *a += b;
        }
    }
    d_in
}

pub fn reverse_rows(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for t in 0..m.rows() {
        out.row_mut(t).copy_from_slice(m.row(m.rows() - 1 - t));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar cell with handpicked weights; expected values frozen from an
    /// independent high-precision evaluation of the cell equations.
    fn scalar_params() -> LstmCellParams {
        let mut p = LstmCellParams::new(1, 1);
        p.w_candidate = Matrix::from_rows(&[vec![0.5, -0.3]]).unwrap();
        p.b_candidate = vec![0.1];
        p.w_update = Matrix::from_rows(&[vec![0.2, 0.4]]).unwrap();
        p.b_update = vec![-0.2];
        p.w_forget = Matrix::from_rows(&[vec![-0.5, 0.25]]).unwrap();
        p.b_forget = vec![0.3];
        p.w_output = Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap();
        p.b_output = vec![0.05];
        p
    }

    #[test]
    fn zero_parameters_zero_state() {
        let p = LstmCellParams::new(3, 2);
        let s = p.step(&LstmState::zeros(2), &[0.7, -0.3, 1.2]).unwrap();
        // gates all sigma(0) = 0.5, candidate tanh(0) = 0
        assert_eq!(s.cell, vec![0.0, 0.0]);
        assert_eq!(s.activation, vec![0.0, 0.0]);
    }

    #[test]
    fn scalar_step_matches_hand_evaluation() {
        let p = scalar_params();
        let prev = LstmState {
            cell: vec![-0.4],
            activation: vec![0.2],
        };
        let s = p.step(&prev, &[0.7]).unwrap();
        assert!((s.cell[0] - -0.24236610385165560).abs() < 1e-12);
        assert!((s.activation[0] - -0.09256249531991997).abs() < 1e-12);
    }

    #[test]
    fn forget_gate_saturation_preserves_cell() {
        // zero input weights, large forget bias: c(t) -> 0.5*0 + 1.0*c_prev
        let mut p = LstmCellParams::new(1, 1);
        p.b_forget = vec![50.0];
        let prev = LstmState {
            cell: vec![0.8],
            activation: vec![0.0],
        };
        let s = p.step(&prev, &[123.0]).unwrap();
        assert!((s.cell[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn one_step_window_reduces_to_step() {
        let p = scalar_params();
        let window = Matrix::from_rows(&[vec![0.7]]).unwrap();
        let out = p.sequence_forward(&window, &LstmState::zeros(1)).unwrap();
        let s = p.step(&LstmState::zeros(1), &[0.7]).unwrap();
        assert_eq!(out.row(0), &s.activation[..]);
    }

    #[test]
    fn two_step_window_matches_chained_hand_evaluation() {
        let p = scalar_params();
        let window = Matrix::from_rows(&[vec![0.7], vec![-0.3]]).unwrap();
        let out = p.sequence_forward(&window, &LstmState::zeros(1)).unwrap();
        assert!((out.get(0, 0) - -0.01951874069797341).abs() < 1e-12);
        assert!((out.get(1, 0) - 0.02502262261406717).abs() < 1e-12);
    }

    #[test]
    fn empty_window_is_an_error() {
        let p = scalar_params();
        let window = Matrix::zeros(0, 1);
        assert!(matches!(
            p.sequence_forward(&window, &LstmState::zeros(1)),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn zero_parameters_zero_sequence() {
        let p = LstmCellParams::new(2, 3);
        let window = Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]]).unwrap();
        let out = p.sequence_forward(&window, &LstmState::zeros(3)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn activation_stays_inside_unit_interval() {
        use rand::Rng;
        let mut rng = crate::seed::rng_for(11, "lstm-bound", 0);
        let mut p = LstmCellParams::new(4, 3);
        for w in [
            &mut p.w_candidate,
            &mut p.w_update,
            &mut p.w_forget,
            &mut p.w_output,
        ] {
            for v in w.data_mut() {
                *v = rng.gen_range(-2.0..2.0);
            }
        }
        let mut state = LstmState::zeros(3);
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
            state = p.step(&state, &x).unwrap();
            for &a in &state.activation {
                assert!(a > -1.0 && a < 1.0, "activation escaped (-1,1): {a}");
            }
        }
    }

    #[test]
    fn bilstm_equals_composition_of_directional_passes() {
        use rand::Rng;
        let mut rng = crate::seed::rng_for(13, "bilstm-comp", 0);
        let mut fwd = LstmCellParams::new(2, 3);
        let mut bwd = LstmCellParams::new(2, 3);
        for p in [&mut fwd, &mut bwd] {
            for w in [
                &mut p.w_candidate,
                &mut p.w_update,
                &mut p.w_forget,
                &mut p.w_output,
            ] {
                for v in w.data_mut() {
                    *v = rng.gen_range(-1.0..1.0);
                }
            }
        }
        let window =
            Matrix::from_rows(&[vec![0.3, -0.2], vec![1.0, 0.1], vec![-0.5, 0.7]]).unwrap();

        let out = bilstm_sequence_forward(&fwd, &bwd, &window).unwrap();

        // manual composition: forward pass + pass over the reversed window
        let f = fwd
            .sequence_forward(&window, &LstmState::zeros(3))
            .unwrap();
        let b = bwd
            .sequence_forward(&reverse_rows(&window), &LstmState::zeros(3))
            .unwrap();
        for t in 0..3 {
            assert_eq!(&out.row(t)[..3], f.row(t));
            assert_eq!(&out.row(t)[3..], b.row(2 - t));
        }
    }

    #[test]
    fn palindromic_input_with_shared_params_is_time_symmetric() {
        let p = scalar_params();
        let window = Matrix::from_rows(&[vec![0.4], vec![-0.9], vec![0.4]]).unwrap();
        let out = bilstm_sequence_forward(&p, &p, &window).unwrap();
        let time = out.rows();
        for t in 0..time {
            let mirror = time - 1 - t;
            assert_eq!(out.row(t)[0], out.row(mirror)[1]);
            assert_eq!(out.row(t)[1], out.row(mirror)[0]);
        }
    }

    #[test]
    fn bilstm_hidden_size_mismatch_rejected() {
        let fwd = LstmCellParams::new(2, 3);
        let bwd = LstmCellParams::new(2, 4);
        let window = Matrix::zeros(3, 2);
        assert!(bilstm_sequence_forward(&fwd, &bwd, &window).is_err());
    }
}
