//! Fully connected layer, applied either to a single vector or to every
//! timestep of a sequence.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Dense layer `y = W x + b` with `W` of shape `out x in`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(input: usize, output: usize) -> Self {
        Dense {
            weights: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    pub fn input_size(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_size(&self) -> usize {
        self.weights.rows()
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_size() {
            return Err(Error::Shape(format!(
                "dense expects input of {}, got {}",
                self.input_size(),
                x.len()
            )));
        }
        let mut y = self.weights.matvec(x);
        for (yv, b) in y.iter_mut().zip(self.bias.iter()) {
            *yv += b;
        }
        Ok(y)
    }

    /// Applies the layer independently to every row of a time x features
    /// sequence.
    pub fn forward_seq(&self, input: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(input.rows(), self.output_size());
        for t in 0..input.rows() {
            let y = self.forward(input.row(t))?;
            out.row_mut(t).copy_from_slice(&y);
        }
        Ok(out)
    }

    /// Backward for a single vector: accumulates `dW += dy x^T`, `db += dy`
    /// and returns `dx = W^T dy`.
    pub fn backward(
        &self,
        x: &[f64],
        d_out: &[f64],
        d_weights: &mut Matrix,
        d_bias: &mut [f64],
    ) -> Vec<f64> {
        d_weights.add_outer(d_out, x);
        for (db, dy) in d_bias.iter_mut().zip(d_out.iter()) {
            *db += dy;
        }
        self.weights.matvec_transpose(d_out)
    }

    /// Backward over a sequence; parameter gradients sum over timesteps.
    pub fn backward_seq(
        &self,
        input: &Matrix,
        d_out: &Matrix,
        d_weights: &mut Matrix,
        d_bias: &mut [f64],
    ) -> Matrix {
        let mut d_in = Matrix::zeros(input.rows(), self.input_size());
        for t in 0..input.rows() {
            let dx = self.backward(input.row(t), d_out.row(t), d_weights, d_bias);
            d_in.row_mut(t).copy_from_slice(&dx);
        }
        d_in
    }
}
