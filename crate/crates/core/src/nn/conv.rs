//! One-dimensional convolution over the time axis.
//!
//! Cross-correlation with same-length zero padding: the output has as many
//! timesteps as the input, so every window size remains usable downstream.
//! The kernel width must be odd for the centered padding to be well defined.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Conv1D layer: `filters` kernels of width `kernel` over `channels` input
/// channels. Weights are stored as a `filters x (channels * kernel)` matrix;
/// row `f` holds kernel `f` laid out channel-major (`c * kernel + k`).
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub channels: usize,
    pub kernel: usize,
}

impl Conv1d {
    pub fn new(channels: usize, kernel: usize, filters: usize) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "conv kernel width must be odd, got {kernel}"
            )));
        }
        Ok(Conv1d {
            weights: Matrix::zeros(filters, channels * kernel),
            bias: vec![0.0; filters],
            channels,
            kernel,
        })
    }

    pub fn filters(&self) -> usize {
        self.weights.rows()
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    #[inline]
    pub fn weight(&self, filter: usize, channel: usize, k: usize) -> f64 {
        self.weights.get(filter, channel * self.kernel + k)
    }

    /// Forward pass: `input` is time x channels, output is time x filters.
    ///
    /// `out[t][f] = bias[f] + sum_{c,k} in[t + k - kernel/2][c] * w[f][c][k]`
    /// with zeros outside the input borders.
    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        if input.cols() != self.channels {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                self.channels,
                input.cols()
            )));
        }
        if input.rows() < self.kernel {
            return Err(Error::Input(format!(
                "conv needs at least {} timesteps, got {}",
                self.kernel,
                input.rows()
            )));
        }
        let time = input.rows();
        let half = (self.kernel / 2) as isize;
        let mut out = Matrix::zeros(time, self.filters());
        for t in 0..time {
            for f in 0..self.filters() {
                let mut acc = self.bias[f];
                let wrow = self.weights.row(f);
                for k in 0..self.kernel {
                    let src = t as isize + k as isize - half;
                    if src < 0 || src >= time as isize {
                        continue;
                    }
                    let in_row = input.row(src as usize);
                    for c in 0..self.channels {
                        acc += in_row[c] * wrow[c * self.kernel + k];
                    }
                }
                out.set(t, f, acc);
            }
        }
        Ok(out)
    }

    /// Backward pass. `d_out` is time x filters; returns the gradient with
    /// respect to the input (time x channels) and accumulates parameter
    /// gradients into `d_weights` / `d_bias`.
    pub fn backward(
        &self,
        input: &Matrix,
        d_out: &Matrix,
        d_weights: &mut Matrix,
        d_bias: &mut [f64],
    ) -> Matrix {
        let time = input.rows();
        let half = (self.kernel / 2) as isize;
        let mut d_in = Matrix::zeros(time, self.channels);
        for t in 0..time {
            let dout_row = d_out.row(t);
            for f in 0..self.filters() {
                let g = dout_row[f];
                if g == 0.0 {
                    continue;
                }
                d_bias[f] += g;
                let wrow = self.weights.row(f);
                let dwrow = d_weights.row_mut(f);
                for k in 0..self.kernel {
                    let src = t as isize + k as isize - half;
                    if src < 0 || src >= time as isize {
                        continue;
                    }
                    let src = src as usize;
                    let in_row = input.row(src);
                    for c in 0..self.channels {
                        dwrow[c * self.kernel + k] += g * in_row[c];
                    }
                    let din_row = d_in.row_mut(src);
                    for c in 0..self.channels {
                        din_row[c] += g * wrow[c * self.kernel + k];
                    }
                }
            }
        }
        d_in
    }
}
