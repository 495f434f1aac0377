//! Scalar activations and the softmax head.

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Elementwise `max(0, x)`.
pub fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect()
}

pub fn relu_in_place(v: &mut [f64]) {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Numerically stable softmax; output entries lie in (0, 1) and sum to 1.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Backward through softmax: given `dL/dh` and the cached output `h`,
/// returns `dL/dz` via the full Jacobian `h_j (δ_jk − h_k)`.
pub fn softmax_backward(h: &[f64], dh: &[f64]) -> Vec<f64> {
    let inner: f64 = h.iter().zip(dh.iter()).map(|(hv, dv)| hv * dv).sum();
    h.iter()
        .zip(dh.iter())
        .map(|(hv, dv)| hv * (dv - inner))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps_negatives() {
        assert_eq!(relu(&[-1.0, 2.0, 0.0]), vec![0.0, 2.0, 0.0]);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let h = softmax(&[0.0, 0.0, 0.0]);
        for v in &h {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_is_a_probability_vector() {
        let h = softmax(&[3.2, -1.5, 0.7, 12.0]);
        let sum: f64 = h.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(h.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
