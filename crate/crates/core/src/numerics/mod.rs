//! Dense kernels, optimizers, random streams and the gradient checker that
//! every other module is built on.

mod adam;
mod gradcheck;
mod matrix;
mod matrix_io;
mod rng;

pub use adam::AdamState;
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use matrix::Matrix;
pub(crate) use matrix_io::sha256_hex;
pub use matrix_io::{read_matrix, write_matrix, MATRIX_MAGIC};
pub use rng::{categorical_sample, DegreeSampler, RngState, RngStream, Substream};

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // four accumulators keep the loop vectorizable while staying order-fixed
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `y += alpha · x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log σ(x) = −log(1 + e^{−x})`, finite for every finite `x`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Softmax restricted to positions where `mask` is set; masked positions get
/// exactly zero. Uses max-subtraction over the unmasked scores.
pub fn masked_softmax(scores: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if scores.len() != mask.len() {
        return Err(Error::shape(
            format!("scores[{}]", scores.len()),
            format!("mask[{}]", mask.len()),
        ));
    }
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .reduce(f64::max)
        .ok_or_else(|| Error::invalid("masked_softmax: mask has no active entry"))?;
    let mut out: Vec<f64> = scores
        .iter()
        .zip(mask)
        .map(|(&s, &m)| if m { (s - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= z);
    Ok(out)
}

/// Plain softmax over a dense slice.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= z);
    out
}

/// Backward pass of a softmax: given `p = softmax(s)` and `∂L/∂p`, returns `∂L/∂s`.
/// Entries with `p = 0` (masked) get zero gradient.
pub fn softmax_backward(p: &[f64], grad_p: &[f64]) -> Vec<f64> {
    let inner: f64 = p.iter().zip(grad_p).map(|(a, b)| a * b).sum();
    p.iter()
        .zip(grad_p)
        .map(|(&pi, &gi)| pi * (gi - inner))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) + 2f64.ln()).abs() < 1e-15);
        assert!(log_sigmoid(-1000.0).is_finite());
        assert!((log_sigmoid(-1000.0) + 1000.0).abs() < 1e-9);
        assert!(log_sigmoid(1000.0) <= 0.0);
        for x in [-5.0, -0.3, 0.2, 7.0] {
            assert!((log_sigmoid(x) - sigmoid(x).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_softmax_examples() {
        assert_eq!(masked_softmax(&[0.0, 0.0], &[true, true]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(masked_softmax(&[5.0, -100.0], &[true, false]).unwrap(), vec![1.0, 0.0]);
        let p = masked_softmax(&[1.0, 2.0, 3.0], &[true; 3]).unwrap();
        let z = 1f64.exp() + 2f64.exp() + 3f64.exp();
        for (k, pk) in p.iter().enumerate() {
            assert!((pk - ((k + 1) as f64).exp() / z).abs() < 1e-15);
        }
        assert!(masked_softmax(&[1.0, 2.0], &[false, false]).is_err());
    }

    #[test]
    fn softmax_backward_matches_jacobian() {
        let s = [0.3, -1.2, 2.0];
        let g = [1.0, -0.5, 0.25];
        let p = softmax(&s);
        let got = softmax_backward(&p, &g);
        for j in 0..3 {
            let mut want = 0.0;
            for i in 0..3 {
                let jac = if i == j { p[i] * (1.0 - p[i]) } else { -p[i] * p[j] };
                want += g[i] * jac;
            }
            assert!((got[j] - want).abs() < 1e-15);
        }
    }
}
