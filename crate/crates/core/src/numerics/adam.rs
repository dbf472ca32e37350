use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Adam moments for one parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_matrix(m: &Matrix) -> Self {
        Self::new(m.rows() * m.cols())
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One bias-corrected Adam update, `params -= lr · m̂ / (√v̂ + ε)`.
    ///
    /// Rejects non-finite gradients before touching any state.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::shape(
                format!("params[{}] / state[{}]", params.len(), self.m.len()),
                format!("grads[{}]", grads.len()),
            ));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "adam: non-finite gradient {} at index {i}",
                grads[i]
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            if g == 0.0 && *m == 0.0 && *v == 0.0 {
                continue;
            }
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }

    pub fn step_matrix(&mut self, params: &mut Matrix, grads: &Matrix, lr: f64) -> Result<()> {
        if params.shape() != grads.shape() {
            return Err(Error::shape(params.shape_str(), grads.shape_str()));
        }
        self.step(params.as_mut_slice(), grads.as_slice(), lr)
    }
}
