use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Adam with bias correction and decoupled weight decay.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
        }
    }

    /// One update. `weight_decay[i]` shrinks parameter `i` by `lr · wd · p`
    /// independently of the adaptive step.
    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix], weight_decay: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() || weight_decay.len() != params.len() {
            return Err(Error::Input(format!(
                "Adam tracks {} parameters, got {} params, {} grads, {} decay values",
                self.m.len(),
                params.len(),
                grads.len(),
                weight_decay.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::shape("adam_step", p.shape(), g.shape()));
            }
        }
        for (i, p) in params.iter().enumerate() {
            if p.shape() != self.m[i].shape() {
                return Err(Error::shape("adam_step", p.shape(), self.m[i].shape()));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let wd = weight_decay[i];
            for (k, (x, &gk)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                *x -= self.lr * (m_hat / (v_hat.sqrt() + self.eps) + wd * *x);
            }
        }
        Ok(())
    }
}
