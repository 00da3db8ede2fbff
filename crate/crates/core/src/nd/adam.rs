use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.eps > 0.0) {
            return Err(Error::Config(format!(
                "adam lr and eps must be positive (lr={}, eps={})",
                self.lr, self.eps
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("adam {name} must lie in [0, 1), got {b}")));
            }
        }
        Ok(())
    }
}

/// First/second moment buffers mirroring a parameter list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            t: 0,
        }
    }
}

/// Bias-corrected Adam update applied in place.
///
/// Non-finite gradients are rejected before any buffer is touched.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState, hyper: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(Error::shape(
            "adam_step",
            &[params.len(), grads.len()],
            &[state.m.len(), state.v.len()],
        ));
    }
    for (i, ((p, g), (m, v))) in params.iter().zip(grads).zip(state.m.iter().zip(&state.v)).enumerate() {
        if p.shape() != g.shape() || p.shape() != m.shape() || p.shape() != v.shape() {
            return Err(Error::shape("adam_step", p.shape(), g.shape()));
        }
        g.ensure_finite(&format!("adam gradient {i}"))?;
    }

    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut())
        {
            *mv = hyper.beta1 * *mv + (1.0 - hyper.beta1) * gv;
            *vv = hyper.beta2 * *vv + (1.0 - hyper.beta2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
        }
    }
    Ok(())
}
