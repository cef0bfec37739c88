//! Parameter updates: the adaptive-rate rule used for training plus a plain
//! SGD step kept as a debug fallback.
//!
//! The adaptive rule keeps two decayed accumulators per parameter, one of
//! squared gradients and one of squared updates, and needs no learning
//! rate:
//!
//! ```text
//! E[g^2]  <- rho E[g^2]  + (1 - rho) g^2
//! dx       = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
//! E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
//! x       <- x + dx
//! ```
//!
//! The decay `rho` defaults to 0.9 and `eps` to 1e-6. Accumulators are kept
//! in double precision; parameters stay single precision.

use crate::error::{Error, Result};

/// Per-parameter accumulators for the adaptive update rule.
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState {
    avg_sq_grad: Vec<f64>,
    avg_sq_update: Vec<f64>,
    rho: f64,
    epsilon: f64,
}

pub const DEFAULT_RHO: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 1e-6;

impl AdadeltaState {
    /// Zero accumulators for `len` parameters. `rho` must lie in (0, 1) and
    /// `epsilon` must be positive.
    pub fn new(len: usize, rho: f64, epsilon: f64) -> Result<Self> {
        if !(0.0 < rho && rho < 1.0) {
            return Err(Error::invalid(format!("rho {rho} must be in (0, 1)")));
        }
        if epsilon <= 0.0 {
            return Err(Error::invalid("epsilon must be positive"));
        }
        Ok(AdadeltaState {
            avg_sq_grad: vec![0.0; len],
            avg_sq_update: vec![0.0; len],
            rho,
            epsilon,
        })
    }

    pub fn len(&self) -> usize {
        self.avg_sq_grad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.avg_sq_grad.is_empty()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn avg_sq_grad(&self) -> &[f64] {
        &self.avg_sq_grad
    }

    pub fn avg_sq_update(&self) -> &[f64] {
        &self.avg_sq_update
    }

    /// Rebuilds a state from serialized accumulators (checkpoint loading).
    pub fn from_parts(
        avg_sq_grad: Vec<f64>,
        avg_sq_update: Vec<f64>,
        rho: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if avg_sq_grad.len() != avg_sq_update.len() {
            return Err(Error::invalid("accumulator lengths differ"));
        }
        if avg_sq_grad
            .iter()
            .chain(&avg_sq_update)
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Error::invalid("accumulators must be finite and non-negative"));
        }
        let mut s = AdadeltaState::new(avg_sq_grad.len(), rho, epsilon)?;
        s.avg_sq_grad = avg_sq_grad;
        s.avg_sq_update = avg_sq_update;
        Ok(s)
    }
}

/// One adaptive update over a flat parameter block.
pub fn adadelta_step(params: &mut [f32], grads: &[f32], state: &mut AdadeltaState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(Error::shape(format!(
            "adadelta_step length mismatch: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.len()
        )));
    }
    let rho = state.rho;
    let eps = state.epsilon;
    for i in 0..params.len() {
        let g = grads[i] as f64;
        let eg = rho * state.avg_sq_grad[i] + (1.0 - rho) * g * g;
        state.avg_sq_grad[i] = eg;
        let dx = -((state.avg_sq_update[i] + eps).sqrt() / (eg + eps).sqrt()) * g;
        state.avg_sq_update[i] = rho * state.avg_sq_update[i] + (1.0 - rho) * dx * dx;
        params[i] = (params[i] as f64 + dx) as f32;
    }
    Ok(())
}

/// Plain SGD step, `x <- x - lr * g`. Debug fallback only.
pub fn sgd_step(params: &mut [f32], grads: &[f32], lr: f32) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape("sgd_step length mismatch"));
    }
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}
