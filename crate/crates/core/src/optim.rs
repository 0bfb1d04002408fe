//! Adam with bias correction over any [`ParamStore`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        AdamState { m: vec![0.0; num_params], v: vec![0.0; num_params], t: 0 }
    }
}

/// One Adam update of `params` from `grads` (a descent direction is taken).
pub fn adam_step(
    params: &mut dyn ParamStore,
    grads: &dyn ParamStore,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    let n = params.num_params();
    if grads.num_params() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "adam: {n} parameters, {} gradients, state of {}",
            grads.num_params(),
            state.m.len()
        )));
    }
    state.t += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let c2 = 1.0 - cfg.beta2.powi(state.t as i32);
    let mut i = 0;
    let grad_slices = grads.slices();
    for (p_slice, g_slice) in params.slices_mut().into_iter().zip(grad_slices) {
        for (p, &g) in p_slice.iter_mut().zip(g_slice) {
            let m = &mut state.m[i];
            let v = &mut state.v[i];
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= cfg.lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
            i += 1;
        }
    }
    params.mark_updated();
    Ok(())
}
