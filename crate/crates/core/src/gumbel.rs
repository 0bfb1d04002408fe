//! Gumbel-Softmax relaxed sampling and its conditional counterpart.
//!
//! Perturbed logits are kept unscaled (`log p + g`), so the argmax never
//! depends on the temperature; the relaxed sample is `softmax(perturbed / τ)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::vocab::TokenId;

/// Uniform draws are clamped to `[UNIFORM_CLAMP, 1 - UNIFORM_CLAMP]` so that
/// `-log(-log u)` stays finite.
pub const UNIFORM_CLAMP: f64 = 1e-12;
/// Probabilities are floored here before taking logs.
pub const PROB_FLOOR: f64 = 1e-300;

pub const DEFAULT_LOG_TAU: f64 = 0.5;

/// Learnable temperature kept in log scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureParam {
    pub log_tau: f64,
}

impl Default for TemperatureParam {
    fn default() -> Self {
        TemperatureParam { log_tau: DEFAULT_LOG_TAU }
    }
}

impl TemperatureParam {
    pub fn new(log_tau: f64) -> Self {
        TemperatureParam { log_tau }
    }

    pub fn tau(&self) -> f64 {
        self.log_tau.exp()
    }
}

impl ParamStore for TemperatureParam {
    fn names(&self) -> Vec<&'static str> {
        vec!["log_tau"]
    }

    fn slices(&self) -> Vec<&[f64]> {
        vec![std::slice::from_ref(&self.log_tau)]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![std::slice::from_mut(&mut self.log_tau)]
    }
}

/// Noise and pre-softmax values retained for gradient computations.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxCache {
    pub log_probs: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// `log p + g`, unscaled.
    pub perturbed: Vec<f64>,
    /// Conditional perturbed logits, unscaled.
    pub perturbed_tilde: Vec<f64>,
    pub log_tau: f64,
}

/// One relaxed step: `z`, the conditional `z_tilde`, and the hard token.
#[derive(Clone, Debug, PartialEq)]
pub struct GumbelSample {
    pub probs: Vec<f64>,
    pub z: Vec<f64>,
    pub z_tilde: Vec<f64>,
    pub hard_token: TokenId,
    pub cache: Option<RelaxCache>,
}

pub(crate) fn clamp_uniform(u: f64) -> f64 {
    u.clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP)
}

pub(crate) fn draw_uniforms<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| clamp_uniform(rng.random::<f64>())).collect()
}

pub(crate) fn floored_log(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// `softmax(x / tau)` with max subtraction.
pub fn softmax_scaled(x: &[f64], tau: f64) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| ((v - m) / tau).exp()).collect();
    let s: f64 = out.iter().sum();
    for o in &mut out {
        *o /= s;
    }
    out
}

pub(crate) fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}

/// `log p_k - log(-log u_k)`
pub fn perturb(log_probs: &[f64], u: &[f64]) -> Vec<f64> {
    log_probs.iter().zip(u).map(|(lp, &uk)| lp - (-uk.ln()).ln()).collect()
}

/// Perturbed logits conditioned on `hard` being the argmax.
///
/// The winning coordinate carries a standard Gumbel draw (the law of the
/// max); every other coordinate is a Gumbel with location `log p_k`
/// truncated below that max.
pub fn perturb_conditional(log_probs: &[f64], hard: usize, v: &[f64]) -> Vec<f64> {
    let top = -v[hard].ln();
    log_probs
        .iter()
        .zip(v)
        .enumerate()
        .map(|(k, (&lp, &vk))| if k == hard { -top.ln() } else { -((-vk.ln()) * (-lp).exp() + top).ln() })
        .collect()
}

/// `∂ perturbed_tilde_k / ∂ log p_k` (the Jacobian is diagonal; zero at `hard`).
pub fn conditional_log_prob_sensitivity(log_probs: &[f64], hard: usize, v: &[f64]) -> Vec<f64> {
    let top = -v[hard].ln();
    log_probs
        .iter()
        .zip(v)
        .enumerate()
        .map(|(k, (&lp, &vk))| {
            if k == hard {
                0.0
            } else {
                let b = (-vk.ln()) * (-lp).exp();
                b / (b + top)
            }
        })
        .collect()
}

/// Unconditional relaxed sample from a probability vector.
pub fn gumbel_softmax<R: Rng + ?Sized>(probs: &[f64], tau: f64, rng: &mut R) -> (Vec<f64>, TokenId) {
    let log_probs: Vec<f64> = probs.iter().map(|&p| floored_log(p)).collect();
    let u = draw_uniforms(probs.len(), rng);
    let perturbed = perturb(&log_probs, &u);
    let hard = argmax(&perturbed);
    (softmax_scaled(&perturbed, tau), hard as TokenId)
}

/// Relaxed sample conditioned on the realised hard token.
pub fn conditional_gumbel_softmax<R: Rng + ?Sized>(
    probs: &[f64],
    hard_token: TokenId,
    tau: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let hard = hard_token as usize;
    if hard >= probs.len() {
        return Err(Error::InvalidToken { token: hard_token, vocab: probs.len() });
    }
    let log_probs: Vec<f64> = probs.iter().map(|&p| floored_log(p)).collect();
    let v = draw_uniforms(probs.len(), rng);
    Ok(softmax_scaled(&perturb_conditional(&log_probs, hard, &v), tau))
}

/// Draw `z`, the hard token and `z_tilde` for one step from log-probabilities.
pub fn sample_relaxed<R: Rng + ?Sized>(log_probs: &[f64], log_tau: f64, rng: &mut R) -> GumbelSample {
    let log_probs: Vec<f64> = log_probs.iter().map(|&lp| lp.max(PROB_FLOOR.ln())).collect();
    let u = draw_uniforms(log_probs.len(), rng);
    let v = draw_uniforms(log_probs.len(), rng);
    relaxed_from_noise(&log_probs, u, v, log_tau)
}

/// Deterministic part of [`sample_relaxed`], given the noise.
pub fn relaxed_from_noise(log_probs: &[f64], u: Vec<f64>, v: Vec<f64>, log_tau: f64) -> GumbelSample {
    let tau = log_tau.exp();
    let perturbed = perturb(log_probs, &u);
    let hard = argmax(&perturbed);
    let perturbed_tilde = perturb_conditional(log_probs, hard, &v);
    GumbelSample {
        probs: log_probs.iter().map(|lp| lp.exp()).collect(),
        z: softmax_scaled(&perturbed, tau),
        z_tilde: softmax_scaled(&perturbed_tilde, tau),
        hard_token: hard as TokenId,
        cache: Some(RelaxCache { log_probs: log_probs.to_vec(), u, v, perturbed, perturbed_tilde, log_tau }),
    }
}

/// Vector–Jacobian product of `y = softmax(s)`: returns `Jᵀ·upstream`.
pub fn softmax_vjp(y: &[f64], upstream: &[f64]) -> Vec<f64> {
    let inner: f64 = y.iter().zip(upstream).map(|(a, b)| a * b).sum();
    y.iter().zip(upstream).map(|(yk, gk)| yk * (gk - inner)).collect()
}

/// Contribution of `log τ` to a loss whose gradients with respect to `z`
/// and `z_tilde` are `upstream_z` and `upstream_z_tilde`.
pub fn tau_gradient_hook(sample: &GumbelSample, upstream_z: &[f64], upstream_z_tilde: &[f64]) -> Result<f64> {
    let cache = sample.cache.as_ref().ok_or(Error::MissingCache)?;
    let n = sample.z.len();
    if upstream_z.len() != n || upstream_z_tilde.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "upstream lengths {} / {} for a {n}-way sample",
            upstream_z.len(),
            upstream_z_tilde.len()
        )));
    }
    let tau = cache.log_tau.exp();
    // z = softmax(s), s = perturbed / τ, ds/dlogτ = -s
    let part = |y: &[f64], up: &[f64], pert: &[f64]| -> f64 {
        softmax_vjp(y, up).iter().zip(pert).map(|(g, p)| -g * p / tau).sum::<f64>()
    };
    Ok(part(&sample.z, upstream_z, &cache.perturbed) + part(&sample.z_tilde, upstream_z_tilde, &cache.perturbed_tilde))
}
