//! Single-sample policy-gradient estimators and the exact enumeration oracle.
//!
//! Every estimator returns the gradient of a surrogate *loss*: descending
//! it increases the expected reward. The exact oracle reports the gradient
//! of the expected reward itself, so `stats.mean ≈ -oracle.reward_grad`.
//!
//! The relaxed estimator decomposes over decoding steps. At step `t` the
//! control variate sees the relaxed history `z_0..z_{t-1}` followed by
//! either `z_t` or the conditional `z̃_t`, and the reparameterised terms
//! differentiate only through the step-`t` distribution. Conditioned on the
//! history each step is an unbiased RELAX estimator, so the sum is unbiased
//! even though later distributions depend on earlier discrete tokens.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control_variate::{cv_backward, cv_directional, cv_forward, CvCache, CvParams};
use crate::coverage_reward::{combined_reward, DocumentSet, RewardBreakdown, RewardConfig};
use crate::error::{Error, Result};
use crate::gumbel::{conditional_log_prob_sensitivity, softmax_scaled, softmax_vjp, TemperatureParam};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::params::ParamStore;
use crate::policy::{
    accumulate_log_prob_grad, contexts_for, log_prob_with_contexts, sample_sequence, Conditioned, DecodeSpec, Forcing,
    InputBag, PolicyGradient, PolicyParams, Rollout, SampleMode,
};
use crate::vocab::TokenId;

/// Most output sequences the exact oracle will enumerate.
pub const ENUMERATION_BUDGET: u128 = 1_000_000;

/// Step used for the finite-difference temperature gradient.
const LOG_TAU_STEP: f64 = 1e-4;

/// Scores a sampled output (EOS already stripped).
pub trait Reward: Sync {
    fn score(&self, tokens: &[TokenId]) -> Result<RewardBreakdown>;
}

/// ROUGE-L plus the scaled coverage term against one reference.
pub struct CoverageReward<'a> {
    pub reference: &'a [TokenId],
    pub docs: &'a DocumentSet,
    pub cfg: RewardConfig,
}

impl Reward for CoverageReward<'_> {
    fn score(&self, tokens: &[TokenId]) -> Result<RewardBreakdown> {
        combined_reward(tokens, self.reference, self.docs, &self.cfg)
    }
}

/// Any plain function of the tokens.
pub struct FnReward<F>(pub F);

impl<F: Fn(&[TokenId]) -> f64 + Sync> Reward for FnReward<F> {
    fn score(&self, tokens: &[TokenId]) -> Result<RewardBreakdown> {
        Ok(RewardBreakdown::constant((self.0)(tokens)))
    }
}

/// One training example as seen by the estimators.
#[derive(Clone, Copy)]
pub struct Task<'a> {
    pub bag: &'a InputBag,
    pub reference: &'a [TokenId],
    pub reward: &'a dyn Reward,
    pub decode: DecodeSpec,
    pub forcing: Forcing,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Reinforce,
    #[default]
    Relax,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::Reinforce => "reinforce",
            EstimatorKind::Relax => "relax",
        })
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "reinforce" => Ok(EstimatorKind::Reinforce),
            "relax" => Ok(EstimatorKind::Relax),
            other => Err(Error::Config(format!("unknown estimator `{other}` (expected reinforce or relax)"))),
        }
    }
}

/// An estimator together with whatever it needs beyond the policy.
#[derive(Clone, Copy)]
pub enum Estimator<'a> {
    Reinforce,
    Relax { cv: &'a CvParams, log_tau: f64 },
}

impl Estimator<'_> {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            Estimator::Reinforce => EstimatorKind::Reinforce,
            Estimator::Relax { .. } => EstimatorKind::Relax,
        }
    }

    /// One estimate from a fresh generator seeded with `seed`.
    pub fn estimate(&self, policy: &PolicyParams, task: &Task<'_>, seed: u64) -> Result<GradientEstimate> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut est = match *self {
            Estimator::Reinforce => reinforce_estimate(policy, task, &mut rng)?,
            Estimator::Relax { cv, log_tau } => relax_estimate(policy, cv, log_tau, task, false, &mut rng)?,
        };
        est.seed = Some(seed);
        Ok(est)
    }
}

#[derive(Clone, Debug)]
pub struct GradientEstimate {
    /// Gradient of the surrogate loss with respect to the policy.
    pub grad_theta: PolicyGradient,
    /// `∂‖ĝ‖²/∂φ`, the single-sample variance gradient for the control variate.
    pub grad_phi: Option<CvParams>,
    /// `∂‖ĝ‖²/∂ log τ`.
    pub grad_log_tau: Option<f64>,
    pub reward: RewardBreakdown,
    pub tokens: Vec<TokenId>,
    pub seed: Option<u64>,
}

impl GradientEstimate {
    /// `‖ĝ‖²`, the quantity the control variate is trained to shrink.
    pub fn squared_norm(&self) -> f64 {
        self.grad_theta.dot_with(&self.grad_theta)
    }
}

fn score_dlogits(probs: &[f64], token: usize, weight: f64) -> Vec<f64> {
    probs.iter().enumerate().map(|(k, p)| weight * ((k == token) as u8 as f64 - p)).collect()
}

/// `-f(y) ∇ log p(y)` for one hard sample.
pub fn reinforce_estimate<R: rand::Rng + ?Sized>(
    policy: &PolicyParams,
    task: &Task<'_>,
    rng: &mut R,
) -> Result<GradientEstimate> {
    let roll = sample_sequence(
        policy,
        task.bag,
        SampleMode::HardCategorical,
        task.decode,
        task.forcing,
        task.reference,
        0.0,
        rng,
    )?;
    let reward = task.reward.score(roll.content(task.decode.eos))?;
    let cond = policy.condition(task.bag)?;
    let mut grad = policy.zeros_like();
    if reward.combined != 0.0 {
        for (step, &tok) in roll.steps.iter().zip(&roll.tokens) {
            cond.backward(step, &score_dlogits(&step.probs, tok as usize, -reward.combined), &mut grad);
        }
    }
    Ok(GradientEstimate {
        grad_theta: grad,
        grad_phi: None,
        grad_log_tau: None,
        reward,
        tokens: roll.tokens,
        seed: None,
    })
}

struct StepTerms {
    z: Vec<f64>,
    z_tilde: Vec<f64>,
    sensitivity: Vec<f64>,
    cache_z: CvCache,
    cache_z_tilde: CvCache,
    /// `∂c_t(z̃)/∂φ`
    grad_phi_tilde: CvParams,
}

/// Ascent direction `ĝ` for a gumbel-mode rollout at temperature `exp(log_tau)`.
fn relax_ascent(
    cond: &Conditioned<'_>,
    cv: &CvParams,
    roll: &Rollout,
    f: f64,
    reference: &[TokenId],
    log_tau: f64,
) -> Result<(PolicyGradient, Vec<StepTerms>)> {
    let tau = log_tau.exp();
    let len = roll.tokens.len();
    let mut zs = Vec::with_capacity(len);
    let mut zts = Vec::with_capacity(len);
    for s in &roll.relaxed {
        let cache = s.cache.as_ref().ok_or(Error::MissingCache)?;
        zs.push(softmax_scaled(&cache.perturbed, tau));
        zts.push(softmax_scaled(&cache.perturbed_tilde, tau));
    }
    let mut ghat = cond.params().zeros_like();
    let mut terms = Vec::with_capacity(len);
    for t in 0..len {
        let step = &roll.steps[t];
        let b = roll.tokens[t] as usize;
        let cache = roll.relaxed[t].cache.as_ref().ok_or(Error::MissingCache)?;
        let mut prefix: Vec<&[f64]> = zs[..=t].iter().map(Vec::as_slice).collect();
        let (_, cache_z) = cv_forward(cv, &prefix, reference, len)?;
        prefix[t] = &zts[t];
        let (c_tilde, cache_z_tilde) = cv_forward(cv, &prefix, reference, len)?;
        let (_, gz) = cv_backward(cv, &cache_z, 1.0)?;
        let (grad_phi_tilde, gzt) = cv_backward(cv, &cache_z_tilde, 1.0)?;
        let sensitivity = conditional_log_prob_sensitivity(&cache.log_probs, b, &cache.v);

        let path = softmax_vjp(&zs[t], &gz[t]);
        let path_tilde = softmax_vjp(&zts[t], &gzt[t]);
        let dlogp: Vec<f64> =
            path.iter().zip(&path_tilde).zip(&sensitivity).map(|((a, bt), s)| (a - bt * s) / tau).collect();
        let total: f64 = dlogp.iter().sum();
        let mut dlogits = score_dlogits(&step.probs, b, f - c_tilde);
        for ((d, g), p) in dlogits.iter_mut().zip(&dlogp).zip(&step.probs) {
            *d += g - p * total;
        }
        cond.backward(step, &dlogits, &mut ghat);
        terms.push(StepTerms {
            z: zs[t].clone(),
            z_tilde: zts[t].clone(),
            sensitivity,
            cache_z,
            cache_z_tilde,
            grad_phi_tilde,
        });
    }
    Ok((ghat, terms))
}

/// Exact `∂‖ĝ‖²/∂φ` for a fixed sample.
fn variance_grad_phi(
    cond: &Conditioned<'_>,
    cv: &CvParams,
    roll: &Rollout,
    ghat: &PolicyGradient,
    terms: &[StepTerms],
    tau: f64,
) -> Result<CvParams> {
    let mut out = cv.zeros_like();
    for (t, term) in terms.iter().enumerate() {
        let step = &roll.steps[t];
        let b = roll.tokens[t] as usize;
        let dl = cond.jvp(step, ghat);
        let mean: f64 = dl.iter().zip(&step.probs).map(|(d, p)| d * p).sum();
        let along_score = dl[b] - mean;
        let dlogp: Vec<f64> = dl.iter().map(|d| (d - mean) / tau).collect();
        let u = softmax_vjp(&term.z, &dlogp);
        let scaled: Vec<f64> = dlogp.iter().zip(&term.sensitivity).map(|(d, s)| d * s).collect();
        let u_tilde = softmax_vjp(&term.z_tilde, &scaled);

        let mut dirs: Vec<Option<&[f64]>> = vec![None; t + 1];
        dirs[t] = Some(&u);
        let (_, g_z) = cv_directional(cv, &term.cache_z, &dirs)?;
        dirs[t] = Some(&u_tilde);
        let (_, g_zt) = cv_directional(cv, &term.cache_z_tilde, &dirs)?;
        out.add_scaled(-2.0 * along_score, &term.grad_phi_tilde)?;
        out.add_scaled(2.0, &g_z)?;
        out.add_scaled(-2.0, &g_zt)?;
    }
    Ok(out)
}

/// One relaxed control-variate estimate.
///
/// With `variance_grads` the estimate also carries `∂‖ĝ‖²/∂φ` (exact) and
/// `∂‖ĝ‖²/∂ log τ` (central difference at fixed noise).
pub fn relax_estimate<R: rand::Rng + ?Sized>(
    policy: &PolicyParams,
    cv: &CvParams,
    log_tau: f64,
    task: &Task<'_>,
    variance_grads: bool,
    rng: &mut R,
) -> Result<GradientEstimate> {
    if cv.vocab() != policy.vocab_size() {
        return Err(Error::ShapeMismatch(format!(
            "control variate expects {} tokens, policy has {}",
            cv.vocab(),
            policy.vocab_size()
        )));
    }
    let roll =
        sample_sequence(policy, task.bag, SampleMode::Gumbel, task.decode, task.forcing, task.reference, log_tau, rng)?;
    let reward = task.reward.score(roll.content(task.decode.eos))?;
    let cond = policy.condition(task.bag)?;
    let f = reward.combined;
    let (ghat, terms) = relax_ascent(&cond, cv, &roll, f, task.reference, log_tau)?;
    let (grad_phi, grad_log_tau) = if variance_grads {
        let g_phi = variance_grad_phi(&cond, cv, &roll, &ghat, &terms, log_tau.exp())?;
        let (up, _) = relax_ascent(&cond, cv, &roll, f, task.reference, log_tau + LOG_TAU_STEP)?;
        let (down, _) = relax_ascent(&cond, cv, &roll, f, task.reference, log_tau - LOG_TAU_STEP)?;
        let d = (up.dot_with(&up) - down.dot_with(&down)) / (2.0 * LOG_TAU_STEP);
        (Some(g_phi), Some(d))
    } else {
        (None, None)
    };
    let mut grad_theta = ghat;
    for s in grad_theta.slices_mut() {
        for v in s {
            *v = -*v;
        }
    }
    Ok(GradientEstimate { grad_theta, grad_phi, grad_log_tau, reward, tokens: roll.tokens, seed: None })
}

/// `E[f]` and `∇_θ E[f]` by enumerating every output of length `max_len`.
#[derive(Clone, Debug)]
pub struct ExactGradient {
    pub expected_reward: f64,
    pub reward_grad: PolicyGradient,
    pub sequences: usize,
    /// Total probability of the enumerated sequences (1 up to rounding).
    pub total_mass: f64,
}

impl ExactGradient {
    /// The exact gradient of the surrogate loss, i.e. what estimators target.
    pub fn loss_grad(&self) -> Vec<f64> {
        self.reward_grad.flatten().into_iter().map(|g| -g).collect()
    }
}

fn decode_index(mut idx: u128, vocab: u128, len: usize) -> Vec<TokenId> {
    let mut y = vec![0; len];
    for slot in y.iter_mut().rev() {
        *slot = (idx % vocab) as TokenId;
        idx /= vocab;
    }
    y
}

/// Exact gradient of the expected reward.
///
/// Decoding must have a fixed length (`decode.eos == None`); the number of
/// sequences `V^max_len` must stay within [`ENUMERATION_BUDGET`].
pub fn exact_gradient_oracle(policy: &PolicyParams, task: &Task<'_>) -> Result<ExactGradient> {
    if task.decode.eos.is_some() {
        return Err(Error::Config("the exact oracle enumerates fixed-length outputs; disable EOS".into()));
    }
    let vocab = policy.vocab_size() as u128;
    let len = task.decode.max_len;
    if len == 0 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    let required = u32::try_from(len).ok().and_then(|l| vocab.checked_pow(l)).unwrap_or(u128::MAX);
    if required > ENUMERATION_BUDGET {
        return Err(Error::EnumerationBudget { required, budget: ENUMERATION_BUDGET });
    }
    const CHUNK: u128 = 2048;
    let chunks = required.div_ceil(CHUNK);
    let partials: Vec<Result<(f64, f64, PolicyGradient)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut grad = policy.zeros_like();
            let (mut value, mut mass) = (0.0, 0.0);
            for idx in c * CHUNK..((c + 1) * CHUNK).min(required) {
                let y = decode_index(idx, vocab, len);
                let contexts = contexts_for(&y, task.decode.start, task.forcing, task.reference);
                let prob = log_prob_with_contexts(policy, &y, &contexts, task.bag)?.exp();
                let r = task.reward.score(&y)?.combined;
                mass += prob;
                value += prob * r;
                if prob * r != 0.0 {
                    accumulate_log_prob_grad(policy, &y, &contexts, task.bag, prob * r, &mut grad)?;
                }
            }
            Ok((value, mass, grad))
        })
        .collect();
    let mut reward_grad = policy.zeros_like();
    let (mut expected_reward, mut total_mass) = (0.0, 0.0);
    for part in partials {
        let (v, m, g) = part?;
        expected_reward += v;
        total_mass += m;
        reward_grad.add_scaled(1.0, &g)?;
    }
    Ok(ExactGradient { expected_reward, reward_grad, sequences: required as usize, total_mass })
}

/// Streaming per-coordinate mean and variance.
#[derive(Clone, Debug, PartialEq)]
pub struct Welford {
    pub n: usize,
    pub mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    pub fn new(dim: usize) -> Self {
        Welford { n: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.n += other.n;
    }

    /// Unbiased sample variance (zero with fewer than two samples).
    pub fn variance(&self) -> Vec<f64> {
        if self.n < 2 {
            return vec![0.0; self.m2.len()];
        }
        self.m2.iter().map(|s| s / (self.n - 1) as f64).collect()
    }
}

/// Per-coordinate summary of many independent estimates.
#[derive(Clone, Debug)]
pub struct EstimatorStats {
    pub kind: EstimatorKind,
    pub n: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Exact loss gradient, when an oracle was supplied.
    pub oracle: Option<Vec<f64>>,
    pub labels: Vec<String>,
    pub mean_reward: f64,
    pub mean_squared_norm: f64,
}

impl EstimatorStats {
    pub fn standard_error(&self, i: usize) -> f64 {
        (self.variance[i] / self.n as f64).sqrt()
    }

    pub fn bias(&self) -> Option<Vec<f64>> {
        self.oracle.as_ref().map(|o| self.mean.iter().zip(o).map(|(m, e)| m - e).collect())
    }

    /// `(mean - oracle) / standard_error` per coordinate; coordinates with
    /// zero variance get 0 when the mean matches exactly and ∞ otherwise.
    pub fn z_scores(&self) -> Option<Vec<f64>> {
        let bias = self.bias()?;
        Some(
            bias.iter()
                .enumerate()
                .map(|(i, b)| {
                    let se = self.standard_error(i);
                    if se > 0.0 {
                        b / se
                    } else if b.abs() < 1e-12 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                })
                .collect(),
        )
    }
}

/// Statistics over seeds `rng_base .. rng_base + n`.
pub fn estimator_statistics(
    estimator: Estimator<'_>,
    policy: &PolicyParams,
    task: &Task<'_>,
    n: usize,
    rng_base: u64,
    oracle: Option<&ExactGradient>,
) -> Result<EstimatorStats> {
    let seeds: Vec<u64> = (0..n as u64).map(|i| rng_base.wrapping_add(i)).collect();
    estimator_statistics_with_seeds(estimator, policy, task, &seeds, oracle)
}

/// Statistics over explicit, pairwise distinct seeds. The result does not
/// depend on the number of worker threads.
pub fn estimator_statistics_with_seeds(
    estimator: Estimator<'_>,
    policy: &PolicyParams,
    task: &Task<'_>,
    seeds: &[u64],
    oracle: Option<&ExactGradient>,
) -> Result<EstimatorStats> {
    if seeds.len() < 2 {
        return Err(Error::TooFewSamples { required: 2, got: seeds.len() });
    }
    let mut seen = HashSet::with_capacity(seeds.len());
    if !seeds.iter().all(|s| seen.insert(*s)) {
        return Err(Error::SeedsNotDistinct);
    }
    let dim = policy.num_params();
    let partials: Vec<Result<(Welford, f64, f64)>> = seeds
        .par_chunks(256)
        .map(|chunk| {
            let mut acc = Welford::new(dim);
            let (mut reward, mut norm) = (0.0, 0.0);
            for &seed in chunk {
                let est = estimator.estimate(policy, task, seed)?;
                reward += est.reward.combined;
                norm += est.squared_norm();
                acc.push(&est.grad_theta.flatten());
            }
            Ok((acc, reward, norm))
        })
        .collect();
    let mut acc = Welford::new(dim);
    let (mut reward, mut norm) = (0.0, 0.0);
    for part in partials {
        let (w, r, q) = part?;
        acc.merge(&w);
        reward += r;
        norm += q;
    }
    let n = seeds.len();
    Ok(EstimatorStats {
        kind: estimator.kind(),
        n,
        variance: acc.variance(),
        mean: acc.mean,
        oracle: oracle.map(ExactGradient::loss_grad),
        labels: policy.coordinate_labels(),
        mean_reward: reward / n as f64,
        mean_squared_norm: norm / n as f64,
    })
}

/// Train the control variate and the temperature to shrink `‖ĝ‖²` with the
/// policy held fixed. Returns the per-step `‖ĝ‖²` trace.
#[allow(clippy::too_many_arguments)]
pub fn fit_control_variate(
    policy: &PolicyParams,
    cv: &mut CvParams,
    temperature: &mut TemperatureParam,
    task: &Task<'_>,
    steps: usize,
    lr: f64,
    seed_base: u64,
) -> Result<Vec<f64>> {
    let cfg = AdamConfig::with_lr(lr);
    let mut cv_state = AdamState::new(cv.num_params());
    let mut tau_state = AdamState::new(1);
    let mut trace = Vec::with_capacity(steps);
    for i in 0..steps {
        let mut rng = ChaCha8Rng::seed_from_u64(seed_base.wrapping_add(i as u64));
        let est = relax_estimate(policy, cv, temperature.log_tau, task, true, &mut rng)?;
        trace.push(est.squared_norm());
        if let Some(g) = &est.grad_phi {
            if g.is_finite() {
                adam_step(cv, g, &mut cv_state, &cfg)?;
            }
        }
        if let Some(g) = est.grad_log_tau.filter(|g| g.is_finite()) {
            adam_step(temperature, &TemperatureParam::new(g), &mut tau_state, &cfg)?;
        }
    }
    Ok(trace)
}
