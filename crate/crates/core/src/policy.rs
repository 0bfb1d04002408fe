//! A miniature autoregressive conditional policy.
//!
//! Each step sees only the previous token and a normalised bag of words of
//! the input:
//!
//! ```text
//! hidden = tanh(W_e · E[prev] + W_x · bag + b)
//! logits = U · hidden + c
//! ```
//!
//! This keeps the autoregressive factorisation while staying small enough
//! for exact enumeration of every output sequence.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gumbel::{self, GumbelSample};
use crate::params::{Block, ParamStore};
use crate::vocab::TokenId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyShape {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
}

impl PolicyShape {
    /// Corpus-mode defaults.
    pub fn desk(vocab: usize) -> Self {
        PolicyShape { vocab, embed: 16, hidden: 32 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    /// `V × d`
    pub embedding: Block,
    /// `h × V`, applied to the input bag
    pub input_proj: Block,
    /// `h × d`, applied to the previous token's embedding
    pub context_proj: Block,
    /// `h × 1`
    pub hidden_bias: Block,
    /// `V × h`
    pub output_proj: Block,
    /// `V × 1`
    pub output_bias: Block,
    /// Tokens the policy never emits (their logits are `-∞`).
    #[serde(default)]
    pub banned: Vec<TokenId>,
}

/// Gradients share the parameter layout.
pub type PolicyGradient = PolicyParams;

impl ParamStore for PolicyParams {
    fn names(&self) -> Vec<&'static str> {
        vec!["embedding", "input_proj", "context_proj", "hidden_bias", "output_proj", "output_bias"]
    }

    fn slices(&self) -> Vec<&[f64]> {
        vec![
            &self.embedding.data,
            &self.input_proj.data,
            &self.context_proj.data,
            &self.hidden_bias.data,
            &self.output_proj.data,
            &self.output_bias.data,
        ]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.embedding.data,
            &mut self.input_proj.data,
            &mut self.context_proj.data,
            &mut self.hidden_bias.data,
            &mut self.output_proj.data,
            &mut self.output_bias.data,
        ]
    }

    fn coordinate_labels(&self) -> Vec<String> {
        let blocks = [
            ("embedding", &self.embedding),
            ("input_proj", &self.input_proj),
            ("context_proj", &self.context_proj),
            ("hidden_bias", &self.hidden_bias),
            ("output_proj", &self.output_proj),
            ("output_bias", &self.output_bias),
        ];
        let mut out = Vec::with_capacity(self.num_params());
        for (name, b) in blocks {
            for r in 0..b.rows {
                for c in 0..b.cols {
                    out.push(format!("{name}[{r};{c}]"));
                }
            }
        }
        out
    }
}

impl PolicyParams {
    pub fn zeros(shape: PolicyShape) -> Self {
        let PolicyShape { vocab, embed, hidden } = shape;
        PolicyParams {
            embedding: Block::zeros(vocab, embed),
            input_proj: Block::zeros(hidden, vocab),
            context_proj: Block::zeros(hidden, embed),
            hidden_bias: Block::zeros(hidden, 1),
            output_proj: Block::zeros(vocab, hidden),
            output_bias: Block::zeros(vocab, 1),
            banned: Vec::new(),
        }
    }

    /// Uniform initialisation in `±scale / sqrt(fan_in)` (embeddings use `±scale`).
    pub fn random<R: Rng + ?Sized>(shape: PolicyShape, scale: f64, rng: &mut R) -> Self {
        let PolicyShape { vocab, embed, hidden } = shape;
        let mut uni = |rows, cols, fan_in: usize| {
            let a = scale / (fan_in as f64).sqrt();
            Block::from_fn(rows, cols, |_, _| rng.random_range(-a..=a))
        };
        PolicyParams {
            embedding: uni(vocab, embed, 1),
            input_proj: uni(hidden, vocab, vocab),
            context_proj: uni(hidden, embed, embed),
            hidden_bias: uni(hidden, 1, embed),
            output_proj: uni(vocab, hidden, hidden),
            output_bias: uni(vocab, 1, hidden),
            banned: Vec::new(),
        }
    }

    pub fn with_banned(mut self, tokens: &[TokenId]) -> Result<Self> {
        for &t in tokens {
            self.check_token(t)?;
        }
        self.banned = tokens.to_vec();
        self.banned.sort_unstable();
        self.banned.dedup();
        Ok(self)
    }

    pub fn shape(&self) -> PolicyShape {
        PolicyShape { vocab: self.embedding.rows, embed: self.embedding.cols, hidden: self.hidden_bias.rows }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.shape())
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows
    }

    fn check_token(&self, token: TokenId) -> Result<()> {
        if (token as usize) < self.vocab_size() {
            Ok(())
        } else {
            Err(Error::InvalidToken { token, vocab: self.vocab_size() })
        }
    }

    /// Bind the policy to one input; the bag projection is computed once.
    pub fn condition<'a>(&'a self, bag: &'a InputBag) -> Result<Conditioned<'a>> {
        if bag.weights.len() != self.vocab_size() {
            return Err(Error::ShapeMismatch(format!(
                "input bag has {} entries, vocabulary has {}",
                bag.weights.len(),
                self.vocab_size()
            )));
        }
        let mut base = self.hidden_bias.data.clone();
        self.input_proj.matvec_acc(&bag.weights, &mut base);
        Ok(Conditioned { params: self, bag, base })
    }
}

/// Input documents as a normalised bag of token counts.
#[derive(Clone, Debug, PartialEq)]
pub struct InputBag {
    pub weights: Vec<f64>,
}

impl InputBag {
    /// Counts are divided by the largest count, so the most frequent word
    /// has weight 1; an all-zero bag stays zero.
    pub fn from_counts(counts: &[f64]) -> Self {
        let top = counts.iter().cloned().fold(0.0, f64::max);
        let weights = if top > 0.0 { counts.iter().map(|c| c / top).collect() } else { vec![0.0; counts.len()] };
        InputBag { weights }
    }

    pub fn from_tokens(tokens: &[TokenId], vocab: usize) -> Result<Self> {
        let mut counts = vec![0.0; vocab];
        for &t in tokens {
            let slot = counts.get_mut(t as usize).ok_or(Error::InvalidToken { token: t, vocab })?;
            *slot += 1.0;
        }
        Ok(Self::from_counts(&counts))
    }

    pub fn empty(vocab: usize) -> Self {
        InputBag { weights: vec![0.0; vocab] }
    }
}

/// Forward values of one decoding step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepCache {
    pub prev: TokenId,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub probs: Vec<f64>,
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// A policy bound to one input bag.
pub struct Conditioned<'a> {
    params: &'a PolicyParams,
    bag: &'a InputBag,
    /// `W_x · bag + b`
    base: Vec<f64>,
}

impl<'a> Conditioned<'a> {
    pub fn params(&self) -> &PolicyParams {
        self.params
    }

    pub fn step(&self, prev: TokenId) -> Result<StepCache> {
        let p = self.params;
        p.check_token(prev)?;
        let mut pre = self.base.clone();
        p.context_proj.matvec_acc(p.embedding.row(prev as usize), &mut pre);
        let hidden: Vec<f64> = pre.iter().map(|a| a.tanh()).collect();
        let mut logits = p.output_bias.data.clone();
        p.output_proj.matvec_acc(&hidden, &mut logits);
        for &b in &p.banned {
            logits[b as usize] = f64::NEG_INFINITY;
        }
        let log_probs = log_softmax(&logits);
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        Ok(StepCache { prev, hidden, logits, log_probs, probs })
    }

    /// Accumulate `∂/∂θ (dlogits · logits)` into `grad`.
    pub fn backward(&self, cache: &StepCache, dlogits: &[f64], grad: &mut PolicyGradient) {
        let p = self.params;
        let masked;
        let dlogits = if p.banned.is_empty() {
            dlogits
        } else {
            let mut d = dlogits.to_vec();
            for &b in &p.banned {
                d[b as usize] = 0.0;
            }
            masked = d;
            &masked
        };
        grad.output_proj.outer_acc(dlogits, &cache.hidden);
        for (g, d) in grad.output_bias.data.iter_mut().zip(dlogits) {
            *g += d;
        }
        let mut dh = vec![0.0; cache.hidden.len()];
        p.output_proj.matvec_t_acc(dlogits, &mut dh);
        let da: Vec<f64> = dh.iter().zip(&cache.hidden).map(|(g, h)| g * (1.0 - h * h)).collect();
        let prev = cache.prev as usize;
        grad.context_proj.outer_acc(&da, p.embedding.row(prev));
        p.context_proj.matvec_t_acc(&da, grad.embedding.row_mut(prev));
        grad.input_proj.outer_acc(&da, &self.bag.weights);
        for (g, d) in grad.hidden_bias.data.iter_mut().zip(&da) {
            *g += d;
        }
    }

    /// Directional derivative of the step's logits along `dir` in parameter space.
    pub fn jvp(&self, cache: &StepCache, dir: &PolicyParams) -> Vec<f64> {
        let p = self.params;
        let prev = cache.prev as usize;
        let mut da = dir.hidden_bias.data.clone();
        dir.input_proj.matvec_acc(&self.bag.weights, &mut da);
        dir.context_proj.matvec_acc(p.embedding.row(prev), &mut da);
        p.context_proj.matvec_acc(dir.embedding.row(prev), &mut da);
        let dh: Vec<f64> = da.iter().zip(&cache.hidden).map(|(d, h)| d * (1.0 - h * h)).collect();
        let mut dl = dir.output_bias.data.clone();
        dir.output_proj.matvec_acc(&cache.hidden, &mut dl);
        p.output_proj.matvec_acc(&dh, &mut dl);
        for &b in &p.banned {
            dl[b as usize] = 0.0;
        }
        dl
    }
}

/// Logits for one step.
pub fn logits_at(params: &PolicyParams, prev: TokenId, bag: &InputBag) -> Result<Vec<f64>> {
    Ok(params.condition(bag)?.step(prev)?.logits)
}

/// Whether each step conditions on the model's own previous token or the
/// reference's.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Forcing {
    #[default]
    Student,
    Teacher,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeSpec {
    pub start: TokenId,
    /// Stops decoding when emitted; `None` forces exactly `max_len` steps.
    pub eos: Option<TokenId>,
    pub max_len: usize,
}

/// Previous-token contexts for scoring `y`.
///
/// Under teacher forcing, positions past the end of the reference reuse its
/// last token.
pub fn contexts_for(y: &[TokenId], start: TokenId, forcing: Forcing, reference: &[TokenId]) -> Vec<TokenId> {
    (0..y.len())
        .map(|t| match (t, forcing) {
            (0, _) => start,
            (_, Forcing::Student) => y[t - 1],
            (_, Forcing::Teacher) => reference.get(t - 1).or(reference.last()).copied().unwrap_or(start),
        })
        .collect()
}

/// `Σ_t log p(y_t | context_t, x)` for explicit contexts.
pub fn log_prob_with_contexts(
    params: &PolicyParams,
    y: &[TokenId],
    contexts: &[TokenId],
    bag: &InputBag,
) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::EmptySequence);
    }
    if y.len() != contexts.len() {
        return Err(Error::LengthMismatch { left: y.len(), right: contexts.len() });
    }
    let cond = params.condition(bag)?;
    let mut total = 0.0;
    for (&tok, &prev) in y.iter().zip(contexts) {
        params.check_token(tok)?;
        total += cond.step(prev)?.log_probs[tok as usize];
    }
    Ok(total)
}

/// Teacher-forced log-probability of `y` (each step conditions on `y`'s own prefix).
pub fn sequence_log_prob(params: &PolicyParams, y: &[TokenId], bag: &InputBag, start: TokenId) -> Result<f64> {
    log_prob_with_contexts(params, y, &contexts_for(y, start, Forcing::Student, &[]), bag)
}

/// Accumulate `weight · ∂/∂θ log p(y | contexts)` into `grad`; returns the log-probability.
pub fn accumulate_log_prob_grad(
    params: &PolicyParams,
    y: &[TokenId],
    contexts: &[TokenId],
    bag: &InputBag,
    weight: f64,
    grad: &mut PolicyGradient,
) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::EmptySequence);
    }
    if y.len() != contexts.len() {
        return Err(Error::LengthMismatch { left: y.len(), right: contexts.len() });
    }
    let cond = params.condition(bag)?;
    let mut total = 0.0;
    for (&tok, &prev) in y.iter().zip(contexts) {
        params.check_token(tok)?;
        let step = cond.step(prev)?;
        total += step.log_probs[tok as usize];
        let dlogits: Vec<f64> =
            step.probs.iter().enumerate().map(|(k, p)| weight * ((k == tok as usize) as u8 as f64 - p)).collect();
        cond.backward(&step, &dlogits, grad);
    }
    Ok(total)
}

/// Negative log-likelihood of `y` and its gradient.
pub fn nll_grad(params: &PolicyParams, y: &[TokenId], bag: &InputBag, start: TokenId) -> Result<(f64, PolicyGradient)> {
    let mut grad = params.zeros_like();
    let contexts = contexts_for(y, start, Forcing::Student, &[]);
    let lp = accumulate_log_prob_grad(params, y, &contexts, bag, -1.0, &mut grad)?;
    Ok((-lp, grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    HardCategorical,
    Gumbel,
}

/// A sampled output with everything needed to differentiate it.
#[derive(Clone, Debug)]
pub struct Rollout {
    /// Sampled tokens, including a trailing EOS if one was drawn.
    pub tokens: Vec<TokenId>,
    pub contexts: Vec<TokenId>,
    pub steps: Vec<StepCache>,
    /// One entry per step in gumbel mode, empty otherwise.
    pub relaxed: Vec<GumbelSample>,
}

impl Rollout {
    /// Tokens before the first EOS.
    pub fn content(&self, eos: Option<TokenId>) -> &[TokenId] {
        match eos.and_then(|e| self.tokens.iter().position(|&t| t == e)) {
            Some(end) => &self.tokens[..end],
            None => &self.tokens,
        }
    }
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> TokenId {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k as TokenId;
        }
    }
    // rounding left u above the accumulated mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0) as TokenId
}

/// Autoregressive sampling. Gumbel mode records `z`, `z_tilde` per step at
/// temperature `exp(log_tau)`; the hard token is the Gumbel argmax, which
/// does not depend on the temperature.
#[allow(clippy::too_many_arguments)]
pub fn sample_sequence<R: Rng + ?Sized>(
    params: &PolicyParams,
    bag: &InputBag,
    mode: SampleMode,
    decode: DecodeSpec,
    forcing: Forcing,
    reference: &[TokenId],
    log_tau: f64,
    rng: &mut R,
) -> Result<Rollout> {
    if decode.max_len == 0 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    let cond = params.condition(bag)?;
    let mut out = Rollout { tokens: Vec::new(), contexts: Vec::new(), steps: Vec::new(), relaxed: Vec::new() };
    for t in 0..decode.max_len {
        let prev = match (t, forcing) {
            (0, _) => decode.start,
            (_, Forcing::Student) => out.tokens[t - 1],
            (_, Forcing::Teacher) => reference.get(t - 1).or(reference.last()).copied().unwrap_or(decode.start),
        };
        let step = cond.step(prev)?;
        let token = match mode {
            SampleMode::HardCategorical => sample_categorical(&step.probs, rng),
            SampleMode::Gumbel => {
                let s = gumbel::sample_relaxed(&step.log_probs, log_tau, rng);
                let tok = s.hard_token;
                out.relaxed.push(s);
                tok
            }
        };
        out.tokens.push(token);
        out.contexts.push(prev);
        out.steps.push(step);
        if decode.eos == Some(token) {
            break;
        }
    }
    Ok(out)
}

/// Argmax decoding (beam width 1); ties go to the lowest token id.
pub fn greedy_decode(params: &PolicyParams, bag: &InputBag, decode: DecodeSpec) -> Result<Vec<TokenId>> {
    if decode.max_len == 0 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    let cond = params.condition(bag)?;
    let mut out = Vec::new();
    let mut prev = decode.start;
    for _ in 0..decode.max_len {
        let step = cond.step(prev)?;
        let tok = gumbel::argmax(&step.logits) as TokenId;
        out.push(tok);
        if decode.eos == Some(tok) {
            break;
        }
        prev = tok;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(seed: u64) -> (PolicyParams, InputBag) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = PolicyParams::random(PolicyShape { vocab: 4, embed: 3, hidden: 5 }, 1.5, &mut rng);
        let bag = InputBag::from_tokens(&[0, 1, 1, 3], 4).unwrap();
        (p, bag)
    }

    #[test]
    fn banned_tokens_are_never_emitted() {
        let (p, bag) = small(4);
        let p = p.with_banned(&[1, 2]).unwrap();
        let step = p.condition(&bag).unwrap().step(0).unwrap();
        assert_eq!(step.probs[1], 0.0);
        assert!((step.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let decode = DecodeSpec { start: 0, eos: None, max_len: 6 };
        for mode in [SampleMode::HardCategorical, SampleMode::Gumbel] {
            for _ in 0..200 {
                let r = sample_sequence(&p, &bag, mode, decode, Forcing::Student, &[], 0.5, &mut rng).unwrap();
                assert!(r.tokens.iter().all(|t| *t == 0 || *t == 3));
            }
        }
        assert!(p.clone().with_banned(&[7]).is_err());
    }

    #[test]
    fn zero_params_are_uniform() {
        let p = PolicyParams::zeros(PolicyShape { vocab: 5, embed: 2, hidden: 3 });
        let bag = InputBag::empty(5);
        let step = p.condition(&bag).unwrap().step(0).unwrap();
        for q in step.probs {
            assert!((q - 0.2).abs() < 1e-15);
        }
        let lp = sequence_log_prob(
            &PolicyParams::zeros(PolicyShape { vocab: 2, embed: 2, hidden: 2 }),
            &[0, 1, 1],
            &InputBag::empty(2),
            0,
        )
        .unwrap();
        assert!((lp - 3.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn invalid_tokens_are_rejected() {
        let (p, bag) = small(1);
        assert!(matches!(logits_at(&p, 9, &bag), Err(Error::InvalidToken { .. })));
        assert!(InputBag::from_tokens(&[7], 4).is_err());
        assert!(sequence_log_prob(&p, &[], &bag, 0).is_err());
    }

    #[test]
    fn zero_bag_means_logits_depend_on_prev_only() {
        let (mut p, _) = small(2);
        let bag = InputBag::from_counts(&[0.0; 4]);
        assert_eq!(bag.weights, vec![0.0; 4]);
        let before = logits_at(&p, 1, &bag).unwrap();
        for w in &mut p.input_proj.data {
            *w += 3.0;
        }
        assert_eq!(before, logits_at(&p, 1, &bag).unwrap());
    }

    #[test]
    fn softmax_sums_to_one() {
        let (p, bag) = small(3);
        let cond = p.condition(&bag).unwrap();
        for prev in 0..4 {
            let s = cond.step(prev).unwrap();
            assert!((s.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn output_bias_gradient_is_p_minus_onehot() {
        let p = PolicyParams::zeros(PolicyShape { vocab: 2, embed: 2, hidden: 2 });
        let (_, g) = nll_grad(&p, &[1], &InputBag::empty(2), 0).unwrap();
        assert_eq!(g.output_bias.data, vec![0.5, -0.5]);
    }

    #[test]
    fn appending_lowers_log_prob() {
        let (p, bag) = small(4);
        let a = sequence_log_prob(&p, &[1, 2], &bag, 0).unwrap();
        let b = sequence_log_prob(&p, &[1, 2, 0], &bag, 0).unwrap();
        assert!(b < a);
    }

    #[test]
    fn duplicated_pair_doubles_gradient() {
        let (p, bag) = small(5);
        let y = [2, 1, 3];
        let ctx = contexts_for(&y, 0, Forcing::Student, &[]);
        let mut once = p.zeros_like();
        accumulate_log_prob_grad(&p, &y, &ctx, &bag, -1.0, &mut once).unwrap();
        let mut twice = p.zeros_like();
        accumulate_log_prob_grad(&p, &y, &ctx, &bag, -1.0, &mut twice).unwrap();
        accumulate_log_prob_grad(&p, &y, &ctx, &bag, -1.0, &mut twice).unwrap();
        for (a, b) in once.flatten().iter().zip(twice.flatten()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn nll_gradient_matches_finite_differences() {
        let (p, bag) = small(6);
        let y = [3, 0, 2, 2];
        let (_, g) = nll_grad(&p, &y, &bag, 1).unwrap();
        let h = 1e-5;
        for i in 0..p.num_params() {
            let mut a = p.clone();
            a.set_flat(i, p.get_flat(i) + h);
            let mut b = p.clone();
            b.set_flat(i, p.get_flat(i) - h);
            let fd = (-sequence_log_prob(&a, &y, &bag, 1).unwrap() + sequence_log_prob(&b, &y, &bag, 1).unwrap())
                / (2.0 * h);
            let an = g.get_flat(i);
            let err = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
            assert!(err < 1e-4, "coordinate {i}: {an} vs {fd}");
        }
    }

    #[test]
    fn jvp_matches_finite_differences() {
        let (p, bag) = small(7);
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        let dir = PolicyParams::random(p.shape(), 1.0, &mut rng);
        let cond = p.condition(&bag).unwrap();
        let step = cond.step(2).unwrap();
        let jvp = cond.jvp(&step, &dir);
        let h = 1e-6;
        let mut a = p.clone();
        a.add_scaled(h, &dir).unwrap();
        let mut b = p.clone();
        b.add_scaled(-h, &dir).unwrap();
        let la = logits_at(&a, 2, &bag).unwrap();
        let lb = logits_at(&b, 2, &bag).unwrap();
        for k in 0..4 {
            let fd = (la[k] - lb[k]) / (2.0 * h);
            assert!((fd - jvp[k]).abs() < 1e-7 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn sampling_is_reproducible_and_stops_at_eos() {
        let (p, bag) = small(8);
        let decode = DecodeSpec { start: 0, eos: Some(3), max_len: 12 };
        for mode in [SampleMode::HardCategorical, SampleMode::Gumbel] {
            let a =
                sample_sequence(&p, &bag, mode, decode, Forcing::Student, &[], 0.5, &mut ChaCha8Rng::seed_from_u64(11))
                    .unwrap();
            let b =
                sample_sequence(&p, &bag, mode, decode, Forcing::Student, &[], 0.5, &mut ChaCha8Rng::seed_from_u64(11))
                    .unwrap();
            assert_eq!(a.tokens, b.tokens);
            assert!(a.tokens.len() <= 12);
            if let Some(pos) = a.tokens.iter().position(|&t| t == 3) {
                assert_eq!(pos, a.tokens.len() - 1);
            }
            assert_eq!(a.relaxed.len(), if mode == SampleMode::Gumbel { a.tokens.len() } else { 0 });
        }
    }

    #[test]
    fn temperature_never_changes_gumbel_tokens() {
        let (p, bag) = small(9);
        let decode = DecodeSpec { start: 0, eos: None, max_len: 6 };
        let cold = sample_sequence(
            &p,
            &bag,
            SampleMode::Gumbel,
            decode,
            Forcing::Student,
            &[],
            -2.0,
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        let hot = sample_sequence(
            &p,
            &bag,
            SampleMode::Gumbel,
            decode,
            Forcing::Student,
            &[],
            2.0,
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        assert_eq!(cold.tokens, hot.tokens);
    }

    #[test]
    fn greedy_ties_pick_lowest_id() {
        let p = PolicyParams::zeros(PolicyShape { vocab: 3, embed: 2, hidden: 2 });
        let y = greedy_decode(&p, &InputBag::empty(3), DecodeSpec { start: 2, eos: None, max_len: 4 }).unwrap();
        assert_eq!(y, vec![0, 0, 0, 0]);
    }

    #[test]
    fn teacher_contexts_follow_reference() {
        assert_eq!(contexts_for(&[5, 6, 7, 8], 2, Forcing::Teacher, &[9, 10]), vec![2, 9, 10, 10]);
        assert_eq!(contexts_for(&[5, 6, 7], 2, Forcing::Student, &[9]), vec![2, 5, 6]);
    }
}
