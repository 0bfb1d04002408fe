//! The learned control variate: two ReLU layers and a sigmoid per position,
//! averaged over the true (unpadded) length.
//!
//! Position `t` sees `[z_t ∥ onehot(reference_t)]`, so the input width is
//! twice the vocabulary.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{dot, Block, ParamStore};
use crate::vocab::TokenId;

pub const DEFAULT_HIDDEN: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvParams {
    /// `h × 2V`
    pub layer1: Block,
    pub bias1: Block,
    /// `h × h`
    pub layer2: Block,
    pub bias2: Block,
    /// `1 × h`
    pub output: Block,
    pub output_bias: Block,
    /// Forces the network output to exactly 0 (and all gradients to 0).
    #[serde(skip)]
    pub zero_output: bool,
    #[serde(skip)]
    generation: u64,
}

impl ParamStore for CvParams {
    fn names(&self) -> Vec<&'static str> {
        vec!["layer1", "bias1", "layer2", "bias2", "output", "output_bias"]
    }

    fn slices(&self) -> Vec<&[f64]> {
        vec![
            &self.layer1.data,
            &self.bias1.data,
            &self.layer2.data,
            &self.bias2.data,
            &self.output.data,
            &self.output_bias.data,
        ]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.layer1.data,
            &mut self.bias1.data,
            &mut self.layer2.data,
            &mut self.bias2.data,
            &mut self.output.data,
            &mut self.output_bias.data,
        ]
    }

    fn mark_updated(&mut self) {
        self.generation += 1;
    }
}

impl CvParams {
    pub fn zeros(vocab: usize, hidden: usize) -> Self {
        CvParams {
            layer1: Block::zeros(hidden, 2 * vocab),
            bias1: Block::zeros(hidden, 1),
            layer2: Block::zeros(hidden, hidden),
            bias2: Block::zeros(hidden, 1),
            output: Block::zeros(1, hidden),
            output_bias: Block::zeros(1, 1),
            zero_output: false,
            generation: 0,
        }
    }

    /// He-style uniform initialisation, scaled by `scale`.
    pub fn random<R: Rng + ?Sized>(vocab: usize, hidden: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(vocab, hidden);
        let mut fill = |b: &mut Block, fan_in: usize| {
            let a = scale * (6.0 / fan_in as f64).sqrt();
            for w in &mut b.data {
                *w = rng.random_range(-a..=a);
            }
        };
        fill(&mut p.layer1, 2 * vocab);
        fill(&mut p.bias1, 2 * vocab);
        fill(&mut p.layer2, hidden);
        fill(&mut p.bias2, hidden);
        fill(&mut p.output, hidden);
        fill(&mut p.output_bias, hidden);
        p
    }

    /// The network that outputs exactly zero, bypassing the sigmoid.
    pub fn disabled(vocab: usize, hidden: usize) -> Self {
        CvParams { zero_output: true, ..Self::zeros(vocab, hidden) }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.vocab(), self.hidden())
    }

    pub fn vocab(&self) -> usize {
        self.layer1.cols / 2
    }

    pub fn hidden(&self) -> usize {
        self.layer1.rows
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }
}

#[derive(Clone, Debug)]
struct PositionCache {
    x: Vec<f64>,
    a1: Vec<f64>,
    h1: Vec<f64>,
    a2: Vec<f64>,
    h2: Vec<f64>,
    sig: f64,
}

/// Activations retained by [`cv_forward`].
#[derive(Clone, Debug)]
pub struct CvCache {
    generation: u64,
    zero_output: bool,
    positions: Vec<PositionCache>,
    pub value: f64,
}

impl CvCache {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn mask(upstream: &mut [f64], pre: &[f64]) {
    for (g, a) in upstream.iter_mut().zip(pre) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Score a relaxed sequence against a reference.
///
/// Positions beyond `max_len` are truncated; positions beyond the relaxed
/// sequence are padding and excluded from the mean.
pub fn cv_forward(
    params: &CvParams,
    relaxed: &[&[f64]],
    reference: &[TokenId],
    max_len: usize,
) -> Result<(f64, CvCache)> {
    let vocab = params.vocab();
    let len = relaxed.len().min(max_len);
    if len == 0 {
        return Err(Error::EmptySequence);
    }
    let mut positions = Vec::with_capacity(len);
    let mut total = 0.0;
    for (t, z) in relaxed.iter().take(len).enumerate() {
        if z.len() != vocab {
            return Err(Error::ShapeMismatch(format!(
                "relaxed sample at position {t} has {} entries, control variate expects {vocab}",
                z.len()
            )));
        }
        let mut x = Vec::with_capacity(2 * vocab);
        x.extend_from_slice(z);
        x.resize(2 * vocab, 0.0);
        if let Some(&r) = reference.get(t) {
            let slot = x
                .get_mut(vocab + r as usize)
                .filter(|_| (r as usize) < vocab)
                .ok_or(Error::InvalidToken { token: r, vocab })?;
            *slot = 1.0;
        }
        let mut a1 = params.bias1.data.clone();
        params.layer1.matvec_acc(&x, &mut a1);
        let mut h1 = a1.clone();
        relu(&mut h1);
        let mut a2 = params.bias2.data.clone();
        params.layer2.matvec_acc(&h1, &mut a2);
        let mut h2 = a2.clone();
        relu(&mut h2);
        let sig = sigmoid(dot(&params.output.data, &h2) + params.output_bias.data[0]);
        total += sig;
        positions.push(PositionCache { x, a1, h1, a2, h2, sig });
    }
    let value = if params.zero_output { 0.0 } else { total / len as f64 };
    Ok((value, CvCache { generation: params.generation, zero_output: params.zero_output, positions, value }))
}

fn check_cache(params: &CvParams, cache: &CvCache) -> Result<()> {
    if cache.generation != params.generation {
        return Err(Error::StaleCache { cache: cache.generation, params: params.generation });
    }
    Ok(())
}

/// Backpropagate `upstream · value`: gradients for the parameters and for
/// every relaxed input `z_t`.
pub fn cv_backward(params: &CvParams, cache: &CvCache, upstream: f64) -> Result<(CvParams, Vec<Vec<f64>>)> {
    check_cache(params, cache)?;
    let vocab = params.vocab();
    let mut grad = params.zeros_like();
    let mut grad_z = vec![vec![0.0; vocab]; cache.positions.len()];
    if cache.zero_output || upstream == 0.0 {
        return Ok((grad, grad_z));
    }
    let scale = upstream / cache.positions.len() as f64;
    for (pos, gz) in cache.positions.iter().zip(&mut grad_z) {
        let d_out = scale * pos.sig * (1.0 - pos.sig);
        let dx = backprop_primal(params, pos, d_out, &mut grad);
        gz.copy_from_slice(&dx[..vocab]);
    }
    Ok((grad, grad_z))
}

/// Push `d_out = ∂L/∂(pre-sigmoid output)` through one position; returns `∂L/∂x`.
fn backprop_primal(params: &CvParams, pos: &PositionCache, d_out: f64, grad: &mut CvParams) -> Vec<f64> {
    grad.output.outer_acc(&[d_out], &pos.h2);
    grad.output_bias.data[0] += d_out;
    let mut da2: Vec<f64> = params.output.data.iter().map(|w| w * d_out).collect();
    mask(&mut da2, &pos.a2);
    grad.layer2.outer_acc(&da2, &pos.h1);
    for (g, d) in grad.bias2.data.iter_mut().zip(&da2) {
        *g += d;
    }
    let mut da1 = vec![0.0; pos.h1.len()];
    params.layer2.matvec_t_acc(&da2, &mut da1);
    mask(&mut da1, &pos.a1);
    grad.layer1.outer_acc(&da1, &pos.x);
    for (g, d) in grad.bias1.data.iter_mut().zip(&da1) {
        *g += d;
    }
    let mut dx = vec![0.0; pos.x.len()];
    params.layer1.matvec_t_acc(&da1, &mut dx);
    dx
}

/// Directional derivative of the control variate along input directions
/// `directions[t]` (applied to the `z_t` part), together with its gradient
/// with respect to the parameters.
///
/// Used when the estimator's variance is minimised: the reparameterised
/// gradient terms are inner products of this form.
pub fn cv_directional(params: &CvParams, cache: &CvCache, directions: &[Option<&[f64]>]) -> Result<(f64, CvParams)> {
    check_cache(params, cache)?;
    let vocab = params.vocab();
    let mut grad = params.zeros_like();
    if cache.zero_output {
        return Ok((0.0, grad));
    }
    let k = 1.0 / cache.positions.len() as f64;
    let mut total = 0.0;
    for (pos, dir) in cache.positions.iter().zip(directions) {
        let Some(u) = dir else { continue };
        if u.len() != vocab {
            return Err(Error::ShapeMismatch(format!("direction has {} entries, expected {vocab}", u.len())));
        }
        // tangent pass
        let mut x_t = vec![0.0; 2 * vocab];
        x_t[..vocab].copy_from_slice(u);
        let mut a1_t = vec![0.0; pos.a1.len()];
        params.layer1.matvec_acc(&x_t, &mut a1_t);
        mask(&mut a1_t, &pos.a1);
        let h1_t = a1_t;
        let mut a2_t = vec![0.0; pos.a2.len()];
        params.layer2.matvec_acc(&h1_t, &mut a2_t);
        mask(&mut a2_t, &pos.a2);
        let h2_t = a2_t;
        let o_t = dot(&params.output.data, &h2_t);
        let s = pos.sig;
        let s1 = s * (1.0 - s);
        let s2 = s1 * (1.0 - 2.0 * s);
        total += k * s1 * o_t;

        // through the sigmoid slope: primal activations
        backprop_primal(params, pos, k * s2 * o_t, &mut grad);

        // through the tangent activations
        let d_ot = k * s1;
        grad.output.outer_acc(&[d_ot], &h2_t);
        let mut da2_t: Vec<f64> = params.output.data.iter().map(|w| w * d_ot).collect();
        mask(&mut da2_t, &pos.a2);
        grad.layer2.outer_acc(&da2_t, &h1_t);
        let mut da1_t = vec![0.0; h1_t.len()];
        params.layer2.matvec_t_acc(&da2_t, &mut da1_t);
        mask(&mut da1_t, &pos.a1);
        grad.layer1.outer_acc(&da1_t, &x_t);
    }
    Ok((total, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn simplex<R: Rng>(v: usize, rng: &mut R) -> Vec<f64> {
        let raw: Vec<f64> = (0..v).map(|_| rng.random::<f64>() + 0.05).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / s).collect()
    }

    fn fixture(seed: u64) -> (CvParams, Vec<Vec<f64>>, Vec<TokenId>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = CvParams::random(4, 6, 1.0, &mut rng);
        let zs = (0..3).map(|_| simplex(4, &mut rng)).collect();
        (p, zs, vec![1, 3])
    }

    fn refs(zs: &[Vec<f64>]) -> Vec<&[f64]> {
        zs.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn zero_network_outputs_one_half() {
        let p = CvParams::zeros(3, 4);
        let z = [0.2, 0.3, 0.5];
        let (v, _) = cv_forward(&p, &[&z, &z], &[0], 8).unwrap();
        assert_eq!(v, 0.5);
        let off = CvParams::disabled(3, 4);
        assert_eq!(cv_forward(&off, &[&z], &[0], 8).unwrap().0, 0.0);
    }

    #[test]
    fn output_stays_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let p = CvParams::random(3, 4, 3.0, &mut rng);
            let zs: Vec<Vec<f64>> = (0..2).map(|_| simplex(3, &mut rng)).collect();
            let (v, _) = cv_forward(&p, &refs(&zs), &[2, 0], 4).unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn padding_does_not_move_the_value() {
        let (p, zs, r) = fixture(3);
        let short = cv_forward(&p, &refs(&zs), &r, 3).unwrap().0;
        let long = cv_forward(&p, &refs(&zs), &r, 20).unwrap().0;
        assert_eq!(short, long);
        // truncation drops trailing positions
        let cut = cv_forward(&p, &refs(&zs[..2]), &r, 20).unwrap().0;
        assert_eq!(cv_forward(&p, &refs(&zs), &r, 2).unwrap().0, cut);
    }

    #[test]
    fn dimension_errors() {
        let (p, _, _) = fixture(4);
        assert!(cv_forward(&p, &[&[0.5, 0.5]], &[], 4).is_err());
        assert!(cv_forward(&p, &[], &[], 4).is_err());
        assert!(cv_forward(&p, &[&[0.25; 4]], &[9], 4).is_err());
    }

    #[test]
    fn stale_cache_is_rejected() {
        let (mut p, zs, r) = fixture(5);
        let (_, cache) = cv_forward(&p, &refs(&zs), &r, 8).unwrap();
        p.set_flat(0, 0.3);
        assert!(matches!(cv_backward(&p, &cache, 1.0), Err(Error::StaleCache { .. })));
    }

    #[test]
    fn zero_upstream_zero_gradient() {
        let (p, zs, r) = fixture(6);
        let (_, cache) = cv_forward(&p, &refs(&zs), &r, 8).unwrap();
        let (g, gz) = cv_backward(&p, &cache, 0.0).unwrap();
        assert!(g.flatten().iter().all(|&x| x == 0.0));
        assert!(gz.iter().flatten().all(|&x| x == 0.0));
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let (p, zs, r) = fixture(7);
        let (_, cache) = cv_forward(&p, &refs(&zs), &r, 8).unwrap();
        let (g, _) = cv_backward(&p, &cache, 1.7).unwrap();
        let h = 1e-5;
        for i in 0..p.num_params() {
            let mut a = p.clone();
            a.set_flat(i, p.get_flat(i) + h);
            let mut b = p.clone();
            b.set_flat(i, p.get_flat(i) - h);
            let fd = 1.7
                * (cv_forward(&a, &refs(&zs), &r, 8).unwrap().0 - cv_forward(&b, &refs(&zs), &r, 8).unwrap().0)
                / (2.0 * h);
            assert!(rel_err(g.get_flat(i), fd) < 1e-4, "{i}: {} vs {fd}", g.get_flat(i));
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let (p, zs, r) = fixture(8);
        let (_, cache) = cv_forward(&p, &refs(&zs), &r, 8).unwrap();
        let (_, gz) = cv_backward(&p, &cache, 1.0).unwrap();
        let h = 1e-5;
        for t in 0..zs.len() {
            for k in 0..4 {
                let mut a = zs.clone();
                a[t][k] += h;
                let mut b = zs.clone();
                b[t][k] -= h;
                let fd = (cv_forward(&p, &refs(&a), &r, 8).unwrap().0 - cv_forward(&p, &refs(&b), &r, 8).unwrap().0)
                    / (2.0 * h);
                assert!(rel_err(gz[t][k], fd) < 1e-4, "({t},{k}): {} vs {fd}", gz[t][k]);
            }
        }
    }

    #[test]
    fn directional_gradient_matches_finite_differences() {
        let (p, zs, r) = fixture(9);
        let u0 = [0.3, -0.1, 0.5, -0.7];
        let u2 = [-0.2, 0.4, 0.0, 0.1];
        let dirs = [Some(&u0[..]), None, Some(&u2[..])];
        let deriv = |q: &CvParams| {
            let (_, c) = cv_forward(q, &refs(&zs), &r, 8).unwrap();
            let (_, gz) = cv_backward(q, &c, 1.0).unwrap();
            dot(&gz[0], &u0) + dot(&gz[2], &u2)
        };
        let (_, cache) = cv_forward(&p, &refs(&zs), &r, 8).unwrap();
        let (d, g) = cv_directional(&p, &cache, &dirs).unwrap();
        assert!((d - deriv(&p)).abs() < 1e-12);
        let h = 1e-5;
        for i in 0..p.num_params() {
            let mut a = p.clone();
            a.set_flat(i, p.get_flat(i) + h);
            let mut b = p.clone();
            b.set_flat(i, p.get_flat(i) - h);
            let fd = (deriv(&a) - deriv(&b)) / (2.0 * h);
            let an = g.get_flat(i);
            assert!((an - fd).abs() < 1e-4 * an.abs().max(fd.abs()).max(1e-3), "{i}: {an} vs {fd}");
        }
    }
}
