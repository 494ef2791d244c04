//! Integration over products of Gaussian momentum envelopes.
//!
//! Three tools: tensor Gauss-Hermite for low dimension, batched Monte
//! Carlo with one RNG stream per batch, and a three-node rule that is
//! exact for the coincidence brackets themselves.

use gauss_quad::hermite::GaussHermite;
use gauss_quad::legendre::GaussLegendre;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::coincidence::{FrameEvaluator, MAX_PHOTONS};
use crate::optics::PsfModel;

/// Gauss-Hermite nodes and weights for the standard normal.
#[derive(Debug, Clone)]
pub struct NormalRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NormalRule {
    pub fn new(n: usize) -> Self {
        let n = n.max(1);
        let rule = GaussHermite::new(n.try_into().expect("n >= 1"));
        let (nodes, weights) = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (std::f64::consts::SQRT_2 * x, w / PI.sqrt()))
            .unzip();
        NormalRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// `E[f(k)]` for `k` i.i.d. normal with spread `sigma` in `dim` dimensions,
/// by tensor Gauss-Hermite. The reduction order is fixed.
pub fn gauss_hermite_mean<F>(dim: usize, rule: &NormalRule, sigma: f64, f: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    assert!(dim >= 1 && dim <= MAX_PHOTONS);
    let n = rule.len();
    let partial: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|first| {
            let mut idx = vec![0usize; dim];
            idx[0] = first;
            let mut k = vec![0.0; dim];
            let mut acc = 0.0;
            loop {
                let mut w = 1.0;
                for d in 0..dim {
                    k[d] = sigma * rule.nodes[idx[d]];
                    w *= rule.weights[idx[d]];
                }
                acc += w * f(&k);
                // odometer over dimensions 1..dim
                let mut d = dim - 1;
                loop {
                    if d == 0 {
                        return acc;
                    }
                    idx[d] += 1;
                    if idx[d] < n {
                        break;
                    }
                    idx[d] = 0;
                    d -= 1;
                }
            }
        })
        .collect();
    partial.iter().sum()
}

/// Result of a Monte Carlo average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Batched Monte Carlo mean of `f` over i.i.d. normal momenta. Batch `b`
/// draws from stream `b` of a generator seeded by `seed`, so the result
/// does not depend on the number of worker threads.
pub fn monte_carlo_mean<F>(dim: usize, samples: usize, batch: usize, seed: u64, sigma: f64, f: F) -> McEstimate
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let batch = batch.max(1);
    let batches = samples.div_ceil(batch).max(1);
    let sums: Vec<(f64, f64, usize)> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let count = if b + 1 == batches { samples - b * batch } else { batch };
            let mut k = vec![0.0; dim];
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                for v in k.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = sigma * z;
                }
                let y = f(&k);
                s1 += y;
                s2 += y * y;
            }
            (s1, s2, count)
        })
        .collect();
    let (mut s1, mut s2, mut n) = (0.0, 0.0, 0usize);
    for (a, b, c) in sums {
        s1 += a;
        s2 += b;
        n += c;
    }
    let nf = n as f64;
    let mean = s1 / nf;
    let var = ((s2 / nf - mean * mean) * nf / (nf - 1.0).max(1.0)).max(0.0);
    McEstimate { mean, stderr: (var / nf).sqrt(), samples: n }
}

/// Composite Gauss-Legendre on `[a, b]`.
pub fn legendre_integral<F: Fn(f64) -> f64>(a: f64, b: f64, panels: usize, order: usize, f: F) -> f64 {
    let rule = GaussLegendre::new(order.max(2).try_into().expect("order >= 2"));
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let lo = a + p as f64 * h;
            rule.integrate(lo, lo + h, &f)
        })
        .sum()
}

/// Three-node rule in the half-angle `theta = k s / 2`, matched to the
/// envelope moments of `1`, `cos theta` and `cos 2 theta`. Sine moments
/// vanish by symmetry, so every trigonometric polynomial of degree two in
/// `theta` is integrated exactly; products over photons stay exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfAngleRule {
    /// Momentum of the outer nodes, `+-2 theta_1 / s`.
    pub momentum: f64,
    pub center_weight: f64,
    pub outer_weight: f64,
}

impl HalfAngleRule {
    pub fn new(psf: &PsfModel, s: f64) -> Self {
        let x = (s * psf.sigma_k()).powi(2);
        if x == 0.0 {
            return HalfAngleRule { momentum: 0.0, center_weight: 1.0, outer_weight: 0.0 };
        }
        let one_minus_delta = -(-0.5 * x).exp_m1();
        let one_minus_gamma = -(-0.125 * x).exp_m1();
        let one_minus_u = 2.0 - one_minus_delta / (2.0 * one_minus_gamma);
        let u = 1.0 - one_minus_u;
        let outer_weight = one_minus_gamma / (2.0 * one_minus_u);
        let theta = u.clamp(-1.0, 1.0).acos();
        HalfAngleRule { momentum: 2.0 * theta / s, center_weight: 1.0 - 2.0 * outer_weight, outer_weight }
    }
}

fn compositions(g: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for a in 0..=g {
        for b in 0..=g - a {
            out.push([a, b, g - a - b]);
        }
    }
    out
}

fn multinomial(c: &[usize; 3]) -> f64 {
    let n = c[0] + c[1] + c[2];
    crate::coincidence::binomial(n, c[0]) * crate::coincidence::binomial(c[1] + c[2], c[1])
}

/// Exact momentum integral of the canonical split `x` of `eval`'s frames,
/// using the half-angle rule and the symmetry of the bracket within each
/// camera.
pub fn integrate_split(eval: &FrameEvaluator, x: usize, rule: &HalfAngleRule) -> f64 {
    let l = eval.photon_count();
    let (w0, w1) = (rule.center_weight, rule.outer_weight);
    let first = compositions(x);
    let second = compositions(l - x);
    let mut k = vec![0.0; l];
    let mut acc = 0.0;
    for c1 in &first {
        for c2 in &second {
            let mut pos = 0;
            for c in [c1, c2] {
                for _ in 0..c[0] {
                    k[pos] = 0.0;
                    pos += 1;
                }
                for _ in 0..c[1] {
                    k[pos] = rule.momentum;
                    pos += 1;
                }
                for _ in 0..c[2] {
                    k[pos] = -rule.momentum;
                    pos += 1;
                }
            }
            let centers = c1[0] + c2[0];
            let weight = multinomial(c1) * multinomial(c2) * w0.powi(centers as i32) * w1.powi((l - centers) as i32);
            if weight != 0.0 {
                acc += weight * eval.bracket(x, &k);
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normal_rule_moments() {
        let r = NormalRule::new(12);
        let m2: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x * x).sum();
        let m4: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(4)).sum();
        assert_relative_eq!(r.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
        assert_relative_eq!(m2, 1.0, epsilon = 1e-12);
        assert_relative_eq!(m4, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn half_angle_rule_is_exact_on_degree_two() {
        let psf = PsfModel::default();
        for s in [1e-4, 0.1, 1.0, 5.0, 20.0] {
            let r = HalfAngleRule::new(&psf, s);
            let e = |f: &dyn Fn(f64) -> f64| {
                r.center_weight * f(0.0) + r.outer_weight * (f(r.momentum) + f(-r.momentum))
            };
            assert_relative_eq!(e(&|k: f64| (0.5 * k * s).cos()), psf.half_angle_coherence(s), epsilon = 1e-12);
            assert_relative_eq!(e(&|k: f64| (k * s).cos()), psf.overlap(s), epsilon = 1e-12);
            assert_relative_eq!(e(&|k: f64| (k * s).sin() + (0.5 * k * s).sin()), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let f = |k: &[f64]| k[0] * k[0] + k[1];
        let a = monte_carlo_mean(2, 5000, 700, 9, 0.5, f);
        let b = monte_carlo_mean(2, 5000, 700, 9, 0.5, f);
        assert_eq!(a, b);
        assert_eq!(a.samples, 5000);
        assert!((a.mean - 0.25).abs() < 4.0 * a.stderr);
    }

    #[test]
    fn legendre_gaussian() {
        let v = legendre_integral(-8.0, 8.0, 16, 10, |x| (-x * x / 2.0).exp());
        assert_relative_eq!(v, (2.0 * PI).sqrt(), epsilon = 1e-12);
    }
}
