//! Fisher information about the separation carried by L-photon frames.
//!
//! All values are per frame and expressed in units of `sigma_k^2`.
//! Derivatives in `s` use a five-point stencil on the exact density;
//! momenta are integrated by tensor Gauss-Hermite or by Monte Carlo
//! with the envelope product as proposal.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::coincidence::special::pair_class_probability;
use crate::coincidence::{binomial, CoincidenceModel, FrameEvaluator, OutcomeClass, MAX_PHOTONS};
use crate::error::{domain, Error, Result};
use crate::optics::{PsfModel, SourceScene};
use crate::quadrature::{gauss_hermite_mean, legendre_integral, monte_carlo_mean, NormalRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Gauss-Hermite up to three photons, Monte Carlo above.
    Auto,
    GaussHermiteTensor,
    MonteCarloImportance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub scheme: Scheme,
    /// Gauss-Hermite nodes per momentum; `None` picks a count that grows
    /// with the fringe frequency `s sigma_k`.
    pub nodes_per_dim: Option<usize>,
    pub sample_count: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub relative_error_target: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            scheme: Scheme::Auto,
            nodes_per_dim: None,
            sample_count: 200_000,
            batch_size: 4096,
            seed: 0x5eed_2024,
            relative_error_target: 0.02,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(n) = self.nodes_per_dim {
            if n < 8 {
                return domain(format!("Gauss-Hermite needs at least 8 nodes per dimension, got {n}"));
            }
        }
        if self.sample_count < 10_000 {
            return domain(format!("Monte Carlo needs at least 1e4 samples, got {}", self.sample_count));
        }
        if !(self.relative_error_target > 0.0) {
            return domain("relative error target must be positive");
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.sample_count = n;
        self
    }

    fn scheme_for(&self, l: usize) -> Scheme {
        match self.scheme {
            Scheme::Auto if l <= 3 => Scheme::GaussHermiteTensor,
            Scheme::Auto => Scheme::MonteCarloImportance,
            other => other,
        }
    }

    fn nodes_for(&self, l: usize, s: f64, psf: &PsfModel) -> usize {
        if let Some(n) = self.nodes_per_dim {
            return n;
        }
        let fringe = (s * psf.sigma_k()).ceil() as usize;
        match l {
            1 => 8,
            2 => (24 + 8 * fringe).min(240),
            _ => (20 + 6 * fringe).min(96),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherValue {
    pub value: f64,
    pub stderr: f64,
    pub converged: bool,
}

/// Finite-difference step and the separation the derivative is taken at.
/// Below `1e-5 sigma_x` the smooth `s -> 0` limit is used.
pub(crate) fn stencil(s: f64, psf: &PsfModel) -> (f64, f64) {
    let sx = psf.sigma_x();
    let s_eff = s.max(1e-5 * sx);
    let h = 1e-3 * s_eff.max(1e-3 * sx).min(sx);
    (s_eff, h)
}

#[inline]
fn five_point(v: [f64; 4], h: f64) -> f64 {
    (v[0] - 8.0 * v[1] + 8.0 * v[2] - v[3]) / (12.0 * h)
}

/// `sum_X (dR_X/ds)^2 / R_X` at one momentum tuple, `R` the bracket.
struct ScoreIntegrand {
    centre: FrameEvaluator,
    shifted: [FrameEvaluator; 4],
    h: f64,
}

impl ScoreIntegrand {
    fn new(model: &CoincidenceModel, l: usize, s: f64, h: f64) -> Self {
        let at = |d: f64| model.at_separation(s + d).frame_evaluator(l);
        ScoreIntegrand {
            centre: at(0.0),
            shifted: [at(-2.0 * h), at(-h), at(h), at(2.0 * h)],
            h,
        }
    }

    fn eval(&self, k: &[f64]) -> f64 {
        let l = k.len();
        let mut r = [0.0; MAX_PHOTONS + 1];
        let mut shifted = [[0.0; MAX_PHOTONS + 1]; 4];
        self.centre.canonical_brackets(k, &mut r);
        for (e, out) in self.shifted.iter().zip(shifted.iter_mut()) {
            e.canonical_brackets(k, out);
        }
        let total: f64 = r[..=l].iter().sum();
        let floor = 1e-15 * total;
        let mut acc = 0.0;
        for x in 0..=l {
            if r[x] <= floor || r[x] <= 0.0 {
                continue;
            }
            let d = five_point([shifted[0][x], shifted[1][x], shifted[2][x], shifted[3][x]], self.h);
            acc += d * d / r[x];
        }
        acc
    }
}

/// Fisher information of `L`-photon frames.
pub fn fisher_l(scene: &SourceScene, psf: &PsfModel, l: usize, quad: &QuadratureSpec) -> Result<FisherValue> {
    if l == 0 || l > MAX_PHOTONS {
        return domain(format!("photon number must be in 1..={MAX_PHOTONS}, got {l}"));
    }
    quad.validate()?;
    let model = CoincidenceModel::new(scene, psf);
    let (s, h) = stencil(scene.separation(), psf);
    let integrand = ScoreIntegrand::new(&model, l, s, h);
    let sk = psf.sigma_k();
    let unit = sk * sk;
    let (value, stderr) = match quad.scheme_for(l) {
        Scheme::GaussHermiteTensor => {
            let n = quad.nodes_for(l, s, psf);
            let fine = gauss_hermite_mean(l, &NormalRule::new(n), sk, |k| integrand.eval(k));
            let coarse_n = (3 * n / 4).max(6);
            let coarse = gauss_hermite_mean(l, &NormalRule::new(coarse_n), sk, |k| integrand.eval(k));
            (fine, (fine - coarse).abs())
        }
        _ => {
            let e = monte_carlo_mean(l, quad.sample_count, quad.batch_size, quad.seed ^ (l as u64) << 32, sk, |k| {
                integrand.eval(k)
            });
            (e.mean, e.stderr)
        }
    };
    let value = value / unit;
    let stderr = stderr / unit;
    let converged = stderr <= quad.relative_error_target * value.abs() + 1e-12;
    if !converged {
        log::warn!("F^({l}) at s={} not converged: {value:.6e} +- {stderr:.2e}", scene.separation());
    }
    Ok(FisherValue { value, stderr, converged })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormRefs {
    /// Small-separation limit of the sum over all even orders.
    pub subrayleigh_total: f64,
    /// Small-separation limit summed over the even orders actually included.
    pub subrayleigh_truncated: f64,
    /// Large-separation two-photon value.
    pub asymptotic_two_photon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherBreakdown {
    pub separation: f64,
    pub brightness: f64,
    pub l_max: usize,
    pub per_l: Vec<(usize, FisherValue)>,
    pub total: f64,
    pub total_stderr: f64,
    pub converged: bool,
    pub closed_form: ClosedFormRefs,
}

impl FisherBreakdown {
    pub fn get(&self, l: usize) -> Option<FisherValue> {
        self.per_l.iter().find(|(m, _)| *m == l).map(|(_, v)| *v)
    }
}

pub fn default_l_max(brightness: f64) -> usize {
    ((2.0 * (2.0 * brightness + 1.0)).ceil() as usize).min(7)
}

pub fn fisher_total(
    scene: &SourceScene,
    psf: &PsfModel,
    l_max: Option<usize>,
    quad: &QuadratureSpec,
) -> Result<FisherBreakdown> {
    let n = scene.brightness();
    let l_max = l_max.unwrap_or_else(|| default_l_max(n));
    if l_max < 2 {
        return domain(format!("L_max must be at least 2, got {l_max}"));
    }
    let mut per_l = Vec::with_capacity(l_max);
    for l in 1..=l_max {
        per_l.push((l, fisher_l(scene, psf, l, quad)?));
    }
    let total = per_l.iter().map(|(_, v)| v.value).sum();
    let total_stderr = per_l.iter().map(|(_, v)| v.stderr * v.stderr).sum::<f64>().sqrt();
    let converged = per_l.iter().all(|(_, v)| v.converged);
    let subrayleigh_truncated = (1..=l_max / 2).map(|p| subrayleigh_fisher_order(p, n)).sum();
    Ok(FisherBreakdown {
        separation: scene.separation(),
        brightness: n,
        l_max,
        per_l,
        total,
        total_stderr,
        converged,
        closed_form: ClosedFormRefs {
            subrayleigh_total: subrayleigh_fisher_total(n),
            subrayleigh_truncated,
            asymptotic_two_photon: asymptotic_fisher_2p(n),
        },
    })
}

/// Fisher information of the model conditioned on `L <= l_cap`, the law
/// actually sampled when larger frames are redrawn.
pub fn truncated_fisher(scene: &SourceScene, psf: &PsfModel, l_cap: usize, quad: &QuadratureSpec) -> Result<FisherValue> {
    if l_cap < 1 {
        return domain("L_cap must be at least 1");
    }
    let mut sum = 0.0;
    let mut var = 0.0;
    let mut converged = true;
    for l in 1..=l_cap {
        let f = fisher_l(scene, psf, l, quad)?;
        sum += f.value;
        var += f.stderr * f.stderr;
        converged &= f.converged;
    }
    let model = CoincidenceModel::new(scene, psf);
    let (s, h) = stencil(scene.separation(), psf);
    let z = |s: f64| (1..=l_cap).map(|l| model.at_separation(s).frame_probability(l)).sum::<f64>();
    let z0 = z(s);
    let dz = five_point([z(s - 2.0 * h), z(s - h), z(s + h), z(s + 2.0 * h)], h);
    let unit = psf.sigma_k().powi(2);
    let value = sum / z0 - (dz / z0).powi(2) / unit;
    Ok(FisherValue { value, stderr: var.sqrt() / z0, converged })
}

/// Small-separation limit of the `2P`-photon Fisher information.
pub fn subrayleigh_fisher_order(p: usize, brightness: f64) -> f64 {
    if p == 0 {
        return 0.0;
    }
    let r = brightness / (1.0 + 2.0 * brightness);
    binomial(2 * p, p) / (2.0 * (2 * p - 1) as f64) * r.powi(2 * p as i32 - 1)
}

/// Small-separation limit summed over all even orders.
pub fn subrayleigh_fisher_total(brightness: f64) -> f64 {
    let n = brightness;
    (1.0 + 2.0 * n - (1.0 + 4.0 * n).sqrt()) / (2.0 * n)
}

/// Two-photon Fisher information once the PSFs no longer overlap.
pub fn asymptotic_fisher_2p(brightness: f64) -> f64 {
    brightness / (1.0 + brightness).powi(3)
}

/// Brightness maximizing `N^(L-1) / (1+N)^(L+1)`.
pub fn optimal_brightness(l: usize) -> Result<f64> {
    if l < 2 {
        return domain(format!("needs L >= 2, got {l}"));
    }
    Ok((l as f64 - 1.0) / 2.0)
}

/// Two-photon information when only parts of the outcome are recorded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingHierarchy {
    /// Camera split only.
    pub split: f64,
    /// Split and mean momentum.
    pub split_mean: f64,
    /// Split and momentum difference.
    pub split_difference: f64,
    /// Full momentum resolution.
    pub full: f64,
}

/// Two-photon hierarchy from the factorization into split probability and
/// independent mean and difference conditionals, with analytic derivatives.
pub fn sampling_hierarchy_fi(scene: &SourceScene, psf: &PsfModel) -> Result<SamplingHierarchy> {
    let (s, _) = stencil(scene.separation(), psf);
    let n = scene.brightness();
    let model = CoincidenceModel::new(&scene.with_separation(s)?, psf);
    let w = *model.weights();
    let d = w.delta;
    let dd = psf.overlap_derivative(s);
    let kap = psf.pair_visibility(s);
    let dkap = psf.pair_visibility_derivative(s);
    let dp0 = w.p0 * w.p0 * 2.0 * n * n * d * dd;
    let sk = psf.sigma_k();
    let mean_spread = 10.0 * sk / std::f64::consts::SQRT_2;
    let diff_spread = 10.0 * sk * std::f64::consts::SQRT_2;
    let panels = |half: f64, freq: f64| (16.0f64).max((2.0 * half * freq / 1.5).ceil()) as usize;

    let mut h = SamplingHierarchy { split: 0.0, split_mean: 0.0, split_difference: 0.0, full: 0.0 };
    for class in [OutcomeClass::Bunched, OutcomeClass::Balanced] {
        let a = class.alpha().expect("pair class");
        let p = pair_class_probability(class, &model)?;
        let u = 1.0 + n - a * n * d * kap;
        let du = -a * n * (dd * kap + d * dkap);
        let v = 1.0 + a * kap;
        let dv = a * dkap;
        let dp = n * (2.0 * w.p0 * dp0 * u * v + w.p0 * w.p0 * (du * v + u * dv));
        let split = if p > 0.0 { dp * dp / p } else { 0.0 };

        let info_mean = legendre_integral(-mean_spread, mean_spread, panels(mean_spread, s), 12, |kb| {
            let c = (kb * s).cos();
            let num = 1.0 + n - a * n * d * c;
            let dnum = -a * n * (dd * c - d * kb * (kb * s).sin());
            let score = dnum / num - du / u;
            psf.mean_momentum_density(kb) * num / u * score * score
        });
        let info_diff = legendre_integral(-diff_spread, diff_spread, panels(diff_spread, 0.5 * s), 12, |dk| {
            let c = (0.5 * dk * s).cos();
            let num = 1.0 + a * c;
            let dnum = -a * 0.5 * dk * (0.5 * dk * s).sin();
            // dnum^2 / num without the removable zero of the balanced class
            let ratio = 0.25 * dk * dk * (1.0 - a * c);
            let r = dv / v;
            psf.difference_density(dk) / v * (ratio - 2.0 * dnum * r + num * r * r)
        });
        h.split += split;
        h.split_mean += split + p * info_mean;
        h.split_difference += split + p * info_diff;
        h.full += split + p * (info_mean + info_diff);
    }
    let unit = sk * sk;
    Ok(SamplingHierarchy {
        split: h.split / unit,
        split_mean: h.split_mean / unit,
        split_difference: h.split_difference / unit,
        full: h.full / unit,
    })
}

/// Fisher information of photon counting per camera only, `L` fixed.
pub fn bucket_fisher(scene: &SourceScene, psf: &PsfModel, l: usize) -> Result<f64> {
    if l == 0 || l > MAX_PHOTONS {
        return domain(format!("photon number must be in 1..={MAX_PHOTONS}, got {l}"));
    }
    let model = CoincidenceModel::new(scene, psf);
    let (s, h) = stencil(scene.separation(), psf);
    let mut acc = 0.0;
    for x in 0..=l {
        let wx = |t: f64| model.at_separation(t).class_weight(l, x);
        let w0 = wx(s);
        if w0 <= 0.0 {
            continue;
        }
        let d = five_point([wx(s - 2.0 * h), wx(s - h), wx(s + h), wx(s + 2.0 * h)], h);
        acc += d * d / w0;
    }
    Ok(acc / psf.sigma_k().powi(2))
}

fn require_grid(scene: &SourceScene, psf: &PsfModel, pitch: f64, n_pixels: usize) -> Result<()> {
    if !(pitch > 0.0) || n_pixels == 0 {
        return domain("pixel pitch and count must be positive");
    }
    let half_width = 0.5 * pitch * n_pixels as f64;
    let required = 0.5 * scene.separation() + 6.0 * psf.sigma_x();
    if half_width < required {
        return Err(Error::GridTooNarrow { half_width, required });
    }
    Ok(())
}

/// Direct imaging with a pixelated camera in the image plane, per frame.
/// The per-photon information is scaled by the mean number `2 N_s` of
/// source photons.
pub fn di_baseline_fisher(scene: &SourceScene, psf: &PsfModel, pixel_pitch: f64, n_pixels: usize) -> Result<f64> {
    require_grid(scene, psf, pixel_pitch, n_pixels)?;
    let sx = psf.sigma_x();
    let unit = Normal::new(0.0, 1.0).expect("standard normal");
    let half = 0.5 * scene.separation();
    let mut info = 0.0;
    for i in 0..n_pixels {
        let lo = (i as f64 - 0.5 * n_pixels as f64) * pixel_pitch;
        let hi = lo + pixel_pitch;
        let mass = |c: f64| unit.cdf((hi - c) / sx) - unit.cdf((lo - c) / sx);
        let q = 0.5 * (mass(half) + mass(-half));
        // d/ds of the mass centred at +-s/2
        let edge = |c: f64| unit.pdf((hi - c) / sx) - unit.pdf((lo - c) / sx);
        let dq = 0.5 * (-0.5 * edge(half) + 0.5 * edge(-half)) / sx;
        if q > 1e-300 {
            info += dq * dq / q;
        }
    }
    Ok(2.0 * scene.brightness() * info / psf.sigma_k().powi(2))
}

/// Direct imaging with a perfect (unpixelated) camera, per frame.
pub fn di_unpixelated_fisher(scene: &SourceScene, psf: &PsfModel) -> f64 {
    let sx = psf.sigma_x();
    let half = 0.5 * scene.separation();
    let g = |x: f64, c: f64| (-(x - c).powi(2) / (2.0 * sx * sx)).exp() / (2.0 * std::f64::consts::PI * sx * sx).sqrt();
    let reach = half + 12.0 * sx;
    let info = legendre_integral(-reach, reach, 64, 16, |x| {
        let p = 0.5 * (g(x, half) + g(x, -half));
        let dp = 0.25 * ((x - half) * g(x, half) - (x + half) * g(x, -half)) / (sx * sx);
        if p > 1e-300 {
            dp * dp / p
        } else {
            0.0
        }
    });
    2.0 * scene.brightness() * info / psf.sigma_k().powi(2)
}
