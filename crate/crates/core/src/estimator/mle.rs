//! Maximum-likelihood separation estimates and the Cramer-Rao comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::{derive_seed, simulate_with, ExperimentConfig};
use super::sampler::{FrameSampler, DEFAULT_L_CAP};
use crate::coincidence::{CoincidenceModel, DetectionOutcome};
use crate::error::{domain, Result};
use crate::fisher::{fisher_total, truncated_fisher, QuadratureSpec};
use crate::optics::{PsfModel, SourceScene};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleOptions {
    pub search: (f64, f64),
    pub grid_points: usize,
    /// Absolute tolerance on the estimate, in units of `sigma_x`.
    pub tolerance: f64,
    /// Frames with more photons are outside the model; the likelihood is
    /// normalized over `L <= l_cap`.
    pub l_cap: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions { search: (0.0, 4.0), grid_points: 25, tolerance: 1e-6, l_cap: DEFAULT_L_CAP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub s_hat: f64,
    pub log_likelihood: f64,
    /// The maximum sits at an end of the search interval.
    pub at_boundary: bool,
    /// `-d^2 l / ds^2` at the estimate.
    pub observed_information: f64,
    pub concave: bool,
    pub frames: usize,
    /// Grid scan `(s, log L)` used to bracket the maximum.
    pub log_likelihood_curve: Vec<(f64, f64)>,
}

/// Log-likelihood of a record as a function of the separation, with the
/// envelope factors (independent of `s`) dropped.
#[derive(Debug, Clone)]
pub struct LikelihoodSurface {
    psf: PsfModel,
    brightness: f64,
    l_cap: usize,
    // frames grouped by photon number: (split, momenta)
    groups: Vec<Vec<(usize, Vec<f64>)>>,
    frames: usize,
}

impl LikelihoodSurface {
    pub fn new(record: &[DetectionOutcome], psf: &PsfModel, brightness: f64, l_cap: usize) -> Result<Self> {
        if record.is_empty() {
            return domain("record is empty");
        }
        let mut groups = vec![Vec::new(); l_cap];
        for f in record {
            let l = f.photon_count();
            if l > l_cap {
                return domain(format!("frame with L={l} exceeds L_cap={l_cap}"));
            }
            let x = f.camera_split();
            // canonical order: C1 momenta first
            let mut k: Vec<f64> = f.momenta().iter().zip(f.assignment()).filter(|(_, &q)| q).map(|(&k, _)| k).collect();
            k.extend(f.momenta().iter().zip(f.assignment()).filter(|(_, &q)| !q).map(|(&k, _)| k));
            groups[l - 1].push((x, k));
        }
        Ok(LikelihoodSurface { psf: *psf, brightness, l_cap, groups, frames: record.len() })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn log_likelihood(&self, s: f64) -> f64 {
        let scene = match SourceScene::new(s.abs(), self.brightness) {
            Ok(v) => v,
            Err(_) => return f64::NEG_INFINITY,
        };
        let model = CoincidenceModel::new(&scene, &self.psf);
        let mut acc = 0.0;
        for (i, group) in self.groups.iter().enumerate() {
            if group.is_empty() {
                continue;
            }
            let eval = model.frame_evaluator(i + 1);
            for (x, k) in group {
                acc += eval.bracket(*x, k).ln();
            }
        }
        let z: f64 = (1..=self.l_cap).map(|l| model.frame_probability(l)).sum();
        acc - self.frames as f64 * z.ln()
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Grid scan, golden-section search around the best grid point, then one
/// parabolic step.
pub fn mle_separation(record: &[DetectionOutcome], psf: &PsfModel, brightness: f64, opts: &MleOptions) -> Result<EstimationReport> {
    let (lo, hi) = opts.search;
    if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
        return domain(format!("search interval must satisfy 0 <= lo < hi, got [{lo}, {hi}]"));
    }
    if opts.grid_points < 3 {
        return domain("need at least 3 grid points");
    }
    let surface = LikelihoodSurface::new(record, psf, brightness, opts.l_cap)?;
    let ll = |s: f64| surface.log_likelihood(s);
    let n = opts.grid_points;
    let step = (hi - lo) / (n - 1) as f64;
    let curve: Vec<(f64, f64)> = (0..n).map(|i| lo + i as f64 * step).map(|s| (s, ll(s))).collect();
    let best = curve
        .iter()
        .enumerate()
        .fold(0, |b, (i, p)| if p.1 > curve[b].1 { i } else { b });
    let a = curve[best.saturating_sub(1)].0;
    let b = curve[(best + 1).min(n - 1)].0;
    let (mut s_hat, mut top) = golden_max(&ll, a, b, opts.tolerance);

    let h = (10.0 * opts.tolerance).max(1e-6 * (hi - lo));
    let (left, right) = ((s_hat - h).max(lo), (s_hat + h).min(hi));
    if right - left > 1.5 * h {
        let (fl, fr) = (ll(left), ll(right));
        let denom = fl - 2.0 * top + fr;
        if denom < 0.0 {
            let cand = s_hat + 0.5 * h * (fl - fr) / denom;
            if cand > a && cand < b {
                let fv = ll(cand);
                if fv > top {
                    s_hat = cand;
                    top = fv;
                }
            }
        }
    }

    let span = hi - lo;
    let at_boundary = s_hat - lo < 1e-3 * span || hi - s_hat < 1e-3 * span;
    let hd = 1e-3 * psf.sigma_x();
    let centre = s_hat.max(lo + hd).min(hi - hd);
    let second = (ll(centre + hd) - 2.0 * ll(centre) + ll(centre - hd)) / (hd * hd);
    if at_boundary {
        log::warn!("likelihood maximum at the search boundary, s_hat={s_hat}");
    }
    Ok(EstimationReport {
        s_hat,
        log_likelihood: top,
        at_boundary,
        observed_information: -second,
        concave: second < 0.0,
        frames: surface.frames(),
        log_likelihood_curve: curve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrbReport {
    /// Per-frame Fisher information in units of `sigma_k^2`.
    pub fisher_per_frame: f64,
    pub fisher_stderr: f64,
    pub frames: usize,
    /// Variance bound `1/(N F)` in units of `sigma_x^2`.
    pub crb: f64,
    /// `Some(cap)` when the information of the `L <= cap` model was used.
    pub l_cap: Option<usize>,
    pub converged: bool,
}

/// Cramer-Rao bound for `frames` independent frames. With `l_cap` the
/// bound refers to the model conditioned on `L <= l_cap`; otherwise the
/// default truncated sum over photon numbers is used.
pub fn crb_report(
    scene: &SourceScene,
    psf: &PsfModel,
    frames: usize,
    l_cap: Option<usize>,
    quad: &QuadratureSpec,
) -> Result<CrbReport> {
    if frames == 0 {
        return domain("frame count must be at least 1");
    }
    let (value, stderr, converged) = match l_cap {
        Some(cap) => {
            let f = truncated_fisher(scene, psf, cap, quad)?;
            (f.value, f.stderr, f.converged)
        }
        None => {
            let f = fisher_total(scene, psf, None, quad)?;
            (f.total, f.total_stderr, f.converged)
        }
    };
    Ok(CrbReport {
        fisher_per_frame: value,
        fisher_stderr: stderr,
        frames,
        crb: crb_from_fisher(value, psf, frames),
        l_cap,
        converged,
    })
}

/// `1/(N F)` with `F` given in units of `sigma_k^2`.
pub fn crb_from_fisher(fisher: f64, psf: &PsfModel, frames: usize) -> f64 {
    1.0 / (frames as f64 * fisher * psf.sigma_k().powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub s_hat: f64,
    pub at_boundary: bool,
}

/// Summary of repeated estimation against the bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub true_separation: f64,
    pub brightness: f64,
    pub frames: usize,
    pub trials: Vec<TrialResult>,
    pub mean: f64,
    pub variance: f64,
    pub bias: f64,
    /// Standard error of the mean estimate.
    pub bias_stderr: f64,
    pub crb: CrbReport,
    pub variance_ratio: f64,
    pub boundary_hits: usize,
    pub bias_ok: bool,
    pub variance_ok: bool,
}

impl StudyReport {
    pub fn passed(&self) -> bool {
        self.bias_ok && self.variance_ok
    }
}

/// Repeats simulation and estimation `trials` times, trial `t` using the
/// seed derived from `(config.seed, t)`, and compares with the bound of the
/// sampled (truncated) model at the true separation.
pub fn run_study(config: &ExperimentConfig, trials: usize, quad: &QuadratureSpec) -> Result<StudyReport> {
    config.validate()?;
    if trials < 2 {
        return domain("a study needs at least 2 trials");
    }
    let sampler = FrameSampler::new(&config.scene, &config.psf, config.l_cap)?;
    let opts = MleOptions { search: config.search, l_cap: config.l_cap, ..Default::default() };
    let n = config.scene.brightness();
    let results: Vec<Result<TrialResult>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let record = simulate_with(&sampler, config.frames, derive_seed(config.seed, t as u64))?;
            let r = mle_separation(&record, &config.psf, n, &opts)?;
            Ok(TrialResult { trial: t, s_hat: r.s_hat, at_boundary: r.at_boundary })
        })
        .collect();
    let trials_out = results.into_iter().collect::<Result<Vec<_>>>()?;
    let m = trials_out.len() as f64;
    let mean = trials_out.iter().map(|r| r.s_hat).sum::<f64>() / m;
    let variance = trials_out.iter().map(|r| (r.s_hat - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let bias = mean - config.scene.separation();
    let bias_stderr = (variance / m).sqrt();
    let crb = crb_report(&config.scene, &config.psf, config.frames, Some(config.l_cap), quad)?;
    let variance_ratio = variance / crb.crb;
    Ok(StudyReport {
        true_separation: config.scene.separation(),
        brightness: n,
        frames: config.frames,
        boundary_hits: trials_out.iter().filter(|r| r.at_boundary).count(),
        trials: trials_out,
        mean,
        variance,
        bias,
        bias_stderr,
        crb,
        variance_ratio,
        bias_ok: bias.abs() <= 3.0 * bias_stderr,
        variance_ok: (0.8..=1.3).contains(&variance_ratio),
    })
}
