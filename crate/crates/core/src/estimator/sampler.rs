//! Exact frame sampler.
//!
//! `(L, X)` is drawn from the closed-form split weights, then momenta one at
//! a time from their exact conditionals. Given the earlier momenta, the
//! conditional of the next one is the envelope times a nonnegative
//! trigonometric polynomial of degree two in `theta = k s / 2`, sampled by
//! rejection against a provable bound.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::{ChiSquared, StandardNormal};

use crate::coincidence::weights::MarginalTable;
use crate::coincidence::{mul_linear, CoincidenceModel, DetectionOutcome, MAX_PHOTONS};
use crate::error::{domain, Error, Result};
use crate::optics::{PsfModel, SourceScene};

/// Default largest photon number kept; larger frames are redrawn.
pub const DEFAULT_L_CAP: usize = 12;

const LOW_ACCEPTANCE: f64 = 1e-3;
const MAX_TRIES: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct FrameSampler {
    model: CoincidenceModel,
    l_cap: usize,
    cells: Vec<(usize, usize)>,
    pick: WeightedIndex<f64>,
    tables: Vec<MarginalTable>,
    truncated_mass: f64,
}

/// Coefficients of `a0 + a1 cos + b1 sin + a2 cos 2 + b2 sin 2`.
#[derive(Debug, Clone, Copy)]
struct TrigQuadratic {
    a0: f64,
    a1: f64,
    b1: f64,
    a2: f64,
    b2: f64,
}

impl TrigQuadratic {
    fn from_samples(q: [f64; 5]) -> Self {
        let mut c = TrigQuadratic { a0: 0.0, a1: 0.0, b1: 0.0, a2: 0.0, b2: 0.0 };
        for (m, &v) in q.iter().enumerate() {
            let t = 2.0 * std::f64::consts::PI * m as f64 / 5.0;
            c.a0 += v / 5.0;
            c.a1 += 0.4 * v * t.cos();
            c.b1 += 0.4 * v * t.sin();
            c.a2 += 0.4 * v * (2.0 * t).cos();
            c.b2 += 0.4 * v * (2.0 * t).sin();
        }
        c
    }

    #[cfg(test)]
    fn eval(&self, t: f64) -> f64 {
        let (s1, c1) = t.sin_cos();
        let (s2, c2) = (2.0 * t).sin_cos();
        self.a0 + self.a1 * c1 + self.b1 * s1 + self.a2 * c2 + self.b2 * s2
    }

    fn sup(&self) -> f64 {
        self.a0 + self.a1.hypot(self.b1) + self.a2.hypot(self.b2)
    }
}

/// Bound `Q(theta) <= base + curve theta^2`.
#[derive(Debug, Clone, Copy)]
enum Majorant {
    Flat(f64),
    Quadratic { base: f64, curve: f64, gauss_share: f64 },
}

impl Majorant {
    fn bound(&self, t: f64) -> f64 {
        match *self {
            Majorant::Flat(b) => b,
            Majorant::Quadratic { base, curve, .. } => base + curve * t * t,
        }
    }
}

impl FrameSampler {
    pub fn new(scene: &SourceScene, psf: &PsfModel, l_cap: usize) -> Result<Self> {
        if l_cap == 0 || l_cap > MAX_PHOTONS {
            return domain(format!("L_cap must be in 1..={MAX_PHOTONS}, got {l_cap}"));
        }
        let model = CoincidenceModel::new(scene, psf);
        let mut cells = Vec::new();
        let mut weights = Vec::new();
        for l in 1..=l_cap {
            for x in 0..=l {
                cells.push((l, x));
                weights.push(model.class_weight(l, x).max(0.0));
            }
        }
        let pick = WeightedIndex::new(&weights).map_err(|e| Error::Domain(format!("split weights: {e}")))?;
        let tables = (1..=l_cap).map(|l| MarginalTable::new(&model, l, true)).collect();
        let truncated_mass = weights.iter().sum();
        Ok(FrameSampler { model, l_cap, cells, pick, tables, truncated_mass })
    }

    pub fn l_cap(&self) -> usize {
        self.l_cap
    }

    pub fn model(&self) -> &CoincidenceModel {
        &self.model
    }

    /// Probability that a frame has at most `L_cap` photons.
    pub fn truncated_mass(&self) -> f64 {
        self.truncated_mass
    }

    /// Draws one frame, momenta in canonical order (C1 first).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DetectionOutcome> {
        let (l, x) = self.cells[self.pick.sample(rng)];
        let momenta = self.sample_momenta(l, x, rng)?;
        DetectionOutcome::canonical(x, momenta)
    }

    /// Momenta of a frame with fixed photon number and split.
    pub fn sample_momenta<R: Rng + ?Sized>(&self, l: usize, x: usize, rng: &mut R) -> Result<Vec<f64>> {
        if l == 0 || l > self.l_cap || x > l {
            return domain(format!("cannot sample L={l}, X={x} with L_cap={}", self.l_cap));
        }
        let sk = self.model.psf().sigma_k();
        let s = self.model.separation();
        let mut out = Vec::with_capacity(l);
        if s == 0.0 {
            // the bracket does not depend on momenta
            for _ in 0..l {
                let z: f64 = StandardNormal.sample(rng);
                out.push(sk * z);
            }
            return Ok(out);
        }
        let table = &self.tables[l - 1];
        let sign = |i: usize| if i < x { 1.0 } else { -1.0 };
        let mut prod = [0.0f64; MAX_PHOTONS + 1];
        let mut sum = [0.0f64; MAX_PHOTONS + 1];
        prod[0] = 1.0;
        let mut free: f64 = (0..l).map(sign).sum();
        let theta_spread = 0.5 * s * sk;
        let chi3 = ChiSquared::new(3.0).expect("three degrees of freedom");

        let mut next_prod = [0.0f64; MAX_PHOTONS + 1];
        let mut next_sum = [0.0f64; MAX_PHOTONS + 1];
        for r in 0..l {
            let sg = sign(r);
            let rest = free - sg;
            let mut q_at = |t: f64| {
                let (sn, cs) = t.sin_cos();
                extend(&prod, &sum, r, cs, sn, sg, &mut next_prod, &mut next_sum);
                table.marginal(r + 1, &next_prod[..=r + 1], &next_sum[..=r], rest)
            };
            let mut grid = [0.0; 5];
            for (m, g) in grid.iter_mut().enumerate() {
                *g = q_at(2.0 * std::f64::consts::PI * m as f64 / 5.0);
            }
            let poly = TrigQuadratic::from_samples(grid);
            let majorant = choose_majorant(&poly, theta_spread);
            let mass = match majorant {
                Majorant::Flat(b) => b,
                Majorant::Quadratic { base, curve, .. } => base + curve * theta_spread * theta_spread,
            };
            if poly.a0 <= 0.0 || !(mass > 0.0) {
                return Err(Error::Domain(format!("degenerate conditional at L={l}, slot {r}")));
            }
            let mut accepted = None;
            for tries in 1..=MAX_TRIES {
                let k = match majorant {
                    Majorant::Flat(_) => sk * Distribution::<f64>::sample(&StandardNormal, rng),
                    Majorant::Quadratic { gauss_share, .. } => {
                        if rng.gen::<f64>() < gauss_share {
                            sk * Distribution::<f64>::sample(&StandardNormal, rng)
                        } else {
                            let mag: f64 = Distribution::<f64>::sample(&chi3, rng).sqrt();
                            if rng.gen::<bool>() {
                                sk * mag
                            } else {
                                -sk * mag
                            }
                        }
                    }
                };
                let t = 0.5 * k * s;
                let target = q_at(t);
                let bound = majorant.bound(t);
                if target > bound * (1.0 + 1e-9) + 1e-14 * mass {
                    return Err(Error::MajorantViolation { l, slot: r, target, bound });
                }
                if rng.gen::<f64>() * bound < target {
                    accepted = Some(k);
                    break;
                }
                if tries == (1.0 / LOW_ACCEPTANCE) as usize {
                    log::warn!("sampler acceptance below {LOW_ACCEPTANCE} at L={l}, slot {r}");
                }
            }
            let k = accepted.ok_or_else(|| Error::Domain(format!("sampler gave up at L={l}, slot {r}")))?;
            let (sn, cs) = (0.5 * k * s).sin_cos();
            extend(&prod, &sum, r, cs, sn, sg, &mut next_prod, &mut next_sum);
            prod[..=r + 1].copy_from_slice(&next_prod[..=r + 1]);
            sum[..=r].copy_from_slice(&next_sum[..=r]);
            free = rest;
            out.push(k);
        }
        Ok(out)
    }
}

/// Appends photon `r` with half-angle `(cs, sn)` and camera sign `sg` to the
/// running product and signed leave-one-out polynomials.
#[inline]
#[allow(clippy::too_many_arguments)]
fn extend(
    prod: &[f64],
    sum: &[f64],
    r: usize,
    cs: f64,
    sn: f64,
    sg: f64,
    next_prod: &mut [f64],
    next_sum: &mut [f64],
) {
    next_prod[..=r].copy_from_slice(&prod[..=r]);
    mul_linear(next_prod, r, cs, sn);
    if r > 0 {
        next_sum[..r].copy_from_slice(&sum[..r]);
        mul_linear(next_sum, r - 1, cs, sn);
    } else {
        next_sum[0] = 0.0;
    }
    for m in 0..=r {
        next_sum[m] += sg * prod[m];
    }
}

fn choose_majorant(q: &TrigQuadratic, theta_spread: f64) -> Majorant {
    let flat = q.sup();
    let slope = (q.b1 + 2.0 * q.b2).abs();
    let curvature = q.a1.hypot(q.b1) + 4.0 * q.a2.hypot(q.b2);
    let at_zero = q.a0 + q.a1 + q.a2;
    let eps = theta_spread;
    let base = at_zero + 0.5 * slope * eps;
    let curve = 0.5 * slope / eps + 0.5 * curvature;
    let mass = base + curve * theta_spread * theta_spread;
    if mass < flat {
        Majorant::Quadratic { base, curve, gauss_share: base / mass }
    } else {
        Majorant::Flat(flat)
    }
}
