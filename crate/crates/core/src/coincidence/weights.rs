//! Momentum-integrated weights and partial marginals of the coincidence
//! densities, in closed form.
//!
//! Under the single-photon envelope the half-angle factors of distinct
//! photons are independent with
//! `E[cos^2] = (1+delta)/2`, `E[sin^2] = (1-delta)/2`, `E[cos] = gamma`,
//! and every odd moment in `sin` vanishing. Integrating the squared
//! polynomial coefficients therefore reduces to binomial sums.

use super::{binomial, factorial, CoincidenceModel, OutcomeClass};
use crate::error::{domain, Result};

impl CoincidenceModel {
    /// `E[cos^2(k s/2)]`, `E[sin^2(k s/2)]` under the envelope.
    pub fn half_angle_moments(&self) -> (f64, f64) {
        let d = self.weights().delta;
        (0.5 * (1.0 + d), 0.5 * (1.0 - d))
    }

    /// Probability of an `L`-photon frame with `X` photons in C1.
    pub fn class_weight(&self, l: usize, x: usize) -> f64 {
        if l == 0 || x > l {
            return 0.0;
        }
        let table = MarginalTable::new(self, l, false);
        let spread = (2.0 * x as f64 - l as f64).powi(2) - l as f64;
        let mut acc = l as f64 * table.kappa(l as isize - 1, 0);
        if l >= 2 {
            acc += self.gamma() * self.gamma() * spread * table.kappa(l as isize - 2, 0);
        }
        acc / (factorial(x) * factorial(l - x))
    }

    /// Class probability, summed over the mirror splits where they differ.
    pub fn class_probability(&self, l: usize, class: OutcomeClass) -> Result<f64> {
        if !class.exists_for(l) {
            return domain(format!("class {} does not occur for L={l}", class.label()));
        }
        let x = class.representative_split(l)?;
        Ok(class.mirror_multiplicity() * self.class_weight(l, x))
    }

    /// `sum_X class_weight(l, X)`, which must reproduce the thermal law.
    pub fn split_total(&self, l: usize) -> f64 {
        (0..=l).map(|x| self.class_weight(l, x)).sum()
    }
}

/// Binomially smoothed thermal coefficients
/// `kappa_f(p) = sum_q c_{p+q} C(f,q) a^{f-q} b^q`, the weight of the
/// `t^p` coefficient of the fixed-photon polynomial once `f` further
/// photons are integrated out.
#[derive(Debug, Clone)]
pub(crate) struct MarginalTable {
    l: usize,
    gamma: f64,
    // kappa[f * l + p], f in 0..=l, p in 0..l
    kappa: Vec<f64>,
}

impl MarginalTable {
    /// With `normalized` the coefficients are rescaled by their maximum;
    /// conditionals are unaffected by the scale.
    pub(crate) fn new(model: &CoincidenceModel, l: usize, normalized: bool) -> Self {
        let (a, b) = model.half_angle_moments();
        let mut coef: Vec<f64> = (0..l).map(|j| model.log_coefficient(l, j)).collect();
        let top = if normalized {
            coef.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        } else {
            0.0
        };
        coef.iter_mut().for_each(|c| *c = (*c - top).exp());
        let mut kappa = vec![0.0; (l + 1) * l];
        for f in 0..=l {
            for p in 0..l {
                let mut acc = 0.0;
                for q in 0..=f {
                    if p + q >= l {
                        break;
                    }
                    acc += coef[p + q] * binomial(f, q) * a.powi((f - q) as i32) * b.powi(q as i32);
                }
                kappa[f * l + p] = acc;
            }
        }
        MarginalTable { l, gamma: model.gamma(), kappa }
    }

    #[inline]
    pub(crate) fn kappa(&self, f: isize, p: usize) -> f64 {
        if f < 0 || p >= self.l {
            0.0
        } else {
            self.kappa[f as usize * self.l + p]
        }
    }

    /// Bracket of a canonical-order frame integrated over all photons after
    /// the first `r`. `prod` holds the `r+1` coefficients of
    /// `prod_{i<r} (c_i + t s_i)`, `sum` the `r` coefficients of
    /// `sum_{i<r} sign_i prod_{l<r, l != i} (c_l + t s_l)`, and
    /// `free_sign_sum` is the sum of camera signs of the remaining photons.
    /// The `1/(X!(L-X)!)` factor is left out.
    #[inline]
    pub(crate) fn marginal(&self, r: usize, prod: &[f64], sum: &[f64], free_sign_sum: f64) -> f64 {
        let f = (self.l - r) as isize;
        let ff = f as f64;
        let g = self.gamma;
        let pair = g * g * (free_sign_sum * free_sign_sum - ff);
        let mut acc = 0.0;
        for p in 0..=r {
            let pi = prod[p];
            let si = if p < r { sum[p] } else { 0.0 };
            acc += self.kappa(f, p) * si * si
                + 2.0 * g * free_sign_sum * self.kappa(f - 1, p) * si * pi
                + (pair * self.kappa(f - 2, p) + ff * self.kappa(f - 1, p)) * pi * pi;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coincidence::{half_angles, mul_linear, signed_leave_one_out, DetectionOutcome};
    use crate::optics::{PsfModel, SourceScene};
    use approx::assert_relative_eq;

    #[test]
    fn splits_reproduce_thermal_law() {
        let psf = PsfModel::default();
        for &(s, n) in &[(0.0, 1.5), (0.1, 1.5), (1.0, 0.3), (5.0, 1.5), (20.0, 2.0)] {
            let m = CoincidenceModel::new(&SourceScene::new(s, n).unwrap(), &psf);
            for l in 1..=25 {
                assert_relative_eq!(m.split_total(l), m.frame_probability(l), max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn balanced_split_vanishes_without_separation() {
        let psf = PsfModel::default();
        let m = CoincidenceModel::new(&SourceScene::new(0.0, 1.0).unwrap(), &psf);
        for l in 1..12 {
            for x in 0..=l {
                let w = m.class_weight(l, x);
                if 2 * x == l {
                    assert!(w.abs() < 1e-15, "L={l} X={x} w={w}");
                } else {
                    assert!(w > 1e-6);
                }
            }
        }
    }

    #[test]
    fn marginal_end_points() {
        let psf = PsfModel::default();
        let m = CoincidenceModel::new(&SourceScene::new(1.3, 0.8).unwrap(), &psf);
        let k = [0.4, -0.2, 0.9, 0.05, -1.1];
        let l = k.len();
        let table = MarginalTable::new(&m, l, false);
        for x in 0..=l {
            let total: f64 = (0..l).map(|i| if i < x { 1.0 } else { -1.0 }).sum();
            let scale = factorial(x) * factorial(l - x);
            assert_relative_eq!(table.marginal(0, &[1.0], &[], total) / scale, m.class_weight(l, x), max_relative = 1e-13);

            let mut trig = [(0.0, 0.0); 5];
            half_angles(&k, m.separation(), &mut trig);
            let mut prod = [0.0; 6];
            prod[0] = 1.0;
            for (d, &(c, s)) in trig.iter().enumerate() {
                mul_linear(&mut prod, d, c, s);
            }
            let mut sum = [0.0; 5];
            signed_leave_one_out(&trig, |i| if i < x { 1.0 } else { -1.0 }, &mut sum);
            let o = DetectionOutcome::canonical(x, k.to_vec()).unwrap();
            assert_relative_eq!(table.marginal(l, &prod, &sum, 0.0) / scale, m.bracket(&o), max_relative = 1e-12);
        }
    }

    #[test]
    fn marginal_matches_quadrature_midway() {
        use crate::quadrature::{gauss_hermite_mean, NormalRule};
        let psf = PsfModel::default();
        let m = CoincidenceModel::new(&SourceScene::new(2.1, 1.2).unwrap(), &psf);
        let l = 5;
        let table = MarginalTable::new(&m, l, false);
        let eval = m.frame_evaluator(l);
        let fixed = [0.35, -0.8];
        let rule = NormalRule::new(40);
        for x in 0..=l {
            let sign = |i: usize| if i < x { 1.0 } else { -1.0 };
            let mut trig = [(0.0, 0.0); 2];
            half_angles(&fixed, m.separation(), &mut trig);
            let mut prod = [1.0, 0.0, 0.0];
            for (d, &(c, s)) in trig.iter().enumerate() {
                mul_linear(&mut prod, d, c, s);
            }
            let mut sum = [0.0; 2];
            signed_leave_one_out(&trig, sign, &mut sum);
            let free: f64 = (2..l).map(sign).sum();
            let scale = factorial(x) * factorial(l - x);
            let closed = table.marginal(2, &prod, &sum, free) / scale;
            let numeric = gauss_hermite_mean(3, &rule, psf.sigma_k(), |k| {
                let full = [fixed[0], fixed[1], k[0], k[1], k[2]];
                eval.bracket(x, &full)
            });
            assert_relative_eq!(closed, numeric, max_relative = 1e-10);
        }
    }
}
