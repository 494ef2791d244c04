//! Gaussian point-spread function, thermal mode weights and the far-field
//! pixel condition.
//!
//! Lengths are in units chosen by the caller; the conventional choice is
//! `sigma_x = 1`, in which case momenta come out in units of `1/sigma_x`
//! and Fisher informations in `1/sigma_x^2`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{domain, Error, Result};

/// Gaussian PSF with position spread `sigma_x` and momentum spread
/// `sigma_k = 1 / (2 sigma_x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsfModel {
    sigma_x: f64,
}

impl Default for PsfModel {
    fn default() -> Self {
        PsfModel { sigma_x: 1.0 }
    }
}

impl PsfModel {
    pub fn new(sigma_x: f64) -> Result<Self> {
        if !(sigma_x > 0.0 && sigma_x.is_finite()) {
            return domain(format!("sigma_x must be positive and finite, got {sigma_x}"));
        }
        Ok(PsfModel { sigma_x })
    }

    pub fn sigma_x(&self) -> f64 {
        self.sigma_x
    }

    pub fn sigma_k(&self) -> f64 {
        0.5 / self.sigma_x
    }

    /// Real position amplitude, |psi|^2 is the normal density of variance sigma_x^2.
    pub fn position_amplitude(&self, x: f64) -> f64 {
        let v = self.sigma_x * self.sigma_x;
        (2.0 * PI * v).powf(-0.25) * (-x * x / (4.0 * v)).exp()
    }

    /// Single-photon momentum density |phi(k)|^2 (normal, variance sigma_k^2).
    pub fn momentum_density(&self, k: f64) -> f64 {
        let v = self.sigma_k() * self.sigma_k();
        (-k * k / (2.0 * v)).exp() / (2.0 * PI * v).sqrt()
    }

    pub fn log_momentum_density(&self, k: f64) -> f64 {
        let v = self.sigma_k() * self.sigma_k();
        -k * k / (2.0 * v) - 0.5 * (2.0 * PI * v).ln()
    }

    /// Density of the mean momentum (k1+k2)/2 of two independent photons.
    pub fn mean_momentum_density(&self, kbar: f64) -> f64 {
        let v = self.sigma_k() * self.sigma_k();
        (-kbar * kbar / v).exp() / (PI * v).sqrt()
    }

    /// Density of the momentum difference k1-k2 of two independent photons.
    pub fn difference_density(&self, dk: f64) -> f64 {
        let v = self.sigma_k() * self.sigma_k();
        (-dk * dk / (4.0 * v)).exp() / (4.0 * PI * v).sqrt()
    }

    /// Overlap of the two displaced PSFs, `exp(-s^2 sigma_k^2 / 2)`.
    pub fn overlap(&self, s: f64) -> f64 {
        let sk = s * self.sigma_k();
        (-0.5 * sk * sk).exp()
    }

    pub fn overlap_derivative(&self, s: f64) -> f64 {
        let v = self.sigma_k() * self.sigma_k();
        -s * v * self.overlap(s)
    }

    /// `E[cos(k s)]` under the mean-momentum density, equally `E[cos(dk s / 2)]`
    /// under the difference density: `exp(-s^2 sigma_k^2 / 4)`.
    pub fn pair_visibility(&self, s: f64) -> f64 {
        let sk = s * self.sigma_k();
        (-0.25 * sk * sk).exp()
    }

    pub fn pair_visibility_derivative(&self, s: f64) -> f64 {
        let v = self.sigma_k() * self.sigma_k();
        -0.5 * s * v * self.pair_visibility(s)
    }

    /// `E[cos(k s / 2)]` under the single-photon density.
    pub fn half_angle_coherence(&self, s: f64) -> f64 {
        let sk = s * self.sigma_k();
        (-0.125 * sk * sk).exp()
    }
}

pub fn psf_overlap_delta(psf: &PsfModel, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return domain(format!("separation must be non-negative, got {s}"));
    }
    Ok(psf.overlap(s))
}

pub fn momentum_envelope(psf: &PsfModel, k: f64) -> f64 {
    psf.momentum_density(k)
}

/// Two thermal point sources of equal brightness, centred on the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceScene {
    separation: f64,
    brightness: f64,
}

impl SourceScene {
    pub fn new(separation: f64, brightness: f64) -> Result<Self> {
        if !(separation >= 0.0 && separation.is_finite()) {
            return domain(format!("separation must be finite and >= 0, got {separation}"));
        }
        if !(brightness > 0.0 && brightness.is_finite()) {
            return domain(format!("brightness must be finite and > 0, got {brightness}"));
        }
        Ok(SourceScene { separation, brightness })
    }

    pub fn separation(&self) -> f64 {
        self.separation
    }

    pub fn brightness(&self) -> f64 {
        self.brightness
    }

    pub fn centroid(&self) -> f64 {
        0.0
    }

    pub fn with_separation(&self, s: f64) -> Result<Self> {
        SourceScene::new(s, self.brightness)
    }
}

/// Thermal weights of the symmetric and antisymmetric source modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeWeights {
    pub delta: f64,
    pub m_plus: f64,
    pub m_minus: f64,
    pub p0: f64,
    pub r_plus: f64,
    pub r_minus: f64,
}

impl ModeWeights {
    pub fn from_overlap(brightness: f64, delta: f64) -> Self {
        let m_plus = brightness * (1.0 + delta);
        let m_minus = brightness * (1.0 - delta);
        ModeWeights {
            delta,
            m_plus,
            m_minus,
            p0: 1.0 / ((1.0 + m_plus) * (1.0 + m_minus)),
            r_plus: m_plus / (1.0 + m_plus),
            r_minus: m_minus / (1.0 + m_minus),
        }
    }

    /// Probability of `m` photons in the symmetric mode, relative to vacuum.
    pub fn plus_ratio(&self, m: u32) -> f64 {
        self.r_plus.powi(m as i32)
    }

    pub fn minus_ratio(&self, m: u32) -> f64 {
        self.r_minus.powi(m as i32)
    }

    /// Probability that a frame holds `l` photons in total, reference included.
    pub fn frame_probability(&self, l: usize) -> f64 {
        if l == 0 {
            return 0.0;
        }
        let n = l - 1;
        let mut acc = 0.0;
        for j in 0..=n {
            acc += self.r_plus.powi((n - j) as i32) * self.r_minus.powi(j as i32);
        }
        self.p0 * acc
    }
}

pub fn mode_weights(scene: &SourceScene, psf: &PsfModel) -> ModeWeights {
    ModeWeights::from_overlap(scene.brightness(), psf.overlap(scene.separation()))
}

/// Far-field camera: distance `d`, wavenumber `k0`, pixel pitch `dy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorGeometry {
    distance: f64,
    wavenumber: f64,
    pixel_pitch: f64,
}

impl DetectorGeometry {
    pub fn new(distance: f64, wavenumber: f64, pixel_pitch: f64) -> Result<Self> {
        for (name, v) in [("distance", distance), ("wavenumber", wavenumber), ("pixel pitch", pixel_pitch)] {
            if !(v > 0.0 && v.is_finite()) {
                return domain(format!("{name} must be positive and finite, got {v}"));
            }
        }
        Ok(DetectorGeometry { distance, wavenumber, pixel_pitch })
    }

    pub fn momentum_of(&self, y: f64) -> f64 {
        y * self.wavenumber / self.distance
    }

    pub fn position_of(&self, k: f64) -> f64 {
        k * self.distance / self.wavenumber
    }

    /// Momentum width of one pixel.
    pub fn momentum_bin(&self) -> f64 {
        self.momentum_of(self.pixel_pitch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelVerdict {
    Satisfied,
    Marginal,
    Violated,
    Unconstrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelReport {
    pub ratio: f64,
    pub threshold: f64,
    pub verdict: PixelVerdict,
}

impl PixelReport {
    pub fn pass(&self) -> bool {
        matches!(self.verdict, PixelVerdict::Satisfied | PixelVerdict::Unconstrained)
    }
}

pub const DEFAULT_PIXEL_THRESHOLD: f64 = 0.1;

pub fn validate_pixel_geometry(geom: &DetectorGeometry, s: f64) -> Result<PixelReport> {
    validate_pixel_geometry_with(geom, s, DEFAULT_PIXEL_THRESHOLD)
}

/// Compares the pixel pitch with the fringe period `d / (K0 s)` of the
/// momentum-space beating. The ratio must be small for one pixel to see
/// a single fringe value.
pub fn validate_pixel_geometry_with(
    geom: &DetectorGeometry,
    s: f64,
    threshold: f64,
) -> Result<PixelReport> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::Domain(format!("separation must be finite and >= 0, got {s}")));
    }
    if s == 0.0 {
        return Ok(PixelReport { ratio: 0.0, threshold, verdict: PixelVerdict::Unconstrained });
    }
    let ratio = geom.pixel_pitch * geom.wavenumber * s / geom.distance;
    let verdict = if ratio <= threshold {
        PixelVerdict::Satisfied
    } else if ratio <= 1.0 {
        PixelVerdict::Marginal
    } else {
        PixelVerdict::Violated
    };
    Ok(PixelReport { ratio, threshold, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mode_weights_factorize() {
        let psf = PsfModel::default();
        for &(s, n) in &[(0.0, 1.0), (0.3, 0.01), (2.0, 1.5), (40.0, 3.0)] {
            let w = mode_weights(&SourceScene::new(s, n).unwrap(), &psf);
            assert_relative_eq!(w.p0 * (1.0 + w.m_plus) * (1.0 + w.m_minus), 1.0, epsilon = 1e-15);
            assert!(w.r_plus < 1.0 && w.r_minus >= 0.0);
        }
    }

    #[test]
    fn known_weights() {
        let w = ModeWeights::from_overlap(1.0, 0.0);
        assert_relative_eq!(w.p0, 0.25);
        let w = ModeWeights::from_overlap(1.0, 1.0);
        assert_relative_eq!(w.p0, 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!((w.m_plus, w.m_minus), (2.0, 0.0));
    }

    #[test]
    fn frame_law_sums_to_one() {
        let w = ModeWeights::from_overlap(1.5, 0.4);
        let total: f64 = (1..400).map(|l| w.frame_probability(l)).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        assert_relative_eq!(w.frame_probability(1), w.p0);
    }

    #[test]
    fn pixel_examples() {
        let k0 = 2.0 * PI / 2.5e-6;
        let g = DetectorGeometry::new(1.0, k0, 100e-6).unwrap();
        let r = validate_pixel_geometry(&g, 1e-6).unwrap();
        assert_relative_eq!(r.ratio, 1e-4 * k0 * 1e-6, max_relative = 1e-12);
        assert_relative_eq!(r.ratio, 2.513274e-4, max_relative = 1e-6);
        assert!(r.pass());
        assert_eq!(validate_pixel_geometry(&g, 0.0).unwrap().verdict, PixelVerdict::Unconstrained);
        let fringe = 1.0 / (k0 * 1e-6);
        let quarter = DetectorGeometry::new(1.0, k0, 0.25 * fringe).unwrap();
        assert_eq!(validate_pixel_geometry(&quarter, 1e-6).unwrap().verdict, PixelVerdict::Marginal);
        let wide = DetectorGeometry::new(1.0, k0, 10.0 * fringe).unwrap();
        let r = validate_pixel_geometry(&wide, 1e-6).unwrap();
        assert_eq!(r.verdict, PixelVerdict::Violated);
        assert!(!r.pass());
        let fine = DetectorGeometry::new(1.0, k0, 1e-12).unwrap();
        assert!(validate_pixel_geometry(&fine, 1e-6).unwrap().ratio < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(PsfModel::new(0.0).is_err());
        assert!(SourceScene::new(-1.0, 1.0).is_err());
        assert!(SourceScene::new(1.0, 0.0).is_err());
        assert!(psf_overlap_delta(&PsfModel::default(), -0.1).is_err());
    }
}
