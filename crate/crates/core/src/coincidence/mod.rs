//! L-photon coincidence densities for the reference photon mixed with the
//! two-source thermal field on a balanced beamsplitter.
//!
//! An outcome records `L` photons, `X` of them in camera C1, together with
//! their far-field momenta. Densities are over ordered momentum tuples and
//! integrate, summed over `X`, to the probability of an `L`-photon frame.
//!
//! Within one camera every photon picks up the same interferometric phase,
//! and the two cameras differ by `pi`, so only a sign per photon survives.
//! The bracket factor is then
//!
//! `sum_j c_j (sum_i sign_i y_ij)^2 / (X! (L-X)!)`
//!
//! where `y_ij` is the sum over distinct arrangements of `j` sines and
//! `L-1-j` cosines of the half-angles `k s / 2` of all photons but `i`.

pub mod special;
pub mod weights;

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{domain, Error, Result};
use crate::optics::{mode_weights, ModeWeights, PsfModel, SourceScene};

/// Largest photon number any evaluator accepts.
pub const MAX_PHOTONS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    momenta: Vec<f64>,
    assignment: Vec<bool>,
}

impl DetectionOutcome {
    /// `assignment[i]` is true when photon `i` landed in camera C1.
    pub fn new(assignment: Vec<bool>, momenta: Vec<f64>) -> Result<Self> {
        if momenta.is_empty() {
            return Err(Error::InvalidOutcome("a frame always holds the reference photon".into()));
        }
        if momenta.len() != assignment.len() {
            return Err(Error::InvalidOutcome(format!(
                "{} momenta but {} camera flags",
                momenta.len(),
                assignment.len()
            )));
        }
        if momenta.len() > MAX_PHOTONS {
            return Err(Error::InvalidOutcome(format!("at most {MAX_PHOTONS} photons supported")));
        }
        if momenta.iter().any(|k| !k.is_finite()) {
            return Err(Error::InvalidOutcome("momenta must be finite".into()));
        }
        Ok(DetectionOutcome { momenta, assignment })
    }

    /// The first `x` momenta are in C1, the rest in C2.
    pub fn canonical(x: usize, momenta: Vec<f64>) -> Result<Self> {
        if x > momenta.len() {
            return Err(Error::InvalidOutcome(format!("split {x} exceeds photon count {}", momenta.len())));
        }
        let assignment = (0..momenta.len()).map(|i| i < x).collect();
        DetectionOutcome::new(assignment, momenta)
    }

    pub fn photon_count(&self) -> usize {
        self.momenta.len()
    }

    pub fn camera_split(&self) -> usize {
        self.assignment.iter().filter(|&&q| q).count()
    }

    pub fn momenta(&self) -> &[f64] {
        &self.momenta
    }

    pub fn assignment(&self) -> &[bool] {
        &self.assignment
    }

    pub fn class(&self) -> OutcomeClass {
        OutcomeClass::classify(self.photon_count(), self.camera_split())
    }
}

/// Mean and difference momentum of a photon pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPhotonCoordinates {
    pub k_bar: f64,
    pub delta_k: f64,
}

impl TwoPhotonCoordinates {
    pub fn from_momenta(k1: f64, k2: f64) -> Self {
        TwoPhotonCoordinates { k_bar: 0.5 * (k1 + k2), delta_k: k1 - k2 }
    }

    pub fn momenta(&self) -> (f64, f64) {
        (self.k_bar + 0.5 * self.delta_k, self.k_bar - 0.5 * self.delta_k)
    }
}

/// Coarse outcome classes. Probabilities of B and UA are summed over the
/// mirror pair `X`, `L - X`; A is the balanced split of an even frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeClass {
    /// All photons in one camera.
    Bunched,
    /// Photons in both cameras, unequal numbers.
    Unbalanced,
    /// Equal numbers in both cameras.
    Balanced,
}

impl OutcomeClass {
    pub fn classify(l: usize, x: usize) -> Self {
        if x == 0 || x == l {
            OutcomeClass::Bunched
        } else if 2 * x == l {
            OutcomeClass::Balanced
        } else {
            OutcomeClass::Unbalanced
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            OutcomeClass::Bunched => "B",
            OutcomeClass::Unbalanced => "UA",
            OutcomeClass::Balanced => "A",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "B" | "b" => Ok(OutcomeClass::Bunched),
            "UA" | "ua" => Ok(OutcomeClass::Unbalanced),
            "A" | "a" => Ok(OutcomeClass::Balanced),
            other => domain(format!("unknown outcome class {other:?} (expected B, UA or A)")),
        }
    }

    pub fn exists_for(&self, l: usize) -> bool {
        match self {
            OutcomeClass::Bunched => l >= 1,
            OutcomeClass::Balanced => l >= 2 && l % 2 == 0,
            OutcomeClass::Unbalanced => l >= 3,
        }
    }

    /// Sign of the pair interference term; only defined for two photons.
    pub fn alpha(&self) -> Option<f64> {
        match self {
            OutcomeClass::Bunched => Some(1.0),
            OutcomeClass::Balanced => Some(-1.0),
            OutcomeClass::Unbalanced => None,
        }
    }

    /// Camera split used to represent the class in canonical order.
    ///
    /// For four photons the unbalanced class is represented by `X = 1`,
    /// matching the all-minus sign pattern of its table entry.
    pub fn representative_split(&self, l: usize) -> Result<usize> {
        if !self.exists_for(l) {
            return domain(format!("class {} does not occur for L={l}", self.label()));
        }
        Ok(match self {
            OutcomeClass::Bunched => l,
            OutcomeClass::Balanced => l / 2,
            OutcomeClass::Unbalanced => {
                if l == 3 {
                    2
                } else {
                    1
                }
            }
        })
    }

    /// Number of camera splits folded into the class probability.
    pub fn mirror_multiplicity(&self) -> f64 {
        match self {
            OutcomeClass::Balanced => 1.0,
            _ => 2.0,
        }
    }

    /// Relative signs of the terms leaving out photons 2..L, relative to
    /// the term leaving out photon 1, for three and four photons.
    pub fn lambda(&self, l: usize) -> Option<&'static [f64]> {
        match (l, self) {
            (3, OutcomeClass::Bunched) => Some(&[1.0, 1.0]),
            (3, OutcomeClass::Unbalanced) => Some(&[1.0, -1.0]),
            (4, OutcomeClass::Bunched) => Some(&[1.0, 1.0, 1.0]),
            (4, OutcomeClass::Balanced) => Some(&[1.0, -1.0, -1.0]),
            (4, OutcomeClass::Unbalanced) => Some(&[-1.0, -1.0, -1.0]),
            _ => None,
        }
    }

    /// Indistinguishability factor of the three and four photon forms.
    pub fn f_factor(&self, l: usize) -> Option<f64> {
        match (l, self) {
            (3, OutcomeClass::Bunched) => Some(1.0 / 6.0),
            (3, OutcomeClass::Unbalanced) => Some(0.5),
            (4, OutcomeClass::Bunched) => Some(1.0 / 24.0),
            (4, OutcomeClass::Balanced) => Some(0.125),
            (4, OutcomeClass::Unbalanced) => Some(1.0 / 6.0),
            _ => None,
        }
    }

    pub fn all_for(l: usize) -> Vec<OutcomeClass> {
        [OutcomeClass::Bunched, OutcomeClass::Unbalanced, OutcomeClass::Balanced]
            .into_iter()
            .filter(|c| c.exists_for(l))
            .collect()
    }
}

/// Phase picked up by the term that leaves out photon `i`: each other
/// photon contributes `pi/2` if it reached C2, photon `i` contributes
/// `pi/2` if it reached C1. Returned modulo `2 pi`.
pub fn interference_phase(assignment: &[bool], i: usize) -> Result<f64> {
    if i >= assignment.len() {
        return domain(format!("slot {i} out of range for {} photons", assignment.len()));
    }
    let mut quarter_turns = 0usize;
    for (m, &q) in assignment.iter().enumerate() {
        let source = m != i;
        // a source photon is phase free in C1, a reference photon in C2
        if source == !q {
            quarter_turns += 1;
        }
    }
    Ok((quarter_turns % 4) as f64 * FRAC_PI_2)
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, m| acc * m as f64)
}

pub(crate) fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|m| (m as f64).ln()).sum()
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[inline]
pub(crate) fn half_angles(momenta: &[f64], s: f64, out: &mut [(f64, f64)]) {
    for (o, &k) in out.iter_mut().zip(momenta) {
        let (sn, cs) = (0.5 * k * s).sin_cos();
        *o = (cs, sn);
    }
}

/// Multiplies `poly` (degree `deg`) by `c + t s` in place.
#[inline]
pub(crate) fn mul_linear(poly: &mut [f64], deg: usize, c: f64, s: f64) {
    poly[deg + 1] = poly[deg] * s;
    for m in (1..=deg).rev() {
        poly[m] = poly[m] * c + poly[m - 1] * s;
    }
    poly[0] *= c;
}

/// Coefficients of `sum_i sign_i prod_{l != i} (c_l + t s_l)`, written to
/// `out[0..L]`.
#[inline]
pub(crate) fn signed_leave_one_out(trig: &[(f64, f64)], sign: impl Fn(usize) -> f64, out: &mut [f64]) {
    let l = trig.len();
    let mut prod = [0.0f64; MAX_PHOTONS + 1];
    prod[0] = 1.0;
    out[..l].iter_mut().for_each(|v| *v = 0.0);
    for (idx, &(c, s)) in trig.iter().enumerate() {
        // out has degree idx-1 here, prod degree idx
        let sg = sign(idx);
        if idx > 0 {
            out[idx] = out[idx - 1] * s;
            for m in (1..idx).rev() {
                out[m] = out[m] * c + out[m - 1] * s;
            }
            out[0] *= c;
        }
        for m in 0..=idx {
            out[m] += sg * prod[m];
        }
        mul_linear(&mut prod, idx, c, s);
    }
}

/// Sum over permutations of the `L-1` arguments with the first `L-1-j`
/// slots taking cosines and the remaining `j` slots sines of `k s / 2`.
pub fn trig_xi(j: usize, momenta: &[f64], s: f64) -> Result<f64> {
    let n = momenta.len();
    let arrangements = arrangement_xi(j, momenta, s)?;
    Ok(arrangements * factorial(n - j) * factorial(j))
}

/// Sum over distinct ways of choosing `j` of the arguments for sines and
/// the rest for cosines, i.e. the coefficient of `t^j` in
/// `prod (cos(k s / 2) + t sin(k s / 2))`.
pub fn arrangement_xi(j: usize, momenta: &[f64], s: f64) -> Result<f64> {
    let n = momenta.len();
    if j > n {
        return domain(format!("index j={j} out of range for {n} arguments"));
    }
    if n > MAX_PHOTONS {
        return domain(format!("at most {MAX_PHOTONS} arguments supported"));
    }
    let mut poly = [0.0f64; MAX_PHOTONS + 1];
    poly[0] = 1.0;
    for (deg, &k) in momenta.iter().enumerate() {
        let (sn, cs) = (0.5 * k * s).sin_cos();
        mul_linear(&mut poly, deg, cs, sn);
    }
    Ok(poly[j])
}

/// Evaluator of the coincidence densities at one separation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceModel {
    psf: PsfModel,
    brightness: f64,
    separation: f64,
    weights: ModeWeights,
    gamma: f64,
}

impl CoincidenceModel {
    pub fn new(scene: &SourceScene, psf: &PsfModel) -> Self {
        CoincidenceModel {
            psf: *psf,
            brightness: scene.brightness(),
            separation: scene.separation(),
            weights: mode_weights(scene, psf),
            gamma: psf.half_angle_coherence(scene.separation()),
        }
    }

    /// Same model with the PSF overlap forced to zero in the thermal
    /// weights, keeping the momentum-space beating intact.
    pub fn without_overlap(&self) -> Self {
        CoincidenceModel {
            weights: ModeWeights::from_overlap(self.brightness, 0.0),
            ..*self
        }
    }

    /// Re-evaluates the model at another separation (clamped at zero).
    pub fn at_separation(&self, s: f64) -> Self {
        let s = s.max(0.0);
        CoincidenceModel {
            separation: s,
            weights: ModeWeights::from_overlap(self.brightness, self.psf.overlap(s)),
            gamma: self.psf.half_angle_coherence(s),
            ..*self
        }
    }

    pub fn psf(&self) -> &PsfModel {
        &self.psf
    }

    pub fn brightness(&self) -> f64 {
        self.brightness
    }

    pub fn separation(&self) -> f64 {
        self.separation
    }

    pub fn weights(&self) -> &ModeWeights {
        &self.weights
    }

    /// `E[cos(k s / 2)]` under the single-photon envelope.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Log of the thermal coefficient of the `j`-sine terms of an `L`-photon
    /// frame, before the `1/(X!(L-X)!)` split factor.
    pub fn log_coefficient(&self, l: usize, j: usize) -> f64 {
        debug_assert!(l >= 1 && j < l);
        let w = &self.weights;
        let n = l - 1;
        let mut v = ln_factorial(n - j) + ln_factorial(j) + w.p0.ln() - std::f64::consts::LN_2
            - (n - j) as f64 * w.m_plus.ln_1p();
        if n > 0 {
            v += n as f64 * self.brightness.ln();
        }
        if j > 0 {
            v -= j as f64 * w.m_minus.ln_1p();
        }
        v
    }

    pub fn coefficients(&self, l: usize) -> Vec<f64> {
        (0..l).map(|j| self.log_coefficient(l, j).exp()).collect()
    }

    fn check(&self, outcome: &DetectionOutcome) -> Result<()> {
        if outcome.photon_count() == 0 {
            return domain("L=0 frames do not exist");
        }
        Ok(())
    }

    fn signed_sums(&self, outcome: &DetectionOutcome, out: &mut [f64]) {
        let l = outcome.photon_count();
        let mut trig = [(0.0, 0.0); MAX_PHOTONS];
        half_angles(outcome.momenta(), self.separation, &mut trig[..l]);
        let q = outcome.assignment();
        signed_leave_one_out(&trig[..l], |i| if q[i] { 1.0 } else { -1.0 }, out);
    }

    /// Density divided by the envelope product `prod |phi(k_m)|^2`.
    pub fn bracket(&self, outcome: &DetectionOutcome) -> f64 {
        let l = outcome.photon_count();
        let x = outcome.camera_split();
        let mut t = [0.0f64; MAX_PHOTONS];
        self.signed_sums(outcome, &mut t);
        let mut acc = 0.0;
        for j in 0..l {
            acc += self.log_coefficient(l, j).exp() * t[j] * t[j];
        }
        acc / (factorial(x) * factorial(l - x))
    }

    pub fn log_bracket(&self, outcome: &DetectionOutcome) -> f64 {
        let l = outcome.photon_count();
        let x = outcome.camera_split();
        let mut t = [0.0f64; MAX_PHOTONS];
        self.signed_sums(outcome, &mut t);
        let mut logc = [0.0f64; MAX_PHOTONS];
        let mut top = f64::NEG_INFINITY;
        for j in 0..l {
            logc[j] = self.log_coefficient(l, j);
            if t[j] != 0.0 {
                top = top.max(logc[j]);
            }
        }
        if top == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let mut acc = 0.0;
        for j in 0..l {
            acc += (logc[j] - top).exp() * t[j] * t[j];
        }
        top + acc.ln() - ln_factorial(x) - ln_factorial(l - x)
    }

    pub fn log_envelope(&self, momenta: &[f64]) -> f64 {
        momenta.iter().map(|&k| self.psf.log_momentum_density(k)).sum()
    }

    pub fn envelope(&self, momenta: &[f64]) -> f64 {
        momenta.iter().map(|&k| self.psf.momentum_density(k)).product()
    }

    pub fn density(&self, outcome: &DetectionOutcome) -> Result<f64> {
        self.check(outcome)?;
        Ok(self.envelope(outcome.momenta()) * self.bracket(outcome))
    }

    pub fn log_density(&self, outcome: &DetectionOutcome) -> Result<f64> {
        self.check(outcome)?;
        Ok(self.log_envelope(outcome.momenta()) + self.log_bracket(outcome))
    }

    /// Brackets of every split `X = 0..=L` with the momenta taken in
    /// canonical order (first `X` in C1). Written to `out[0..=L]`.
    pub fn canonical_brackets(&self, momenta: &[f64], out: &mut [f64]) {
        self.frame_evaluator(momenta.len()).canonical_brackets(momenta, out)
    }

    /// Evaluator with the coefficients of `L`-photon frames cached.
    pub fn frame_evaluator(&self, l: usize) -> FrameEvaluator {
        assert!((1..=MAX_PHOTONS).contains(&l), "photon count {l} out of range");
        let mut coef = [0.0; MAX_PHOTONS];
        for (j, c) in coef.iter_mut().enumerate().take(l) {
            *c = self.log_coefficient(l, j).exp();
        }
        let mut split_norm = [0.0; MAX_PHOTONS + 1];
        for (x, v) in split_norm.iter_mut().enumerate().take(l + 1) {
            *v = 1.0 / (factorial(x) * factorial(l - x));
        }
        FrameEvaluator { l, separation: self.separation, coef, split_norm }
    }

    /// Probability of an `L`-photon frame.
    pub fn frame_probability(&self, l: usize) -> f64 {
        self.weights.frame_probability(l)
    }
}

/// Bracket evaluator for frames of one photon number at one separation.
#[derive(Debug, Clone)]
pub struct FrameEvaluator {
    l: usize,
    separation: f64,
    coef: [f64; MAX_PHOTONS],
    split_norm: [f64; MAX_PHOTONS + 1],
}

impl FrameEvaluator {
    pub fn photon_count(&self) -> usize {
        self.l
    }

    /// Bracket of the canonical-order outcome with `x` photons in C1.
    #[inline]
    pub fn bracket(&self, x: usize, momenta: &[f64]) -> f64 {
        let l = self.l;
        debug_assert_eq!(momenta.len(), l);
        let mut trig = [(0.0, 0.0); MAX_PHOTONS];
        half_angles(momenta, self.separation, &mut trig[..l]);
        let mut t = [0.0f64; MAX_PHOTONS];
        signed_leave_one_out(&trig[..l], |i| if i < x { 1.0 } else { -1.0 }, &mut t);
        let mut acc = 0.0;
        for j in 0..l {
            acc += self.coef[j] * t[j] * t[j];
        }
        acc * self.split_norm[x]
    }

    /// All splits at once, written to `out[0..=L]`.
    pub fn canonical_brackets(&self, momenta: &[f64], out: &mut [f64]) {
        let l = self.l;
        assert!(momenta.len() == l && out.len() > l);
        let mut trig = [(0.0, 0.0); MAX_PHOTONS];
        half_angles(momenta, self.separation, &mut trig[..l]);
        let mut t = [0.0f64; MAX_PHOTONS];
        for x in 0..=l {
            signed_leave_one_out(&trig[..l], |i| if i < x { 1.0 } else { -1.0 }, &mut t);
            let mut acc = 0.0;
            for j in 0..l {
                acc += self.coef[j] * t[j] * t[j];
            }
            out[x] = acc * self.split_norm[x];
        }
    }
}

pub fn coincidence_density(outcome: &DetectionOutcome, scene: &SourceScene, psf: &PsfModel) -> Result<f64> {
    CoincidenceModel::new(scene, psf).density(outcome)
}

pub fn log_coincidence_density(
    outcome: &DetectionOutcome,
    scene: &SourceScene,
    psf: &PsfModel,
) -> Result<f64> {
    CoincidenceModel::new(scene, psf).log_density(outcome)
}

/// Phase of the left-out term as a unit complex sign; the camera-resolved
/// phases differ by exactly `pi` between C1 and C2.
pub fn relative_sign(assignment: &[bool], i: usize, reference: usize) -> Result<f64> {
    let a = interference_phase(assignment, i)?;
    let b = interference_phase(assignment, reference)?;
    Ok((a - b).cos().round())
}
