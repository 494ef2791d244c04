//! Closed forms for two, three and four photons, the small- and
//! large-separation limits, and the two-photon factorization into a
//! split probability and conditional momentum densities.

use serde::{Deserialize, Serialize};

use super::{arrangement_xi, binomial, factorial, CoincidenceModel, DetectionOutcome, OutcomeClass, TwoPhotonCoordinates};
use crate::error::{domain, Result};
use crate::optics::{PsfModel, SourceScene};

fn require(class: OutcomeClass, l: usize) -> Result<()> {
    if class.exists_for(l) {
        Ok(())
    } else {
        domain(format!("class {} does not occur for L={l}", class.label()))
    }
}

/// Two-photon class density in mean/difference coordinates. The bunched
/// class includes both cameras.
pub fn two_photon_density(coords: TwoPhotonCoordinates, class: OutcomeClass, model: &CoincidenceModel) -> Result<f64> {
    require(class, 2)?;
    let alpha = class.alpha().expect("two-photon classes carry a sign");
    let n = model.brightness();
    let w = model.weights();
    let s = model.separation();
    let psf = model.psf();
    Ok(n * w.p0
        * w.p0
        * psf.mean_momentum_density(coords.k_bar)
        * psf.difference_density(coords.delta_k)
        * (1.0 + n - alpha * n * w.delta * (coords.k_bar * s).cos())
        * beat_factor(alpha, coords.delta_k, s))
}

/// `1 + alpha cos(dk s / 2)` as `2 cos^2` or `2 sin^2` of the quarter
/// angle, accurate near the zeros.
fn beat_factor(alpha: f64, delta_k: f64, s: f64) -> f64 {
    let q = 0.25 * delta_k * s;
    if alpha > 0.0 {
        2.0 * q.cos().powi(2)
    } else {
        2.0 * q.sin().powi(2)
    }
}

/// Visibility of the mean-momentum fringe of two-photon events.
pub fn two_photon_visibility(model: &CoincidenceModel) -> f64 {
    let n = model.brightness();
    n * model.weights().delta / (1.0 + n)
}

fn table_form(momenta: &[f64], class: OutcomeClass, model: &CoincidenceModel, big_xi: &[f64]) -> Result<f64> {
    let l = momenta.len();
    require(class, l)?;
    let lambda = class.lambda(l).expect("tabulated class");
    let f = class.f_factor(l).expect("tabulated class");
    let s = model.separation();
    let mut acc = 0.0;
    let mut rest = Vec::with_capacity(l - 1);
    for (j, &xi_weight) in big_xi.iter().enumerate() {
        let mut amp = 0.0;
        for i in 0..l {
            rest.clear();
            rest.extend(momenta.iter().enumerate().filter(|&(m, _)| m != i).map(|(_, &k)| k));
            let sign = if i == 0 { 1.0 } else { lambda[i - 1] };
            amp += sign * arrangement_xi(j, &rest, s)?;
        }
        acc += xi_weight * amp * amp;
    }
    Ok(f * model.envelope(momenta) * acc)
}

/// Three-photon class density (bunched or unbalanced).
pub fn three_photon_density(k: [f64; 3], class: OutcomeClass, model: &CoincidenceModel) -> Result<f64> {
    let w = model.weights();
    let n2 = model.brightness().powi(2);
    let xi = [
        2.0 * w.p0 * n2 / (1.0 + w.m_plus).powi(2),
        w.p0 * w.p0 * n2,
        2.0 * w.p0 * n2 / (1.0 + w.m_minus).powi(2),
    ];
    table_form(&k, class, model, &xi)
}

/// Four-photon class density (bunched, unbalanced or balanced).
pub fn four_photon_density(k: [f64; 4], class: OutcomeClass, model: &CoincidenceModel) -> Result<f64> {
    let w = model.weights();
    let n3 = model.brightness().powi(3);
    let xi = [
        6.0 * w.p0 * n3 / (1.0 + w.m_plus).powi(3),
        2.0 * w.p0 * w.p0 * n3 / (1.0 + w.m_plus),
        2.0 * w.p0 * w.p0 * n3 / (1.0 + w.m_minus),
        6.0 * w.p0 * n3 / (1.0 + w.m_minus).powi(3),
    ];
    table_form(&k, class, model, &xi)
}

/// Leading small-separation density of the balanced split of `2P` photons.
///
/// The prefactor is `(2P-2)!/(2 P! P!)`; the ratio to the exact density
/// tends to one as `s -> 0`.
pub fn subrayleigh_leading_density(p: usize, momenta: &[f64], model: &CoincidenceModel) -> Result<f64> {
    if p == 0 || momenta.len() != 2 * p {
        return domain(format!("need 2P momenta with P >= 1, got P={p} and {} momenta", momenta.len()));
    }
    let n = model.brightness();
    let s = model.separation();
    let pref = factorial(2 * p - 2) / (2.0 * factorial(p) * factorial(p));
    let ratio = (n / (1.0 + 2.0 * n)).powi(2 * p as i32 - 1);
    let imbalance: f64 = momenta[..p].iter().sum::<f64>() - momenta[p..].iter().sum::<f64>();
    Ok(pref * ratio * model.envelope(momenta) * imbalance * imbalance * s * s / 4.0)
}

/// Large-separation form: the thermal weights evaluated with no PSF overlap.
pub fn asymptotic_density(outcome: &DetectionOutcome, model: &CoincidenceModel) -> Result<f64> {
    model.without_overlap().density(outcome)
}

/// Leading small-separation probability of the balanced split of `2P`
/// photons, integrated over momenta.
pub fn bucket_probability(p: usize, scene: &SourceScene, psf: &PsfModel) -> Result<f64> {
    if p == 0 {
        return domain("P must be at least 1");
    }
    let n = scene.brightness();
    let sk = scene.separation() * psf.sigma_k();
    Ok(binomial(2 * p, p) / (2.0 * (2 * p - 1) as f64) * (n / (1.0 + 2.0 * n)).powi(2 * p as i32 - 1) * sk * sk / 4.0)
}

/// Two-photon class density as split probability times independent
/// conditional densities of the mean and difference momenta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairDecomposition {
    pub class_probability: f64,
    pub mean_conditional: f64,
    pub difference_conditional: f64,
    pub kappa1: f64,
    pub kappa2: f64,
}

impl PairDecomposition {
    pub fn density(&self) -> f64 {
        self.class_probability * self.mean_conditional * self.difference_conditional
    }
}

/// Probability of the two-photon class.
pub fn pair_class_probability(class: OutcomeClass, model: &CoincidenceModel) -> Result<f64> {
    require(class, 2)?;
    let alpha = class.alpha().expect("two-photon classes carry a sign");
    let n = model.brightness();
    let w = model.weights();
    let kappa = model.psf().pair_visibility(model.separation());
    Ok(n * w.p0 * w.p0 * (1.0 + n - alpha * n * w.delta * kappa) * (1.0 + alpha * kappa))
}

pub fn conditional_decomposition(
    coords: TwoPhotonCoordinates,
    class: OutcomeClass,
    model: &CoincidenceModel,
) -> Result<PairDecomposition> {
    let class_probability = pair_class_probability(class, model)?;
    let alpha = class.alpha().expect("two-photon classes carry a sign");
    let n = model.brightness();
    let d = model.weights().delta;
    let s = model.separation();
    let psf = model.psf();
    let kappa = psf.pair_visibility(s);
    let mean_conditional = psf.mean_momentum_density(coords.k_bar) * (1.0 + n - alpha * n * d * (coords.k_bar * s).cos())
        / (1.0 + n - alpha * n * d * kappa);
    let difference_conditional =
        psf.difference_density(coords.delta_k) * beat_factor(alpha, coords.delta_k, s) / (1.0 + alpha * kappa);
    Ok(PairDecomposition { class_probability, mean_conditional, difference_conditional, kappa1: kappa, kappa2: kappa })
}

/// Exact density of a class: the canonical representative times its
/// mirror multiplicity. Convenience for comparisons with the table forms.
pub fn class_density(momenta: &[f64], class: OutcomeClass, model: &CoincidenceModel) -> Result<f64> {
    let l = momenta.len();
    let x = class.representative_split(l)?;
    let o = DetectionOutcome::canonical(x, momenta.to_vec())?;
    Ok(class.mirror_multiplicity() * model.density(&o)?)
}
