//! Multiphoton interference imaging of two thermal point sources.
//!
//! A single reference photon and the light of two weak thermal sources
//! meet on a balanced beamsplitter; far-field cameras behind both outputs
//! record how many photons arrived in each camera and at which transverse
//! momenta. This crate evaluates the resulting coincidence densities,
//! their Fisher information about the source separation, samples
//! synthetic frames, and estimates the separation by maximum likelihood.

pub mod coincidence;
pub mod error;
pub mod estimator;
pub mod fisher;
pub mod optics;
pub mod quadrature;

pub use coincidence::special::{
    asymptotic_density, bucket_probability, conditional_decomposition, four_photon_density,
    subrayleigh_leading_density, three_photon_density, two_photon_density, PairDecomposition,
};
pub use coincidence::{
    coincidence_density, interference_phase, log_coincidence_density, trig_xi, CoincidenceModel,
    DetectionOutcome, OutcomeClass, TwoPhotonCoordinates,
};
pub use error::{Error, Result};
pub use optics::{
    mode_weights, momentum_envelope, psf_overlap_delta, validate_pixel_geometry, DetectorGeometry,
    ModeWeights, PixelReport, PixelVerdict, PsfModel, SourceScene,
};
pub use estimator::{
    crb_report, mle_separation, read_record, simulate_experiment, write_record, EstimationReport, ExperimentConfig,
    FrameSampler,
};
pub use fisher::{
    asymptotic_fisher_2p, bucket_fisher, di_baseline_fisher, fisher_l, fisher_total, optimal_brightness,
    sampling_hierarchy_fi, subrayleigh_fisher_order, subrayleigh_fisher_total, truncated_fisher, FisherBreakdown,
    FisherValue, QuadratureSpec, Scheme,
};
