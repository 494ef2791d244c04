//! Synthetic frames and separation estimates.

pub mod experiment;
pub mod mle;
pub mod record;
pub mod sampler;

pub use experiment::{derive_seed, simulate_experiment, simulate_with, ExperimentConfig};
pub use mle::{
    crb_from_fisher, crb_report, mle_separation, run_study, CrbReport, EstimationReport, LikelihoodSurface,
    MleOptions, StudyReport, TrialResult,
};
pub use record::{read_record, write_record};
pub use sampler::{FrameSampler, DEFAULT_L_CAP};
