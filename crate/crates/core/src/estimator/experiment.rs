use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampler::{FrameSampler, DEFAULT_L_CAP};
use crate::coincidence::DetectionOutcome;
use crate::error::{domain, Result};
use crate::optics::{PsfModel, SourceScene};

/// Frames per RNG stream; fixed so that records do not depend on the
/// number of worker threads.
pub const FRAMES_PER_STREAM: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scene: SourceScene,
    pub psf: PsfModel,
    pub frames: usize,
    pub seed: u64,
    pub l_cap: usize,
    /// Interval searched for the separation estimate.
    pub search: (f64, f64),
}

impl ExperimentConfig {
    pub fn new(scene: SourceScene, psf: PsfModel, frames: usize, seed: u64) -> Self {
        let hi = (4.0 * scene.separation()).max(4.0 * psf.sigma_x());
        ExperimentConfig { scene, psf, frames, seed, l_cap: DEFAULT_L_CAP, search: (0.0, hi) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return domain("frame count must be at least 1");
        }
        let (lo, hi) = self.search;
        if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
            return domain(format!("search interval must satisfy 0 <= lo < hi, got [{lo}, {hi}]"));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer, used to derive independent seeds per trial.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draws `frames` independent frames with a prepared sampler.
pub fn simulate_with(sampler: &FrameSampler, frames: usize, seed: u64) -> Result<Vec<DetectionOutcome>> {
    let streams = frames.div_ceil(FRAMES_PER_STREAM);
    let chunks: Vec<Result<Vec<DetectionOutcome>>> = (0..streams)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let count = FRAMES_PER_STREAM.min(frames - b * FRAMES_PER_STREAM);
            (0..count).map(|_| sampler.sample(&mut rng)).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(frames);
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

pub fn simulate_experiment(config: &ExperimentConfig) -> Result<Vec<DetectionOutcome>> {
    config.validate()?;
    let sampler = FrameSampler::new(&config.scene, &config.psf, config.l_cap)?;
    simulate_with(&sampler, config.frames, config.seed)
}
