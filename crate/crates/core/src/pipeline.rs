//! First frame plus tracks in, generated video out.

use ndarray::ArrayView3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::MockCodec;
use crate::condition::{build_condition, ConditionMode};
use crate::error::Result;
use crate::model::{sample, ConditionBundle, ToyDenoiser, DEFAULT_GUIDANCE, DEFAULT_SAMPLING_STEPS};
use crate::tensor::{LatentTensor, VideoTensor};
use crate::trajectory::TrajectorySet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub guidance: f64,
    pub steps: usize,
    pub mode: ConditionMode,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            guidance: DEFAULT_GUIDANCE,
            steps: DEFAULT_SAMPLING_STEPS,
            mode: ConditionMode::LatentReplication,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub latent: LatentTensor,
    /// Decoded and clamped to `[0, 1]`.
    pub video: VideoTensor,
}

/// Builds the condition bundle and samples one clip.
///
/// A single stream seeded by `seed` drives collision picks and then the
/// sampler noise; `seed` also seeds the random-embedding table.
pub fn generate(
    model: &ToyDenoiser,
    codec: &MockCodec,
    first_frame: ArrayView3<f32>,
    tracks: &TrajectorySet,
    cfg: &SamplingConfig,
    seed: u64,
) -> Result<Generated> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uncond = codec.encode_condition(first_frame)?;
    let condition = build_condition(cfg.mode, codec, first_frame, &uncond, tracks, seed, &mut rng)?;
    let bundle = ConditionBundle::new(condition, uncond)?;
    let latent = sample(model, &bundle, cfg.guidance, cfg.steps, &mut rng)?;
    let video = codec.decode(&latent)?.clamp_unit();
    Ok(Generated { latent, video })
}
