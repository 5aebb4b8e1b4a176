use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gaussian_latent, AdamW, DenoiserDims, FieldInput, FlowSample, ToyDenoiser, DEFAULT_HIDDEN};
use crate::codec::{first_frame, MockCodec};
use crate::condition::{build_condition, ConditionMode};
use crate::data::BlobSample;
use crate::error::{Error, Result};
use crate::tensor::LatentTensor;
use crate::trajectory::{sample_training_tracks, TrajectorySet, DEFAULT_MAX_TRACKS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup: usize,
    pub total_steps: usize,
    pub batch_size: usize,
    /// Size of the discrete time grid; `t` is drawn from `{1/n, 2/n, …, 1}`.
    pub time_steps: usize,
    pub max_tracks: usize,
    pub seed: u64,
    pub hidden: usize,
    pub mode: ConditionMode,
    /// Train the control model that never sees a track.
    pub disable_tracks: bool,
    /// Seeds per side of the dense track grid each clip contributes.
    pub dense_grid: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-3,
            weight_decay: 1e-4,
            warmup: 100,
            total_steps: 2000,
            batch_size: 8,
            time_steps: 1000,
            max_tracks: DEFAULT_MAX_TRACKS,
            seed: 0,
            hidden: DEFAULT_HIDDEN,
            mode: ConditionMode::LatentReplication,
            disable_tracks: false,
            dense_grid: 16,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("total_steps", self.total_steps),
            ("batch_size", self.batch_size),
            ("time_steps", self.time_steps),
            ("max_tracks", self.max_tracks),
            ("hidden", self.hidden),
            ("dense_grid", self.dense_grid),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidInput(format!("{name} must be positive")));
        }
        if self.warmup > self.total_steps {
            return Err(Error::InvalidInput(format!(
                "warmup {} exceeds total_steps {}",
                self.warmup, self.total_steps
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidInput(
                "lr must be positive and weight_decay non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Linear warmup to `lr` over `warmup` steps (1-based), constant afterwards.
pub fn warmup_lr(lr: f64, step: usize, warmup: usize) -> f64 {
    if warmup == 0 || step >= warmup {
        lr
    } else {
        lr * step as f64 / warmup as f64
    }
}

/// Per-step record of a training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub losses: Vec<f64>,
    pub lrs: Vec<f64>,
    /// Track draws that came back empty.
    pub empty_draws: usize,
    pub total_draws: usize,
}

impl LossCurve {
    pub fn mean(&self, range: std::ops::Range<usize>) -> f64 {
        let s = &self.losses[range];
        s.iter().sum::<f64>() / s.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ToyDenoiser,
    pub curve: LossCurve,
}

/// A clip with everything training needs precomputed.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub latent: LatentTensor,
    pub uncond: LatentTensor,
    pub first_frame: Array3<f32>,
    /// Track pool the per-step subsets are drawn from.
    pub pool: TrajectorySet,
}

/// Encodes each clip and collects its dense tracks plus its blob-center tracks.
pub fn prepare_examples(
    dataset: &[BlobSample],
    codec: &MockCodec,
    dense_grid: usize,
) -> Result<Vec<TrainingExample>> {
    dataset
        .iter()
        .map(|s| {
            let frame = first_frame(&s.video);
            let mut pool = s.dense_tracks(dense_grid);
            let offset = pool.tracks.len() as u32;
            pool.tracks.extend(s.tracks.tracks.iter().map(|t| {
                let mut t = t.clone();
                t.id += offset;
                t
            }));
            Ok(TrainingExample {
                latent: codec.encode(&s.video)?,
                uncond: codec.encode_condition(frame.view())?,
                first_frame: frame,
                pool,
            })
        })
        .collect()
}

pub fn train(config: &TrainConfig, dataset: &[BlobSample], codec: &MockCodec) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidInput("training dataset is empty".into()));
    }
    let examples = prepare_examples(dataset, codec, config.dense_grid)?;
    train_examples(config, &examples, codec)
}

pub fn train_examples(
    config: &TrainConfig,
    examples: &[TrainingExample],
    codec: &MockCodec,
) -> Result<TrainOutcome> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::InvalidInput("training dataset is empty".into()));
    }
    let dims = DenoiserDims::for_geometry(codec.geometry(), config.hidden);
    let shape = dims.latent_shape();
    let mut model = ToyDenoiser::new(dims, config.seed);
    let mut opt = AdamW::new(model.params().len(), config.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7472_6169_6e00);
    let mut curve = LossCurve::default();

    for step in 1..=config.total_steps {
        let mut samples = Vec::with_capacity(config.batch_size);
        let mut conds = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            let ex = &examples[rng.random_range(0..examples.len())];
            let tracks = if config.disable_tracks {
                TrajectorySet::unchecked(ex.pool.frames, ex.pool.height, ex.pool.width, Vec::new())
            } else {
                sample_training_tracks(&ex.pool, &mut rng, config.max_tracks)
            };
            curve.total_draws += 1;
            if tracks.tracks.is_empty() {
                curve.empty_draws += 1;
            }
            let embed_seed = rng.random();
            conds.push(build_condition(
                config.mode,
                codec,
                ex.first_frame.view(),
                &ex.uncond,
                &tracks,
                embed_seed,
                &mut rng,
            )?);
            let t = (rng.random_range(0..config.time_steps) + 1) as f64 / config.time_steps as f64;
            let noise = gaussian_latent(shape, &mut rng);
            samples.push(FlowSample::from_data(&ex.latent, &noise, t)?);
        }
        let batch: Vec<FieldInput> = samples
            .iter()
            .zip(&conds)
            .map(|(s, c)| FieldInput {
                x_t: &s.x_t,
                t: s.t,
                condition: c,
            })
            .collect();
        let targets: Vec<&LatentTensor> = samples.iter().map(|s| &s.target_field).collect();
        let (loss, grad) = model.loss_and_grad(&batch, &targets).map_err(|e| match e {
            Error::NonFinite { detail, .. } => Error::NonFinite { step, detail },
            other => other,
        })?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                step,
                detail: "training loss".into(),
            });
        }
        let lr = warmup_lr(config.lr, step, config.warmup);
        opt.step(model.params_mut(), &grad, lr);
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                step,
                detail: "parameters after update".into(),
            });
        }
        curve.losses.push(loss);
        curve.lrs.push(lr);
        if step % 500 == 0 {
            log::info!("step {step}: loss {loss:.5}");
        }
    }
    Ok(TrainOutcome { model, curve })
}
