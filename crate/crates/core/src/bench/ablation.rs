//! Held-out blob evaluation used by the track-count and guidance ablations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{first_frame, MockCodec};
use crate::condition::ConditionMode;
use crate::data::{make_blob_dataset, track_all, BlobSample, MotionFamily};
use crate::error::{Error, Result};
use crate::geometry::LatentGeometry;
use crate::metrics::epe;
use crate::model::{prepare_examples, train_examples, ToyDenoiser, TrainConfig};
use crate::pipeline::{generate, SamplingConfig};
use crate::trajectory::TrajectorySet;

/// Which tracks the generator is given for a held-out clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "per_side")]
pub enum TrackSetting {
    None,
    /// The center track of blob 0.
    Single,
    /// The center track of every blob.
    PerObject,
    /// A regular grid of dense tracks.
    Dense(usize),
}

impl TrackSetting {
    pub fn tracks_for(&self, clip: &BlobSample) -> TrajectorySet {
        let t = &clip.tracks;
        match *self {
            TrackSetting::None => TrajectorySet::unchecked(t.frames, t.height, t.width, Vec::new()),
            TrackSetting::Single => {
                TrajectorySet::unchecked(t.frames, t.height, t.width, vec![t.tracks[0].clone()])
            }
            TrackSetting::PerObject => t.clone(),
            TrackSetting::Dense(n) => clip.dense_tracks(n),
        }
    }
}

/// EPE over every blob between the generated clip and the source clip, both
/// measured by the blob tracker. The reference set does not depend on `setting`.
pub fn clip_epe(
    model: &ToyDenoiser,
    codec: &MockCodec,
    clip: &BlobSample,
    setting: TrackSetting,
    cfg: &SamplingConfig,
    seed: u64,
) -> Result<f64> {
    let frame = first_frame(&clip.video);
    let tracks = setting.tracks_for(clip);
    let out = generate(model, codec, frame.view(), &tracks, cfg, seed)?;
    let targets = blob_targets(clip);
    let reference = track_all(&clip.video, &targets);
    epe(&reference, &track_all(&out.video, &targets))
}

/// `(id, channel)` for each blob, ids matching `clip.tracks`.
pub fn blob_targets(clip: &BlobSample) -> Vec<(u32, usize)> {
    clip.blobs
        .iter()
        .enumerate()
        .map(|(i, b)| (i as u32, b.channel))
        .collect()
}

/// Mean [`clip_epe`] over `clips`; clip `i` samples with seed `seed + i`.
pub fn mean_epe(
    model: &ToyDenoiser,
    codec: &MockCodec,
    clips: &[BlobSample],
    setting: TrackSetting,
    cfg: &SamplingConfig,
    seed: u64,
) -> Result<f64> {
    let mut sum = 0.0;
    for (i, clip) in clips.iter().enumerate() {
        sum += clip_epe(model, codec, clip, setting, cfg, seed.wrapping_add(i as u64))?;
    }
    Ok(sum / clips.len() as f64)
}

/// Train/evaluate protocol shared by the track-count and guidance ablations.
///
/// For each seed a fresh dataset is drawn, one model per condition mode is
/// trained on identical data, and every model is scored on the same held-out
/// clips with identical sampling seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationProtocol {
    pub train_clips: usize,
    pub held_out: usize,
    pub family: MotionFamily,
    pub train: TrainConfig,
    pub sampling: SamplingConfig,
    /// Grid used for the dense track setting.
    pub dense_per_side: usize,
    pub eval_seed: u64,
}

impl Default for AblationProtocol {
    fn default() -> Self {
        Self {
            train_clips: 200,
            held_out: 50,
            family: MotionFamily::PiecewiseLinear,
            train: TrainConfig::default(),
            sampling: SamplingConfig::default(),
            dense_per_side: 16,
            eval_seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: ConditionMode,
    pub setting: TrackSetting,
    pub epe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub seed: u64,
    /// EPE of an encode/decode round trip of the held-out clips.
    pub codec_floor: f64,
    pub rows: Vec<AblationRow>,
}

impl AblationResult {
    pub fn get(&self, mode: ConditionMode, setting: TrackSetting) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.mode == mode && r.setting == setting)
            .map(|r| r.epe)
    }
}

/// Runs the protocol for one seed.
///
/// The latent model is scored with no tracks, one track, per-object tracks and
/// the dense grid; the baselines with per-object and dense tracks.
pub fn run_ablation(protocol: &AblationProtocol, seed: u64) -> Result<AblationResult> {
    let geom = LatentGeometry::toy();
    let codec = MockCodec::new(geom)?;
    let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
    let data = make_blob_dataset(&mut rng, protocol.train_clips, &geom, protocol.family);
    let held = make_blob_dataset(&mut rng, protocol.held_out, &geom, protocol.family);
    if held.is_empty() {
        return Err(Error::InvalidInput(
            "ablation needs at least one held-out clip".into(),
        ));
    }
    let examples = prepare_examples(&data, &codec, protocol.train.dense_grid)?;

    let mut floor = 0.0;
    for clip in &held {
        let targets = blob_targets(clip);
        let rec = codec.decode(&codec.encode(&clip.video)?)?;
        floor += epe(&track_all(&clip.video, &targets), &track_all(&rec, &targets))?;
    }

    let dense = TrackSetting::Dense(protocol.dense_per_side);
    let plan = [
        (
            ConditionMode::LatentReplication,
            vec![
                TrackSetting::None,
                TrackSetting::Single,
                TrackSetting::PerObject,
                dense,
            ],
        ),
        (
            ConditionMode::PixelReplication,
            vec![TrackSetting::PerObject, dense],
        ),
        (
            ConditionMode::RandomEmbedding,
            vec![TrackSetting::PerObject, dense],
        ),
    ];
    let mut rows = Vec::new();
    for (mode, settings) in plan {
        let cfg = TrainConfig {
            seed,
            mode,
            ..protocol.train.clone()
        };
        let model = train_examples(&cfg, &examples, &codec)?.model;
        let sampling = SamplingConfig {
            mode,
            ..protocol.sampling
        };
        for setting in settings {
            let e = mean_epe(&model, &codec, &held, setting, &sampling, protocol.eval_seed)?;
            log::info!("seed {seed} {mode:?} {setting:?}: epe {e:.3}");
            rows.push(AblationRow {
                mode,
                setting,
                epe: e,
            });
        }
    }
    Ok(AblationResult {
        seed,
        codec_floor: floor / held.len() as f64,
        rows,
    })
}
