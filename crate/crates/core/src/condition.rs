//! Motion conditioning: editing the condition tensor along trajectories.
//!
//! [`replicate_features`] copies each track's frame-0 latent feature into the
//! track's cell at every later visible latent frame. The two baselines,
//! [`pixel_replication_baseline`] and [`random_embedding_baseline`], use the
//! same write pattern with a different payload. When several tracks write the
//! same cell, one writer is drawn uniformly from the seeded stream.

use std::collections::{BTreeMap, HashMap};

use ndarray::{s, ArrayView3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::codec::{padded_video, MockCodec};
use crate::error::{Error, Result};
use crate::tensor::LatentTensor;
use crate::trajectory::{map_to_latent, quantize, QuantizedTrack, TrajectorySet};

/// Cell address `(frame, row, col)` mapped to the indices of every track writing it.
type WritePlan = BTreeMap<(usize, usize, usize), Vec<usize>>;

/// Collects writes in ascending (track id, frame) order, so the plan and the
/// random choices made over it do not depend on input order.
fn plan_writes(
    tracks: &[QuantizedTrack],
    shape: [usize; 4],
    stamp_start: bool,
) -> Result<(Vec<usize>, WritePlan)> {
    let [frames, rows, cols, _] = shape;
    let mut order: Vec<usize> = (0..tracks.len()).collect();
    order.sort_by_key(|&i| tracks[i].id);
    let mut plan = WritePlan::new();
    for &i in &order {
        let t = &tracks[i];
        if t.cells.len() != frames || t.visible.len() != frames {
            return Err(Error::Internal(format!(
                "track {} spans {} latent frames, condition has {frames}",
                t.id,
                t.cells.len()
            )));
        }
        if let Some(&(r, c)) = t.cells.iter().find(|&&(r, c)| r >= rows || c >= cols) {
            return Err(Error::Internal(format!(
                "track {} cell ({r}, {c}) outside the {rows}x{cols} grid",
                t.id
            )));
        }
        if stamp_start {
            let (r, c) = t.start();
            plan.entry((0, r, c)).or_default().push(i);
        }
        for n in 1..frames {
            if t.visible[n] {
                let (r, c) = t.cells[n];
                plan.entry((n, r, c)).or_default().push(i);
            }
        }
    }
    Ok((order, plan))
}

fn pick<R: Rng + ?Sized>(writers: &[usize], rng: &mut R) -> usize {
    if writers.len() == 1 {
        writers[0]
    } else {
        writers[rng.random_range(0..writers.len())]
    }
}

/// Replicates each track's frame-0 feature along its later visible cells.
///
/// Frame 0 is never modified, and cells no track writes keep their exact input bits.
pub fn replicate_features<R: Rng + ?Sized>(
    z: &LatentTensor,
    tracks: &[QuantizedTrack],
    rng: &mut R,
) -> Result<LatentTensor> {
    let (_, plan) = plan_writes(tracks, z.shape(), false)?;
    let src = z.array();
    let mut out = z.clone();
    let dst = out.array_mut();
    for ((n, r, c), writers) in &plan {
        let (r0, c0) = tracks[pick(writers, rng)].start();
        dst.slice_mut(s![*n, *r, *c, ..])
            .assign(&src.slice(s![0, r0, c0, ..]));
    }
    Ok(out)
}

/// Fixed random vectors, one per track id.
///
/// Each vector is a seeded unit Gaussian draw scaled per channel by the
/// standard deviation of the reference condition's first latent frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    vectors: HashMap<u32, Vec<f32>>,
}

impl EmbeddingTable {
    pub fn new(ids: &[u32], seed: u64, reference: &LatentTensor) -> Self {
        let scale = frame0_channel_std(reference);
        let vectors = ids
            .iter()
            .map(|&id| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(id as u64);
                let v = scale
                    .iter()
                    .map(|s| {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        (g * s) as f32
                    })
                    .collect();
                (id, v)
            })
            .collect();
        Self { vectors }
    }

    pub fn get(&self, id: u32) -> Option<&[f32]> {
        self.vectors.get(&id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Per-channel population standard deviation of latent frame 0; a flat frame scales by 1.
fn frame0_channel_std(z: &LatentTensor) -> Vec<f64> {
    let frame = z.array().slice(s![0, .., .., ..]);
    let channels = z.shape()[3];
    (0..channels)
        .map(|ch| {
            let vals = frame.slice(s![.., .., ch]);
            let n = vals.len() as f64;
            let mean = vals.iter().map(|&v| v as f64).sum::<f64>() / n;
            let var = vals.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect()
}

/// Writes each track's table embedding at its start cell in frame 0 and along
/// its later visible cells.
pub fn random_embedding_baseline<R: Rng + ?Sized>(
    z: &LatentTensor,
    tracks: &[QuantizedTrack],
    table: &EmbeddingTable,
    rng: &mut R,
) -> Result<LatentTensor> {
    if let Some(t) = tracks.iter().find(|t| table.get(t.id).is_none()) {
        return Err(Error::MissingEmbedding(t.id));
    }
    let channels = z.shape()[3];
    let (_, plan) = plan_writes(tracks, z.shape(), true)?;
    let mut out = z.clone();
    let dst = out.array_mut();
    for ((n, r, c), writers) in &plan {
        let v = table.get(tracks[pick(writers, rng)].id).expect("checked above");
        if v.len() != channels {
            return Err(Error::shape(format!("{channels} channels"), v.len()));
        }
        for (ch, &x) in v.iter().enumerate() {
            dst[[*n, *r, *c, ch]] = x;
        }
    }
    Ok(out)
}

/// Copies each track's frame-0 source pixel to its rounded pixel position in
/// every later visible frame of `[first_frame, 0, …, 0]`, then encodes.
pub fn pixel_replication_baseline<R: Rng + ?Sized>(
    codec: &MockCodec,
    first_frame: ArrayView3<f32>,
    tracks: &TrajectorySet,
    rng: &mut R,
) -> Result<LatentTensor> {
    let g = codec.geometry();
    tracks.check_geometry(g)?;
    let mut video = padded_video(first_frame, g.frames)?;
    let (h, w) = (g.height as i64, g.width as i64);
    let to_pixel = |p: &crate::trajectory::Point| {
        let (r, c) = p.round_half_up();
        (r.clamp(0, h - 1) as usize, c.clamp(0, w - 1) as usize)
    };

    let mut order: Vec<usize> = (0..tracks.tracks.len()).collect();
    order.sort_by_key(|&i| tracks.tracks[i].id);
    let mut plan = WritePlan::new();
    for &i in &order {
        let t = &tracks.tracks[i];
        if t.positions.len() != g.frames || t.visible.len() != g.frames {
            return Err(Error::shape(format!("{} frames", g.frames), t.positions.len()));
        }
        for n in 1..g.frames {
            if t.visible[n] {
                let (r, c) = to_pixel(&t.positions[n]);
                plan.entry((n, r, c)).or_default().push(i);
            }
        }
    }
    let data = video.array_mut();
    for ((n, r, c), writers) in &plan {
        let (r0, c0) = to_pixel(&tracks.tracks[pick(writers, rng)].positions[0]);
        for ch in 0..3 {
            data[[*n, *r, *c, ch]] = first_frame[[r0, c0, ch]];
        }
    }
    codec.encode(&video)
}

/// How motion is injected into the condition tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionMode {
    #[default]
    LatentReplication,
    PixelReplication,
    RandomEmbedding,
}

/// Maps pixel tracks to quantized latent tracks.
pub fn quantized_tracks(set: &TrajectorySet, codec: &MockCodec) -> Result<Vec<QuantizedTrack>> {
    let g = codec.geometry();
    set.check_geometry(g)?;
    set.tracks
        .iter()
        .map(|t| Ok(quantize(&map_to_latent(t, g)?, g)))
        .collect()
}

/// Builds the motion-conditioned tensor for `mode`.
///
/// `uncond` must be `codec.encode_condition(first_frame)`; `embed_seed` seeds
/// the embedding table of [`ConditionMode::RandomEmbedding`].
pub fn build_condition<R: Rng + ?Sized>(
    mode: ConditionMode,
    codec: &MockCodec,
    first_frame: ArrayView3<f32>,
    uncond: &LatentTensor,
    tracks: &TrajectorySet,
    embed_seed: u64,
    rng: &mut R,
) -> Result<LatentTensor> {
    match mode {
        ConditionMode::LatentReplication => {
            replicate_features(uncond, &quantized_tracks(tracks, codec)?, rng)
        }
        ConditionMode::PixelReplication => pixel_replication_baseline(codec, first_frame, tracks, rng),
        ConditionMode::RandomEmbedding => {
            let q = quantized_tracks(tracks, codec)?;
            let table = EmbeddingTable::new(&tracks.ids(), embed_seed, uncond);
            random_embedding_baseline(uncond, &q, &table, rng)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LatentGeometry;
    use crate::trajectory::{PixelTrajectory, Point};
    use ndarray::{Array3, Array4};

    fn random_latent(seed: u64) -> LatentTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array4::from_shape_fn([3, 8, 8, 3], |_| rng.random::<f32>() - 0.5);
        LatentTensor::new(a).unwrap()
    }

    fn track(id: u32, cells: &[(usize, usize)]) -> QuantizedTrack {
        QuantizedTrack {
            id,
            cells: cells.to_vec(),
            visible: vec![true; cells.len()],
        }
    }

    #[test]
    fn no_tracks_is_identity() {
        let z = random_latent(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(replicate_features(&z, &[], &mut rng).unwrap(), z);
        let table = EmbeddingTable::new(&[], 0, &z);
        assert_eq!(random_embedding_baseline(&z, &[], &table, &mut rng).unwrap(), z);
    }

    #[test]
    fn single_track_copies_source() {
        let z = random_latent(2);
        let t = track(0, &[(1, 2), (3, 4), (7, 7)]);
        let out = replicate_features(&z, &[t], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let src = z.array().slice(s![0, 1, 2, ..]).to_owned();
        assert_eq!(out.array().slice(s![1, 3, 4, ..]), src);
        assert_eq!(out.array().slice(s![2, 7, 7, ..]), src);
        let changed = out
            .array()
            .indexed_iter()
            .filter(|(i, v)| z.array()[*i].to_bits() != v.to_bits())
            .count();
        assert!(changed <= 6);
        assert_eq!(
            out.array().slice(s![0, .., .., ..]),
            z.array().slice(s![0, .., .., ..])
        );
    }

    #[test]
    fn occluded_frames_are_skipped() {
        let z = random_latent(3);
        let mut t = track(0, &[(0, 0), (5, 5), (6, 6)]);
        t.visible[1] = false;
        let out = replicate_features(&z, &[t], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(
            out.array().slice(s![1, 5, 5, ..]),
            z.array().slice(s![1, 5, 5, ..])
        );
        assert_eq!(
            out.array().slice(s![2, 6, 6, ..]),
            z.array().slice(s![0, 0, 0, ..])
        );
    }

    #[test]
    fn collision_picks_one_source_deterministically() {
        let z = random_latent(4);
        let a = track(0, &[(0, 0), (4, 4), (4, 4)]);
        let b = track(1, &[(7, 7), (4, 4), (2, 2)]);
        let sources = [
            z.array().slice(s![0, 0, 0, ..]).to_owned(),
            z.array().slice(s![0, 7, 7, ..]).to_owned(),
        ];
        let mut seen = [false; 2];
        for seed in 0..64 {
            let run = |s| {
                replicate_features(&z, &[a.clone(), b.clone()], &mut ChaCha8Rng::seed_from_u64(s)).unwrap()
            };
            let out = run(seed);
            assert_eq!(out, run(seed));
            let got = out.array().slice(s![1, 4, 4, ..]).to_owned();
            let which = sources
                .iter()
                .position(|s| *s == got)
                .expect("one of the sources");
            seen[which] = true;
        }
        assert_eq!(seen, [true, true]);
    }

    #[test]
    fn input_order_does_not_matter() {
        let z = random_latent(5);
        let a = track(3, &[(0, 0), (4, 4), (4, 4)]);
        let b = track(1, &[(7, 7), (4, 4), (4, 4)]);
        let ab = replicate_features(&z, &[a.clone(), b.clone()], &mut ChaCha8Rng::seed_from_u64(9));
        let ba = replicate_features(&z, &[b, a], &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(ab.unwrap(), ba.unwrap());
    }

    #[test]
    fn out_of_bounds_cell_is_internal_fault() {
        let z = random_latent(6);
        let t = track(0, &[(0, 0), (8, 0), (0, 0)]);
        assert!(matches!(
            replicate_features(&z, &[t], &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::Internal(_))
        ));
        let short = track(0, &[(0, 0), (1, 0)]);
        assert!(replicate_features(&z, &[short], &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn embedding_stamps_frame_zero_and_path() {
        let z = random_latent(7);
        let t = track(5, &[(1, 1), (2, 2), (3, 3)]);
        let table = EmbeddingTable::new(&[5], 11, &z);
        let out = random_embedding_baseline(&z, &[t], &table, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let e = table.get(5).unwrap();
        for (n, r, c) in [(0, 1, 1), (1, 2, 2), (2, 3, 3)] {
            assert_eq!(out.array().slice(s![n, r, c, ..]).to_vec(), e);
        }
    }

    #[test]
    fn embeddings_distinct_and_deterministic() {
        let z = random_latent(8);
        let t1 = EmbeddingTable::new(&[0, 1], 3, &z);
        let t2 = EmbeddingTable::new(&[1, 0], 3, &z);
        assert_eq!(t1, t2);
        assert_ne!(t1.get(0), t1.get(1));
        let a = track(0, &[(0, 0), (1, 1), (2, 2)]);
        let b = track(1, &[(5, 5), (6, 6), (7, 7)]);
        let out = random_embedding_baseline(&z, &[a, b], &t1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.array().slice(s![2, 2, 2, ..]).to_vec(), t1.get(0).unwrap());
        assert_eq!(out.array().slice(s![2, 7, 7, ..]).to_vec(), t1.get(1).unwrap());
        let missing = track(9, &[(0, 0), (1, 1), (2, 2)]);
        assert!(matches!(
            random_embedding_baseline(&z, &[missing], &t1, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::MissingEmbedding(9))
        ));
    }

    #[test]
    fn embedding_scale_follows_condition_std() {
        let mut a = Array4::zeros([3, 8, 8, 3]);
        for r in 0..8 {
            for c in 0..8 {
                a[[0, r, c, 0]] = if (r + c) % 2 == 0 { 10.0 } else { -10.0 };
            }
        }
        let z = LatentTensor::new(a).unwrap();
        let ids: Vec<u32> = (0..2000).collect();
        let table = EmbeddingTable::new(&ids, 1, &z);
        let rms = |ch: usize| {
            (ids.iter()
                .map(|&i| (table.get(i).unwrap()[ch] as f64).powi(2))
                .sum::<f64>()
                / ids.len() as f64)
                .sqrt()
        };
        assert!((rms(0) - 10.0).abs() < 0.6, "{}", rms(0));
        assert!((rms(1) - 1.0).abs() < 0.06, "{}", rms(1));
    }

    fn pixel_setup() -> (MockCodec, Array3<f32>) {
        let codec = MockCodec::new(LatentGeometry::toy()).unwrap();
        let mut img = Array3::zeros((32, 32, 3));
        img[[10, 10, 0]] = 0.8;
        img[[10, 10, 2]] = 0.4;
        (codec, img)
    }

    #[test]
    fn pixel_baseline_without_tracks_is_plain_condition() {
        let (codec, img) = pixel_setup();
        let empty = TrajectorySet::empty_for(codec.geometry());
        let out = pixel_replication_baseline(&codec, img.view(), &empty, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert_eq!(out, codec.encode_condition(img.view()).unwrap());
    }

    #[test]
    fn pixel_baseline_stationary_track_block_mean() {
        let (codec, img) = pixel_setup();
        let t = PixelTrajectory::stationary(0, Point::new(10.0, 10.0), 9);
        let set = TrajectorySet::new(9, 32, 32, vec![t]).unwrap();
        let out =
            pixel_replication_baseline(&codec, img.view(), &set, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        // f_t copies of the pixel fall into one f_s × f_s × f_t block.
        for n in 1..3 {
            assert_eq!(out.array()[[n, 2, 2, 0]], 0.8 / 16.0);
            assert_eq!(out.array()[[n, 2, 2, 2]], 0.4 / 16.0);
        }
    }

    #[test]
    fn pixel_baseline_single_frame_per_group() {
        let (codec, img) = pixel_setup();
        let mut t = PixelTrajectory::stationary(0, Point::new(10.0, 10.0), 9);
        t.visible = vec![true, true, false, false, false, false, false, true, false];
        let set = TrajectorySet::new(9, 32, 32, vec![t]).unwrap();
        let out =
            pixel_replication_baseline(&codec, img.view(), &set, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.array()[[1, 2, 2, 0]], 0.8 / 64.0);
        assert_eq!(out.array()[[2, 2, 2, 0]], 0.8 / 64.0);
    }
}
