//! Synthetic training and evaluation videos: colored Gaussian blobs moving over
//! a static gray texture, with analytic ground-truth tracks.

use ndarray::{Array2, Array4};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::LatentGeometry;
use crate::tensor::VideoTensor;
use crate::trajectory::{PixelTrajectory, Point, TrajectorySet};

/// Blob radius (Gaussian σ) in pixels.
pub const BLOB_SIGMA: f64 = 2.5;
/// Blob centers stay at least this far from the frame edge.
pub const BLOB_MARGIN: f64 = 6.0;
/// Largest per-frame blob speed in pixels.
pub const MAX_SPEED: f64 = 2.0;
const MIN_SPEED: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionFamily {
    /// Blobs never move.
    Static,
    /// Constant velocity.
    Linear,
    /// Velocity redrawn once, halfway through the clip.
    #[default]
    PiecewiseLinear,
}

/// One blob: a pure hue (`channel` 0, 1 or 2) and its center in every frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobPath {
    pub channel: usize,
    pub sigma: f64,
    pub centers: Vec<Point>,
}

impl BlobPath {
    /// Blob opacity at `p` in frame `n`.
    pub fn alpha(&self, n: usize, p: Point) -> f64 {
        let c = self.centers[n];
        let d2 = (p.row - c.row).powi(2) + (p.col - c.col).powi(2);
        (-d2 / (2.0 * self.sigma * self.sigma)).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlobSample {
    pub video: VideoTensor,
    /// One track per blob, id = blob index, following its center.
    pub tracks: TrajectorySet,
    pub blobs: Vec<BlobPath>,
    pub background: Array2<f32>,
}

impl BlobSample {
    pub fn from_parts(background: Array2<f32>, blobs: Vec<BlobPath>, frames: usize) -> Result<Self> {
        let (h, w) = background.dim();
        let video = render_blobs(&background, &blobs, frames);
        let tracks = blobs
            .iter()
            .enumerate()
            .map(|(i, b)| PixelTrajectory::visible_path(i as u32, b.centers.clone()))
            .collect();
        let tracks = TrajectorySet::new(frames, h, w, tracks)?;
        Ok(Self {
            video,
            tracks,
            blobs,
            background,
        })
    }

    /// Dense ground truth for a regular grid of seeds.
    ///
    /// A seed covered by a blob at frame 0 (opacity ≥ 0.5, topmost blob wins)
    /// follows that blob's displacement and stays visible. Other seeds are
    /// static background, hidden in the frames where a blob covers them.
    pub fn dense_tracks(&self, n_per_side: usize) -> TrajectorySet {
        let (h, w) = self.background.dim();
        let frames = self.video.frames();
        let seeds = grid_points(h, w, n_per_side);
        let mut tracks = Vec::with_capacity(seeds.len());
        for (i, &seed) in seeds.iter().enumerate() {
            let owner = self.blobs.iter().rposition(|b| b.alpha(0, seed) >= 0.5);
            let track = match owner {
                Some(b) => {
                    let blob = &self.blobs[b];
                    let c0 = blob.centers[0];
                    let positions = blob
                        .centers
                        .iter()
                        .map(|c| {
                            Point::new(
                                (seed.row + c.row - c0.row).clamp(0.0, h as f64 - 1.0),
                                (seed.col + c.col - c0.col).clamp(0.0, w as f64 - 1.0),
                            )
                        })
                        .collect();
                    PixelTrajectory::visible_path(i as u32, positions)
                }
                None => {
                    let visible = (0..frames)
                        .map(|n| self.blobs.iter().all(|b| b.alpha(n, seed) < 0.5))
                        .collect();
                    PixelTrajectory::new(i as u32, vec![seed; frames], visible)
                }
            };
            tracks.push(track);
        }
        TrajectorySet::unchecked(frames, h, w, tracks)
    }
}

/// Patch centers of an `n × n` grid over `h × w`: `(i + 0.5)·h/n − 0.5`.
pub fn grid_points(h: usize, w: usize, n: usize) -> Vec<Point> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(Point::new(
                (i as f64 + 0.5) * h as f64 / n as f64 - 0.5,
                (j as f64 + 0.5) * w as f64 / n as f64 - 0.5,
            ));
        }
    }
    out
}

/// Composites blobs back to front over a gray background.
///
/// Each blob is a pure primary color blended with its Gaussian opacity, so on
/// a gray background `channel − mean(other channels)` equals the opacity.
pub fn render_blobs(background: &Array2<f32>, blobs: &[BlobPath], frames: usize) -> VideoTensor {
    let (h, w) = background.dim();
    let mut data = Array4::<f32>::zeros((frames, h, w, 3));
    for n in 0..frames {
        for y in 0..h {
            for x in 0..w {
                let g = background[[y, x]] as f64;
                let mut px = [g, g, g];
                for b in blobs {
                    let a = b.alpha(n, Point::new(y as f64, x as f64));
                    for (ch, v) in px.iter_mut().enumerate() {
                        let target = if ch == b.channel { 1.0 } else { 0.0 };
                        *v = *v * (1.0 - a) + target * a;
                    }
                }
                for ch in 0..3 {
                    data[[n, y, x, ch]] = px[ch] as f32;
                }
            }
        }
    }
    VideoTensor::new(data).expect("blob renders are finite")
}

/// Smooth gray texture in roughly [0.25, 0.65].
pub fn random_background<R: Rng + ?Sized>(rng: &mut R, h: usize, w: usize) -> Array2<f32> {
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.1..0.5),
                rng.random_range(0.1..0.5),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.03..0.07),
            )
        })
        .collect();
    Array2::from_shape_fn((h, w), |(y, x)| {
        let v: f64 = waves
            .iter()
            .map(|&(fy, fx, ph, amp)| amp * (fy * y as f64 + fx * x as f64 + ph).sin())
            .sum();
        (0.45 + v) as f32
    })
}

fn random_velocity<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    let speed = rng.random_range(MIN_SPEED..=MAX_SPEED);
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    (speed * angle.sin(), speed * angle.cos())
}

/// Reflects `x` back into `[lo, hi]`, flipping `v` when it bounces.
fn bounce(x: f64, v: f64, lo: f64, hi: f64) -> (f64, f64) {
    if x < lo {
        (2.0 * lo - x, -v)
    } else if x > hi {
        (2.0 * hi - x, -v)
    } else {
        (x, v)
    }
}

fn random_path<R: Rng + ?Sized>(
    rng: &mut R,
    frames: usize,
    h: usize,
    w: usize,
    family: MotionFamily,
) -> Vec<Point> {
    let (r_hi, c_hi) = (h as f64 - 1.0 - BLOB_MARGIN, w as f64 - 1.0 - BLOB_MARGIN);
    let mut p = Point::new(
        rng.random_range(BLOB_MARGIN..=r_hi),
        rng.random_range(BLOB_MARGIN..=c_hi),
    );
    let mut v = match family {
        MotionFamily::Static => (0.0, 0.0),
        _ => random_velocity(rng),
    };
    let turn = frames / 2;
    let mut out = Vec::with_capacity(frames);
    out.push(p);
    for n in 1..frames {
        if family == MotionFamily::PiecewiseLinear && n == turn + 1 {
            v = random_velocity(rng);
        }
        let (row, vr) = bounce(p.row + v.0, v.0, BLOB_MARGIN, r_hi);
        let (col, vc) = bounce(p.col + v.1, v.1, BLOB_MARGIN, c_hi);
        p = Point::new(row, col);
        v = (vr, vc);
        out.push(p);
    }
    out
}

/// Generates `count` clips of 1–3 blobs with distinct hues.
pub fn make_blob_dataset<R: Rng + ?Sized>(
    rng: &mut R,
    count: usize,
    geom: &LatentGeometry,
    family: MotionFamily,
) -> Vec<BlobSample> {
    (0..count)
        .map(|_| {
            let background = random_background(rng, geom.height, geom.width);
            let n_blobs = rng.random_range(1..=3);
            let mut hues = [0usize, 1, 2];
            hues.shuffle(rng);
            let blobs = hues[..n_blobs]
                .iter()
                .map(|&channel| BlobPath {
                    channel,
                    sigma: BLOB_SIGMA,
                    centers: random_path(rng, geom.frames, geom.height, geom.width, family),
                })
                .collect();
            BlobSample::from_parts(background, blobs, geom.frames)
                .expect("generated blob paths stay inside the frame")
        })
        .collect()
}

/// Tracker settings for [`track_blobs_oracle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// Minimum peak hue excess for a frame to count as visible.
    pub min_peak: f64,
    /// Fraction of the peak subtracted before weighting.
    pub floor: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            min_peak: 0.15,
            floor: 0.25,
        }
    }
}

/// Follows the dominant blob of one hue with a per-frame weighted centroid.
pub fn track_blobs_oracle(video: &VideoTensor, channel: usize, id: u32) -> PixelTrajectory {
    track_blobs_with(video, channel, id, TrackerConfig::default())
}

/// Per frame: hue excess `v[ch] − mean(other channels)`, minus its median
/// (background), thresholded at `floor · peak`; the centroid of what remains
/// is the position. Frames whose peak is below `min_peak` are invisible and
/// repeat the last position (the frame center before any detection).
pub fn track_blobs_with(video: &VideoTensor, channel: usize, id: u32, cfg: TrackerConfig) -> PixelTrajectory {
    let (h, w) = (video.height(), video.width());
    let others: Vec<usize> = (0..3).filter(|&c| c != channel).collect();
    let mut last = Point::new((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let mut positions = Vec::with_capacity(video.frames());
    let mut visible = Vec::with_capacity(video.frames());
    for n in 0..video.frames() {
        let f = video.frame(n);
        let excess: Vec<f64> = f
            .outer_iter()
            .flat_map(|row| {
                row.outer_iter()
                    .map(|px| px[channel] as f64 - (px[others[0]] as f64 + px[others[1]] as f64) / 2.0)
                    .collect::<Vec<_>>()
            })
            .collect();
        let mut sorted = excess.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        let peak = sorted[sorted.len() - 1] - median;
        if peak < cfg.min_peak {
            positions.push(last);
            visible.push(false);
            continue;
        }
        let cut = median + cfg.floor * peak;
        let (mut sw, mut sr, mut sc) = (0.0, 0.0, 0.0);
        for (i, &e) in excess.iter().enumerate() {
            let wgt = e - cut;
            if wgt > 0.0 {
                sw += wgt;
                sr += wgt * (i / w) as f64;
                sc += wgt * (i % w) as f64;
            }
        }
        last = Point::new(sr / sw, sc / sw);
        positions.push(last);
        visible.push(true);
    }
    PixelTrajectory::new(id, positions, visible)
}

/// Re-tracks every listed `(id, channel)` pair.
pub fn track_all(video: &VideoTensor, targets: &[(u32, usize)]) -> TrajectorySet {
    TrajectorySet::unchecked(
        video.frames(),
        video.height(),
        video.width(),
        targets
            .iter()
            .map(|&(id, ch)| track_blobs_oracle(video, ch, id))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::validate_set;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat(v: f32) -> Array2<f32> {
        Array2::from_elem((32, 32), v)
    }

    #[test]
    fn static_family_is_static() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in make_blob_dataset(&mut rng, 5, &LatentGeometry::toy(), MotionFamily::Static) {
            for t in &s.tracks.tracks {
                assert!(t.positions.iter().all(|p| *p == t.positions[0]));
            }
            let first = s.video.frame(0).to_owned();
            for n in 1..9 {
                assert_eq!(s.video.frame(n), first);
            }
        }
    }

    #[test]
    fn linear_path_ground_truth_is_exact() {
        let centers: Vec<Point> = (0..9).map(|n| Point::new(16.0, 8.0 + 2.0 * n as f64)).collect();
        let blob = BlobPath {
            channel: 0,
            sigma: BLOB_SIGMA,
            centers: centers.clone(),
        };
        let s = BlobSample::from_parts(flat(0.4), vec![blob], 9).unwrap();
        assert_eq!(s.tracks.tracks[0].positions, centers);
        assert_eq!(
            s.tracks.tracks[0].positions[8].col - s.tracks.tracks[0].positions[0].col,
            16.0
        );
    }

    #[test]
    fn seeded_generation_is_bit_identical() {
        let g = LatentGeometry::toy();
        let a = make_blob_dataset(
            &mut ChaCha8Rng::seed_from_u64(9),
            4,
            &g,
            MotionFamily::PiecewiseLinear,
        );
        let b = make_blob_dataset(
            &mut ChaCha8Rng::seed_from_u64(9),
            4,
            &g,
            MotionFamily::PiecewiseLinear,
        );
        assert_eq!(a, b);
        for s in &a {
            assert!(validate_set(&s.tracks).is_clean());
            assert!(validate_set(&s.dense_tracks(16)).is_clean());
            assert!(s.video.array().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn centroid_of_symmetric_blob() {
        let blob = BlobPath {
            channel: 2,
            sigma: BLOB_SIGMA,
            centers: vec![Point::new(10.0, 12.0); 3],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = BlobSample::from_parts(random_background(&mut rng, 32, 32), vec![blob], 3).unwrap();
        let t = track_blobs_oracle(&s.video, 2, 0);
        for p in &t.positions {
            assert!(p.distance(&Point::new(10.0, 12.0)) < 0.5, "{p:?}");
        }
        assert!(t.positions.iter().all(|p| *p == t.positions[0]));
        assert!(t.visible.iter().all(|&v| v));
    }

    #[test]
    fn fractional_centers_tracked_closely() {
        let centers: Vec<Point> = (0..9)
            .map(|n| Point::new(9.3 + 0.7 * n as f64, 20.6 - 1.3 * n as f64))
            .collect();
        let blob = BlobPath {
            channel: 1,
            sigma: BLOB_SIGMA,
            centers: centers.clone(),
        };
        let s = BlobSample::from_parts(flat(0.5), vec![blob], 9).unwrap();
        let t = track_blobs_oracle(&s.video, 1, 0);
        for (p, c) in t.positions.iter().zip(&centers) {
            assert!(p.distance(c) < 0.5, "{p:?} vs {c:?}");
        }
    }

    #[test]
    fn missing_blob_frame_is_invisible() {
        let blob = BlobPath {
            channel: 0,
            sigma: BLOB_SIGMA,
            centers: vec![Point::new(10.0, 12.0); 3],
        };
        let s = BlobSample::from_parts(flat(0.4), vec![blob], 3).unwrap();
        let mut video = s.video.clone();
        video.array_mut().index_axis_mut(ndarray::Axis(0), 1).fill(0.4);
        let t = track_blobs_oracle(&video, 0, 0);
        assert_eq!(t.visible, vec![true, false, true]);
        assert_eq!(t.positions[1], t.positions[0]);
    }

    #[test]
    fn dense_tracks_follow_blobs_and_hide_background() {
        let centers: Vec<Point> = (0..9).map(|n| Point::new(14.5, 6.5 + 2.0 * n as f64)).collect();
        let blob = BlobPath {
            channel: 0,
            sigma: BLOB_SIGMA,
            centers,
        };
        let s = BlobSample::from_parts(flat(0.4), vec![blob], 9).unwrap();
        let dense = s.dense_tracks(16);
        assert_eq!(dense.len(), 256);
        // Seed (14.5, 6.5) sits on the blob: row 7, col 3 of the 16×16 grid.
        let on = &dense.tracks[7 * 16 + 3];
        assert_eq!(on.positions[8], Point::new(14.5, 22.5));
        // Seed (14.5, 22.5) is background, covered at the last frame.
        let bg = &dense.tracks[7 * 16 + 11];
        assert!(bg.visible[0] && !bg.visible[8]);
        assert!(bg.positions.iter().all(|p| *p == Point::new(14.5, 22.5)));
    }
}
