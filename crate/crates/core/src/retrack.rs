//! Generic point re-tracking for arbitrary frames: a frame-0 template
//! followed by exhaustive SSD search near the previous position.

use crate::tensor::VideoTensor;
use crate::trajectory::{PixelTrajectory, Point, TrajectorySet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchTrackerConfig {
    /// Template half-size; the template is `(2r + 1)²` pixels.
    pub radius: usize,
    /// Search half-size around the previous position.
    pub search: usize,
}

impl Default for PatchTrackerConfig {
    fn default() -> Self {
        Self { radius: 3, search: 6 }
    }
}

fn clamp_px(v: f64, n: usize) -> i64 {
    (v.round() as i64).clamp(0, n as i64 - 1)
}

/// Sum of squared differences between the template around `a` in frame 0 and
/// the patch around `b` in frame `n`, with edge pixels replicated.
fn ssd(video: &VideoTensor, a: (i64, i64), n: usize, b: (i64, i64), r: i64) -> f64 {
    let (h, w) = (video.height() as i64, video.width() as i64);
    let data = video.array();
    let mut sum = 0.0;
    for dr in -r..=r {
        for dc in -r..=r {
            let (ar, ac) = (
                (a.0 + dr).clamp(0, h - 1) as usize,
                (a.1 + dc).clamp(0, w - 1) as usize,
            );
            let (br, bc) = (
                (b.0 + dr).clamp(0, h - 1) as usize,
                (b.1 + dc).clamp(0, w - 1) as usize,
            );
            for ch in 0..3 {
                let d = (data[[0, ar, ac, ch]] - data[[n, br, bc, ch]]) as f64;
                sum += d * d;
            }
        }
    }
    sum
}

/// Follows the frame-0 patch at `start` through the video on the integer
/// pixel grid. Ties go to the candidate closest to the previous position,
/// then to the smaller row and column. Every frame is reported visible.
pub fn track_patch(video: &VideoTensor, id: u32, start: Point, cfg: PatchTrackerConfig) -> PixelTrajectory {
    let (h, w) = (video.height(), video.width());
    let origin = (clamp_px(start.row, h), clamp_px(start.col, w));
    let mut prev = origin;
    let mut positions = vec![start];
    let s = cfg.search as i64;
    for n in 1..video.frames() {
        let mut best = (f64::INFINITY, i64::MAX, prev);
        for dr in -s..=s {
            for dc in -s..=s {
                let cand = (prev.0 + dr, prev.1 + dc);
                if cand.0 < 0 || cand.1 < 0 || cand.0 >= h as i64 || cand.1 >= w as i64 {
                    continue;
                }
                let cost = ssd(video, origin, n, cand, cfg.radius as i64);
                let dist = dr * dr + dc * dc;
                if (cost, dist, cand) < best {
                    best = (cost, dist, cand);
                }
            }
        }
        prev = best.2;
        positions.push(Point::new(prev.0 as f64, prev.1 as f64));
    }
    PixelTrajectory::visible_path(id, positions)
}

/// Re-tracks every track of `requested` from its frame-0 position.
pub fn retrack(video: &VideoTensor, requested: &TrajectorySet, cfg: PatchTrackerConfig) -> TrajectorySet {
    let tracks = requested
        .tracks
        .iter()
        .map(|t| track_patch(video, t.id, t.positions[0], cfg))
        .collect();
    TrajectorySet::unchecked(video.frames(), video.height(), video.width(), tracks)
}
