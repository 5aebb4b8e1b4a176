//! Point trajectories in pixel and latent space.
//!
//! Positions are stored as `(row, col)` with the origin at the top-left pixel
//! and pixel centers at integer coordinates. Files use `[x, y]` = `[col, row]`;
//! the conversion happens only in [`file`].

mod file;
mod latent;
mod sampling;
mod validate;

pub use file::{TrackRecord, TrajectoryFile, TRAJECTORY_FILE_VERSION};
pub use latent::{aggregate_visibility, map_to_latent, quantize, LatentTrajectory, QuantizedTrack};
pub use sampling::{sample_training_tracks, DEFAULT_MAX_TRACKS, DROP_PROBABILITY};
pub use validate::{validate_set, ValidationReport, Violation, ViolationKind};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::LatentGeometry;

/// A fractional position, `row` down and `col` right.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub row: f64,
    pub col: f64,
}

impl Point {
    pub const fn new(row: f64, col: f64) -> Self {
        Self { row, col }
    }

    pub fn is_finite(&self) -> bool {
        self.row.is_finite() && self.col.is_finite()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.row - other.row).hypot(self.col - other.col)
    }

    /// Nearest integer pixel (half-up), unclamped.
    pub fn round_half_up(&self) -> (i64, i64) {
        ((self.row + 0.5).floor() as i64, (self.col + 0.5).floor() as i64)
    }
}

/// One tracked point over `1 + T` frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelTrajectory {
    pub id: u32,
    pub positions: Vec<Point>,
    pub visible: Vec<bool>,
}

impl PixelTrajectory {
    pub fn new(id: u32, positions: Vec<Point>, visible: Vec<bool>) -> Self {
        Self {
            id,
            positions,
            visible,
        }
    }

    /// A fully visible track.
    pub fn visible_path(id: u32, positions: Vec<Point>) -> Self {
        let visible = vec![true; positions.len()];
        Self::new(id, positions, visible)
    }

    pub fn stationary(id: u32, at: Point, frames: usize) -> Self {
        Self::visible_path(id, vec![at; frames])
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// A collection of tracks over a shared `frames × height × width` video.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub tracks: Vec<PixelTrajectory>,
}

impl TrajectorySet {
    /// Builds a set, enforcing unique ids, matching lengths and finite in-bounds positions.
    pub fn new(frames: usize, height: usize, width: usize, tracks: Vec<PixelTrajectory>) -> Result<Self> {
        let set = Self::unchecked(frames, height, width, tracks);
        let report = validate_set(&set);
        if let Some(v) = report.violations.first() {
            return Err(Error::InvalidInput(format!(
                "{} violation(s), first: {v}",
                report.violations.len()
            )));
        }
        Ok(set)
    }

    /// Builds a set without checking it; run [`validate_set`] before use.
    pub fn unchecked(frames: usize, height: usize, width: usize, tracks: Vec<PixelTrajectory>) -> Self {
        Self {
            frames,
            height,
            width,
            tracks,
        }
    }

    pub fn empty_for(geom: &LatentGeometry) -> Self {
        Self::unchecked(geom.frames, geom.height, geom.width, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn ids(&self) -> Vec<u32> {
        self.tracks.iter().map(|t| t.id).collect()
    }

    pub fn get(&self, id: u32) -> Option<&PixelTrajectory> {
        self.tracks.iter().find(|t| t.id == id)
    }

    /// Keeps a subset of tracks, preserving order.
    pub fn filtered(&self, mut keep: impl FnMut(&PixelTrajectory) -> bool) -> Self {
        Self::unchecked(
            self.frames,
            self.height,
            self.width,
            self.tracks.iter().filter(|t| keep(t)).cloned().collect(),
        )
    }

    pub fn check_geometry(&self, geom: &LatentGeometry) -> Result<()> {
        if (self.frames, self.height, self.width) != (geom.frames, geom.height, geom.width) {
            return Err(Error::shape(
                format!("{}x{}x{}", geom.frames, geom.height, geom.width),
                format!("{}x{}x{}", self.frames, self.height, self.width),
            ));
        }
        Ok(())
    }

    /// Clamps finite positions into `[0, H-1] × [0, W-1]`, returning how many were moved.
    pub fn clamp_to_bounds(&mut self) -> usize {
        let (max_r, max_c) = (self.height as f64 - 1.0, self.width as f64 - 1.0);
        let mut moved = 0;
        for track in &mut self.tracks {
            for p in &mut track.positions {
                if !p.is_finite() {
                    continue;
                }
                let q = Point::new(p.row.clamp(0.0, max_r), p.col.clamp(0.0, max_c));
                if q != *p {
                    moved += 1;
                    *p = q;
                }
            }
        }
        if moved > 0 {
            log::warn!("clamped {moved} out-of-bounds track position(s)");
        }
        moved
    }

    pub(crate) fn duplicate_ids(&self) -> Vec<u32> {
        let mut seen = HashSet::new();
        let mut dups = Vec::new();
        for t in &self.tracks {
            if !seen.insert(t.id) && !dups.contains(&t.id) {
                dups.push(t.id);
            }
        }
        dups
    }
}
