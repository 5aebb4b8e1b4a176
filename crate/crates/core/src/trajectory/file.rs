use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PixelTrajectory, Point, TrajectorySet};
use crate::error::{Error, Result};

pub const TRAJECTORY_FILE_VERSION: u32 = 1;

/// One track as stored on disk. Points are `[x, y]` = `[col, row]`;
/// a `null` coordinate stands for a missing (non-finite) value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub id: u32,
    pub points: Vec<[Option<f64>; 2]>,
    pub visible: Vec<bool>,
}

/// The on-disk trajectory JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub version: u32,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub tracks: Vec<TrackRecord>,
}

impl TrajectoryFile {
    pub fn from_set(set: &TrajectorySet) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        Self {
            version: TRAJECTORY_FILE_VERSION,
            frames: set.frames,
            height: set.height,
            width: set.width,
            tracks: set
                .tracks
                .iter()
                .map(|t| TrackRecord {
                    id: t.id,
                    points: t
                        .positions
                        .iter()
                        .map(|p| [finite(p.col), finite(p.row)])
                        .collect(),
                    visible: t.visible.clone(),
                })
                .collect(),
        }
    }

    /// Converts to the internal `(row, col)` form without clamping or validation.
    pub fn to_raw_set(&self) -> Result<TrajectorySet> {
        if self.version != TRAJECTORY_FILE_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported trajectory file version {}",
                self.version
            )));
        }
        let tracks = self
            .tracks
            .iter()
            .map(|r| {
                let positions = r
                    .points
                    .iter()
                    .map(|[x, y]| Point::new(y.unwrap_or(f64::NAN), x.unwrap_or(f64::NAN)))
                    .collect();
                PixelTrajectory::new(r.id, positions, r.visible.clone())
            })
            .collect();
        Ok(TrajectorySet::unchecked(
            self.frames,
            self.height,
            self.width,
            tracks,
        ))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trajectory files always serialize")
    }
}

impl TrajectorySet {
    /// Parses a trajectory document, rejecting structural problems and clamping
    /// positions that overshoot the frame.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut set = TrajectoryFile::from_json(text)?.to_raw_set()?;
        let report = super::validate_set(&set);
        if report.has_structural() {
            let first = report
                .violations
                .iter()
                .find(|v| !matches!(v.kind, super::ViolationKind::OutOfBounds { .. }))
                .expect("has_structural implies one exists");
            return Err(Error::InvalidInput(format!("trajectory file: {first}")));
        }
        set.clamp_to_bounds();
        Ok(set)
    }

    pub fn to_json(&self) -> String {
        TrajectoryFile::from_set(self).to_json()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_uses_x_then_y() {
        let json = r#"{"version":1,"frames":2,"height":10,"width":20,
            "tracks":[{"id":4,"points":[[15.0,3.0],[16.0,3.5]],"visible":[true,false]}]}"#;
        let set = TrajectorySet::from_json(json).unwrap();
        assert_eq!(set.tracks[0].positions[0], Point::new(3.0, 15.0));
        assert_eq!(set.tracks[0].positions[1], Point::new(3.5, 16.0));
        assert_eq!(set.tracks[0].visible, vec![true, false]);
        let back: serde_json::Value = serde_json::from_str(&set.to_json()).unwrap();
        assert_eq!(back["tracks"][0]["points"][1], serde_json::json!([16.0, 3.5]));
    }

    #[test]
    fn loader_clamps_overshoot() {
        let json = r#"{"version":1,"frames":1,"height":10,"width":20,
            "tracks":[{"id":0,"points":[[19.4,-0.3]],"visible":[true]}]}"#;
        let set = TrajectorySet::from_json(json).unwrap();
        assert_eq!(set.tracks[0].positions[0], Point::new(0.0, 19.0));
    }

    #[test]
    fn loader_rejects_null_and_wrong_length() {
        let nan = r#"{"version":1,"frames":1,"height":10,"width":20,
            "tracks":[{"id":0,"points":[[null,1.0]],"visible":[true]}]}"#;
        assert!(TrajectorySet::from_json(nan).is_err());
        let raw = TrajectoryFile::from_json(nan).unwrap().to_raw_set().unwrap();
        assert!(raw.tracks[0].positions[0].col.is_nan());
        let short = r#"{"version":1,"frames":2,"height":10,"width":20,
            "tracks":[{"id":0,"points":[[1.0,1.0]],"visible":[true]}]}"#;
        assert!(TrajectorySet::from_json(short).is_err());
        let version = r#"{"version":2,"frames":0,"height":1,"width":1,"tracks":[]}"#;
        assert!(TrajectorySet::from_json(version).is_err());
    }
}
