use std::collections::HashMap;
use std::path::{Path, PathBuf};

use latentmove_core::io;
use latentmove_core::{ConditionMode, LatentGeometry, LatentTensor, TrajectorySet, VideoTensor};
use ndarray::Array3;
use serde::{Deserialize, Serialize};

/// Everything that identifies a generation for caching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GenerationKey {
    pub version: u64,
    pub w_bits: u64,
    pub steps: usize,
    pub seed: u64,
    pub mode: ConditionMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackEpe {
    pub id: u32,
    pub epe: Option<f64>,
}

/// The JSON form of a generation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultReport {
    pub result_id: String,
    pub w: f64,
    pub steps: usize,
    pub seed: u64,
    pub mode: ConditionMode,
    pub tracks_used: usize,
    /// Mean over requested tracks; absent when no tracks were requested.
    pub epe: Option<f64>,
    pub per_track: Vec<TrackEpe>,
    /// Re-tracked positions as `[x, y]` per frame, in request order.
    pub retracked: Vec<Vec<[f64; 2]>>,
    pub checkpoint_id: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GenerationResult {
    pub report: ResultReport,
    pub video: VideoTensor,
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub geometry: LatentGeometry,
    pub created_unix: u64,
    pub frame: Option<Array3<f32>>,
    pub uncond: Option<LatentTensor>,
    pub tracks: Option<TrajectorySet>,
    /// Bumped on every frame or track change.
    pub version: u64,
    pub results: HashMap<String, GenerationResult>,
    pub cache: HashMap<GenerationKey, String>,
    pub in_flight: bool,
    next_result: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SessionMeta {
    id: String,
    geometry: LatentGeometry,
    created_unix: u64,
}

impl Session {
    pub fn new(id: String, geometry: LatentGeometry, created_unix: u64) -> Self {
        Self {
            id,
            geometry,
            created_unix,
            frame: None,
            uncond: None,
            tracks: None,
            version: 0,
            results: HashMap::new(),
            cache: HashMap::new(),
            in_flight: false,
            next_result: 0,
        }
    }

    pub fn next_result_id(&mut self) -> String {
        self.next_result += 1;
        format!("r{}", self.next_result)
    }

    /// Drops cached generation keys; stored results stay retrievable.
    pub fn invalidate(&mut self) {
        self.version += 1;
        self.cache.clear();
    }
}

/// Directory-backed session persistence: `<dir>/<id>/session.json`, plus
/// `frame.wmt1` and `tracks.json` once present. Results are not persisted.
#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn session_dir(&self, id: &str) -> PathBuf {
        self.dir.join(id)
    }

    pub fn save(&self, s: &Session) -> latentmove_core::Result<()> {
        let dir = self.session_dir(&s.id);
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let meta = SessionMeta {
            id: s.id.clone(),
            geometry: s.geometry,
            created_unix: s.created_unix,
        };
        let path = dir.join("session.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&meta)?).map_err(|e| io_err(&path, e))?;
        if let Some(frame) = &s.frame {
            io::save_frame(frame.view(), dir.join("frame.wmt1"))?;
        }
        if let Some(tracks) = &s.tracks {
            tracks.save(dir.join("tracks.json"))?;
        }
        Ok(())
    }

    /// Restores every session directory; unreadable ones are skipped with a warning.
    pub fn load_all(&self) -> Vec<Session> {
        let Ok(entries) = std::fs::read_dir(&self.dir) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for entry in entries.flatten() {
            match self.load_one(&entry.path()) {
                Ok(s) => out.push(s),
                Err(e) => log::warn!("skipping session {}: {e}", entry.path().display()),
            }
        }
        out
    }

    fn load_one(&self, dir: &Path) -> latentmove_core::Result<Session> {
        let path = dir.join("session.json");
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let meta: SessionMeta = serde_json::from_str(&text)?;
        let mut s = Session::new(meta.id, meta.geometry, meta.created_unix);
        let frame_path = dir.join("frame.wmt1");
        if frame_path.exists() {
            let frame = io::load_frame(&frame_path)?;
            let codec = latentmove_core::MockCodec::new(s.geometry)?;
            s.uncond = Some(codec.encode_condition(frame.view())?);
            s.frame = Some(frame);
        }
        let tracks_path = dir.join("tracks.json");
        if tracks_path.exists() {
            s.tracks = Some(TrajectorySet::load(&tracks_path)?);
        }
        Ok(s)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> latentmove_core::Error {
    latentmove_core::Error::Io {
        path: path.into(),
        source,
    }
}
