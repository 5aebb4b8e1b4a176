use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::data::BlobSample;
use crate::error::{Error, Result};
use crate::io;
use crate::tensor::VideoTensor;
use crate::trajectory::TrajectorySet;

/// A track to re-measure in generated videos with the blob tracker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackTarget {
    pub id: u32,
    pub channel: usize,
}

/// One manifest line. Paths are relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkCase {
    pub id: String,
    pub category: String,
    pub first_frame: PathBuf,
    pub video: PathBuf,
    pub tracks: PathBuf,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub masks: Vec<PathBuf>,
    #[serde(default)]
    pub caption: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<TrackTarget>,
    /// Score this video instead of sampling one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated: Option<PathBuf>,
    /// Score these tracks instead of re-tracking.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_tracks: Option<PathBuf>,
}

/// A case with its files read and checked.
#[derive(Debug, Clone)]
pub struct LoadedCase {
    pub first_frame: Array3<f32>,
    pub video: VideoTensor,
    pub tracks: TrajectorySet,
    pub masks: Vec<Array3<f32>>,
    pub generated: Option<VideoTensor>,
    pub predicted_tracks: Option<TrajectorySet>,
}

impl BenchmarkCase {
    pub fn load(&self, base: &Path) -> Result<LoadedCase> {
        let first_frame = io::load_frame(base.join(&self.first_frame))?;
        let video = io::load_video(base.join(&self.video))?;
        let tracks = TrajectorySet::load(base.join(&self.tracks))?;
        if tracks.frames != video.frames() {
            return Err(Error::shape(
                format!("{} frames (video)", video.frames()),
                format!("{} frames (tracks)", tracks.frames),
            ));
        }
        if first_frame.dim() != (video.height(), video.width(), 3) {
            return Err(Error::shape(
                format!("{}x{} first frame", video.height(), video.width()),
                format!("{:?}", first_frame.dim()),
            ));
        }
        let masks = self
            .masks
            .iter()
            .map(|m| io::load_frame(base.join(m)))
            .collect::<Result<_>>()?;
        let generated = self
            .generated
            .as_ref()
            .map(|p| io::load_video(base.join(p)))
            .transpose()?;
        let predicted_tracks = self
            .predicted_tracks
            .as_ref()
            .map(|p| TrajectorySet::load(base.join(p)))
            .transpose()?;
        Ok(LoadedCase {
            first_frame,
            video,
            tracks,
            masks,
            generated,
            predicted_tracks,
        })
    }
}

/// Parses JSON lines; blank lines and lines starting with `#` are skipped.
pub fn parse_manifest(text: &str) -> Result<Vec<BenchmarkCase>> {
    let mut cases = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let case: BenchmarkCase =
            serde_json::from_str(line).map_err(|e| Error::Format(format!("manifest line {}: {e}", i + 1)))?;
        cases.push(case);
    }
    Ok(cases)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<BenchmarkCase>> {
    let path = path.as_ref();
    parse_manifest(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn manifest_to_string(cases: &[BenchmarkCase]) -> String {
    cases
        .iter()
        .map(|c| serde_json::to_string(c).expect("cases serialize") + "\n")
        .collect()
}

/// Frame-0 coverage mask (`alpha ≥ 0.5`) of each blob, white on black.
fn blob_masks(sample: &BlobSample) -> Vec<Array2<bool>> {
    let (h, w) = sample.background.dim();
    sample
        .blobs
        .iter()
        .map(|b| {
            Array2::from_shape_fn((h, w), |(r, c)| {
                b.alpha(0, crate::trajectory::Point::new(r as f64, c as f64)) >= 0.5
            })
        })
        .collect()
}

/// Writes each sample under `dir/<id>/` and returns the manifest lines.
///
/// With `pass_through` the ground-truth video is also listed as the
/// generated one, which must score EPE 0 and SSIM 1.
pub fn write_blob_cases(
    dir: &Path,
    prefix: &str,
    category: &str,
    samples: &[BlobSample],
    pass_through: bool,
) -> Result<Vec<BenchmarkCase>> {
    let mut cases = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let id = format!("{prefix}{i:03}");
        let case_dir = dir.join(&id);
        std::fs::create_dir_all(&case_dir).map_err(|e| Error::io(&case_dir, e))?;
        let rel = |name: &str| PathBuf::from(&id).join(name);

        io::save_frame(
            crate::codec::first_frame(&s.video).view(),
            dir.join(rel("frame.png")),
        )?;
        io::save_video(&s.video, dir.join(rel("video.wmt1")))?;
        s.tracks.save(dir.join(rel("tracks.json")))?;
        let mut masks = Vec::new();
        for (k, m) in blob_masks(s).iter().enumerate() {
            let img = Array3::from_shape_fn(
                (m.nrows(), m.ncols(), 3),
                |(r, c, _)| {
                    if m[[r, c]] {
                        1.0
                    } else {
                        0.0
                    }
                },
            );
            let name = format!("mask{k}.png");
            io::save_frame(img.view(), dir.join(rel(&name)))?;
            masks.push(rel(&name));
        }
        let hues = ["red", "green", "blue"];
        let caption = s
            .blobs
            .iter()
            .map(|b| format!("a {} blob", hues[b.channel]))
            .collect::<Vec<_>>()
            .join(" and ");
        cases.push(BenchmarkCase {
            id: id.clone(),
            category: category.to_string(),
            first_frame: rel("frame.png"),
            video: rel("video.wmt1"),
            tracks: rel("tracks.json"),
            masks,
            caption: format!("{caption} moving over a gray texture"),
            targets: s
                .blobs
                .iter()
                .enumerate()
                .map(|(k, b)| TrackTarget {
                    id: k as u32,
                    channel: b.channel,
                })
                .collect(),
            generated: pass_through.then(|| rel("video.wmt1")),
            predicted_tracks: None,
        });
    }
    Ok(cases)
}
