use std::path::Path;

use super::manifest::{BenchmarkCase, LoadedCase};
use super::report::{CaseResult, EvalReport, LogEvent, RunConfig};
use crate::codec::MockCodec;
use crate::data::track_all;
use crate::error::{Error, Result};
use crate::metrics::{epe, psnr, ssim};
use crate::model::Checkpoint;
use crate::pipeline::generate;
use crate::tensor::VideoTensor;
use crate::trajectory::TrajectorySet;

struct Scores {
    tracks_used: usize,
    epe: Option<f64>,
    psnr: f64,
    ssim: f64,
}

fn limit_tracks(set: &TrajectorySet, max: Option<usize>) -> TrajectorySet {
    let mut out = set.clone();
    if let Some(n) = max {
        out.tracks.sort_by_key(|t| t.id);
        out.tracks.truncate(n);
    }
    out
}

fn score_case(
    case: &BenchmarkCase,
    loaded: &LoadedCase,
    ckpt: Option<&Checkpoint>,
    cfg: &RunConfig,
    seed: u64,
) -> Result<Scores> {
    let tracks = limit_tracks(&loaded.tracks, cfg.max_tracks);
    let generated: VideoTensor = match (&loaded.generated, ckpt) {
        (Some(v), _) => v.clone(),
        (None, Some(ck)) => {
            let codec = MockCodec::new(ck.header.geometry)?;
            loaded.video.check_geometry(&ck.header.geometry)?;
            generate(
                &ck.model,
                &codec,
                loaded.first_frame.view(),
                &tracks,
                &cfg.sampling,
                seed,
            )?
            .video
        }
        (None, None) => {
            return Err(Error::InvalidInput("no checkpoint and no generated video".into()));
        }
    };
    let epe = if let Some(pred) = &loaded.predicted_tracks {
        Some(epe(&loaded.tracks, pred)?)
    } else if !case.targets.is_empty() {
        let targets: Vec<(u32, usize)> = case.targets.iter().map(|t| (t.id, t.channel)).collect();
        Some(epe(
            &track_all(&loaded.video, &targets),
            &track_all(&generated, &targets),
        )?)
    } else {
        None
    };
    Ok(Scores {
        tracks_used: tracks.tracks.len(),
        epe,
        psnr: psnr(&loaded.video, &generated)?,
        ssim: ssim(&loaded.video, &generated)?,
    })
}

/// Scores every case in manifest order. Case `i` samples with seed
/// `cfg.seed + i`. A failing case is recorded and the run continues.
pub fn run_benchmark(
    cases: &[BenchmarkCase],
    base: &Path,
    ckpt: Option<&Checkpoint>,
    cfg: &RunConfig,
) -> (EvalReport, Vec<LogEvent>) {
    let mut log = vec![LogEvent::Start {
        cases: cases.len(),
        seed: cfg.seed,
    }];
    let mut results = Vec::with_capacity(cases.len());
    for (i, case) in cases.iter().enumerate() {
        let seed = cfg.seed.wrapping_add(i as u64);
        let outcome = case
            .load(base)
            .and_then(|l| score_case(case, &l, ckpt, cfg, seed));
        let (result, status, detail) = match outcome {
            Ok(s) => (
                CaseResult {
                    id: case.id.clone(),
                    category: case.category.clone(),
                    tracks_used: s.tracks_used,
                    epe: s.epe,
                    psnr: Some(s.psnr),
                    ssim: Some(s.ssim),
                    error: None,
                },
                "ok",
                None,
            ),
            Err(e) => {
                log::warn!("case {}: {e}", case.id);
                (
                    CaseResult {
                        id: case.id.clone(),
                        category: case.category.clone(),
                        tracks_used: 0,
                        epe: None,
                        psnr: None,
                        ssim: None,
                        error: Some(e.to_string()),
                    },
                    "error",
                    Some(e.to_string()),
                )
            }
        };
        log.push(LogEvent::Case {
            index: i,
            id: case.id.clone(),
            status: status.into(),
            detail,
        });
        results.push(result);
    }
    let report = EvalReport::new(ckpt.map(Checkpoint::id), cfg.clone(), results);
    log.push(LogEvent::Finish {
        failed: report.aggregate.failed,
    });
    (report, log)
}
