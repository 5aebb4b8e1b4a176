use std::path::Path;

use latentmove_core::bench::{
    load_manifest, manifest_to_string, parse_manifest, run_benchmark, write_blob_cases, write_outputs,
    BenchmarkCase, EvalReport, RunConfig,
};
use latentmove_core::data::{make_blob_dataset, BlobSample, MotionFamily};
use latentmove_core::model::{Checkpoint, DenoiserDims, ToyDenoiser, TrainConfig};
use latentmove_core::LatentGeometry;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn samples(n: usize, seed: u64) -> Vec<BlobSample> {
    let geom = LatentGeometry::toy();
    make_blob_dataset(
        &mut ChaCha8Rng::seed_from_u64(seed),
        n,
        &geom,
        MotionFamily::PiecewiseLinear,
    )
}

fn write_manifest(dir: &Path, cases: &[BenchmarkCase]) -> std::path::PathBuf {
    let path = dir.join("manifest.jsonl");
    std::fs::write(&path, manifest_to_string(cases)).unwrap();
    path
}

fn tiny_checkpoint() -> Checkpoint {
    let geom = LatentGeometry::toy();
    let model = ToyDenoiser::new(DenoiserDims::for_geometry(&geom, 8), 11);
    Checkpoint::new(&model, geom, TrainConfig::default()).unwrap()
}

#[test]
fn ground_truth_as_generated_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let cases = write_blob_cases(dir.path(), "gt-", "pass", &samples(4, 1), true).unwrap();
    let manifest = load_manifest(write_manifest(dir.path(), &cases)).unwrap();
    assert_eq!(manifest, cases);
    let (report, log) = run_benchmark(&manifest, dir.path(), None, &RunConfig::default());
    assert_eq!(report.cases.len(), 4);
    for c in &report.cases {
        assert_eq!(c.error, None);
        assert_eq!(c.epe, Some(0.0));
        assert_eq!(c.ssim, Some(1.0));
        assert_eq!(c.psnr, Some(f64::INFINITY));
    }
    assert_eq!(report.aggregate.psnr_infinite, 4);
    assert_eq!(report.aggregate.psnr_mean, None);
    assert!(report.to_json().contains("\"psnr\": \"inf\""));
    assert_eq!(EvalReport::from_json(&report.to_json()).unwrap(), report);
    assert_eq!(log.len(), 6);
}

#[test]
fn empty_manifest_gives_an_empty_report() {
    let cases = parse_manifest("\n# nothing here\n").unwrap();
    let (report, _) = run_benchmark(&cases, Path::new("."), None, &RunConfig::default());
    assert!(report.cases.is_empty());
    assert_eq!(report.aggregate.cases, 0);
    assert_eq!(report.aggregate.epe_mean, None);
    assert_eq!(report.fid, None);
    assert!(report.to_json().contains("\"fvd\": null"));
}

#[test]
fn aggregates_are_row_means() {
    let dir = tempfile::tempdir().unwrap();
    let cases = write_blob_cases(dir.path(), "blob-", "blobs", &samples(20, 2), false).unwrap();
    let ckpt = tiny_checkpoint();
    let cfg = RunConfig {
        seed: 3,
        sampling: latentmove_core::pipeline::SamplingConfig {
            steps: 4,
            ..Default::default()
        },
        ..Default::default()
    };
    let (report, _) = run_benchmark(&cases, dir.path(), Some(&ckpt), &cfg);
    assert_eq!(report.cases.len(), 20);
    assert_eq!(report.aggregate.failed, 0);
    let mean = |f: &dyn Fn(&latentmove_core::bench::CaseResult) -> f64| {
        report.cases.iter().map(f).sum::<f64>() / 20.0
    };
    let epe = mean(&|c| c.epe.unwrap());
    let ssim = mean(&|c| c.ssim.unwrap());
    let psnr = mean(&|c| c.psnr.unwrap());
    assert!((report.aggregate.epe_mean.unwrap() - epe).abs() < 1e-12);
    assert!((report.aggregate.ssim_mean.unwrap() - ssim).abs() < 1e-12);
    assert!((report.aggregate.psnr_mean.unwrap() - psnr).abs() < 1e-12);
    for c in &report.cases {
        assert!(c.epe.unwrap() >= 0.0);
        assert!((-1.0..=1.0).contains(&c.ssim.unwrap()));
    }
    assert_eq!(report.checkpoint_id.as_deref(), Some(ckpt.id().as_str()));
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cases = write_blob_cases(dir.path(), "b", "blobs", &samples(3, 4), false).unwrap();
    let ckpt = tiny_checkpoint();
    let cfg = RunConfig {
        seed: 9,
        ..Default::default()
    };
    let mut outputs = Vec::new();
    for run in 0..2 {
        let (report, log) = run_benchmark(&cases, dir.path(), Some(&ckpt), &cfg);
        let out = dir.path().join(format!("out{run}"));
        write_outputs(&report, &log, &out).unwrap();
        let files: Vec<Vec<u8>> = ["report.json", "summary.csv", "run.log.jsonl"]
            .iter()
            .map(|f| std::fs::read(out.join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn broken_cases_are_recorded_and_the_run_continues() {
    let dir = tempfile::tempdir().unwrap();
    let mut cases = write_blob_cases(dir.path(), "c", "blobs", &samples(2, 5), true).unwrap();
    cases[0].video = "missing.wmt1".into();
    let (report, log) = run_benchmark(&cases, dir.path(), None, &RunConfig::default());
    assert!(report.cases[0].error.as_deref().unwrap().contains("missing.wmt1"));
    assert_eq!(report.cases[1].error, None);
    assert_eq!(report.aggregate.failed, 1);
    assert!(report.to_csv().lines().nth(1).unwrap().contains("missing.wmt1"));
    assert!(matches!(
        &log[1],
        latentmove_core::bench::LogEvent::Case { status, .. } if status == "error"
    ));
}

#[test]
fn supplied_predicted_tracks_are_scored_directly() {
    let dir = tempfile::tempdir().unwrap();
    let s = samples(1, 6);
    let mut cases = write_blob_cases(dir.path(), "p", "blobs", &s, true).unwrap();
    let mut shifted = s[0].tracks.clone();
    for t in &mut shifted.tracks {
        for p in &mut t.positions {
            p.row += 3.0;
            p.col += 4.0;
        }
    }
    // Keep the shift inside the frame so nothing is clamped.
    shifted.save(dir.path().join("pred.json")).unwrap();
    cases[0].predicted_tracks = Some("pred.json".into());
    let (report, _) = run_benchmark(&cases, dir.path(), None, &RunConfig::default());
    let epe = report.cases[0].epe.unwrap();
    assert!((epe - 5.0).abs() < 1e-9, "{epe}");
}

#[test]
fn manifest_lines_reject_unknown_fields() {
    let err =
        parse_manifest(r#"{"id":"a","category":"x","first_frame":"f","video":"v","tracks":"t","bogus":1}"#);
    assert!(err.is_err());
}
