use std::path::{Path, PathBuf};

use latentmove_core::bench::{
    load_manifest, manifest_to_string, run_ablation, run_benchmark, write_blob_cases, write_outputs,
    AblationProtocol, AblationResult, RunConfig, TrackSetting,
};
use latentmove_core::data::{grid_points, make_blob_dataset, MotionFamily};
use latentmove_core::model::{train, Checkpoint, TrainConfig};
use latentmove_core::pipeline::{generate, SamplingConfig};
use latentmove_core::synth::{
    camera_tracks, motion_transfer, rotate3d_tracks, sphere_tracks, CameraPath, Intrinsics, SpherePrimitive,
};
use latentmove_core::{
    io, ConditionMode, Error, LatentGeometry, MockCodec, PixelTrajectory, Point, TrajectorySet,
};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{create_dir, write_file, CliError, CliResult};
use crate::inputs::{load_depth, load_mask};
use crate::{BenchCommand, Command, SampleArgs, SynthCommand};

pub fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Synth(s) => synth(s),
        Command::Train { config, out } => train_cmd(&config, out),
        Command::Sample(args) => sample_cmd(args),
        Command::Bench(b) => bench(b),
        Command::Serve {
            config,
            bind,
            port,
            ckpt,
        } => serve(config, bind, port, ckpt),
    }
}

fn save_tracks(set: &TrajectorySet, out: &Path) -> CliResult<()> {
    write_file(out, set.to_json())?;
    let visible: usize = set
        .tracks
        .iter()
        .map(|t| t.visible.iter().filter(|&&v| v).count())
        .sum();
    println!(
        "{}: {} tracks over {} frames, {visible} visible points",
        out.display(),
        set.len(),
        set.frames
    );
    Ok(())
}

fn focal_or_width(focal: Option<f64>, width: usize) -> f64 {
    focal.unwrap_or(width as f64)
}

fn synth(cmd: SynthCommand) -> CliResult<()> {
    match cmd {
        SynthCommand::Camera {
            depth,
            depth_scale,
            pinhole,
            translate,
            axis,
            angle,
            grid,
            out,
        } => {
            let depth = load_depth(&depth, depth_scale)?;
            let (h, w) = (depth.height(), depth.width());
            let k = Intrinsics::centered(h, w, focal_or_width(pinhole.focal, w))?;
            let path = CameraPath::linear(pinhole.frames, translate, axis, angle.to_radians())?;
            let seeds = grid_points(h, w, grid.max(1));
            save_tracks(&camera_tracks(&depth, &k, &path, &seeds)?, &out)
        }
        SynthCommand::Sphere {
            height,
            width,
            frames,
            center,
            radius,
            axis,
            angle,
            grid,
            out,
        } => {
            let center =
                center.unwrap_or_else(|| Point::new((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0));
            let sph = SpherePrimitive::new(center, radius, unit(axis)?, angle.to_radians())?;
            let seeds: Vec<Point> = grid_points(height, width, grid.max(1))
                .into_iter()
                .filter(|p| p.distance(&center) <= radius)
                .collect();
            if seeds.is_empty() {
                return Err(CliError::Usage("no grid point falls inside the sphere".into()));
            }
            save_tracks(&sphere_tracks(&sph, frames, height, width, &seeds)?, &out)
        }
        SynthCommand::Rotate3d {
            depth,
            depth_scale,
            mask,
            pinhole,
            axis,
            angle,
            stride,
            out,
        } => {
            let depth = load_depth(&depth, depth_scale)?;
            let mask = load_mask(&mask)?;
            let k = Intrinsics::centered(
                depth.height(),
                depth.width(),
                focal_or_width(pinhole.focal, depth.width()),
            )?;
            let set = rotate3d_tracks(
                &depth,
                &k,
                &mask,
                axis,
                angle.to_radians(),
                pinhole.frames,
                stride,
            )?;
            save_tracks(&set, &out)
        }
        SynthCommand::Grid {
            height,
            width,
            frames,
            per_side,
            out,
        } => {
            if per_side == 0 {
                return Err(CliError::Usage("--per-side must be at least 1".into()));
            }
            let tracks = grid_points(height, width, per_side)
                .into_iter()
                .enumerate()
                .map(|(i, p)| PixelTrajectory::stationary(i as u32, p, frames))
                .collect();
            save_tracks(&TrajectorySet::new(frames, height, width, tracks)?, &out)
        }
        SynthCommand::Transfer {
            tracks,
            height,
            width,
            out,
        } => {
            let src = TrajectorySet::load(&tracks)?;
            save_tracks(&motion_transfer(&src, src.frames, height, width)?, &out)
        }
    }
}

fn unit(axis: Vector3<f64>) -> CliResult<Vector3<f64>> {
    let n = axis.norm();
    if !(n.is_finite() && n > 0.0) {
        return Err(CliError::Usage("rotation axis must be nonzero".into()));
    }
    Ok(axis / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DataSpec {
    clips: usize,
    seed: u64,
    family: MotionFamily,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            clips: 200,
            seed: 100,
            family: MotionFamily::PiecewiseLinear,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainFile {
    out: Option<PathBuf>,
    data: DataSpec,
    train: TrainConfig,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.into(),
        source,
    })?;
    toml::from_str(&text).map_err(|source| CliError::Toml {
        path: path.into(),
        source,
    })
}

fn train_cmd(config: &Path, out: Option<PathBuf>) -> CliResult<()> {
    let file: TrainFile = read_toml(config)?;
    file.train.validate()?;
    let out = out.or(file.out).unwrap_or_else(|| PathBuf::from("run"));
    let geom = LatentGeometry::toy();
    let codec = MockCodec::new(geom)?;
    let mut rng = ChaCha8Rng::seed_from_u64(file.data.seed);
    let data = make_blob_dataset(&mut rng, file.data.clips, &geom, file.data.family);
    log::info!(
        "training {} steps on {} clips ({:?})",
        file.train.total_steps,
        data.len(),
        file.train.mode
    );
    let started = std::time::Instant::now();
    let outcome = train(&file.train, &data, &codec)?;
    let ckpt = Checkpoint::new(&outcome.model, geom, file.train.clone())?;
    create_dir(&out)?;
    ckpt.save(out.join("checkpoint.wmck"))?;
    let curve = &outcome.curve;
    let mut csv = String::from("step,lr,loss\n");
    for (s, (lr, loss)) in curve.lrs.iter().zip(&curve.losses).enumerate() {
        csv.push_str(&format!("{s},{lr},{loss}\n"));
    }
    write_file(&out.join("loss.csv"), csv)?;
    let n = curve.losses.len();
    let window = n.min(50);
    println!(
        "checkpoint {} in {:.1}s: loss {:.4} -> {:.4}, empty track draws {}/{}",
        ckpt.id(),
        started.elapsed().as_secs_f64(),
        curve.mean(0..window),
        curve.mean(n - window..n),
        curve.empty_draws,
        curve.total_draws
    );
    println!("wrote {}", out.join("checkpoint.wmck").display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct SampleMeta {
    checkpoint_id: String,
    w: f64,
    steps: usize,
    seed: u64,
    mode: ConditionMode,
    tracks_used: usize,
}

fn sample_cmd(args: SampleArgs) -> CliResult<()> {
    let ckpt = Checkpoint::load(&args.ckpt)?;
    let tracks = TrajectorySet::load(&args.tracks)?;
    let frame = io::load_frame(&args.frame)?;
    let codec = MockCodec::new(ckpt.header.geometry)?;
    let cfg = SamplingConfig {
        guidance: args.w,
        steps: args.steps,
        mode: args.mode.into(),
    };
    let out = generate(&ckpt.model, &codec, frame.view(), &tracks, &cfg, args.seed)?;
    create_dir(&args.out)?;
    io::save_video(&out.video, args.out.join("video.wmt1"))?;
    out.latent.to_raw().save(args.out.join("latent.wmt1"))?;
    write_file(&args.out.join("video.png"), io::encode_apng(&out.video, 8)?)?;
    let meta = SampleMeta {
        checkpoint_id: ckpt.id(),
        w: args.w,
        steps: args.steps,
        seed: args.seed,
        mode: cfg.mode,
        tracks_used: tracks.len(),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(Error::from)?;
    write_file(&args.out.join("sample.json"), json + "\n")?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn bench(cmd: BenchCommand) -> CliResult<()> {
    match cmd {
        BenchCommand::Run {
            manifest,
            ckpt,
            seed,
            w,
            steps,
            mode,
            max_tracks,
            out,
        } => {
            let cases = load_manifest(&manifest)?;
            let base = manifest.parent().unwrap_or(Path::new("."));
            let ckpt = ckpt.map(Checkpoint::load).transpose()?;
            let cfg = RunConfig {
                seed,
                sampling: SamplingConfig {
                    guidance: w,
                    steps,
                    mode: mode.into(),
                },
                max_tracks,
            };
            let (report, log) = run_benchmark(&cases, base, ckpt.as_ref(), &cfg);
            write_outputs(&report, &log, &out)?;
            let a = &report.aggregate;
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            println!(
                "{} cases ({} failed): EPE {} PSNR {} ({} identical) SSIM {}",
                a.cases,
                a.failed,
                fmt(a.epe_mean),
                fmt(a.psnr_mean),
                a.psnr_infinite,
                fmt(a.ssim_mean)
            );
            println!("wrote {}", out.display());
            Ok(())
        }
        BenchCommand::Blobs {
            count,
            seed,
            pass_through,
            out,
        } => {
            create_dir(&out)?;
            let geom = LatentGeometry::toy();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let samples = make_blob_dataset(&mut rng, count, &geom, MotionFamily::PiecewiseLinear);
            let cases = write_blob_cases(&out, "blob-", "blobs", &samples, pass_through)?;
            let path = out.join("manifest.jsonl");
            write_file(&path, manifest_to_string(&cases))?;
            println!("wrote {} cases to {}", cases.len(), path.display());
            Ok(())
        }
        BenchCommand::Ablate { seeds, steps, out } => ablate(&seeds, steps, out.as_deref()),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn ablate(seeds: &[u64], steps: Option<usize>, out: Option<&Path>) -> CliResult<()> {
    if seeds.is_empty() {
        return Err(CliError::Usage("--seeds is empty".into()));
    }
    let mut protocol = AblationProtocol::default();
    if let Some(s) = steps {
        protocol.train.total_steps = s;
    }
    let results: Vec<AblationResult> = seeds
        .iter()
        .map(|&s| run_ablation(&protocol, s))
        .collect::<Result<_, _>>()?;
    let dense = TrackSetting::Dense(protocol.dense_per_side);
    let rows = [
        (ConditionMode::LatentReplication, TrackSetting::None),
        (ConditionMode::LatentReplication, TrackSetting::Single),
        (ConditionMode::LatentReplication, TrackSetting::PerObject),
        (ConditionMode::LatentReplication, dense),
        (ConditionMode::PixelReplication, TrackSetting::PerObject),
        (ConditionMode::PixelReplication, dense),
        (ConditionMode::RandomEmbedding, TrackSetting::PerObject),
        (ConditionMode::RandomEmbedding, dense),
    ];
    println!("{:<20} {:<12} {:>8}  per seed", "mode", "tracks", "median");
    for (mode, setting) in rows {
        let per: Vec<f64> = results.iter().filter_map(|r| r.get(mode, setting)).collect();
        let cells: Vec<String> = per.iter().map(|e| format!("{e:.3}")).collect();
        println!(
            "{:<20} {:<12} {:>8.3}  {}",
            format!("{mode:?}"),
            format!("{setting:?}"),
            median(per.clone()),
            cells.join(" ")
        );
    }
    let floors: Vec<f64> = results.iter().map(|r| r.codec_floor).collect();
    println!("codec round-trip floor {:.3}", median(floors));
    if let Some(out) = out {
        let json = serde_json::to_string_pretty(&results).map_err(Error::from)?;
        write_file(out, json + "\n")?;
    }
    Ok(())
}

fn serve(
    config: Option<PathBuf>,
    bind: Option<String>,
    port: Option<u16>,
    ckpt: Option<PathBuf>,
) -> CliResult<()> {
    let mut cfg = match config {
        Some(p) => latentmove_server::ServerConfig::load(&p)?,
        None => latentmove_server::ServerConfig::default(),
    };
    if let Some(b) = bind {
        cfg.bind = b;
    }
    if let Some(p) = port {
        cfg.port = p;
    }
    if ckpt.is_some() {
        cfg.ckpt = ckpt;
    }
    cfg.validate()?;
    let checkpoint = cfg.ckpt.as_ref().map(Checkpoint::load).transpose()?;
    if checkpoint.is_none() {
        log::warn!("no checkpoint: previews work, generation answers 503");
    }
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(CliError::Serve)?;
    rt.block_on(latentmove_server::serve(cfg, checkpoint))
        .map_err(CliError::Serve)
}
