use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use latentmove_core::ConditionMode;
use latentmove_core::Point;
use nalgebra::Vector3;

mod commands;
mod error;
mod inputs;

use inputs::{parse_point, parse_vec3};

#[derive(Debug, Parser)]
#[command(
    name = "latentmove",
    version,
    about = "Trajectory-guided toy image-to-video generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate trajectory files.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Train a toy generator on synthetic blob clips.
    Train {
        /// TOML with optional `[data]` and `[train]` tables.
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `out` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate one clip from a first frame and a trajectory file.
    Sample(SampleArgs),
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        ckpt: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Pinhole {
    /// Focal length in pixels; defaults to the image width.
    #[arg(long)]
    focal: Option<f64>,
    #[arg(long, default_value_t = 9)]
    frames: usize,
}

#[derive(Debug, Subcommand)]
enum SynthCommand {
    /// Depth-lifted grid seeds seen from a moving camera.
    Camera {
        /// Depth map: WMT1 `[H, W]` or 8-bit grayscale PNG.
        #[arg(long)]
        depth: PathBuf,
        /// Scene units per PNG level.
        #[arg(long, default_value_t = 1.0)]
        depth_scale: f64,
        #[command(flatten)]
        pinhole: Pinhole,
        /// Final camera center `x,y,z`; moves linearly from the origin.
        #[arg(long, value_parser = parse_vec3, default_value = "0,0,0")]
        translate: Vector3<f64>,
        #[arg(long, value_parser = parse_vec3, default_value = "0,1,0")]
        axis: Vector3<f64>,
        /// Total camera rotation in degrees.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        angle: f64,
        /// Seeds on an N×N grid.
        #[arg(long, default_value_t = 8)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeds on a spinning sphere, projected orthographically.
    Sphere {
        #[arg(long, default_value_t = 32)]
        height: usize,
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 9)]
        frames: usize,
        /// Disc center `row,col`; defaults to the image center.
        #[arg(long, value_parser = parse_point)]
        center: Option<Point>,
        #[arg(long)]
        radius: f64,
        #[arg(long, value_parser = parse_vec3, default_value = "0,1,0")]
        axis: Vector3<f64>,
        #[arg(long, default_value_t = 90.0, allow_negative_numbers = true)]
        angle: f64,
        /// Seeds are the points of an N×N grid that fall inside the disc.
        #[arg(long, default_value_t = 16)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Masked object pixels lifted through depth and spun about their centroid.
    Rotate3d {
        #[arg(long)]
        depth: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        depth_scale: f64,
        /// Object mask: nonzero pixels belong to the object.
        #[arg(long)]
        mask: PathBuf,
        #[command(flatten)]
        pinhole: Pinhole,
        #[arg(long, value_parser = parse_vec3, default_value = "0,1,0")]
        axis: Vector3<f64>,
        #[arg(long, default_value_t = 45.0, allow_negative_numbers = true)]
        angle: f64,
        /// Keep every STRIDE-th masked row and column.
        #[arg(long, default_value_t = 2)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stationary tracks on a regular grid.
    Grid {
        #[arg(long, default_value_t = 32)]
        height: usize,
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 9)]
        frames: usize,
        #[arg(long, default_value_t = 4)]
        per_side: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rescale tracks to a new frame size.
    Transfer {
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Latent,
    Pixel,
    Random,
}

impl From<Mode> for ConditionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Latent => ConditionMode::LatentReplication,
            Mode::Pixel => ConditionMode::PixelReplication,
            Mode::Random => ConditionMode::RandomEmbedding,
        }
    }
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    tracks: PathBuf,
    /// First frame, PNG or WMT1.
    #[arg(long)]
    frame: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    w: f64,
    #[arg(long, default_value_t = 50)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::Latent)]
    mode: Mode,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum BenchCommand {
    /// Score a manifest of cases.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        /// Required unless every case supplies a generated video.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5.0)]
        w: f64,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = Mode::Latent)]
        mode: Mode,
        /// Use only the first N tracks of each case.
        #[arg(long)]
        max_tracks: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a manifest of synthetic blob cases.
    Blobs {
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also store the ground truth as the generated video.
        #[arg(long)]
        pass_through: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Track-count and guidance-strategy ablations on held-out blob clips.
    Ablate {
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long)]
        steps: Option<usize>,
        /// Write every result as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
