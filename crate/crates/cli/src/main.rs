//! `segmatch`: simulate flights, build object maps, align them and score
//! the result.
//!
//! Exit status is 0 on success, 1 for usage errors and 2 for data errors
//! (unreadable or invalid inputs, failed self-tests).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "segmatch", version, about = "Object-map building and windowed map alignment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic world, fly over it and write an observation log
    /// plus its ground-truth sidecar.
    Simulate(SimulateArgs),
    /// Build a vehicle map from an observation log.
    Map(MapArgs),
    /// Align two map files window by window.
    Align(AlignArgs),
    /// Label window pairs from ground truth and score a hypothesis report.
    Eval(EvalArgs),
    /// Time the full window search over a WL/SL grid.
    Bench(BenchArgs),
    /// Check every solver against its exhaustive oracle.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Args)]
struct CameraArgs {
    /// Focal length in pixels (fx = fy).
    #[arg(long, default_value_t = 400.0)]
    focal: f64,
    #[arg(long, default_value_t = 640)]
    image_width: u32,
    #[arg(long, default_value_t = 480)]
    image_height: u32,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct SimulateArgs {
    #[arg(long)]
    out_log: PathBuf,
    #[arg(long)]
    out_truth: PathBuf,

    #[arg(long, default_value_t = 1)]
    world_seed: u64,
    #[arg(long, default_value_t = 2)]
    flight_seed: u64,
    #[arg(long, default_value_t = 3)]
    season_seed: u64,

    /// Strip length along x, meters.
    #[arg(long, default_value_t = 5000.0)]
    length: f64,
    /// Strip width along y, meters.
    #[arg(long, default_value_t = 70.0)]
    width: f64,
    #[arg(long, default_value_t = 1000)]
    objects: u64,
    #[arg(long, default_value_t = 0.0)]
    ground_z: f64,
    /// Object heights are drawn from [ground_z, ground_z + object_height].
    #[arg(long, default_value_t = 0.0)]
    object_height: f64,
    #[arg(long, default_value_t = 1.0)]
    extent_min: f64,
    #[arg(long, default_value_t = 10.0)]
    extent_max: f64,

    /// Flight height above ground_z, meters.
    #[arg(long, default_value_t = 50.0)]
    altitude: f64,
    /// Offset of the pass from the strip center line, meters.
    #[arg(long, default_value_t = 0.0)]
    lateral: f64,
    /// Distance flown before and after the strip, meters.
    #[arg(long, default_value_t = 60.0)]
    margin: f64,
    #[arg(long, default_value_t = 2.0)]
    spacing: f64,
    /// Degrees below the horizon; -90 looks straight down.
    #[arg(long, default_value_t = -90.0)]
    pitch: f64,
    #[arg(long, default_value_t = 10.0)]
    speed: f64,

    #[arg(long, default_value_t = 3.0)]
    centroid_sigma: f64,
    #[arg(long, default_value_t = 0.9)]
    detection_prob: f64,
    #[arg(long, default_value_t = 0.05)]
    size_jitter: f64,
    /// Translation drift, meters per meter flown.
    #[arg(long, default_value_t = 0.0)]
    drift: f64,
    /// Yaw drift, degrees per meter flown.
    #[arg(long, default_value_t = 0.0)]
    rot_drift: f64,

    /// Season change: fraction of objects removed.
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    /// Season change: log-space sigma of the size scale.
    #[arg(long, default_value_t = 0.0)]
    size_scale_sigma: f64,
    /// Season change: new objects as a fraction of the original count.
    #[arg(long, default_value_t = 0.0)]
    spawn: f64,

    #[arg(long, default_value = "odom")]
    frame_id: String,
    /// Odometry frame origin: yaw in degrees, then translation.
    #[arg(long, default_value_t = 0.0)]
    origin_yaw: f64,
    #[arg(long, default_value_t = 0.0)]
    origin_x: f64,
    #[arg(long, default_value_t = 0.0)]
    origin_y: f64,
    #[arg(long, default_value_t = 0.0)]
    origin_z: f64,

    /// Appearance descriptor length; 0 disables descriptors.
    #[arg(long, default_value_t = 0)]
    descriptor_dim: usize,
    #[arg(long, default_value_t = 1)]
    descriptors_per_object: usize,
    #[arg(long, default_value_t = 0.05)]
    descriptor_noise: f64,

    #[command(flatten)]
    camera: CameraArgs,
}

#[derive(Debug, Args)]
struct MapArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Parameter file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AlignArgs {
    map_i: PathBuf,
    map_j: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the acceptance threshold from the config.
    #[arg(long)]
    s_lim: Option<usize>,
    /// Hypothesis CSV destination; standard output when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Consistency solver by registry name.
    #[arg(long, default_value = "spectral")]
    solver: String,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct EvalArgs {
    #[arg(long)]
    hypotheses: PathBuf,
    #[arg(long)]
    map_i: PathBuf,
    #[arg(long)]
    map_j: PathBuf,
    #[arg(long)]
    truth_i: PathBuf,
    #[arg(long)]
    truth_j: PathBuf,
    /// Directory receiving labels.csv and pr_curve.csv.
    #[arg(long)]
    out_dir: PathBuf,
    /// Must carry the WL/SL the hypotheses were produced with.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    ground_z: f64,
    /// Footprint IoU strictly above this labels a pair positive.
    #[arg(long, default_value_t = 0.333)]
    positive_iou: f64,
    /// Footprint IoU at or below this labels a pair negative.
    #[arg(long, default_value_t = 0.01)]
    negative_iou: f64,
    #[command(flatten)]
    camera: CameraArgs,
}

#[derive(Debug, Args)]
struct BenchArgs {
    map_i: PathBuf,
    map_j: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "25,50,100")]
    wl: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "10,20")]
    sl: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Bench CSV destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

/// Why a command stopped.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Map(a) => commands::map(a),
        Command::Align(a) => commands::align(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => commands::bench(a),
        Command::Selftest(a) => selftest::run(a.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
