use std::fs::{self, File};
use std::io::{self, Write};
use std::path::Path;

use anyhow::{anyhow, Context};
use nalgebra::Vector3;
use segmatch_core::alignment::{builtin_consistency_solvers, Aligner};
use segmatch_core::evaluation::{bench_search, label_pairs, precision_recall, LabelThresholds};
use segmatch_core::geometry::{CameraIntrinsics, RigidTransform};
use segmatch_core::ingest::{load_flight_log, save_flight_log};
use segmatch_core::persistence::{
    load_config, load_map, read_hypotheses, save_map, write_bench, write_hypotheses, write_labels, write_pr_curve,
};
use segmatch_core::pipeline::map_from_log;
use segmatch_core::reconstruction::VehicleMap;
use segmatch_core::simulator::{
    generate_world, load_ground_truth, perturb_season, save_ground_truth, simulate_flight, DescriptorModel, FlightSpec,
    NoiseModel, Region, SeasonModel, SimOptions,
};
use segmatch_core::Params;

use crate::{AlignArgs, BenchArgs, CameraArgs, EvalArgs, Failure, MapArgs, SimulateArgs};

fn usage(message: impl Into<String>) -> Failure {
    Failure::Usage(anyhow!(message.into()))
}

fn params(config: Option<&Path>) -> anyhow::Result<Params> {
    match config {
        Some(path) => load_config(path).with_context(|| format!("reading config {}", path.display())),
        None => Ok(Params::default()),
    }
}

fn read_map(path: &Path) -> anyhow::Result<VehicleMap> {
    load_map(path).with_context(|| format!("reading map {}", path.display()))
}

fn intrinsics(c: &CameraArgs) -> anyhow::Result<CameraIntrinsics> {
    let (w, h) = (c.image_width, c.image_height);
    CameraIntrinsics::new(c.focal, c.focal, w as f64 / 2.0, h as f64 / 2.0, w, h).context("camera intrinsics")
}

/// Opens `path` for writing, or standard output when absent.
fn sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

pub fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let intr = intrinsics(&a.camera)?;
    let region = Region::new(
        Vector3::new(0.0, -a.width / 2.0, a.ground_z),
        Vector3::new(a.length, a.width / 2.0, a.ground_z + a.object_height),
    );
    let density = a.objects as f64 / (a.length * a.width);
    let mut world = generate_world(a.world_seed, density, region, (a.extent_min, a.extent_max)).context("world")?;
    let season = SeasonModel { dropout_frac: a.dropout, size_scale_sigma: a.size_scale_sigma, spawn_frac: a.spawn };
    if season != SeasonModel::default() {
        world = perturb_season(&world, &season, a.season_seed).context("season change")?;
    }
    let z = a.ground_z + a.altitude;
    let spec = FlightSpec {
        waypoints: vec![Vector3::new(-a.margin, a.lateral, z), Vector3::new(a.length + a.margin, a.lateral, z)],
        speed: a.speed,
        pitch_deg: a.pitch,
        spacing: a.spacing,
    };
    let noise = NoiseModel {
        centroid_sigma: a.centroid_sigma,
        detection_prob: a.detection_prob,
        size_jitter: a.size_jitter,
        odom_drift_sigma: a.drift,
        odom_rot_drift_sigma: a.rot_drift,
    };
    let options = SimOptions {
        frame_id: a.frame_id.clone(),
        odom_origin: RigidTransform::from_euler_deg(0.0, 0.0, a.origin_yaw, Vector3::new(a.origin_x, a.origin_y, a.origin_z)),
        descriptors: (a.descriptor_dim > 0).then_some(DescriptorModel {
            dim: a.descriptor_dim,
            per_object: a.descriptors_per_object,
            noise: a.descriptor_noise,
        }),
        ground_z: a.ground_z,
    };
    let (log, truth) = simulate_flight(&world, &spec, &noise, &intr, a.flight_seed, &options).context("flight")?;
    save_flight_log(&log, &a.out_log).with_context(|| format!("writing {}", a.out_log.display()))?;
    save_ground_truth(&truth, &a.out_truth).with_context(|| format!("writing {}", a.out_truth.display()))?;
    let observations: usize = log.keyframes.iter().map(|k| k.observations.len()).sum();
    println!("world_objects {}", world.objects.len());
    println!("keyframes {}", log.keyframes.len());
    println!("observations {observations}");
    Ok(())
}

pub fn map(a: MapArgs) -> Result<(), Failure> {
    let params = params(a.config.as_deref())?;
    let log = load_flight_log(&a.log).with_context(|| format!("reading log {}", a.log.display()))?;
    let report = map_from_log(&log, &params).context("tracking")?;
    save_map(&report.output.map, &a.out).with_context(|| format!("writing map {}", a.out.display()))?;
    println!("objects {}", report.output.map.len());
    println!("diverged {}", report.output.diverged);
    Ok(())
}

pub fn align(a: AlignArgs) -> Result<(), Failure> {
    let mut params = params(a.config.as_deref())?;
    if let Some(s) = a.s_lim {
        params.alignment.s_lim = s;
    }
    let p = params.alignment;
    let solver = builtin_consistency_solvers(p.power_iters, p.power_tol)
        .get(&a.solver)
        .map_err(|e| Failure::Usage(e.into()))?;
    let aligner = Aligner::with_solver(p, solver).context("alignment parameters")?;
    let map_i = read_map(&a.map_i)?;
    let map_j = read_map(&a.map_j)?;
    let hyps = aligner.align_maps(&map_i, &map_j, a.workers).context("alignment")?;
    write_hypotheses(&hyps, sink(a.report.as_deref())?).context("writing hypothesis report")?;
    if a.report.is_some() {
        println!("window_pairs {}", hyps.len());
        println!("accepted {}", hyps.iter().filter(|h| h.accepted).count());
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<(), Failure> {
    if !(a.negative_iou <= a.positive_iou) {
        return Err(usage("--negative-iou must not exceed --positive-iou"));
    }
    let params = params(a.config.as_deref())?;
    let intr = intrinsics(&a.camera)?;
    let map_i = read_map(&a.map_i)?;
    let map_j = read_map(&a.map_j)?;
    let truth = |p: &Path| load_ground_truth(p).with_context(|| format!("reading ground truth {}", p.display()));
    let (truth_i, truth_j) = (truth(&a.truth_i)?, truth(&a.truth_j)?);
    let file = File::open(&a.hypotheses).with_context(|| format!("opening {}", a.hypotheses.display()))?;
    let rows = read_hypotheses(file).with_context(|| format!("reading {}", a.hypotheses.display()))?;

    let thresholds = LabelThresholds { positive: a.positive_iou, negative: a.negative_iou };
    let labels = label_pairs(
        &truth_i.true_poses,
        &truth_j.true_poses,
        &map_i,
        &map_j,
        &intr,
        a.ground_z,
        &params.alignment,
        &thresholds,
    )
    .context("labeling window pairs")?;
    let scored: Vec<_> = rows.iter().map(|r| r.scored(params.alignment.alpha_lim)).collect();
    let sweep: Vec<usize> = (0..=params.alignment.wl).collect();
    let curve = precision_recall(&scored, &labels, &sweep).context("scoring hypotheses")?;

    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let labels_path = a.out_dir.join("labels.csv");
    let curve_path = a.out_dir.join("pr_curve.csv");
    write_labels(&labels, sink(Some(&labels_path))?).context("writing labels")?;
    write_pr_curve(&curve, sink(Some(&curve_path))?).context("writing precision/recall curve")?;
    println!("recall_at_precision_0.95 {:.4}", curve.recall_at_precision(0.95));
    println!("average_f1 {:.4}", curve.average_f1());
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<(), Failure> {
    if a.wl.is_empty() || a.sl.is_empty() || a.wl.contains(&0) || a.sl.contains(&0) {
        return Err(usage("--wl and --sl need positive values"));
    }
    let params = params(a.config.as_deref())?;
    let map_i = read_map(&a.map_i)?;
    let map_j = read_map(&a.map_j)?;
    let rows = bench_search(&map_i, &map_j, &a.wl, &a.sl, a.repeats, a.workers, &params.alignment).context("benchmark")?;
    write_bench(&rows, sink(a.out.as_deref())?).context("writing bench report")?;
    Ok(())
}
