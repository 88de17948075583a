//! Synthetic worlds of disc-shaped ground objects, seasonal perturbation of
//! a world, and camera flights over it that emit observation logs with
//! ground truth.

mod truth;

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use thiserror::Error;

use crate::geometry::{project, CameraIntrinsics, Pose, RigidTransform};
use crate::ingest::{FlightLog, Keyframe, SegmentObservation};

pub use truth::{load_ground_truth, parse_ground_truth, save_ground_truth, write_ground_truth};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation setting: {0}")]
    Config(String),
    #[error("no object is visible from any keyframe")]
    NothingVisible,
}

fn config(msg: impl Into<String>) -> SimError {
    SimError::Config(msg.into())
}

/// Axis-aligned box in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Region {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Self { min, max }
    }

    /// Flat rectangle at ground height `z`.
    pub fn flat(x: (f64, f64), y: (f64, f64), z: f64) -> Self {
        Self { min: Vector3::new(x.0, y.0, z), max: Vector3::new(x.1, y.1, z) }
    }

    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    fn sample(&self, rng: &mut impl Rng) -> Vector3<f64> {
        Vector3::from_fn(|k, _| {
            if self.max[k] > self.min[k] {
                rng.random_range(self.min[k]..self.max[k])
            } else {
                self.min[k]
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldObject {
    pub position: Vector3<f64>,
    /// Spread of the object's footprint in meters: the square root of the
    /// largest eigenvalue of its area covariance (a disc of radius `2·extent`).
    pub extent: f64,
    pub stable_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimWorld {
    pub objects: Vec<WorldObject>,
    pub region: Region,
    pub extent_range: (f64, f64),
    pub seed: u64,
}

impl SimWorld {
    pub fn object(&self, stable_id: u64) -> Option<&WorldObject> {
        self.objects.iter().find(|o| o.stable_id == stable_id)
    }

    fn next_id(&self) -> u64 {
        self.objects.iter().map(|o| o.stable_id + 1).max().unwrap_or(0)
    }
}

/// Uniform scatter of `round(density · area)` objects.
pub fn generate_world(seed: u64, density: f64, region: Region, extent_range: (f64, f64)) -> Result<SimWorld, SimError> {
    if !(density > 0.0) || !(region.area() > 0.0) {
        return Err(config("density and region area must be positive"));
    }
    if !(extent_range.0 > 0.0 && extent_range.1 >= extent_range.0) {
        return Err(config("extent range must be positive and ordered"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = (density * region.area()).round() as u64;
    let objects = (0..count).map(|id| spawn(&mut rng, &region, extent_range, id)).collect();
    Ok(SimWorld { objects, region, extent_range, seed })
}

fn spawn(rng: &mut impl Rng, region: &Region, extent_range: (f64, f64), stable_id: u64) -> WorldObject {
    let position = region.sample(rng);
    let extent = if extent_range.1 > extent_range.0 { rng.random_range(extent_range.0..extent_range.1) } else { extent_range.0 };
    WorldObject { position, extent, stable_id }
}

/// Appearance change between two visits to the same world.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SeasonModel {
    /// Fraction of objects absent in the perturbed world.
    pub dropout_frac: f64,
    /// Log-space standard deviation of the extent scale of survivors.
    pub size_scale_sigma: f64,
    /// New objects added, as a fraction of the original count.
    pub spawn_frac: f64,
}

pub fn perturb_season(world: &SimWorld, season: &SeasonModel, seed: u64) -> Result<SimWorld, SimError> {
    let unit = |v: f64| (0.0..=1.0).contains(&v);
    if !unit(season.dropout_frac) || !unit(season.spawn_frac) || !(season.size_scale_sigma >= 0.0) {
        return Err(config("season fractions must lie in [0, 1] and the scale sigma must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = world.objects.len();
    let removed = (season.dropout_frac * n as f64).round() as usize;
    let mut dropped = vec![false; n];
    for k in sample(&mut rng, n, removed.min(n)) {
        dropped[k] = true;
    }
    let scale = LogNormal::new(0.0, season.size_scale_sigma).map_err(|e| config(e.to_string()))?;
    let mut objects: Vec<WorldObject> = world
        .objects
        .iter()
        .zip(&dropped)
        .filter(|(_, &d)| !d)
        .map(|(o, _)| {
            let factor = if season.size_scale_sigma > 0.0 { scale.sample(&mut rng) } else { 1.0 };
            WorldObject { extent: o.extent * factor, ..*o }
        })
        .collect();
    let spawned = (season.spawn_frac * n as f64).round() as u64;
    let first = world.next_id();
    for k in 0..spawned {
        objects.push(spawn(&mut rng, &world.region, world.extent_range, first + k));
    }
    Ok(SimWorld { objects, region: world.region, extent_range: world.extent_range, seed: world.seed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlightSpec {
    pub waypoints: Vec<Vector3<f64>>,
    /// Meters per second; only sets keyframe timestamps.
    pub speed: f64,
    /// Camera pitch below the horizon in degrees; -90 looks straight down.
    pub pitch_deg: f64,
    /// Distance between keyframes along the path, meters.
    pub spacing: f64,
}

impl FlightSpec {
    /// Straight nadir pass between two points.
    pub fn straight(from: Vector3<f64>, to: Vector3<f64>, spacing: f64) -> Self {
        Self { waypoints: vec![from, to], speed: 10.0, pitch_deg: -90.0, spacing }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub centroid_sigma: f64,
    pub detection_prob: f64,
    /// Log-space standard deviation of the per-observation size factor.
    pub size_jitter: f64,
    /// Translation random-walk standard deviation per meter traveled.
    pub odom_drift_sigma: f64,
    /// Yaw random-walk standard deviation in degrees per meter traveled.
    pub odom_rot_drift_sigma: f64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self { centroid_sigma: 0.0, detection_prob: 1.0, size_jitter: 0.0, odom_drift_sigma: 0.0, odom_rot_drift_sigma: 0.0 }
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { centroid_sigma: 3.0, detection_prob: 0.9, size_jitter: 0.05, odom_drift_sigma: 0.0, odom_rot_drift_sigma: 0.0 }
    }
}

/// Optional appearance descriptors: every object owns `per_object` random
/// vectors; each sighting reports them with added Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescriptorModel {
    pub dim: usize,
    pub per_object: usize,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub frame_id: String,
    /// Rigid change of frame applied to the odometry poses.
    pub odom_origin: RigidTransform,
    pub descriptors: Option<DescriptorModel>,
    /// Height of the virtual ground lattice used for the shift statistics.
    pub ground_z: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { frame_id: "odom".into(), odom_origin: RigidTransform::identity(), descriptors: None, ground_z: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub true_poses: Vec<Pose>,
    /// Stable id of every observation, per keyframe in log order.
    pub observation_ids: Vec<Vec<u64>>,
    pub world: SimWorld,
}

/// Camera looking along heading `heading` (radians from +x) pitched by
/// `pitch_deg`; image up points forward at nadir.
pub fn camera_rotation(heading: f64, pitch_deg: f64) -> Matrix3<f64> {
    let forward = Vector3::new(heading.cos(), heading.sin(), 0.0);
    let up = Vector3::z();
    let pitch = pitch_deg.to_radians();
    let z_c = forward * pitch.cos() + up * pitch.sin();
    let x_c = Vector3::new(heading.sin(), -heading.cos(), 0.0);
    let y_c = z_c.cross(&x_c);
    Matrix3::from_columns(&[x_c, y_c, z_c])
}

/// Poses every `spacing` meters along the polyline.
pub fn sample_path(spec: &FlightSpec) -> Result<Vec<Pose>, SimError> {
    if spec.waypoints.len() < 2 {
        return Err(config("a flight needs at least two waypoints"));
    }
    if !(spec.spacing > 0.0) {
        return Err(config("keyframe spacing must be positive"));
    }
    let mut poses = Vec::new();
    let mut carry = 0.0;
    let last_leg = spec.waypoints.len() - 2;
    for (leg, pair) in spec.waypoints.windows(2).enumerate() {
        let delta = pair[1] - pair[0];
        let length = delta.norm();
        if length == 0.0 {
            continue;
        }
        let heading = delta.y.atan2(delta.x);
        let rotation = camera_rotation(heading, spec.pitch_deg);
        let mut s = carry;
        while s < length || (leg == last_leg && (s - length).abs() < 1e-9) {
            let pose = Pose::new(rotation, pair[0] + delta * (s / length)).map_err(|e| config(e.to_string()))?;
            poses.push(pose);
            s += spec.spacing;
        }
        carry = s - length;
    }
    Ok(poses)
}

fn lattice(intr: &CameraIntrinsics) -> Vec<Vector2<f64>> {
    let n = 8;
    let mut out = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            let u = (a as f64 + 0.5) / n as f64 * intr.width as f64;
            let v = (b as f64 + 0.5) / n as f64 * intr.height as f64;
            out.push(Vector2::new(u, v));
        }
    }
    out
}

/// Shift statistics between two true poses from a lattice of ground points
/// seen in the first view, each projection perturbed by `sigma`.
fn shift_statistics(
    prev: &Pose,
    curr: &Pose,
    intr: &CameraIntrinsics,
    ground_z: f64,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    let mut shifts = Vec::new();
    for px in lattice(intr) {
        let ray = prev.rotation() * intr.unproject(&px);
        if ray.z.abs() < 1e-12 {
            continue;
        }
        let s = (ground_z - prev.center().z) / ray.z;
        if s <= 0.0 {
            continue;
        }
        let ground = prev.center() + ray * s;
        let Some(next) = project(curr, intr, &ground) else { continue };
        let jitter = |rng: &mut ChaCha8Rng| Vector2::new(noise.sample(rng), noise.sample(rng));
        let a = px + jitter(rng);
        let b = next + jitter(rng);
        shifts.push((b - a).norm());
    }
    if shifts.is_empty() {
        return (0.0, 0.0);
    }
    let n = shifts.len() as f64;
    let mean = shifts.iter().sum::<f64>() / n;
    let var = shifts.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Flies `spec` over `world`. Odometry poses are the true poses under an
/// accumulating random-walk drift, then moved into `options.odom_origin`.
pub fn simulate_flight(
    world: &SimWorld,
    spec: &FlightSpec,
    noise: &NoiseModel,
    intr: &CameraIntrinsics,
    seed: u64,
    options: &SimOptions,
) -> Result<(FlightLog, GroundTruth), SimError> {
    intr.validate().map_err(|e| config(e.to_string()))?;
    if !(0.0..=1.0).contains(&noise.detection_prob) {
        return Err(config("detection probability must lie in [0, 1]"));
    }
    for v in [noise.centroid_sigma, noise.size_jitter, noise.odom_drift_sigma, noise.odom_rot_drift_sigma] {
        if !(v >= 0.0) {
            return Err(config("noise parameters must be non-negative"));
        }
    }
    let true_poses = sample_path(spec)?;
    let top = world.objects.iter().map(|o| o.position.z).fold(f64::NEG_INFINITY, f64::max);
    if true_poses.iter().any(|p| p.center().z <= top) {
        return Err(config("flight altitude must be above every object"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let size_factor = LogNormal::new(0.0, noise.size_jitter).map_err(|e| config(e.to_string()))?;
    let descriptor_bank: BTreeMap<u64, Vec<Vec<f64>>> = match options.descriptors {
        Some(d) => world
            .objects
            .iter()
            .map(|o| {
                let mut r = ChaCha8Rng::seed_from_u64(world.seed ^ o.stable_id.wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let set = (0..d.per_object).map(|_| (0..d.dim).map(|_| unit.sample(&mut r)).collect()).collect();
                (o.stable_id, set)
            })
            .collect(),
        None => BTreeMap::new(),
    };

    let mut log = FlightLog::new(*intr, options.descriptors.map_or(0, |d| d.dim), options.frame_id.clone());
    let mut observation_ids = Vec::with_capacity(true_poses.len());
    let mut drift = RigidTransform::identity();
    let f = intr.mean_focal();
    let mut any_visible = false;
    for (k, pose) in true_poses.iter().enumerate() {
        let (mu_p, sigma_p) = if k == 0 {
            (0.0, 0.0)
        } else {
            let prev = &true_poses[k - 1];
            let step = (pose.center() - prev.center()).norm();
            let yaw = (noise.odom_rot_drift_sigma * step).to_radians() * unit.sample(&mut rng);
            let shift = Vector3::from_fn(|_, _| noise.odom_drift_sigma * step * unit.sample(&mut rng));
            let pivot = drift.apply(&pose.center());
            let turn = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).into_inner();
            let step_drift = RigidTransform::new(turn, pivot - turn * pivot + shift).expect("rotation about z");
            drift = step_drift.compose(&drift);
            shift_statistics(prev, pose, intr, options.ground_z, noise.centroid_sigma, &mut rng)
        };
        let odom = options.odom_origin.compose(&drift).transform_pose(pose);
        let mut kf = Keyframe::new(k as u64, k as f64 * spec.spacing / spec.speed, odom, mu_p, sigma_p);
        let mut ids = Vec::new();
        for obj in &world.objects {
            let Some(px) = project(pose, intr, &obj.position) else { continue };
            if !(px.x >= 0.0 && px.x < intr.width as f64 && px.y >= 0.0 && px.y < intr.height as f64) {
                continue;
            }
            any_visible = true;
            if !rng.random_bool(noise.detection_prob) {
                continue;
            }
            let depth = pose.world_to_camera(&obj.position).z;
            let centroid = px + Vector2::new(unit.sample(&mut rng), unit.sample(&mut rng)) * noise.centroid_sigma;
            let factor = if noise.size_jitter > 0.0 { size_factor.sample(&mut rng) } else { 1.0 };
            let size_px = f * obj.extent / depth * factor;
            let var = size_px * size_px;
            // A disc of radius 2·size_px covers about 4π·size_px² pixels.
            let pixel_count = (4.0 * std::f64::consts::PI * var).round().max(3.0) as u32;
            let descriptors = match options.descriptors {
                Some(d) => descriptor_bank[&obj.stable_id]
                    .iter()
                    .map(|base| base.iter().map(|v| v + d.noise * unit.sample(&mut rng)).collect())
                    .collect(),
                None => Vec::new(),
            };
            let obs = SegmentObservation::new(centroid, [var, 0.0, var], pixel_count, descriptors)
                .map_err(|e| config(e.to_string()))?;
            kf.observations.push(obs);
            ids.push(obj.stable_id);
        }
        log.keyframes.push(kf);
        observation_ids.push(ids);
    }
    if !any_visible {
        return Err(SimError::NothingVisible);
    }
    log.ground_truth_poses = Some(true_poses.clone());
    log.meta.insert("simulator_seed".into(), seed.to_string());
    log.meta.insert("world_seed".into(), world.seed.to_string());
    Ok((log, GroundTruth { true_poses, observation_ids, world: world.clone() }))
}

/// Stable ids present in both worlds, ascending.
pub fn shared_ids(a: &SimWorld, b: &SimWorld) -> Vec<u64> {
    let mut ids_a: Vec<u64> = a.objects.iter().map(|o| o.stable_id).collect();
    ids_a.sort_unstable();
    let mut out: Vec<u64> = b.objects.iter().map(|o| o.stable_id).filter(|id| ids_a.binary_search(id).is_ok()).collect();
    out.sort_unstable();
    out
}
