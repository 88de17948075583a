//! Shared fixtures for the integration suites: a strip world flown twice.

#![allow(dead_code)]

use nalgebra::Vector3;
use segmatch_core::alignment::{AlignmentHypothesis, AlignmentParams};
use segmatch_core::evaluation::{label_pairs, LabelThresholds, PairLabel, ScoredPair};
use segmatch_core::geometry::{CameraIntrinsics, Pose, RigidTransform};
use segmatch_core::pipeline::map_from_log;
use segmatch_core::reconstruction::VehicleMap;
use segmatch_core::simulator::{
    generate_world, perturb_season, simulate_flight, FlightSpec, NoiseModel, Region, SeasonModel, SimOptions, SimWorld,
};
use segmatch_core::Params;

pub const STRIP_LENGTH: f64 = 5000.0;
pub const STRIP_WIDTH: f64 = 70.0;
pub const OBJECT_COUNT: f64 = 1000.0;
pub const ALTITUDE: f64 = 50.0;
pub const SPACING: f64 = 2.0;

pub fn intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(400.0, 400.0, 320.0, 240.0, 640, 480).unwrap()
}

pub fn strip_world(seed: u64) -> SimWorld {
    let region = Region::flat((0.0, STRIP_LENGTH), (-STRIP_WIDTH / 2.0, STRIP_WIDTH / 2.0), 0.0);
    generate_world(seed, OBJECT_COUNT / region.area(), region, (1.0, 10.0)).unwrap()
}

/// A nadir pass along the strip, `lateral` meters off its center line.
pub fn pass(lateral: f64) -> FlightSpec {
    FlightSpec::straight(Vector3::new(-60.0, lateral, ALTITUDE), Vector3::new(STRIP_LENGTH + 60.0, lateral, ALTITUDE), SPACING)
}

pub fn default_noise() -> NoiseModel {
    NoiseModel { centroid_sigma: 3.0, detection_prob: 0.9, ..NoiseModel::default() }
}

pub struct Flight {
    pub map: VehicleMap,
    pub truth: Vec<Pose>,
    pub diverged: usize,
}

pub fn fly(world: &SimWorld, spec: &FlightSpec, seed: u64, origin: RigidTransform, frame_id: &str) -> Flight {
    let options = SimOptions { frame_id: frame_id.into(), odom_origin: origin, ..SimOptions::default() };
    let (log, truth) = simulate_flight(world, spec, &default_noise(), &intrinsics(), seed, &options).unwrap();
    let report = map_from_log(&log, &Params::default()).unwrap();
    Flight { map: report.output.map, truth: truth.true_poses, diverged: report.output.diverged }
}

pub struct Scenario {
    pub a: Flight,
    pub b: Flight,
    pub labels: Vec<PairLabel>,
}

/// Frame of the second flight's odometry relative to the first.
pub fn second_origin() -> RigidTransform {
    RigidTransform::from_euler_deg(0.0, 0.0, 37.0, Vector3::new(250.0, -120.0, 3.0))
}

/// Two traverses of one world, the second optionally through a season
/// change.
pub fn same_world(seed: u64, season: Option<SeasonModel>) -> Scenario {
    let world = strip_world(seed);
    let second = match season {
        Some(s) => perturb_season(&world, &s, seed.wrapping_add(1000)).unwrap(),
        None => world.clone(),
    };
    let a = fly(&world, &pass(0.0), seed.wrapping_mul(31).wrapping_add(1), RigidTransform::identity(), "odom_a");
    let b = fly(&second, &pass(8.0), seed.wrapping_mul(31).wrapping_add(2), second_origin(), "odom_b");
    let labels = labels(&a, &b);
    Scenario { a, b, labels }
}

pub fn different_worlds(seed: u64) -> (Flight, Flight) {
    let a = fly(&strip_world(seed), &pass(0.0), seed + 1, RigidTransform::identity(), "odom_a");
    let b = fly(&strip_world(seed + 7919), &pass(0.0), seed + 2, second_origin(), "odom_b");
    (a, b)
}

pub fn labels(a: &Flight, b: &Flight) -> Vec<PairLabel> {
    label_pairs(
        &a.truth,
        &b.truth,
        &a.map,
        &b.map,
        &intrinsics(),
        0.0,
        &AlignmentParams::default(),
        &LabelThresholds::default(),
    )
    .unwrap()
}

pub fn scored(hyps: &[AlignmentHypothesis]) -> Vec<ScoredPair> {
    hyps.iter().map(ScoredPair::from).collect()
}
