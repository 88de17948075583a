//! Observation-log ingest: segment observations, keyframes and keyframe
//! gating.

mod log;
pub mod mask;

use std::collections::BTreeMap;

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, Pose};

pub use log::{load_flight_log, parse_flight_log, save_flight_log, write_flight_log, LOG_VERSION};
pub use mask::{summarize_mask, summarize_pixels, BinaryMask, MaskError};

/// Lower bound applied to `sigma_p` on ingest.
pub const MIN_SIGMA_P: f64 = 1e-3;
const SYMMETRY_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InvariantError {
    #[error("field `{field}`: {reason}")]
    Field { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> InvariantError {
    InvariantError::Field { field, reason: reason.into() }
}

/// Eigenvalues `(min, max)` of a symmetric 2×2 matrix.
pub fn symmetric_eigenvalues(m: &Matrix2<f64>) -> (f64, f64) {
    let half_trace = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let half_diff = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let r = half_diff.hypot(off);
    (half_trace - r, half_trace + r)
}

/// One segmented mask summarized in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentObservation {
    pub centroid: Vector2<f64>,
    pub covariance: Matrix2<f64>,
    /// `sqrt` of the largest covariance eigenvalue.
    pub size_px: f64,
    pub descriptors: Vec<Vec<f64>>,
    pub pixel_count: u32,
}

impl SegmentObservation {
    /// `cov` holds the unique entries `[xx, xy, yy]`.
    pub fn new(
        centroid: Vector2<f64>,
        cov: [f64; 3],
        pixel_count: u32,
        descriptors: Vec<Vec<f64>>,
    ) -> Result<Self, InvariantError> {
        let covariance = Matrix2::new(cov[0], cov[1], cov[1], cov[2]);
        let (_, lmax) = symmetric_eigenvalues(&covariance);
        let obs = Self { centroid, covariance, size_px: lmax.max(0.0).sqrt(), descriptors, pixel_count };
        obs.validate()?;
        Ok(obs)
    }

    pub fn validate(&self) -> Result<(), InvariantError> {
        if !(self.centroid.x.is_finite() && self.centroid.y.is_finite()) {
            return Err(invalid("centroid", "non-finite"));
        }
        if self.covariance.iter().any(|v| !v.is_finite()) {
            return Err(invalid("covariance", "non-finite"));
        }
        if (self.covariance[(0, 1)] - self.covariance[(1, 0)]).abs() >= SYMMETRY_TOL {
            return Err(invalid("covariance", "not symmetric"));
        }
        let (lmin, lmax) = symmetric_eigenvalues(&self.covariance);
        if lmin < -PSD_TOL {
            return Err(invalid("covariance", format!("negative eigenvalue {lmin}")));
        }
        if (self.size_px - lmax.max(0.0).sqrt()).abs() > 1e-6 {
            return Err(invalid("size_px", "does not match the largest covariance eigenvalue"));
        }
        if self.pixel_count as usize <= mask::MIN_MASK_PIXELS {
            return Err(invalid("pixel_count", format!("{} pixels is too small", self.pixel_count)));
        }
        Ok(())
    }

    pub fn cov_entries(&self) -> [f64; 3] {
        [self.covariance[(0, 0)], self.covariance[(0, 1)], self.covariance[(1, 1)]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub id: u64,
    pub timestamp: f64,
    /// Odometry pose of the camera.
    pub pose: Pose,
    /// Mean apparent shift of tracked features since the previous keyframe,
    /// pixels.
    pub mu_p: f64,
    /// Standard deviation of that shift, pixels; at least [`MIN_SIGMA_P`].
    pub sigma_p: f64,
    pub observations: Vec<SegmentObservation>,
}

impl Keyframe {
    pub fn new(id: u64, timestamp: f64, pose: Pose, mu_p: f64, sigma_p: f64) -> Self {
        Self { id, timestamp, pose, mu_p, sigma_p: sigma_p.max(MIN_SIGMA_P), observations: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlightLog {
    pub intrinsics: CameraIntrinsics,
    /// Dimension of every appearance descriptor (0 when none are carried).
    pub descriptor_dim: usize,
    /// Odometry frame the poses are expressed in.
    pub frame_id: String,
    pub keyframes: Vec<Keyframe>,
    /// True poses, one per keyframe; evaluation only, never written to the
    /// log itself.
    pub ground_truth_poses: Option<Vec<Pose>>,
    pub meta: BTreeMap<String, String>,
}

impl FlightLog {
    pub fn new(intrinsics: CameraIntrinsics, descriptor_dim: usize, frame_id: impl Into<String>) -> Self {
        Self {
            intrinsics,
            descriptor_dim,
            frame_id: frame_id.into(),
            keyframes: Vec::new(),
            ground_truth_poses: None,
            meta: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), InvariantError> {
        self.intrinsics.validate().map_err(|e| invalid("intrinsics", e.to_string()))?;
        let mut last: Option<u64> = None;
        for kf in &self.keyframes {
            if last.is_some_and(|l| kf.id <= l) {
                return Err(invalid("id", format!("keyframe id {} is not increasing", kf.id)));
            }
            last = Some(kf.id);
            if !(kf.sigma_p >= MIN_SIGMA_P) || !kf.mu_p.is_finite() || !kf.timestamp.is_finite() {
                return Err(invalid("sigma_p", format!("keyframe {} has invalid shift statistics", kf.id)));
            }
            for obs in &kf.observations {
                obs.validate()?;
                if obs.descriptors.iter().any(|d| d.len() != self.descriptor_dim) {
                    return Err(invalid("descriptors", format!("dimension differs from {}", self.descriptor_dim)));
                }
            }
        }
        if let Some(gt) = &self.ground_truth_poses {
            if gt.len() != self.keyframes.len() {
                return Err(invalid("ground_truth_poses", "one pose per keyframe required"));
            }
        }
        Ok(())
    }

    pub fn keyframe(&self, id: u64) -> Option<&Keyframe> {
        self.keyframes.binary_search_by_key(&id, |k| k.id).ok().map(|i| &self.keyframes[i])
    }
}

/// Greedy distance gating: frame 0, then every frame at least `min_distance`
/// meters from the last selected one.
pub fn gate_keyframes(poses: &[Pose], min_distance: f64) -> Vec<usize> {
    let mut selected = Vec::new();
    let mut last: Option<nalgebra::Vector3<f64>> = None;
    for (i, pose) in poses.iter().enumerate() {
        match last {
            None => {}
            Some(prev) if (pose.center() - prev).norm() < min_distance => continue,
            Some(_) => {}
        }
        selected.push(i);
        last = Some(pose.center());
    }
    selected
}
