//! Per-track landmark triangulation and vehicle-map assembly.
//!
//! Poses are held fixed; only the 3D landmark is estimated by damped
//! Gauss-Newton on the pixel reprojection error.

use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{project, CameraIntrinsics, Pose, MIN_DEPTH};
use crate::ingest::FlightLog;
use crate::tracker::Track;

/// Minimum angle between the first and last viewing rays.
pub const MIN_PARALLAX_DEG: f64 = 0.5;
const INITIAL_DAMPING: f64 = 1e-3;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum Divergence {
    #[error("too few observations")]
    TooFewObservations,
    #[error("first and last rays are nearly parallel")]
    LowParallax,
    #[error("solution lies behind an observing camera")]
    BehindCamera,
    #[error("did not converge within the iteration budget")]
    NotConverged,
    #[error("non-finite cost")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionParams {
    /// Minimum observations per track.
    pub n_lim: usize,
    /// Pixel measurement noise standard deviation.
    pub sigma_px: f64,
    pub max_iters: usize,
    /// Relative cost decrease below which the solve has converged.
    pub cost_tol: f64,
    /// Step norm (meters) below which the solve has converged.
    pub step_tol: f64,
}

impl Default for ReconstructionParams {
    fn default() -> Self {
        Self { n_lim: 5, sigma_px: 3.0, max_iters: 50, cost_tol: 1e-9, step_tol: 1e-6 }
    }
}

/// One view of a landmark: the odometry pose and the observed centroid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct View {
    pub pose: Pose,
    pub centroid: Vector2<f64>,
}

/// Sum of squared, noise-normalized reprojection residuals over a set of
/// views.
pub struct ReprojectionCost<'a> {
    pub views: &'a [View],
    pub intr: &'a CameraIntrinsics,
    pub sigma_px: f64,
}

impl ReprojectionCost<'_> {
    /// `None` when the point is behind any camera.
    pub fn cost(&self, point: &Vector3<f64>) -> Option<f64> {
        let inv = 1.0 / (self.sigma_px * self.sigma_px);
        let mut total = 0.0;
        for v in self.views {
            let px = project(&v.pose, self.intr, point)?;
            total += (px - v.centroid).norm_squared() * inv;
        }
        Some(total)
    }

    /// Analytic gradient of [`Self::cost`].
    pub fn gradient(&self, point: &Vector3<f64>) -> Option<Vector3<f64>> {
        let (_, _, g) = self.normal_equations(point)?;
        Some(2.0 * g)
    }

    fn pixel_jacobian(&self, pose: &Pose, point: &Vector3<f64>) -> Option<(Vector2<f64>, Matrix2x3<f64>)> {
        let pc = pose.world_to_camera(point);
        if pc.z <= MIN_DEPTH {
            return None;
        }
        let iz = 1.0 / pc.z;
        let px = Vector2::new(self.intr.fx * pc.x * iz + self.intr.cx, self.intr.fy * pc.y * iz + self.intr.cy);
        let d_cam = Matrix2x3::new(
            self.intr.fx * iz,
            0.0,
            -self.intr.fx * pc.x * iz * iz,
            0.0,
            self.intr.fy * iz,
            -self.intr.fy * pc.y * iz * iz,
        );
        Some((px, d_cam * pose.rotation().transpose()))
    }

    /// `(cost, JᵀJ, Jᵀr)` for the normalized residuals.
    fn normal_equations(&self, point: &Vector3<f64>) -> Option<(f64, Matrix3<f64>, Vector3<f64>)> {
        let s = 1.0 / self.sigma_px;
        let mut cost = 0.0;
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for v in self.views {
            let (px, jac) = self.pixel_jacobian(&v.pose, point)?;
            let r = (px - v.centroid) * s;
            let j = jac * s;
            cost += r.norm_squared();
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }
        Some((cost, jtj, jtr))
    }

    /// First-order covariance of the landmark for unit-weight residuals,
    /// `σ² (JᵀJ)⁻¹` in meters².
    pub fn covariance(&self, point: &Vector3<f64>) -> Option<Matrix3<f64>> {
        let (_, jtj, _) = self.normal_equations(point)?;
        jtj.try_inverse()
    }
}

/// Closest-approach midpoint of the rays through the first and last views.
pub fn midpoint_triangulation(first: &View, last: &View, intr: &CameraIntrinsics) -> Result<Vector3<f64>, Divergence> {
    let c1 = first.pose.center();
    let c2 = last.pose.center();
    let d1 = (first.pose.rotation() * intr.unproject(&first.centroid)).normalize();
    let d2 = (last.pose.rotation() * intr.unproject(&last.centroid)).normalize();
    let cos = d1.dot(&d2).clamp(-1.0, 1.0);
    if cos.acos().to_degrees() < MIN_PARALLAX_DEG {
        return Err(Divergence::LowParallax);
    }
    // Solve for s, t minimizing |c1 + s d1 − c2 − t d2|.
    let w = c1 - c2;
    let b = d1.dot(&d2);
    let d = d1.dot(&w);
    let e = d2.dot(&w);
    let denom = 1.0 - b * b;
    let s = (b * e - d) / denom;
    let t = (e - b * d) / denom;
    Ok(0.5 * ((c1 + d1 * s) + (c2 + d2 * t)))
}

/// Triangulates a landmark from at least `n_lim` views.
pub fn triangulate(views: &[View], intr: &CameraIntrinsics, params: &ReconstructionParams) -> Result<Vector3<f64>, Divergence> {
    if views.len() < params.n_lim.max(2) {
        return Err(Divergence::TooFewObservations);
    }
    let problem = ReprojectionCost { views, intr, sigma_px: params.sigma_px };
    let mut x = midpoint_triangulation(&views[0], &views[views.len() - 1], intr)?;
    let (mut cost, mut jtj, mut jtr) = problem.normal_equations(&x).ok_or(Divergence::BehindCamera)?;
    let mut lambda = INITIAL_DAMPING;
    let mut converged = cost == 0.0;
    for _ in 0..params.max_iters {
        if converged {
            break;
        }
        let damped = jtj + Matrix3::identity() * lambda;
        let Some(step) = damped.cholesky().map(|c| c.solve(&(-jtr))) else {
            lambda *= 10.0;
            continue;
        };
        let candidate = x + step;
        match problem.normal_equations(&candidate) {
            Some((new_cost, new_jtj, new_jtr)) if new_cost.is_finite() && new_cost <= cost => {
                let rel = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                x = candidate;
                cost = new_cost;
                jtj = new_jtj;
                jtr = new_jtr;
                lambda *= 0.5;
                if rel < params.cost_tol || step.norm() < params.step_tol || cost == 0.0 {
                    converged = true;
                }
            }
            Some((new_cost, ..)) if !new_cost.is_finite() => return Err(Divergence::NonFinite),
            _ => {
                lambda *= 10.0;
                if step.norm() < params.step_tol {
                    converged = true;
                }
            }
        }
    }
    if !converged {
        return Err(Divergence::NotConverged);
    }
    if views.iter().any(|v| v.pose.world_to_camera(&x).z <= MIN_DEPTH) {
        return Err(Divergence::BehindCamera);
    }
    Ok(x)
}

/// Mean over views of `size_px · depth / f`, skipping views with the
/// landmark behind the camera.
pub fn metric_size(
    views: impl IntoIterator<Item = (Pose, f64)>,
    position: &Vector3<f64>,
    intr: &CameraIntrinsics,
) -> Option<f64> {
    let f = intr.mean_focal();
    let (sum, n) = views.into_iter().fold((0.0, 0usize), |(sum, n), (pose, size_px)| {
        let depth = pose.world_to_camera(position).z;
        if depth > MIN_DEPTH {
            (sum + size_px * depth / f, n + 1)
        } else {
            (sum, n)
        }
    });
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapObject {
    pub position: Vector3<f64>,
    /// Size descriptor scaled to meters.
    pub size_m: f64,
    pub track_len: u32,
    /// First and last keyframe ids of the source track.
    pub source_keyframes: (u64, u64),
}

/// Reconstructed objects in one robot's odometry frame, in track creation
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleMap {
    pub objects: Vec<MapObject>,
    pub frame_id: String,
    /// Digest of the parameters the map was built with; not persisted.
    pub params_hash: u64,
}

impl VehicleMap {
    pub fn new(frame_id: impl Into<String>, objects: Vec<MapObject>) -> Self {
        Self { objects, frame_id: frame_id.into(), params_hash: 0 }
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.objects.iter().map(|o| o.position).collect()
    }

    /// Applies a rigid transform to every position (changes the frame).
    pub fn transformed(&self, t: &crate::geometry::RigidTransform) -> Self {
        let mut out = self.clone();
        for o in &mut out.objects {
            o.position = t.apply(&o.position);
        }
        out
    }
}

/// First 8 bytes of the SHA-256 of a textual parameter dump.
pub fn params_digest(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
}

#[derive(Debug, Clone)]
pub struct MapBuildOutput {
    pub map: VehicleMap,
    /// Tracks that met the length limit but failed to triangulate.
    pub diverged: usize,
}

fn reconstruct_track(
    track: &Track,
    log: &FlightLog,
    params: &ReconstructionParams,
) -> Result<MapObject, Divergence> {
    let mut views = Vec::with_capacity(track.len());
    let mut sizes = Vec::with_capacity(track.len());
    for e in &track.entries {
        let kf = log.keyframe(e.keyframe_id).ok_or(Divergence::TooFewObservations)?;
        views.push(View { pose: kf.pose, centroid: e.centroid });
        sizes.push((kf.pose, e.size_px));
    }
    let position = triangulate(&views, &log.intrinsics, params)?;
    let size_m = metric_size(sizes, &position, &log.intrinsics).ok_or(Divergence::BehindCamera)?;
    if !(size_m > 0.0) {
        return Err(Divergence::NonFinite);
    }
    Ok(MapObject {
        position,
        size_m,
        track_len: track.len() as u32,
        source_keyframes: (track.first_keyframe(), track.newest().keyframe_id),
    })
}

/// Triangulates every track with at least `n_lim` entries and emits the
/// survivors in track-id order.
pub fn build_map(tracks: &[Track], log: &FlightLog, params: &ReconstructionParams) -> MapBuildOutput {
    let mut ordered: Vec<&Track> = tracks.iter().filter(|t| t.len() >= params.n_lim).collect();
    ordered.sort_by_key(|t| t.id);
    let results: Vec<Result<MapObject, Divergence>> =
        ordered.par_iter().map(|t| reconstruct_track(t, log, params)).collect();
    let diverged = results.iter().filter(|r| r.is_err()).count();
    let objects = results.into_iter().filter_map(Result::ok).collect();
    MapBuildOutput { map: VehicleMap::new(log.frame_id.clone(), objects), diverged }
}
