//! Poses, the pinhole camera, epipolar distances and rigid point-set
//! registration.
//!
//! Rotations are stored as 3×3 matrices everywhere. Quaternions only appear
//! at I/O boundaries ([`Pose::from_quaternion`], [`Pose::to_quaternion`]).
//! Camera frames follow the usual computer-vision convention: +Z along the
//! optical axis, +X to the right of the image, +Y down the image.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector2, Vector3};
use thiserror::Error;

/// Tolerance on `RᵀR = I` and `det R = 1`.
pub const ORTHONORMAL_TOL: f64 = 1e-9;
/// Allowed deviation of an ingested quaternion norm from 1.
pub const QUATERNION_NORM_TOL: f64 = 1e-6;
/// Depth at or below which a point counts as behind the camera.
pub const MIN_DEPTH: f64 = 1e-6;
/// Relative-pose baselines shorter than this carry no epipolar constraint.
pub const MIN_BASELINE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation is not orthonormal with det +1 (deviation {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },
    #[error("quaternion norm {norm} deviates from 1 by more than {QUATERNION_NORM_TOL}")]
    BadQuaternion { norm: f64 },
    #[error("invalid camera intrinsics: {0}")]
    BadIntrinsics(&'static str),
    #[error("baseline {0:.3e} m is too short for an epipolar constraint")]
    DegenerateBaseline(f64),
    #[error("point sets differ in length ({src} vs {dst})")]
    LengthMismatch { src: usize, dst: usize },
    #[error("need at least 3 correspondences, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate configuration: points are collinear")]
    Degenerate,
}

fn orthonormality_deviation(r: &Matrix3<f64>) -> f64 {
    let gram = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det = (r.determinant() - 1.0).abs();
    gram.max(det)
}

fn check_rotation(r: &Matrix3<f64>) -> Result<(), GeometryError> {
    let deviation = orthonormality_deviation(r);
    if deviation.is_finite() && deviation <= ORTHONORMAL_TOL {
        Ok(())
    } else {
        Err(GeometryError::NotOrthonormal { deviation })
    }
}

fn quaternion_to_matrix(wxyz: [f64; 4]) -> Result<Matrix3<f64>, GeometryError> {
    let [w, x, y, z] = wxyz;
    let norm = (w * w + x * x + y * y + z * z).sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > QUATERNION_NORM_TOL {
        return Err(GeometryError::BadQuaternion { norm });
    }
    let q = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
    Ok(q.to_rotation_matrix().into_inner())
}

fn matrix_to_quaternion(r: &Matrix3<f64>) -> [f64; 4] {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    // Canonical hemisphere: w >= 0.
    let q = if q.w < 0.0 { -q.into_inner() } else { q.into_inner() };
    [q.w, q.i, q.j, q.k]
}

/// Camera pose in an odometry frame (world-from-camera).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        check_rotation(&rotation)?;
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Builds a pose from a `w, x, y, z` quaternion, normalizing it when the
    /// norm is within [`QUATERNION_NORM_TOL`] of 1.
    pub fn from_quaternion(wxyz: [f64; 4], translation: Vector3<f64>) -> Result<Self, GeometryError> {
        Ok(Self { rotation: quaternion_to_matrix(wxyz)?, translation })
    }

    pub fn to_quaternion(&self) -> [f64; 4] {
        matrix_to_quaternion(&self.rotation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera center in the world frame.
    pub fn center(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn world_to_camera(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (point - self.translation)
    }

    pub fn camera_to_world(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }
}

/// Pinhole intrinsics without distortion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let intr = Self { fx, fy, cx, cy, width, height };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx.is_finite() && self.fx > 0.0 && self.fy.is_finite() && self.fy > 0.0) {
            return Err(GeometryError::BadIntrinsics("focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::BadIntrinsics("image size must be positive"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(GeometryError::BadIntrinsics("principal point outside the image"));
        }
        Ok(())
    }

    /// Mean focal length, used to scale pixel sizes to meters.
    pub fn mean_focal(&self) -> f64 {
        0.5 * (self.fx + self.fy)
    }

    /// Ray through `pixel` in camera coordinates, normalized to `z = 1`.
    pub fn unproject(&self, pixel: &Vector2<f64>) -> Vector3<f64> {
        Vector3::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy, 1.0)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }
}

/// Rigid motion `x ↦ R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        check_rotation(&rotation)?;
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Rotation `Rz(yaw)·Ry(pitch)·Rx(roll)` (angles in degrees) followed by a
    /// translation.
    pub fn from_euler_deg(roll: f64, pitch: f64, yaw: f64, translation: Vector3<f64>) -> Self {
        let r = Rotation3::from_euler_angles(roll.to_radians(), pitch.to_radians(), yaw.to_radians());
        Self { rotation: r.into_inner(), translation }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Applies this transform to a camera pose (`T ∘ pose`).
    pub fn transform_pose(&self, pose: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * pose.rotation,
            translation: self.rotation * pose.translation + self.translation,
        }
    }
}

/// Projects a world point into the image. `None` when the point is at or
/// behind the image plane (`Z ≤ 1e-6` in the camera frame).
pub fn project(pose: &Pose, intr: &CameraIntrinsics, point: &Vector3<f64>) -> Option<Vector2<f64>> {
    let pc = pose.world_to_camera(point);
    if pc.z <= MIN_DEPTH {
        return None;
    }
    Some(Vector2::new(intr.fx * pc.x / pc.z + intr.cx, intr.fy * pc.y / pc.z + intr.cy))
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn point_line_distance(p: &Vector2<f64>, line: &Vector3<f64>) -> f64 {
    let n = (line.x * line.x + line.y * line.y).sqrt();
    if n <= f64::EPSILON * line.abs().max() {
        // The pixel is the epipole; every epipolar line passes through it.
        return 0.0;
    }
    (line.x * p.x + line.y * p.y + line.z).abs() / n
}

/// Fundamental matrix mapping pixels of camera `a` to epipolar lines in
/// camera `b`.
pub fn fundamental_matrix(
    pose_a: &Pose,
    pose_b: &Pose,
    intr: &CameraIntrinsics,
) -> Result<Matrix3<f64>, GeometryError> {
    // x_b = R_ba x_a + t_ba
    let r_ba = pose_b.rotation.transpose() * pose_a.rotation;
    let t_ba = pose_b.rotation.transpose() * (pose_a.translation - pose_b.translation);
    let baseline = t_ba.norm();
    if baseline < MIN_BASELINE {
        return Err(GeometryError::DegenerateBaseline(baseline));
    }
    let essential = skew(&t_ba) * r_ba;
    let k_inv = intr.inverse_matrix();
    Ok(k_inv.transpose() * essential * k_inv)
}

/// Symmetric epipolar distance in pixels: the larger of the distance of
/// `px_b` to the epipolar line of `px_a`, and of `px_a` to the line of `px_b`.
pub fn epipolar_distance(
    pose_a: &Pose,
    pose_b: &Pose,
    intr: &CameraIntrinsics,
    px_a: &Vector2<f64>,
    px_b: &Vector2<f64>,
) -> Result<f64, GeometryError> {
    let f = fundamental_matrix(pose_a, pose_b, intr)?;
    let ha = Vector3::new(px_a.x, px_a.y, 1.0);
    let hb = Vector3::new(px_b.x, px_b.y, 1.0);
    let in_b = point_line_distance(px_b, &(f * ha));
    let in_a = point_line_distance(px_a, &(f.transpose() * hb));
    Ok(in_a.max(in_b))
}

/// Least-squares rigid transform mapping `src[k]` onto `dst[k]` (SVD of the
/// cross-covariance with a determinant-sign correction).
pub fn estimate_rigid_transform(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
) -> Result<RigidTransform, GeometryError> {
    if src.len() != dst.len() {
        return Err(GeometryError::LengthMismatch { src: src.len(), dst: dst.len() });
    }
    if src.len() < 3 {
        return Err(GeometryError::TooFewPoints(src.len()));
    }
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vector3<f64>>() / n;
    let cd = dst.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let mut sv = [svd.singular_values[0], svd.singular_values[1], svd.singular_values[2]];
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= 1e-10 * sv[0] {
        return Err(GeometryError::Degenerate);
    }
    let u = svd.u.ok_or(GeometryError::Degenerate)?;
    let v = svd.v_t.ok_or(GeometryError::Degenerate)?.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let translation = cd - rotation * cs;
    Ok(RigidTransform { rotation, translation })
}

fn wrap_degrees(a: f64) -> f64 {
    if a <= -180.0 {
        a + 360.0
    } else {
        a
    }
}

/// `(roll, pitch, yaw)` in degrees of the Z-Y-X decomposition
/// `R = Rz(yaw)·Ry(pitch)·Rx(roll)`. At gimbal lock roll is set to 0.
pub fn euler_zyx_deg(rotation: &Matrix3<f64>) -> (f64, f64, f64) {
    let s = (-rotation[(2, 0)]).clamp(-1.0, 1.0);
    let pitch = s.asin();
    let cos_pitch = (rotation[(2, 1)].powi(2) + rotation[(2, 2)].powi(2)).sqrt();
    let (roll, yaw) = if cos_pitch < 1e-9 {
        // Only yaw − roll (or yaw + roll) is observable; put it all in yaw.
        (0.0, (-rotation[(0, 1)]).atan2(rotation[(1, 1)]))
    } else {
        (rotation[(2, 1)].atan2(rotation[(2, 2)]), rotation[(1, 0)].atan2(rotation[(0, 0)]))
    };
    (
        wrap_degrees(roll.to_degrees()),
        wrap_degrees(pitch.to_degrees()),
        wrap_degrees(yaw.to_degrees()),
    )
}

/// Roll and pitch of a transform in degrees, each in `(−180, 180]`.
pub fn roll_pitch(transform: &RigidTransform) -> (f64, f64) {
    let (roll, pitch, _) = euler_zyx_deg(&transform.rotation);
    (roll, pitch)
}
