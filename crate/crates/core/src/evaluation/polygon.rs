//! Camera ground footprints and convex polygon overlap.

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, Pose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FootprintError {
    #[error("image corner ray {corner} does not reach the ground plane")]
    Horizon { corner: usize },
}

/// Ground-plane quadrilateral, counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootprintQuad {
    pub corners: [Vector2<f64>; 4],
}

impl FootprintQuad {
    /// Reorders the corners counter-clockwise if needed.
    pub fn new(mut corners: [Vector2<f64>; 4]) -> Self {
        if signed_area(&corners) < 0.0 {
            corners.reverse();
        }
        Self { corners }
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.corners).abs()
    }

    pub fn centroid(&self) -> Vector2<f64> {
        self.corners.iter().sum::<Vector2<f64>>() / 4.0
    }
}

/// Intersects the rays through the four image corners with `z = ground_z`.
pub fn footprint(pose: &Pose, intr: &CameraIntrinsics, ground_z: f64) -> Result<FootprintQuad, FootprintError> {
    let (w, h) = (intr.width as f64, intr.height as f64);
    let pixels = [Vector2::new(0.0, 0.0), Vector2::new(w, 0.0), Vector2::new(w, h), Vector2::new(0.0, h)];
    let center = pose.center();
    let mut corners = [Vector2::zeros(); 4];
    for (k, px) in pixels.iter().enumerate() {
        let ray: Vector3<f64> = pose.rotation() * intr.unproject(px);
        let s = (ground_z - center.z) / ray.z;
        if !(ray.z < 0.0 && center.z > ground_z && s.is_finite() && s > 0.0) {
            return Err(FootprintError::Horizon { corner: k });
        }
        let hit = center + ray * s;
        corners[k] = Vector2::new(hit.x, hit.y);
    }
    Ok(FootprintQuad::new(corners))
}

/// Shoelace area, positive for counter-clockwise vertices.
pub fn signed_area(poly: &[Vector2<f64>]) -> f64 {
    let n = poly.len();
    0.5 * (0..n).map(|k| poly[k].perp(&poly[(k + 1) % n])).sum::<f64>()
}

/// Sutherland–Hodgman clip of `subject` against the convex,
/// counter-clockwise `clip` polygon.
pub fn clip_convex(subject: &[Vector2<f64>], clip: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut output = subject.to_vec();
    let n = clip.len();
    for k in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip[k];
        let b = clip[(k + 1) % n];
        let edge = b - a;
        let side = |p: &Vector2<f64>| edge.perp(&(p - a));
        let input = std::mem::take(&mut output);
        for (m, cur) in input.iter().enumerate() {
            let prev = input[(m + input.len() - 1) % input.len()];
            let (sc, sp) = (side(cur), side(&prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    output.push(prev + (cur - prev) * (sp / (sp - sc)));
                }
                output.push(*cur);
            } else if sp >= 0.0 {
                output.push(prev + (cur - prev) * (sp / (sp - sc)));
            }
        }
    }
    output
}

/// Intersection over union of two convex quads.
pub fn quad_iou(a: &FootprintQuad, b: &FootprintQuad) -> f64 {
    let inter = signed_area(&clip_convex(&a.corners, &b.corners)).abs();
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}
