//! Gates and similarity scores used to associate segments between
//! keyframes (and, with a different limit, objects between maps).

use std::f64::consts::PI;

use nalgebra::Vector2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("relative size difference undefined for sizes {0} and {1}")]
    UndefinedSize(f64, f64),
    #[error("descriptor dimension mismatch ({0} vs {1})")]
    DimensionMismatch(usize, usize),
}

/// Apparent centroid shift consistent with the odometry feature shift:
/// `| ‖c_prev − c_curr‖ − μ | / σ < v_lim`.
pub fn vio_shift_gate(c_prev: &Vector2<f64>, c_curr: &Vector2<f64>, mu_p: f64, sigma_p: f64, v_lim: f64) -> bool {
    ((c_prev - c_curr).norm() - mu_p).abs() / sigma_p < v_lim
}

/// `2|h_i − h_j| / (h_i + h_j)`, in `[0, 2]` for non-negative sizes.
pub fn relative_size_difference(h_i: f64, h_j: f64) -> Result<f64, ScoreError> {
    let sum = h_i + h_j;
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(ScoreError::UndefinedSize(h_i, h_j));
    }
    Ok(2.0 * (h_i - h_j).abs() / sum)
}

/// Raised-cosine weight of a relative size difference `r`: `1 + cos(π r / h_lim)`
/// below the limit, zero at or above it.
pub fn size_score_from_difference(r: f64, h_lim: f64) -> f64 {
    if r < h_lim {
        1.0 + (PI * r / h_lim).cos()
    } else {
        0.0
    }
}

pub fn size_score(h_i: f64, h_j: f64, h_lim: f64) -> Result<f64, ScoreError> {
    Ok(size_score_from_difference(relative_size_difference(h_i, h_j)?, h_lim))
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Fraction of descriptors in the smaller set whose nearest neighbour in the
/// other set passes the ratio test. Empty sets are uninformative and score 1.
pub fn feature_score(desc_a: &[Vec<f64>], desc_b: &[Vec<f64>], ratio_test: f64) -> Result<f64, ScoreError> {
    if desc_a.is_empty() || desc_b.is_empty() {
        return Ok(1.0);
    }
    let dim = desc_a[0].len();
    if let Some(bad) = desc_a.iter().chain(desc_b).find(|d| d.len() != dim) {
        return Err(ScoreError::DimensionMismatch(dim, bad.len()));
    }
    let (queries, pool) = if desc_b.len() < desc_a.len() { (desc_b, desc_a) } else { (desc_a, desc_b) };
    let ratio_sq = ratio_test * ratio_test;
    let survivors = queries
        .iter()
        .filter(|q| {
            let mut best = f64::INFINITY;
            let mut second = f64::INFINITY;
            for p in pool {
                let d = squared_distance(q, p);
                if d < best {
                    second = best;
                    best = d;
                } else if d < second {
                    second = d;
                }
            }
            // d1 / d2 < ratio on distances, compared squared.
            best < ratio_sq * second
        })
        .count();
    Ok(survivors as f64 / queries.len() as f64)
}

/// Geometric mean of the size and appearance scores.
pub fn similarity(q_s: f64, q_f: f64) -> f64 {
    (q_s * q_f).sqrt()
}
