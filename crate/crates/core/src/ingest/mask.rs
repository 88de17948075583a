//! Binary masks and their reduction to centroid / covariance / size.

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

use super::SegmentObservation;

/// Masks with this many pixels or fewer are dropped.
pub const MIN_MASK_PIXELS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MaskError {
    #[error("run lengths cover {covered} pixels, image has {expected}")]
    RunLengthMismatch { covered: u64, expected: u64 },
    #[error("raster has {got} cells, expected {expected}")]
    SizeMismatch { got: usize, expected: usize },
}

/// Row-major binary raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    cells: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, cells: Vec<bool>) -> Result<Self, MaskError> {
        let expected = width as usize * height as usize;
        if cells.len() != expected {
            return Err(MaskError::SizeMismatch { got: cells.len(), expected });
        }
        Ok(Self { width, height, cells })
    }

    pub fn from_pixels(width: u32, height: u32, pixels: &[(u32, u32)]) -> Self {
        let mut cells = vec![false; width as usize * height as usize];
        for &(x, y) in pixels {
            if x < width && y < height {
                cells[y as usize * width as usize + x as usize] = true;
            }
        }
        Self { width, height, cells }
    }

    /// Decodes alternating zero/one run lengths, starting with zeros.
    pub fn from_rle(width: u32, height: u32, runs: &[u64]) -> Result<Self, MaskError> {
        let expected = width as u64 * height as u64;
        let covered: u64 = runs.iter().sum();
        if covered != expected {
            return Err(MaskError::RunLengthMismatch { covered, expected });
        }
        let mut cells = Vec::with_capacity(expected as usize);
        for (k, &run) in runs.iter().enumerate() {
            cells.extend(std::iter::repeat_n(k % 2 == 1, run as usize));
        }
        Ok(Self { width, height, cells })
    }

    pub fn to_rle(&self) -> Vec<u64> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u64;
        for &c in &self.cells {
            if c == current {
                len += 1;
            } else {
                runs.push(len);
                current = c;
                len = 1;
            }
        }
        runs.push(len);
        runs
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// `(x, y)` coordinates of set pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32))
    }
}

/// Summarizes a mask into a [`SegmentObservation`], or `None` when it has
/// [`MIN_MASK_PIXELS`] pixels or fewer.
pub fn summarize_mask(mask: &BinaryMask) -> Option<SegmentObservation> {
    let pixels: Vec<(u32, u32)> = mask.pixels().collect();
    summarize_pixels(&pixels)
}

/// Population mean and covariance of pixel coordinates.
pub fn summarize_pixels(pixels: &[(u32, u32)]) -> Option<SegmentObservation> {
    if pixels.len() <= MIN_MASK_PIXELS {
        return None;
    }
    let n = pixels.len() as f64;
    let mut mean = Vector2::zeros();
    for &(x, y) in pixels {
        mean += Vector2::new(x as f64, y as f64);
    }
    mean /= n;
    let mut cov = Matrix2::zeros();
    for &(x, y) in pixels {
        let d = Vector2::new(x as f64, y as f64) - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    SegmentObservation::new(mean, [cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]], pixels.len() as u32, Vec::new()).ok()
}
