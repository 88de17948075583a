//! Rectangular maximum-score assignment with forbidden entries.
//!
//! Every row may stay unassigned; an entry of `f64::NEG_INFINITY` can never
//! be selected. Solvers return the `(row, col)` pairs of a matching that
//! maximizes the summed score.

use std::sync::Arc;

use thiserror::Error;

use crate::registry::{Named, Registry};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AssignmentError {
    #[error("{rows}×{cols} problem exceeds the brute-force limit of {limit}")]
    TooLarge { rows: usize, cols: usize, limit: usize },
}

/// Dense row-major score matrix; `NEG_INFINITY` marks infeasible pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn infeasible(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![f64::NEG_INFINITY; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged score matrix");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn is_feasible(&self, row: usize, col: usize) -> bool {
        self.get(row, col) > f64::NEG_INFINITY
    }

    /// Sum of the selected entries, accumulated in the order given.
    pub fn total(&self, pairs: &[(usize, usize)]) -> f64 {
        pairs.iter().map(|&(r, c)| self.get(r, c)).sum()
    }
}

pub trait AssignmentSolver: Named + Send + Sync {
    /// Pairs sorted by row.
    fn solve(&self, scores: &ScoreMatrix) -> Result<Vec<(usize, usize)>, AssignmentError>;
}

/// Kuhn–Munkres with row/column potentials on the cost matrix
/// `[−scores | 0]`, the zero block letting every row stay unassigned.
#[derive(Debug, Clone, Copy, Default)]
pub struct Hungarian;

impl Named for Hungarian {
    fn name(&self) -> &'static str {
        "hungarian"
    }
}

impl AssignmentSolver for Hungarian {
    fn solve(&self, scores: &ScoreMatrix) -> Result<Vec<(usize, usize)>, AssignmentError> {
        Ok(hungarian(scores))
    }
}

pub fn hungarian(scores: &ScoreMatrix) -> Vec<(usize, usize)> {
    let n = scores.rows();
    let real = scores.cols();
    if n == 0 || real == 0 {
        return Vec::new();
    }
    let m = real + n;
    let cost = |i: usize, j: usize| -> f64 {
        if j < real {
            let s = scores.get(i, j);
            if s > f64::NEG_INFINITY {
                -s
            } else {
                f64::INFINITY
            }
        } else {
            0.0
        }
    };
    // 1-based potentials; p[j] is the row matched to column j (0 = free).
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> =
        (1..=real).filter(|&j| p[j] != 0).map(|j| (p[j] - 1, j - 1)).collect();
    pairs.sort_unstable();
    pairs
}

/// Exhaustive search over all partial matchings; a reference for small
/// problems.
#[derive(Debug, Clone, Copy)]
pub struct BruteForce {
    pub limit: usize,
}

impl Default for BruteForce {
    fn default() -> Self {
        Self { limit: 8 }
    }
}

impl Named for BruteForce {
    fn name(&self) -> &'static str {
        "brute-force"
    }
}

impl AssignmentSolver for BruteForce {
    fn solve(&self, scores: &ScoreMatrix) -> Result<Vec<(usize, usize)>, AssignmentError> {
        if scores.rows() > self.limit || scores.cols() > self.limit {
            return Err(AssignmentError::TooLarge { rows: scores.rows(), cols: scores.cols(), limit: self.limit });
        }
        let mut best = (0.0, Vec::new());
        let mut current = Vec::new();
        let mut used = vec![false; scores.cols()];
        brute_force_rec(scores, 0, &mut used, &mut current, &mut best);
        Ok(best.1)
    }
}

fn brute_force_rec(
    scores: &ScoreMatrix,
    row: usize,
    used: &mut [bool],
    current: &mut Vec<(usize, usize)>,
    best: &mut (f64, Vec<(usize, usize)>),
) {
    if row == scores.rows() {
        let total = scores.total(current);
        if total > best.0 {
            *best = (total, current.clone());
        }
        return;
    }
    brute_force_rec(scores, row + 1, used, current, best);
    for col in 0..scores.cols() {
        if used[col] || !scores.is_feasible(row, col) {
            continue;
        }
        used[col] = true;
        current.push((row, col));
        brute_force_rec(scores, row + 1, used, current, best);
        current.pop();
        used[col] = false;
    }
}

/// Registry with `hungarian` and `brute-force`.
pub fn builtin_assignment_solvers() -> Registry<dyn AssignmentSolver> {
    let mut reg: Registry<dyn AssignmentSolver> = Registry::new("assignment");
    reg.register(Arc::new(Hungarian));
    reg.register(Arc::new(BruteForce::default()));
    reg
}
