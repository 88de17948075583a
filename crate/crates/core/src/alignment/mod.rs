//! Windowed correspondence search between two vehicle maps.
//!
//! Each map is cut into windows of `wl` consecutive objects advanced by
//! `sl`; every window pair gets putative associations gated by relative
//! size, a consistency graph over pairwise distances, a densest compatible
//! subset, and a rigid registration that is accepted when the subset is
//! large enough and the roll and pitch are small.

mod consistency;

use std::ops::Range;
use std::sync::Arc;

use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

pub use consistency::{
    builtin_consistency_solvers, consistency_matrix, densest_consistent_set, exact_consistent_oracle, greedy_grow, greedy_round,
    leading_eigenvector, local_improve, pair_affinity, ConsistencyError, ConsistencyProblem, ConsistencySolver, ExactSolver,
    PutativeAssociation, SpectralSolver, EXACT_LIMIT,
};

use crate::geometry::{estimate_rigid_transform, euler_zyx_deg, RigidTransform};
use crate::reconstruction::{MapObject, VehicleMap};
use crate::registry::UnknownStrategy;
use crate::tracker::scoring::{relative_size_difference, size_score_from_difference};

/// Fewest associations a rigid transform is estimated from.
pub const MIN_REGISTRATION_POINTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentParams {
    pub wl: usize,
    pub sl: usize,
    pub eps_lim: f64,
    pub r_lim: f64,
    /// Degrees.
    pub alpha_lim: f64,
    pub s_lim: usize,
    pub sigma_c: f64,
    pub power_iters: usize,
    pub power_tol: f64,
}

impl Default for AlignmentParams {
    fn default() -> Self {
        let eps_lim = 2.0;
        Self {
            wl: 50,
            sl: 10,
            eps_lim,
            r_lim: 0.2,
            alpha_lim: 22.5,
            s_lim: 5,
            sigma_c: eps_lim / 3.0,
            power_iters: 1000,
            power_tol: 1e-9,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignmentError {
    #[error("invalid alignment parameter {0}")]
    BadParams(&'static str),
    #[error(transparent)]
    Consistency(#[from] ConsistencyError),
    #[error(transparent)]
    UnknownSolver(#[from] UnknownStrategy),
}

impl AlignmentParams {
    pub fn validate(&self) -> Result<(), AlignmentError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.wl < 3 {
            return Err(AlignmentError::BadParams("WL"));
        }
        if self.sl < 1 || self.sl > self.wl {
            return Err(AlignmentError::BadParams("SL"));
        }
        for (name, v) in
            [("eps_lim", self.eps_lim), ("r_lim", self.r_lim), ("alpha_lim", self.alpha_lim), ("sigma_c", self.sigma_c)]
        {
            if !positive(v) {
                return Err(AlignmentError::BadParams(name));
            }
        }
        if self.s_lim == 0 {
            return Err(AlignmentError::BadParams("s_lim"));
        }
        if self.power_iters == 0 || !positive(self.power_tol) {
            return Err(AlignmentError::BadParams("power_iters"));
        }
        Ok(())
    }
}

/// Number of stride positions whose window starts inside `n` objects.
pub fn window_count(n: usize, sl: usize) -> usize {
    n.div_ceil(sl)
}

/// Object index range of window `s`.
pub fn window_range(s: usize, n: usize, wl: usize, sl: usize) -> Range<usize> {
    let start = s * sl;
    start..(start + wl).min(n)
}

/// All stride-index pairs, lexicographic.
pub fn window_offsets(n_i: usize, n_j: usize, sl: usize) -> Vec<(usize, usize)> {
    let (a, b) = (window_count(n_i, sl), window_count(n_j, sl));
    (0..a).flat_map(|s| (0..b).map(move |t| (s, t))).collect()
}

/// Cross pairs whose relative size difference is within `r_lim`, weighted
/// by the raised-cosine size score. Zero-weight pairs are dropped.
pub fn putative_associations(win_i: &[MapObject], win_j: &[MapObject], r_lim: f64) -> Vec<PutativeAssociation> {
    let mut out = Vec::new();
    for (a, oi) in win_i.iter().enumerate() {
        for (b, oj) in win_j.iter().enumerate() {
            let Ok(r) = relative_size_difference(oi.size_m, oj.size_m) else { continue };
            if r > r_lim {
                continue;
            }
            let weight = size_score_from_difference(r, r_lim);
            if weight > 0.0 {
                out.push(PutativeAssociation { idx_i: a, idx_j: b, weight });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentHypothesis {
    pub offset_i: usize,
    pub offset_j: usize,
    /// Selected associations with map-level object indices.
    pub selected: Vec<PutativeAssociation>,
    /// Maps positions of map i into the frame of map j.
    pub transform: RigidTransform,
    /// ZYX Euler angles of the transform in degrees; NaN when unregistered.
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub registered: bool,
    /// Registration succeeded and roll and pitch are within the limit.
    pub gate_passed: bool,
    pub accepted: bool,
}

impl AlignmentHypothesis {
    pub fn score(&self) -> usize {
        self.selected.len()
    }

    pub fn accepted_at(&self, s_lim: usize) -> bool {
        self.gate_passed && self.score() > s_lim
    }
}

/// A window of consecutive map objects.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    pub stride_index: usize,
    pub start: usize,
    pub objects: &'a [MapObject],
}

impl<'a> Window<'a> {
    pub fn of(map: &'a VehicleMap, stride_index: usize, wl: usize, sl: usize) -> Self {
        let range = window_range(stride_index, map.len(), wl, sl);
        Self { stride_index, start: range.start, objects: &map.objects[range] }
    }
}

/// Alignment parameters together with the chosen consistency solver.
#[derive(Clone)]
pub struct Aligner {
    pub params: AlignmentParams,
    solver: Arc<dyn ConsistencySolver>,
}

impl std::fmt::Debug for Aligner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Aligner").field("params", &self.params).field("solver", &self.solver.name()).finish()
    }
}

impl Aligner {
    pub fn new(params: AlignmentParams) -> Result<Self, AlignmentError> {
        params.validate()?;
        let solver = Arc::new(SpectralSolver { power_iters: params.power_iters, power_tol: params.power_tol });
        Ok(Self { params, solver })
    }

    /// Picks the consistency solver by registry name.
    pub fn with_solver_name(params: AlignmentParams, name: &str) -> Result<Self, AlignmentError> {
        params.validate()?;
        let solver = builtin_consistency_solvers(params.power_iters, params.power_tol).get(name)?;
        Ok(Self { params, solver })
    }

    pub fn with_solver(params: AlignmentParams, solver: Arc<dyn ConsistencySolver>) -> Result<Self, AlignmentError> {
        params.validate()?;
        Ok(Self { params, solver })
    }

    pub fn solver_name(&self) -> &'static str {
        self.solver.name()
    }

    pub fn align_window_pair(&self, win_i: &Window<'_>, win_j: &Window<'_>) -> Result<AlignmentHypothesis, AlignmentError> {
        let p = &self.params;
        let positions_i: Vec<Vector3<f64>> = win_i.objects.iter().map(|o| o.position).collect();
        let positions_j: Vec<Vector3<f64>> = win_j.objects.iter().map(|o| o.position).collect();
        let assocs = putative_associations(win_i.objects, win_j.objects, p.r_lim);
        let problem = consistency_matrix(assocs, &positions_i, &positions_j, p.eps_lim, p.sigma_c);
        let chosen = self.solver.solve(&problem)?;
        let local: Vec<PutativeAssociation> = chosen.iter().map(|&k| problem.associations()[k]).collect();

        let mut hyp = AlignmentHypothesis {
            offset_i: win_i.stride_index,
            offset_j: win_j.stride_index,
            selected: local
                .iter()
                .map(|a| PutativeAssociation { idx_i: a.idx_i + win_i.start, idx_j: a.idx_j + win_j.start, weight: a.weight })
                .collect(),
            transform: RigidTransform::identity(),
            roll: f64::NAN,
            pitch: f64::NAN,
            yaw: f64::NAN,
            registered: false,
            gate_passed: false,
            accepted: false,
        };
        if local.len() >= MIN_REGISTRATION_POINTS {
            let src: Vec<_> = local.iter().map(|a| positions_i[a.idx_i]).collect();
            let dst: Vec<_> = local.iter().map(|a| positions_j[a.idx_j]).collect();
            if let Ok(t) = estimate_rigid_transform(&src, &dst) {
                let (roll, pitch, yaw) = euler_zyx_deg(t.rotation());
                hyp.transform = t;
                hyp.roll = roll;
                hyp.pitch = pitch;
                hyp.yaw = yaw;
                hyp.registered = true;
                hyp.gate_passed = roll.abs().max(pitch.abs()) <= p.alpha_lim;
            }
        }
        hyp.accepted = hyp.accepted_at(p.s_lim);
        Ok(hyp)
    }

    /// Every window pair, ordered by `(offset_i, offset_j)`. `workers` sets
    /// the thread count; 0 or 1 runs on the calling thread.
    pub fn align_maps(
        &self,
        map_i: &VehicleMap,
        map_j: &VehicleMap,
        workers: usize,
    ) -> Result<Vec<AlignmentHypothesis>, AlignmentError> {
        let (wl, sl) = (self.params.wl, self.params.sl);
        let offsets = window_offsets(map_i.len(), map_j.len(), sl);
        let run = |&(s, t): &(usize, usize)| self.align_window_pair(&Window::of(map_i, s, wl, sl), &Window::of(map_j, t, wl, sl));
        if workers <= 1 {
            return offsets.iter().map(run).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool construction");
        pool.install(|| offsets.par_iter().map(run).collect())
    }
}

/// Aligns with the spectral solver on the calling thread.
pub fn align_maps(
    map_i: &VehicleMap,
    map_j: &VehicleMap,
    params: &AlignmentParams,
) -> Result<Vec<AlignmentHypothesis>, AlignmentError> {
    Aligner::new(*params)?.align_maps(map_i, map_j, 1)
}
