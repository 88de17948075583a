//! Keyframe-to-keyframe segment tracking.
//!
//! Each new keyframe's observations are scored against every live track.
//! A pair is feasible only when the centroids satisfy the epipolar gate and
//! the odometry feature-shift gate; feasible pairs are scored by the
//! geometric mean of size and appearance similarity, and the assignment
//! maximizing the total score is taken. Unmatched observations start new
//! tracks.

pub mod assignment;
pub mod scoring;

use std::sync::Arc;

use nalgebra::Vector2;
use thiserror::Error;

use crate::geometry::{epipolar_distance, CameraIntrinsics, GeometryError, Pose};
use crate::ingest::{FlightLog, Keyframe};
pub use assignment::{AssignmentSolver, BruteForce, Hungarian, ScoreMatrix};
pub use scoring::{feature_score, relative_size_difference, similarity, size_score, vio_shift_gate, ScoreError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("keyframe {got} arrived after keyframe {last}")]
    OutOfOrder { got: u64, last: u64 },
    #[error("invalid tracker parameter: {0}")]
    BadParams(&'static str),
    #[error(transparent)]
    Assignment(#[from] assignment::AssignmentError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerParams {
    /// Epipolar margin, pixels.
    pub a_lim: f64,
    /// Feature-shift gate, in standard deviations.
    pub v_lim: f64,
    /// Minimum similarity kept after assignment.
    pub q_lim: f64,
    /// Relative size difference at which the size score reaches zero.
    pub h_lim: f64,
    /// Number of missed keyframes a track survives.
    pub t_lim: usize,
    /// Nearest / second-nearest descriptor distance ratio.
    pub ratio_test: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self { a_lim: 10.0, v_lim: 4.0, q_lim: 0.2, h_lim: 0.2, t_lim: 3, ratio_test: 0.75 }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<(), TrackerError> {
        let positive = [self.a_lim, self.v_lim, self.q_lim, self.h_lim, self.ratio_test];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.t_lim == 0 {
            return Err(TrackerError::BadParams("all limits must be strictly positive"));
        }
        if self.ratio_test >= 1.0 {
            return Err(TrackerError::BadParams("ratio_test must be below 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Active,
    Stale,
    Closed,
}

/// One observation of a tracked object.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackEntry {
    pub keyframe_id: u64,
    pub obs_index: usize,
    pub centroid: Vector2<f64>,
    pub size_px: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub entries: Vec<TrackEntry>,
    pub status: TrackStatus,
    newest_ordinal: usize,
    newest_pose: Pose,
    newest_descriptors: Vec<Vec<f64>>,
}

impl Track {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn newest(&self) -> &TrackEntry {
        self.entries.last().expect("tracks are created with one entry")
    }

    pub fn first_keyframe(&self) -> u64 {
        self.entries[0].keyframe_id
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepReport {
    pub matched: usize,
    pub created: usize,
    pub completed: usize,
    pub dropped: usize,
}

/// Gate-and-score context for one (track, observation) pair.
struct PairContext<'a> {
    intr: &'a CameraIntrinsics,
    params: &'a TrackerParams,
    pose: &'a Pose,
    mu: f64,
    sigma: f64,
}

impl PairContext<'_> {
    fn score(&self, track: &Track, obs: &crate::ingest::SegmentObservation) -> f64 {
        let last = track.newest();
        match epipolar_distance(&track.newest_pose, self.pose, self.intr, &last.centroid, &obs.centroid) {
            Ok(d) if d >= self.params.a_lim => return f64::NEG_INFINITY,
            Ok(_) | Err(GeometryError::DegenerateBaseline(_)) => {}
            Err(_) => return f64::NEG_INFINITY,
        }
        if !vio_shift_gate(&last.centroid, &obs.centroid, self.mu, self.sigma, self.params.v_lim) {
            return f64::NEG_INFINITY;
        }
        let q_s = size_score(last.size_px, obs.size_px, self.params.h_lim).unwrap_or(0.0);
        let q_f = feature_score(&track.newest_descriptors, &obs.descriptors, self.params.ratio_test).unwrap_or(0.0);
        similarity(q_s, q_f)
    }
}

/// Incremental tracker state.
pub struct Tracker {
    params: TrackerParams,
    min_track_len: usize,
    intr: CameraIntrinsics,
    solver: Arc<dyn AssignmentSolver>,
    active: Vec<Track>,
    completed: Vec<Track>,
    dropped: usize,
    next_id: u64,
    last_keyframe: Option<u64>,
    /// `(mu_p, sigma_p)` of every processed keyframe, by ordinal.
    shifts: Vec<(f64, f64)>,
}

impl Tracker {
    pub fn new(params: TrackerParams, min_track_len: usize, intr: CameraIntrinsics) -> Result<Self, TrackerError> {
        Self::with_solver(params, min_track_len, intr, Arc::new(Hungarian))
    }

    pub fn with_solver(
        params: TrackerParams,
        min_track_len: usize,
        intr: CameraIntrinsics,
        solver: Arc<dyn AssignmentSolver>,
    ) -> Result<Self, TrackerError> {
        params.validate()?;
        Ok(Self {
            params,
            min_track_len,
            intr,
            solver,
            active: Vec::new(),
            completed: Vec::new(),
            dropped: 0,
            next_id: 0,
            last_keyframe: None,
            shifts: Vec::new(),
        })
    }

    pub fn active_tracks(&self) -> &[Track] {
        &self.active
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    /// Tracks handed off for reconstruction so far, in closing order.
    pub fn take_completed(&mut self) -> Vec<Track> {
        std::mem::take(&mut self.completed)
    }

    fn retire(&mut self, mut track: Track, report: &mut StepReport) {
        if track.len() >= self.min_track_len {
            track.status = TrackStatus::Closed;
            self.completed.push(track);
            report.completed += 1;
        } else {
            self.dropped += 1;
            report.dropped += 1;
        }
    }

    /// Expected shift statistics between the keyframe at `ordinal` and the
    /// current one: per-step means and deviations summed over the gap.
    fn shift_since(&self, ordinal: usize) -> (f64, f64) {
        self.shifts[ordinal + 1..].iter().fold((0.0, 0.0), |(m, s), &(mu, sigma)| (m + mu, s + sigma))
    }

    pub fn step(&mut self, kf: &Keyframe) -> Result<StepReport, TrackerError> {
        if let Some(last) = self.last_keyframe {
            if kf.id <= last {
                return Err(TrackerError::OutOfOrder { got: kf.id, last });
            }
        }
        self.last_keyframe = Some(kf.id);
        let ordinal = self.shifts.len();
        self.shifts.push((kf.mu_p, kf.sigma_p));
        let mut report = StepReport::default();

        // Tracks that missed more than t_lim keyframes go stale.
        let (live, stale): (Vec<Track>, Vec<Track>) = std::mem::take(&mut self.active)
            .into_iter()
            .partition(|t| ordinal - t.newest_ordinal - 1 <= self.params.t_lim);
        self.active = live;
        for mut t in stale {
            t.status = TrackStatus::Stale;
            self.retire(t, &mut report);
        }

        let mut scores = ScoreMatrix::infeasible(self.active.len(), kf.observations.len());
        for (r, track) in self.active.iter().enumerate() {
            let (mu, sigma) = self.shift_since(track.newest_ordinal);
            let ctx = PairContext { intr: &self.intr, params: &self.params, pose: &kf.pose, mu, sigma };
            for (c, obs) in kf.observations.iter().enumerate() {
                scores.set(r, c, ctx.score(track, obs));
            }
        }
        let pairs = self.solver.solve(&scores)?;

        let mut claimed = vec![false; kf.observations.len()];
        for (r, c) in pairs {
            if scores.get(r, c) < self.params.q_lim {
                continue;
            }
            claimed[c] = true;
            let obs = &kf.observations[c];
            let track = &mut self.active[r];
            track.entries.push(TrackEntry {
                keyframe_id: kf.id,
                obs_index: c,
                centroid: obs.centroid,
                size_px: obs.size_px,
            });
            track.newest_ordinal = ordinal;
            track.newest_pose = kf.pose;
            track.newest_descriptors = obs.descriptors.clone();
            report.matched += 1;
        }
        for (c, obs) in kf.observations.iter().enumerate() {
            if claimed[c] {
                continue;
            }
            self.active.push(Track {
                id: self.next_id,
                entries: vec![TrackEntry { keyframe_id: kf.id, obs_index: c, centroid: obs.centroid, size_px: obs.size_px }],
                status: TrackStatus::Active,
                newest_ordinal: ordinal,
                newest_pose: kf.pose,
                newest_descriptors: obs.descriptors.clone(),
            });
            self.next_id += 1;
            report.created += 1;
        }
        Ok(report)
    }

    /// Closes every remaining track and returns all completed tracks in
    /// creation order.
    pub fn finish(mut self) -> TrackingOutput {
        let mut report = StepReport::default();
        for t in std::mem::take(&mut self.active) {
            self.retire(t, &mut report);
        }
        let mut tracks = self.completed;
        tracks.sort_by_key(|t| t.id);
        TrackingOutput { tracks, dropped: self.dropped }
    }
}

#[derive(Debug, Clone)]
pub struct TrackingOutput {
    /// Tracks with at least the minimum length, ordered by id.
    pub tracks: Vec<Track>,
    /// Tracks discarded for being too short.
    pub dropped: usize,
}

/// Runs the tracker over every keyframe of `log`.
pub fn track_log(log: &FlightLog, params: &TrackerParams, min_track_len: usize) -> Result<TrackingOutput, TrackerError> {
    let mut tracker = Tracker::new(*params, min_track_len, log.intrinsics)?;
    for kf in &log.keyframes {
        tracker.step(kf)?;
    }
    Ok(tracker.finish())
}
