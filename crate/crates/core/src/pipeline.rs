//! Observation log to vehicle map: keyframe gating, tracking and
//! triangulation in one call.

use crate::ingest::{gate_keyframes, FlightLog};
use crate::params::Params;
use crate::reconstruction::{build_map, MapBuildOutput};
use crate::tracker::{track_log, TrackerError};

/// Relative slack on the gating distance so that keyframes logged exactly
/// `T_p` apart are not dropped by rounding.
const GATE_SLACK: f64 = 1e-9;

/// Keeps the keyframes selected by distance gating. Shift statistics of
/// skipped keyframes are folded into the next kept one, summed the same way
/// the tracker sums them over a gap.
pub fn gate_log(log: &FlightLog, t_p: f64) -> FlightLog {
    let poses: Vec<_> = log.keyframes.iter().map(|k| k.pose).collect();
    let keep = gate_keyframes(&poses, t_p * (1.0 - GATE_SLACK));
    let mut out = FlightLog { keyframes: Vec::with_capacity(keep.len()), ground_truth_poses: None, ..log.clone() };
    let mut gt = log.ground_truth_poses.as_ref().map(|_| Vec::with_capacity(keep.len()));
    let mut prev = None;
    for &k in &keep {
        let mut kf = log.keyframes[k].clone();
        if let Some(p) = prev {
            for skipped in &log.keyframes[p + 1..k] {
                kf.mu_p += skipped.mu_p;
                kf.sigma_p += skipped.sigma_p;
            }
        }
        out.keyframes.push(kf);
        if let (Some(gt), Some(all)) = (gt.as_mut(), &log.ground_truth_poses) {
            gt.push(all[k]);
        }
        prev = Some(k);
    }
    out.ground_truth_poses = gt;
    out
}

#[derive(Debug, Clone)]
pub struct MappingReport {
    pub output: MapBuildOutput,
    pub keyframes_used: usize,
    /// Tracks shorter than `n_lim`.
    pub short_tracks: usize,
}

pub fn map_from_log(log: &FlightLog, params: &Params) -> Result<MappingReport, TrackerError> {
    let gated = gate_log(log, params.t_p);
    let tracking = track_log(&gated, &params.tracker, params.reconstruction.n_lim)?;
    let output = build_map(&tracking.tracks, &gated, &params.reconstruction);
    Ok(MappingReport { output, keyframes_used: gated.keyframes.len(), short_tracks: tracking.dropped })
}
