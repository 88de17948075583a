//! The full parameter set shared by mapping and alignment.

use crate::alignment::AlignmentParams;
use crate::reconstruction::ReconstructionParams;
use crate::tracker::TrackerParams;

/// Keyframe gating distance in meters.
pub const DEFAULT_T_P: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub t_p: f64,
    pub tracker: TrackerParams,
    pub reconstruction: ReconstructionParams,
    pub alignment: AlignmentParams,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            t_p: DEFAULT_T_P,
            tracker: TrackerParams::default(),
            reconstruction: ReconstructionParams::default(),
            alignment: AlignmentParams::default(),
        }
    }
}
