//! Compact object-based vehicle maps built from segment tracks, and
//! windowed geometric alignment between two such maps.
//!
//! The pipeline runs in two halves:
//!
//! * **Mapping**: an observation log ([`ingest`]) is tracked keyframe by
//!   keyframe ([`tracker`]); every sufficiently long track is triangulated
//!   against the fixed odometry poses ([`reconstruction`]) into a
//!   [`reconstruction::VehicleMap`] of positions and metric sizes.
//! * **Alignment**: two maps are compared window by window
//!   ([`alignment`]); each window pair yields putative associations gated by
//!   size, a pairwise-consistency graph, a dense consistent subset and a
//!   rigid transform that is accepted or rejected.
//!
//! [`pipeline::map_from_log`] runs the mapping half end to end.
//! [`simulator`] produces synthetic worlds and flights with ground truth,
//! [`evaluation`] labels window pairs by camera-footprint overlap and scores
//! precision/recall, and [`persistence`] holds the binary map format, the
//! parameter file and CSV reports.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod ingest;
pub mod params;
pub mod persistence;
pub mod pipeline;
pub mod reconstruction;
pub mod registry;
pub mod simulator;
pub mod tracker;

pub use error::LogError;
pub use params::Params;
