//! Ground-truth window-pair labels from camera footprint overlap,
//! precision/recall over the acceptance threshold, and search timing.

mod polygon;

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

pub use polygon::{clip_convex, footprint, quad_iou, signed_area, FootprintError, FootprintQuad};

use crate::alignment::{window_offsets, window_range, Aligner, AlignmentError, AlignmentHypothesis, AlignmentParams};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::reconstruction::VehicleMap;

/// At most this many keyframes per window interval enter the IoU search.
pub const MAX_INTERVAL_SAMPLES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no ground-truth pose for keyframe {0}")]
    MissingGroundTruth(u64),
    #[error("no label for window pair ({0}, {1})")]
    MissingLabel(usize, usize),
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelThresholds {
    /// IoU strictly above this is a positive.
    pub positive: f64,
    /// IoU at or below this is a negative.
    pub negative: f64,
}

impl Default for LabelThresholds {
    fn default() -> Self {
        Self { positive: 0.333, negative: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Positive,
    Ignore,
    Negative,
}

impl Label {
    pub fn from_iou(iou: f64, t: &LabelThresholds) -> Self {
        if iou > t.positive {
            Label::Positive
        } else if iou <= t.negative {
            Label::Negative
        } else {
            Label::Ignore
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Ignore => "ignore",
            Label::Negative => "negative",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "positive" => Some(Label::Positive),
            "ignore" => Some(Label::Ignore),
            "negative" => Some(Label::Negative),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairLabel {
    pub offset_i: usize,
    pub offset_j: usize,
    pub iou: f64,
    pub label: Label,
}

/// Keyframe-id interval covered by a window: from the first keyframe of its
/// first object to the last keyframe of its last object.
pub fn window_interval(map: &VehicleMap, s: usize, wl: usize, sl: usize) -> (u64, u64) {
    let r = window_range(s, map.len(), wl, sl);
    (map.objects[r.start].source_keyframes.0, map.objects[r.end - 1].source_keyframes.1)
}

/// Every `k`-th keyframe of the interval with `k` chosen so at most
/// [`MAX_INTERVAL_SAMPLES`] remain.
pub fn sample_interval(first: u64, last: u64) -> Vec<u64> {
    let len = last.saturating_sub(first) + 1;
    let step = len.div_ceil(MAX_INTERVAL_SAMPLES as u64).max(1);
    (first..=last).step_by(step as usize).collect()
}

/// Footprints indexed by keyframe id; `None` where the camera sees the
/// horizon.
pub fn footprints(poses: &[Pose], intr: &CameraIntrinsics, ground_z: f64) -> Vec<Option<FootprintQuad>> {
    poses.iter().map(|p| footprint(p, intr, ground_z).ok()).collect()
}

/// Labels every window pair of the two maps. `truth_i[k]` is the true pose
/// of keyframe id `k` of the first flight.
#[allow(clippy::too_many_arguments)]
pub fn label_pairs(
    truth_i: &[Pose],
    truth_j: &[Pose],
    map_i: &VehicleMap,
    map_j: &VehicleMap,
    intr: &CameraIntrinsics,
    ground_z: f64,
    params: &AlignmentParams,
    thresholds: &LabelThresholds,
) -> Result<Vec<PairLabel>, EvalError> {
    let (wl, sl) = (params.wl, params.sl);
    let fp_i = footprints(truth_i, intr, ground_z);
    let fp_j = footprints(truth_j, intr, ground_z);
    let lookup = |fp: &[Option<FootprintQuad>], id: u64| -> Result<Option<FootprintQuad>, EvalError> {
        fp.get(id as usize).copied().ok_or(EvalError::MissingGroundTruth(id))
    };
    let samples = |map: &VehicleMap, fp: &[Option<FootprintQuad>], s: usize| -> Result<Vec<FootprintQuad>, EvalError> {
        let (a, b) = window_interval(map, s, wl, sl);
        let mut out = Vec::new();
        for id in sample_interval(a, b) {
            if let Some(q) = lookup(fp, id)? {
                out.push(q);
            }
        }
        Ok(out)
    };
    let win_i = (0..crate::alignment::window_count(map_i.len(), sl))
        .map(|s| samples(map_i, &fp_i, s))
        .collect::<Result<Vec<_>, _>>()?;
    let win_j = (0..crate::alignment::window_count(map_j.len(), sl))
        .map(|s| samples(map_j, &fp_j, s))
        .collect::<Result<Vec<_>, _>>()?;
    let offsets = window_offsets(map_i.len(), map_j.len(), sl);
    Ok(offsets
        .par_iter()
        .map(|&(s, t)| {
            let iou = win_i[s]
                .iter()
                .flat_map(|a| win_j[t].iter().map(move |b| quad_iou(a, b)))
                .fold(0.0, f64::max);
            PairLabel { offset_i: s, offset_j: t, iou, label: Label::from_iou(iou, thresholds) }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PRPoint {
    pub threshold: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub positives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PRCurve {
    pub points: Vec<PRPoint>,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

impl PRCurve {
    /// Highest recall among thresholds whose precision is at least
    /// `min_precision`; zero when none qualifies.
    pub fn recall_at_precision(&self, min_precision: f64) -> f64 {
        self.points.iter().filter(|p| p.precision >= min_precision).map(|p| p.recall).fold(0.0, f64::max)
    }

    /// Mean of the F1 at the lowest threshold reaching precision 0.99 and at
    /// the highest threshold reaching recall 0.99. Unreachable targets fall
    /// back to the highest and lowest threshold respectively.
    pub fn average_f1(&self) -> f64 {
        let (Some(first), Some(last)) = (self.points.first(), self.points.last()) else { return 0.0 };
        let at_precision = self.points.iter().find(|p| p.precision >= 0.99).unwrap_or(last);
        let at_recall = self.points.iter().rev().find(|p| p.recall >= 0.99).unwrap_or(first);
        0.5 * (at_precision.f1 + at_recall.f1)
    }
}

/// What the precision/recall sweep needs from a hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoredPair {
    pub offset_i: usize,
    pub offset_j: usize,
    pub score: usize,
    pub gate_passed: bool,
}

impl ScoredPair {
    pub fn accepted_at(&self, s_lim: usize) -> bool {
        self.gate_passed && self.score > s_lim
    }
}

impl From<&AlignmentHypothesis> for ScoredPair {
    fn from(h: &AlignmentHypothesis) -> Self {
        Self { offset_i: h.offset_i, offset_j: h.offset_j, score: h.score(), gate_passed: h.gate_passed }
    }
}

/// Scores hypotheses at each threshold: a pair is predicted when its gate
/// passed and its score exceeds the threshold. Ignore-labeled pairs count
/// neither way.
pub fn precision_recall(
    hypotheses: &[ScoredPair],
    labels: &[PairLabel],
    thresholds: &[usize],
) -> Result<PRCurve, EvalError> {
    let by_pair: BTreeMap<(usize, usize), Label> = labels.iter().map(|l| ((l.offset_i, l.offset_j), l.label)).collect();
    let mut scored = Vec::with_capacity(hypotheses.len());
    for h in hypotheses {
        let label = *by_pair.get(&(h.offset_i, h.offset_j)).ok_or(EvalError::MissingLabel(h.offset_i, h.offset_j))?;
        scored.push((h, label));
    }
    let positives = labels.iter().filter(|l| l.label == Label::Positive).count();
    let mut ts = thresholds.to_vec();
    ts.sort_unstable();
    ts.dedup();
    let points = ts
        .into_iter()
        .map(|threshold| {
            let (mut tp, mut fp) = (0, 0);
            for (h, label) in &scored {
                if !h.accepted_at(threshold) {
                    continue;
                }
                match label {
                    Label::Positive => tp += 1,
                    Label::Negative => fp += 1,
                    Label::Ignore => {}
                }
            }
            let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
            let recall = if positives == 0 { 1.0 } else { tp as f64 / positives as f64 };
            PRPoint {
                threshold,
                precision,
                recall,
                f1: f1(precision, recall),
                true_positives: tp,
                false_positives: fp,
                positives,
            }
        })
        .collect();
    Ok(PRCurve { points })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub wl: usize,
    pub sl: usize,
    pub workers: usize,
    pub mean_s: f64,
    /// Sample standard deviation over the repeats; zero for one repeat.
    pub std_s: f64,
    pub samples: usize,
}

/// Mean and sample standard deviation.
pub fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Times the full window search for every `(WL, SL)` in the grid with
/// `SL ≤ WL`, WL-major. Only the search itself is timed.
pub fn bench_search(
    map_i: &VehicleMap,
    map_j: &VehicleMap,
    wl_list: &[usize],
    sl_list: &[usize],
    repeats: usize,
    workers: usize,
    base: &AlignmentParams,
) -> Result<Vec<BenchRow>, EvalError> {
    let mut rows = Vec::new();
    for &wl in wl_list {
        for &sl in sl_list {
            if sl > wl {
                continue;
            }
            let aligner = Aligner::new(AlignmentParams { wl, sl, ..*base })?;
            let mut times = Vec::with_capacity(repeats);
            for _ in 0..repeats.max(1) {
                let start = Instant::now();
                let hyps = aligner.align_maps(map_i, map_j, workers)?;
                times.push(start.elapsed().as_secs_f64());
                std::hint::black_box(hyps);
            }
            let (mean_s, std_s) = mean_std(&times);
            rows.push(BenchRow { wl, sl, workers: workers.max(1), mean_s, std_s, samples: times.len() });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reconstruction::MapObject;
    use nalgebra::{Matrix3, Vector3};

    fn hyp(s: usize, t: usize, score: usize, gate: bool) -> ScoredPair {
        ScoredPair { offset_i: s, offset_j: t, score, gate_passed: gate }
    }

    fn label(s: usize, t: usize, label: Label) -> PairLabel {
        PairLabel { offset_i: s, offset_j: t, iou: 0.0, label }
    }

    #[test]
    fn label_thresholds() {
        let t = LabelThresholds::default();
        assert_eq!(Label::from_iou(0.334, &t), Label::Positive);
        assert_eq!(Label::from_iou(0.333, &t), Label::Ignore);
        assert_eq!(Label::from_iou(0.0101, &t), Label::Ignore);
        assert_eq!(Label::from_iou(0.01, &t), Label::Negative);
        assert_eq!(Label::parse("ignore"), Some(Label::Ignore));
    }

    /// Six pairs, two of them ignored; confusion counts worked by hand.
    #[test]
    fn six_pair_fixture() {
        let hyps = vec![
            hyp(0, 0, 12, true), // positive
            hyp(0, 1, 7, true),  // positive
            hyp(0, 2, 9, true),  // ignore
            hyp(1, 0, 6, true),  // negative
            hyp(1, 1, 20, false), // positive, gate failed
            hyp(1, 2, 4, true),  // ignore
        ];
        let labels = vec![
            label(0, 0, Label::Positive),
            label(0, 1, Label::Positive),
            label(0, 2, Label::Ignore),
            label(1, 0, Label::Negative),
            label(1, 1, Label::Positive),
            label(1, 2, Label::Ignore),
        ];
        let curve = precision_recall(&hyps, &labels, &[8, 3, 5, 6]).unwrap();
        let t: Vec<usize> = curve.points.iter().map(|p| p.threshold).collect();
        assert_eq!(t, vec![3, 5, 6, 8]);
        // s > 3: (0,0) tp, (0,1) tp, (1,0) fp.
        assert_eq!((curve.points[0].true_positives, curve.points[0].false_positives), (2, 1));
        assert!((curve.points[0].precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((curve.points[0].recall - 2.0 / 3.0).abs() < 1e-15);
        // s > 5: same set.
        assert_eq!((curve.points[1].true_positives, curve.points[1].false_positives), (2, 1));
        // s > 6: (0,0), (0,1).
        assert_eq!((curve.points[2].true_positives, curve.points[2].false_positives), (2, 0));
        assert_eq!(curve.points[2].precision, 1.0);
        // s > 8: (0,0) only.
        assert_eq!((curve.points[3].true_positives, curve.points[3].false_positives), (1, 0));
        assert!((curve.points[3].recall - 1.0 / 3.0).abs() < 1e-15);
        assert!((curve.recall_at_precision(0.95) - 2.0 / 3.0).abs() < 1e-15);
        // Precision 0.99 first at 6 (F1 0.8); recall never reaches 0.99, so the
        // lowest threshold is used (F1 2/3).
        assert!((curve.average_f1() - 0.5 * (0.8 + 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_curves() {
        let hyps = vec![hyp(0, 0, 3, true), hyp(0, 1, 4, true)];
        let labels = vec![label(0, 0, Label::Positive), label(0, 1, Label::Positive)];
        let curve = precision_recall(&hyps, &labels, &[0, 1, 2, 10]).unwrap();
        assert!(curve.points.iter().all(|p| p.precision == 1.0));
        assert_eq!(curve.points[3].recall, 0.0);
        assert!(precision_recall(&hyps, &labels[..1], &[1]).is_err());
        let recalls: Vec<f64> = curve.points.iter().map(|p| p.recall).collect();
        assert!(recalls.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn interval_sampling_caps_comparisons() {
        assert_eq!(sample_interval(3, 3), vec![3]);
        assert_eq!(sample_interval(0, 9).len(), 10);
        for (a, b) in [(0, 10), (5, 204), (0, 1000)] {
            let s = sample_interval(a, b);
            assert!(s.len() <= MAX_INTERVAL_SAMPLES && s[0] == a && *s.last().unwrap() <= b);
        }
    }

    fn nadir(y: f64) -> Pose {
        Pose::new(Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0)), Vector3::new(0.0, y, 100.0)).unwrap()
    }

    /// Four objects per window, each seen for 3 keyframes.
    fn strip_map(first_kf: u64, n: usize) -> VehicleMap {
        let objects = (0..n)
            .map(|k| {
                let kf = first_kf + 10 * k as u64;
                MapObject { position: Vector3::zeros(), size_m: 1.0, track_len: 5, source_keyframes: (kf, kf + 2) }
            })
            .collect();
        VehicleMap::new("m", objects)
    }

    #[test]
    fn labels_same_and_disjoint_regions() {
        let intr = CameraIntrinsics::new(400.0, 400.0, 320.0, 240.0, 640, 480).unwrap();
        // Keyframe k sits at y = 5k: one window of 4 objects spans 32 kf.
        let poses: Vec<Pose> = (0..400).map(|k| nadir(5.0 * k as f64)).collect();
        let map = strip_map(0, 40);
        let params = AlignmentParams { wl: 4, sl: 4, ..Default::default() };
        let labels = label_pairs(&poses, &poses, &map, &map, &intr, 0.0, &params, &LabelThresholds::default()).unwrap();
        assert_eq!(labels.len(), 100);
        for l in &labels {
            if l.offset_i == l.offset_j {
                assert!((l.iou - 1.0).abs() < 1e-9);
                assert_eq!(l.label, Label::Positive);
            }
            if l.offset_i.abs_diff(l.offset_j) >= 3 {
                assert_eq!(l.iou, 0.0);
                assert_eq!(l.label, Label::Negative);
            }
        }
        let rev = label_pairs(&poses, &poses, &map, &map, &intr, 0.0, &params, &LabelThresholds::default()).unwrap();
        for l in &labels {
            let t = rev.iter().find(|r| r.offset_i == l.offset_j && r.offset_j == l.offset_i).unwrap();
            assert!((t.iou - l.iou).abs() < 1e-12);
        }
        assert!(matches!(
            label_pairs(&poses[..10], &poses, &map, &map, &intr, 0.0, &params, &LabelThresholds::default()),
            Err(EvalError::MissingGroundTruth(_))
        ));
    }

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(m, 3.0);
        assert!((s - 2.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn bench_rows_have_samples() {
        let objects: Vec<MapObject> = (0..60)
            .map(|k| MapObject {
                position: Vector3::new(k as f64 * 3.0, (k * 7 % 11) as f64, 0.0),
                size_m: 1.0 + (k % 9) as f64,
                track_len: 5,
                source_keyframes: (k, k + 5),
            })
            .collect();
        let map = VehicleMap::new("m", objects);
        let rows = bench_search(&map, &map, &[10, 20], &[5, 30], 5, 1, &AlignmentParams::default()).unwrap();
        assert_eq!(rows.iter().map(|r| (r.wl, r.sl)).collect::<Vec<_>>(), vec![(10, 5), (20, 5)]);
        assert!(rows.iter().all(|r| r.samples == 5 && r.std_s >= 0.0 && r.mean_s > 0.0));
    }
}
