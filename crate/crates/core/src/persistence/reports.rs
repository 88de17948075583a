//! CSV reports: hypotheses, precision/recall curves, timing and labels.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::AlignmentHypothesis;
use crate::evaluation::{BenchRow, Label, PRCurve, PairLabel, ScoredPair};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    Field { row: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRow {
    pub offset_i: usize,
    pub offset_j: usize,
    pub n_assoc: usize,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub accepted: bool,
}

impl From<&AlignmentHypothesis> for HypothesisRow {
    fn from(h: &AlignmentHypothesis) -> Self {
        let t = h.transform.translation();
        Self {
            offset_i: h.offset_i,
            offset_j: h.offset_j,
            n_assoc: h.score(),
            roll: h.roll,
            pitch: h.pitch,
            yaw: h.yaw,
            tx: t.x,
            ty: t.y,
            tz: t.z,
            accepted: h.accepted,
        }
    }
}

impl HypothesisRow {
    /// Rebuilds the angular gate from the stored angles; unregistered rows
    /// carry NaN angles and never pass.
    pub fn scored(&self, alpha_lim: f64) -> ScoredPair {
        let gate_passed = self.roll.abs().max(self.pitch.abs()) <= alpha_lim;
        ScoredPair { offset_i: self.offset_i, offset_j: self.offset_j, score: self.n_assoc, gate_passed }
    }
}

pub fn write_hypotheses(hyps: &[AlignmentHypothesis], out: impl Write) -> Result<(), ReportError> {
    let mut w = headerless(out);
    w.write_record(["offset_i", "offset_j", "n_assoc", "roll", "pitch", "yaw", "tx", "ty", "tz", "accepted"])?;
    for h in hyps {
        w.serialize(HypothesisRow::from(h))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_hypotheses(input: impl Read) -> Result<Vec<HypothesisRow>, ReportError> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<Vec<HypothesisRow>, _>>()?)
}

#[derive(Serialize)]
struct PrRow {
    threshold: usize,
    precision: f64,
    recall: f64,
    f1: f64,
}

pub fn write_pr_curve(curve: &PRCurve, out: impl Write) -> Result<(), ReportError> {
    let mut w = headerless(out);
    w.write_record(["threshold", "precision", "recall", "f1"])?;
    for p in &curve.points {
        w.serialize(PrRow { threshold: p.threshold, precision: p.precision, recall: p.recall, f1: p.f1 })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct BenchCsvRow {
    wl: usize,
    sl: usize,
    workers: usize,
    mean_s: f64,
    std_s: f64,
}

pub fn write_bench(rows: &[BenchRow], out: impl Write) -> Result<(), ReportError> {
    let mut w = headerless(out);
    w.write_record(["WL", "SL", "workers", "mean_s", "std_s"])?;
    for r in rows {
        w.serialize(BenchCsvRow { wl: r.wl, sl: r.sl, workers: r.workers, mean_s: r.mean_s, std_s: r.std_s })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct LabelRow {
    pair: String,
    iou: f64,
    label: String,
}

fn headerless<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(out)
}

pub fn pair_key(offset_i: usize, offset_j: usize) -> String {
    format!("{offset_i}:{offset_j}")
}

fn parse_pair_key(s: &str) -> Option<(usize, usize)> {
    let (a, b) = s.split_once(':')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

pub fn write_labels(labels: &[PairLabel], out: impl Write) -> Result<(), ReportError> {
    let mut w = headerless(out);
    w.write_record(["pair", "iou", "label"])?;
    for l in labels {
        w.serialize(LabelRow { pair: pair_key(l.offset_i, l.offset_j), iou: l.iou, label: l.label.to_string() })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels(input: impl Read) -> Result<Vec<PairLabel>, ReportError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (k, row) in r.deserialize::<LabelRow>().enumerate() {
        let row = row?;
        let bad = |message: &str| ReportError::Field { row: k + 1, message: message.into() };
        let (offset_i, offset_j) = parse_pair_key(&row.pair).ok_or_else(|| bad("pair must look like `i:j`"))?;
        let label = Label::parse(&row.label).ok_or_else(|| bad("unknown label"))?;
        out.push(PairLabel { offset_i, offset_j, iou: row.iou, label });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::PRPoint;
    use crate::geometry::RigidTransform;
    use nalgebra::Vector3;

    #[test]
    fn hypothesis_round_trip() {
        let h = AlignmentHypothesis {
            offset_i: 2,
            offset_j: 7,
            selected: vec![],
            transform: RigidTransform::from_euler_deg(0.0, 0.0, 10.0, Vector3::new(1.5, -2.0, 0.25)),
            roll: 0.1,
            pitch: -0.2,
            yaw: 10.0,
            registered: true,
            gate_passed: true,
            accepted: false,
        };
        let unregistered = AlignmentHypothesis { roll: f64::NAN, pitch: f64::NAN, yaw: f64::NAN, offset_j: 8, ..h.clone() };
        let mut buf = Vec::new();
        write_hypotheses(&[h.clone(), unregistered], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("offset_i,offset_j,n_assoc,roll,pitch,yaw,tx,ty,tz,accepted\n"));
        let rows = read_hypotheses(&buf[..]).unwrap();
        assert_eq!(rows[0], HypothesisRow::from(&h));
        assert!(rows[1].roll.is_nan());
        assert!(rows[0].scored(22.5).gate_passed);
        assert!(!rows[1].scored(22.5).gate_passed);

        let mut empty = Vec::new();
        write_hypotheses(&[], &mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap(), "offset_i,offset_j,n_assoc,roll,pitch,yaw,tx,ty,tz,accepted\n");
    }

    #[test]
    fn headers_are_exact() {
        let curve = PRCurve {
            points: vec![PRPoint {
                threshold: 3,
                precision: 1.0,
                recall: 0.5,
                f1: 2.0 / 3.0,
                true_positives: 1,
                false_positives: 0,
                positives: 2,
            }],
        };
        let mut buf = Vec::new();
        write_pr_curve(&curve, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "threshold,precision,recall,f1");
        assert_eq!(text.lines().count(), 2);

        let mut buf = Vec::new();
        write_bench(&[BenchRow { wl: 50, sl: 10, workers: 1, mean_s: 0.5, std_s: 0.01, samples: 5 }], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "WL,SL,workers,mean_s,std_s\n50,10,1,0.5,0.01\n");

        let labels = vec![PairLabel { offset_i: 1, offset_j: 4, iou: 0.25, label: Label::Ignore }];
        let mut buf = Vec::new();
        write_labels(&labels, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "pair,iou,label\n1:4,0.25,ignore\n");
        assert_eq!(read_labels(&buf[..]).unwrap(), labels);
    }
}
