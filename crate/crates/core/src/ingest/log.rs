//! Line-delimited JSON observation log.
//!
//! ```text
//! {"kind":"header","version":1,"intrinsics":{..},"descriptor_dim":0,"frame_id":"odom","meta":{}}
//! {"kind":"keyframe","id":0,"timestamp":0.0,"q":[w,x,y,z],"t":[x,y,z],"mu_p":8.1,"sigma_p":4.2}
//! {"kind":"obs","kf":0,"c":[u,v],"cov":[xx,xy,yy],"n":120,"desc":[[..],..]}
//! {"kind":"mask","kf":0,"rle":[zeros,ones,zeros,..]}
//! ```
//!
//! `obs` and `mask` records attach to an already declared keyframe and are
//! numbered in file order within it.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{mask, invalid, FlightLog, Keyframe, SegmentObservation};
use crate::error::LogError;
use crate::geometry::{CameraIntrinsics, Pose};

pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct IntrinsicsRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl From<&CameraIntrinsics> for IntrinsicsRecord {
    fn from(i: &CameraIntrinsics) -> Self {
        Self { fx: i.fx, fy: i.fy, cx: i.cx, cy: i.cy, width: i.width, height: i.height }
    }
}

impl From<&IntrinsicsRecord> for CameraIntrinsics {
    fn from(r: &IntrinsicsRecord) -> Self {
        CameraIntrinsics { fx: r.fx, fy: r.fy, cx: r.cx, cy: r.cy, width: r.width, height: r.height }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum Record {
    Header {
        version: u32,
        intrinsics: IntrinsicsRecord,
        descriptor_dim: usize,
        frame_id: String,
        #[serde(default)]
        meta: BTreeMap<String, String>,
    },
    Keyframe {
        id: u64,
        timestamp: f64,
        q: [f64; 4],
        t: [f64; 3],
        mu_p: f64,
        sigma_p: f64,
    },
    Obs {
        kf: u64,
        c: [f64; 2],
        cov: [f64; 3],
        n: u32,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        desc: Vec<Vec<f64>>,
    },
    Mask {
        kf: u64,
        rle: Vec<u64>,
    },
}

pub fn load_flight_log(path: impl AsRef<Path>) -> Result<FlightLog, LogError> {
    let file = fs::File::open(path.as_ref())?;
    parse_flight_log(BufReader::new(file))
}

pub fn parse_flight_log(reader: impl BufRead) -> Result<FlightLog, LogError> {
    let mut log: Option<FlightLog> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record =
            serde_json::from_str(&line).map_err(|e| LogError::Parse { line: line_no, message: e.to_string() })?;
        let at = |e: super::InvariantError| LogError::Invariant { line: line_no, source: e };
        match record {
            Record::Header { version, intrinsics, descriptor_dim, frame_id, meta } => {
                if log.is_some() {
                    return Err(LogError::Parse { line: line_no, message: "duplicate header".into() });
                }
                if version != LOG_VERSION {
                    return Err(LogError::Parse { line: line_no, message: format!("unsupported version {version}") });
                }
                let intr = CameraIntrinsics::from(&intrinsics);
                intr.validate().map_err(|e| at(invalid("intrinsics", e.to_string())))?;
                let mut fl = FlightLog::new(intr, descriptor_dim, frame_id);
                fl.meta = meta;
                log = Some(fl);
            }
            Record::Keyframe { id, timestamp, q, t, mu_p, sigma_p } => {
                let fl = log.as_mut().ok_or(LogError::MissingHeader)?;
                if fl.keyframes.last().is_some_and(|k| id <= k.id) {
                    return Err(at(invalid("id", format!("keyframe id {id} is not increasing"))));
                }
                let pose = Pose::from_quaternion(q, Vector3::from(t)).map_err(|e| at(invalid("q", e.to_string())))?;
                if !(sigma_p.is_finite() && mu_p.is_finite() && timestamp.is_finite()) || sigma_p < 0.0 {
                    return Err(at(invalid("sigma_p", "shift statistics must be finite, sigma_p >= 0")));
                }
                fl.keyframes.push(Keyframe::new(id, timestamp, pose, mu_p, sigma_p));
            }
            Record::Obs { kf, c, cov, n, desc } => {
                let fl = log.as_mut().ok_or(LogError::MissingHeader)?;
                if desc.iter().any(|d| d.len() != fl.descriptor_dim) {
                    return Err(at(invalid("desc", format!("expected dimension {}", fl.descriptor_dim))));
                }
                let obs = SegmentObservation::new(Vector2::from(c), cov, n, desc).map_err(at)?;
                keyframe_mut(fl, kf, line_no)?.observations.push(obs);
            }
            Record::Mask { kf, rle } => {
                let fl = log.as_mut().ok_or(LogError::MissingHeader)?;
                let (w, h) = (fl.intrinsics.width, fl.intrinsics.height);
                let m = mask::BinaryMask::from_rle(w, h, &rle).map_err(|e| at(invalid("rle", e.to_string())))?;
                if let Some(obs) = mask::summarize_mask(&m) {
                    keyframe_mut(fl, kf, line_no)?.observations.push(obs);
                }
            }
        }
    }
    log.ok_or(LogError::MissingHeader)
}

fn keyframe_mut(log: &mut FlightLog, id: u64, line: usize) -> Result<&mut Keyframe, LogError> {
    match log.keyframes.binary_search_by_key(&id, |k| k.id) {
        Ok(i) => Ok(&mut log.keyframes[i]),
        Err(_) => Err(LogError::Invariant { line, source: invalid("kf", format!("unknown keyframe {id}")) }),
    }
}

pub fn write_flight_log(log: &FlightLog, mut out: impl Write) -> Result<(), LogError> {
    log.validate().map_err(|e| LogError::Invariant { line: 0, source: e })?;
    let mut emit = |r: &Record| -> io::Result<()> {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")
    };
    emit(&Record::Header {
        version: LOG_VERSION,
        intrinsics: IntrinsicsRecord::from(&log.intrinsics),
        descriptor_dim: log.descriptor_dim,
        frame_id: log.frame_id.clone(),
        meta: log.meta.clone(),
    })?;
    for kf in &log.keyframes {
        let t = kf.pose.translation();
        emit(&Record::Keyframe {
            id: kf.id,
            timestamp: kf.timestamp,
            q: kf.pose.to_quaternion(),
            t: [t.x, t.y, t.z],
            mu_p: kf.mu_p,
            sigma_p: kf.sigma_p,
        })?;
        for obs in &kf.observations {
            emit(&Record::Obs {
                kf: kf.id,
                c: [obs.centroid.x, obs.centroid.y],
                cov: obs.cov_entries(),
                n: obs.pixel_count,
                desc: obs.descriptors.clone(),
            })?;
        }
    }
    Ok(())
}

pub fn save_flight_log(log: &FlightLog, path: impl AsRef<Path>) -> Result<(), LogError> {
    let mut w = BufWriter::new(fs::File::create(path.as_ref())?);
    write_flight_log(log, &mut w)?;
    w.flush()?;
    Ok(())
}
