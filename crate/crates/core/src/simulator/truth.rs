//! Ground-truth sidecar written next to a simulated observation log.
//!
//! ```text
//! {"kind":"truth","version":1,"world_seed":3,"region":[[x,y,z],[x,y,z]],"extent_range":[1.0,10.0]}
//! {"kind":"object","id":0,"p":[x,y,z],"extent":2.5}
//! {"kind":"pose","kf":0,"q":[w,x,y,z],"t":[x,y,z],"ids":[4,17,..]}
//! ```

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{GroundTruth, Region, SimWorld, WorldObject};
use crate::error::LogError;
use crate::geometry::Pose;

const TRUTH_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum Record {
    Truth { version: u32, world_seed: u64, region: [[f64; 3]; 2], extent_range: [f64; 2] },
    Object { id: u64, p: [f64; 3], extent: f64 },
    Pose { kf: u64, q: [f64; 4], t: [f64; 3], ids: Vec<u64> },
}

fn parse_error(line: usize, message: impl Into<String>) -> LogError {
    LogError::Parse { line, message: message.into() }
}

pub fn write_ground_truth(truth: &GroundTruth, out: impl Write) -> Result<(), LogError> {
    let mut out = BufWriter::new(out);
    let w = &truth.world;
    let mut emit = |r: &Record| -> Result<(), LogError> {
        serde_json::to_writer(&mut out, r).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
        Ok(())
    };
    emit(&Record::Truth {
        version: TRUTH_VERSION,
        world_seed: w.seed,
        region: [w.region.min.into(), w.region.max.into()],
        extent_range: [w.extent_range.0, w.extent_range.1],
    })?;
    for o in &w.objects {
        emit(&Record::Object { id: o.stable_id, p: o.position.into(), extent: o.extent })?;
    }
    for (k, (pose, ids)) in truth.true_poses.iter().zip(&truth.observation_ids).enumerate() {
        emit(&Record::Pose { kf: k as u64, q: pose.to_quaternion(), t: (*pose.translation()).into(), ids: ids.clone() })?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_ground_truth(truth: &GroundTruth, path: impl AsRef<Path>) -> Result<(), LogError> {
    write_ground_truth(truth, fs::File::create(path)?)
}

pub fn parse_ground_truth(reader: impl BufRead) -> Result<GroundTruth, LogError> {
    let mut world: Option<SimWorld> = None;
    let mut true_poses = Vec::new();
    let mut observation_ids = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let n = k + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| parse_error(n, e.to_string()))?;
        match (record, world.as_mut()) {
            (Record::Truth { version, world_seed, region, extent_range }, None) => {
                if version != TRUTH_VERSION {
                    return Err(parse_error(n, format!("unsupported version {version}")));
                }
                world = Some(SimWorld {
                    objects: Vec::new(),
                    region: Region::new(region[0].into(), region[1].into()),
                    extent_range: (extent_range[0], extent_range[1]),
                    seed: world_seed,
                });
            }
            (Record::Truth { .. }, Some(_)) => return Err(parse_error(n, "duplicate truth header")),
            (_, None) => return Err(LogError::MissingHeader),
            (Record::Object { id, p, extent }, Some(w)) => {
                w.objects.push(WorldObject { position: Vector3::from(p), extent, stable_id: id });
            }
            (Record::Pose { kf, q, t, ids }, Some(_)) => {
                if kf != true_poses.len() as u64 {
                    return Err(parse_error(n, format!("pose for keyframe {kf} out of sequence")));
                }
                let pose = Pose::from_quaternion(q, Vector3::from(t)).map_err(|e| parse_error(n, e.to_string()))?;
                true_poses.push(pose);
                observation_ids.push(ids);
            }
        }
    }
    let world = world.ok_or(LogError::MissingHeader)?;
    Ok(GroundTruth { true_poses, observation_ids, world })
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth, LogError> {
    parse_ground_truth(BufReader::new(fs::File::open(path)?))
}
