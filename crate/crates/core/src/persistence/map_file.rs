//! Fixed-width little-endian map file.
//!
//! ```text
//! "SOSM" | version u16 | count u32 | frame_id len u16 | frame_id bytes
//! count × { x f32 | y f32 | z f32 | size f32 | track_len u16 | first_kf u32 | last_kf u32 }
//! crc32 u32 over the object records
//! ```

use std::fs;
use std::io;
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

use crate::reconstruction::{MapObject, VehicleMap};

pub const MAP_MAGIC: &[u8; 4] = b"SOSM";
pub const MAP_VERSION: u16 = 1;
pub const RECORD_BYTES: usize = 26;
pub const FOOTER_BYTES: usize = 4;

#[derive(Debug, Error)]
pub enum MapFileError {
    #[error("not a map file (bad magic)")]
    BadMagic,
    #[error("unsupported map version {found}, expected {MAP_VERSION}")]
    VersionMismatch { found: u16 },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("file truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("{0} trailing bytes after the footer")]
    TrailingBytes(usize),
    #[error("invalid map content: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Bytes taken by the header for a frame id of `frame_id_len` bytes.
pub fn header_len(frame_id_len: usize) -> usize {
    4 + 2 + 4 + 2 + frame_id_len
}

/// Exact serialized size of a map.
pub fn encoded_len(map: &VehicleMap) -> usize {
    header_len(map.frame_id.len()) + RECORD_BYTES * map.len() + FOOTER_BYTES
}

fn invalid(msg: impl Into<String>) -> MapFileError {
    MapFileError::Invalid(msg.into())
}

pub fn encode_map(map: &VehicleMap) -> Result<Vec<u8>, MapFileError> {
    let id = map.frame_id.as_bytes();
    let id_len = u16::try_from(id.len()).map_err(|_| invalid("frame id longer than 65535 bytes"))?;
    let count = u32::try_from(map.len()).map_err(|_| invalid("too many objects"))?;
    let mut out = Vec::with_capacity(encoded_len(map));
    out.extend_from_slice(MAP_MAGIC);
    out.extend_from_slice(&MAP_VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&id_len.to_le_bytes());
    out.extend_from_slice(id);
    let payload_start = out.len();
    for (k, o) in map.objects.iter().enumerate() {
        let track_len = u16::try_from(o.track_len).map_err(|_| invalid(format!("object {k}: track length exceeds u16")))?;
        let first = u32::try_from(o.source_keyframes.0).map_err(|_| invalid(format!("object {k}: keyframe id exceeds u32")))?;
        let last = u32::try_from(o.source_keyframes.1).map_err(|_| invalid(format!("object {k}: keyframe id exceeds u32")))?;
        for v in [o.position.x, o.position.y, o.position.z, o.size_m] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.extend_from_slice(&track_len.to_le_bytes());
        out.extend_from_slice(&first.to_le_bytes());
        out.extend_from_slice(&last.to_le_bytes());
    }
    let crc = crc32fast::hash(&out[payload_start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], MapFileError> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(MapFileError::Truncated { needed: end, have: self.bytes.len() });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, MapFileError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, MapFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32, MapFileError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_map(bytes: &[u8]) -> Result<VehicleMap, MapFileError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4).map_err(|_| MapFileError::BadMagic)? != MAP_MAGIC {
        return Err(MapFileError::BadMagic);
    }
    let version = c.u16()?;
    if version != MAP_VERSION {
        return Err(MapFileError::VersionMismatch { found: version });
    }
    let count = c.u32()? as usize;
    let id_len = c.u16()? as usize;
    let frame_id = String::from_utf8(c.take(id_len)?.to_vec()).map_err(|_| invalid("frame id is not UTF-8"))?;
    let needed = header_len(id_len) + RECORD_BYTES * count + FOOTER_BYTES;
    if bytes.len() < needed {
        return Err(MapFileError::Truncated { needed, have: bytes.len() });
    }
    if bytes.len() > needed {
        return Err(MapFileError::TrailingBytes(bytes.len() - needed));
    }
    let payload = &bytes[c.pos..c.pos + RECORD_BYTES * count];
    let computed = crc32fast::hash(payload);
    let stored = u32::from_le_bytes(bytes[needed - FOOTER_BYTES..].try_into().expect("4 bytes"));
    if stored != computed {
        return Err(MapFileError::CrcMismatch { stored, computed });
    }
    let mut objects = Vec::with_capacity(count);
    let mut prev_first = 0u64;
    for k in 0..count {
        let (x, y, z, size) = (c.f32()?, c.f32()?, c.f32()?, c.f32()?);
        let track_len = c.u16()?;
        let first = c.u32()? as u64;
        let last = c.u32()? as u64;
        if ![x, y, z].iter().all(|v| v.is_finite()) {
            return Err(invalid(format!("object {k}: non-finite position")));
        }
        if !(size > 0.0 && size.is_finite()) {
            return Err(invalid(format!("object {k}: size must be positive")));
        }
        if track_len == 0 || last < first {
            return Err(invalid(format!("object {k}: inconsistent track span")));
        }
        if first < prev_first {
            return Err(invalid(format!("object {k}: first keyframes out of order")));
        }
        prev_first = first;
        objects.push(MapObject {
            position: Vector3::new(x as f64, y as f64, z as f64),
            size_m: size as f64,
            track_len: track_len as u32,
            source_keyframes: (first, last),
        });
    }
    Ok(VehicleMap::new(frame_id, objects))
}

pub fn save_map(map: &VehicleMap, path: impl AsRef<Path>) -> Result<(), MapFileError> {
    fs::write(path, encode_map(map)?)?;
    Ok(())
}

pub fn load_map(path: impl AsRef<Path>) -> Result<VehicleMap, MapFileError> {
    decode_map(&fs::read(path)?)
}
