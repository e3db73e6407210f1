//! The VOL4 series container.
//!
//! Layout (little-endian): magic `VOL4`, version `u16`, `u32` T, D, H, W,
//! `u8` label, `u16` subject-id length and UTF-8 id, then `T*D*H*W` `f32`
//! voxels, row-major and frame-major. Voxels are `f64` in memory; values are
//! stored as `f32`, so a series round-trips bit-exactly when its values are
//! representable in `f32` (the phantom generator guarantees this).

use std::fs;
use std::path::Path;

use volcore::Volume;

use super::{Group, Series4D};
use crate::binio::{Reader, Writer};
use crate::error::FormatError;
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"VOL4";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vol4Header {
    pub frames: u32,
    pub dims: [u32; 3],
    pub label: u8,
    pub subject_id: String,
}

impl Vol4Header {
    pub fn voxels_per_frame(&self) -> Result<u64, FormatError> {
        self.dims
            .iter()
            .try_fold(1u64, |a, &d| a.checked_mul(d as u64))
            .ok_or_else(|| FormatError::DimensionOverflow(format!("{:?}", self.dims)))
    }

    /// Expected payload size in bytes: `T * D * H * W * 4`.
    pub fn payload_len(&self) -> Result<u64, FormatError> {
        self.voxels_per_frame()?
            .checked_mul(self.frames as u64)
            .and_then(|n| n.checked_mul(4))
            .filter(|&n| usize::try_from(n).is_ok())
            .ok_or_else(|| {
                FormatError::DimensionOverflow(format!(
                    "{} frames of {:?} overflows the payload size",
                    self.frames, self.dims
                ))
            })
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, FormatError> {
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let frames = r.u32()?;
        let dims = [r.u32()?, r.u32()?, r.u32()?];
        if frames == 0 || dims.contains(&0) {
            return Err(FormatError::Corrupt(format!(
                "empty series: {frames} frames of {dims:?}"
            )));
        }
        let label = r.u8()?;
        if label > 1 {
            return Err(FormatError::Corrupt(format!("label byte {label}")));
        }
        let n = r.u16()? as usize;
        let subject_id = String::from_utf8(r.take(n)?.to_vec())
            .map_err(|e| FormatError::Corrupt(format!("subject id: {e}")))?;
        Ok(Vol4Header {
            frames,
            dims,
            label,
            subject_id,
        })
    }
}

/// Parses only the header of an encoded series.
pub fn read_header(bytes: &[u8]) -> Result<Vol4Header, FormatError> {
    Vol4Header::read(&mut Reader::new(bytes))
}

pub fn encode_series(series: &Series4D) -> Result<Vec<u8>> {
    series.validate()?;
    let [d, h, w] = series.frame_shape();
    let dim = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Invalid(format!("{what} {v} exceeds u32")))
    };
    if series.subject_id.len() > u16::MAX as usize {
        return Err(Error::Invalid("subject id longer than 65535 bytes".into()));
    }
    let mut wr = Writer::default();
    wr.bytes(&MAGIC);
    wr.u16(VERSION);
    wr.u32(dim(series.len(), "frame count")?);
    for v in [d, h, w] {
        wr.u32(dim(v, "dimension")?);
    }
    wr.u8(series.label.as_u8());
    wr.u16(series.subject_id.len() as u16);
    wr.bytes(series.subject_id.as_bytes());
    wr.buf.reserve(series.len() * d * h * w * 4);
    for (t, f) in series.frames.iter().enumerate() {
        for &v in f.data() {
            if !v.is_finite() {
                return Err(Error::Invalid(format!(
                    "{}: non-finite voxel in frame {t}",
                    series.subject_id
                )));
            }
            wr.bytes(&(v as f32).to_le_bytes());
        }
    }
    Ok(wr.buf)
}

pub fn decode_series(bytes: &[u8]) -> Result<Series4D, FormatError> {
    let mut r = Reader::new(bytes);
    let header = Vol4Header::read(&mut r)?;
    let expected = header.payload_len()?;
    if (r.remaining() as u64) < expected {
        return Err(FormatError::Truncated {
            expected,
            found: r.remaining() as u64,
        });
    }
    let per_frame = header.voxels_per_frame()? as usize;
    let shape = header.dims.map(|d| d as usize);
    let mut frames = Vec::with_capacity(header.frames as usize);
    for t in 0..header.frames as usize {
        let raw = r.take(per_frame * 4)?;
        let mut data = Vec::with_capacity(per_frame);
        for (i, c) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(c.try_into().unwrap());
            if !v.is_finite() {
                return Err(FormatError::NonFinite(t * per_frame + i));
            }
            data.push(v as f64);
        }
        frames.push(Volume::from_vec(&shape, data).map_err(|e| FormatError::Corrupt(e.to_string()))?);
    }
    r.finish()?;
    Ok(Series4D {
        subject_id: header.subject_id,
        label: if header.label == 1 {
            Group::Older
        } else {
            Group::Younger
        },
        frames,
    })
}

pub fn save_series(series: &Series4D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_series(series)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_series(path: impl AsRef<Path>) -> Result<Series4D> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_series(&bytes).map_err(|e| Error::format(path, e))
}

/// Writes a single `[D, H, W]` volume (masks, parcellations, group maps) as a one-frame series.
pub fn save_volume(volume: &Volume, name: &str, path: impl AsRef<Path>) -> Result<()> {
    let series = Series4D::new(name, Group::Younger, vec![volume.clone()])?;
    save_series(&series, path)
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let mut s = load_series(path)?;
    if s.len() != 1 {
        return Err(Error::Invalid(format!(
            "{}: expected a single-frame volume, found {} frames",
            path.display(),
            s.len()
        )));
    }
    Ok(s.frames.pop().unwrap())
}
