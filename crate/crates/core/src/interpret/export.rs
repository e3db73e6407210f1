use std::fs;
use std::path::{Path, PathBuf};

use volcore::Volume;

use crate::{Error, Result};

/// Global min-max scaling to `0..=255`; a constant volume maps to 128.
pub fn scale_to_u8(volume: &Volume) -> Vec<u8> {
    let (lo, hi) = volume
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return vec![128; volume.len()];
    }
    volume
        .data()
        .iter()
        .map(|&v| ((v - lo) / (hi - lo) * 255.0).round() as u8)
        .collect()
}

fn check_rank3(volume: &Volume, what: &str) -> Result<[usize; 3]> {
    match *volume.shape() {
        [d, h, w] => Ok([d, h, w]),
        ref s => Err(Error::Invalid(format!("{what} must be [D, H, W], got {s:?}"))),
    }
}

pub fn slice_count(volume: &Volume, axis: usize) -> Result<usize> {
    let dims = check_rank3(volume, "slice export volume")?;
    dims.get(axis)
        .copied()
        .ok_or_else(|| Error::Invalid(format!("axis {axis} is not 0, 1 or 2")))
}

/// Writes one image per slice along `axis`: `{prefix}_axis{axis}_{index:03}.pgm`
/// in grayscale, or `.ppm` with `overlay` voxels drawn in red.
///
/// For axis 0 an image has H rows and W columns; for axis 1, D by W; for axis 2, D by H.
pub fn export_slices(
    volume: &Volume,
    axis: usize,
    prefix: impl AsRef<Path>,
    overlay: Option<&Volume>,
) -> Result<Vec<PathBuf>> {
    let n = slice_count(volume, axis)?;
    let [d, h, w] = check_rank3(volume, "slice export volume")?;
    if let Some(m) = overlay {
        if !m.same_shape(volume) {
            return Err(Error::Invalid(format!(
                "overlay {:?} does not match volume {:?}",
                m.shape(),
                volume.shape()
            )));
        }
    }
    let gray = scale_to_u8(volume);
    let (rows, cols) = match axis {
        0 => (h, w),
        1 => (d, w),
        _ => (d, h),
    };
    let index = |s: usize, r: usize, c: usize| match axis {
        0 => (s * h + r) * w + c,
        1 => (r * h + s) * w + c,
        _ => (r * h + c) * w + s,
    };
    let prefix = prefix.as_ref();
    let stem = prefix.file_name().and_then(|s| s.to_str()).unwrap_or("slice");
    let ext = if overlay.is_some() { "ppm" } else { "pgm" };
    let mut paths = Vec::with_capacity(n);
    for s in 0..n {
        let path = prefix.with_file_name(format!("{stem}_axis{axis}_{s:03}.{ext}"));
        let mut buf = match overlay {
            None => format!("P5\n{cols} {rows}\n255\n").into_bytes(),
            Some(_) => format!("P6\n{cols} {rows}\n255\n").into_bytes(),
        };
        for r in 0..rows {
            for c in 0..cols {
                let i = index(s, r, c);
                match overlay {
                    None => buf.push(gray[i]),
                    Some(m) if m.data()[i] != 0.0 => buf.extend([255, 0, 0]),
                    Some(_) => buf.extend([gray[i]; 3]),
                }
            }
        }
        fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Reads a binary PGM (P5) or PPM (P6) written by [`export_slices`]:
/// `(channels, width, height, pixels)`.
pub fn read_pnm(path: impl AsRef<Path>) -> Result<(usize, usize, usize, Vec<u8>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |why: &str| Error::Invalid(format!("{}: {why}", path.display()));
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
            pos += 1;
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let channels = match fields[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        _ => return Err(bad("not a binary PGM/PPM")),
    };
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, max) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if max != 255 {
        return Err(bad("only 8-bit images are supported"));
    }
    let pixels = bytes.get(pos..).unwrap_or(&[]).to_vec();
    if pixels.len() != w * h * channels {
        return Err(bad("pixel count does not match header"));
    }
    Ok((channels, w, h, pixels))
}
