use std::path::{Path, PathBuf};

use super::write_atomic;
use crate::error::{Error, Result};
use crate::projection::{FeatureGrid, GridSemantics};

pub const RAW_MAGIC: &[u8; 4] = b"FGRD";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridFormat {
    /// 16-byte header (`FGRD`, then H, W, C as LE u32) and LE f64 samples,
    /// row-major H, W, C.
    Raw,
    /// Binary 16-bit PGM, one file per channel; values in `range` map
    /// linearly onto 0..=65535 and clamp outside it.
    Pgm { range: [f64; 2] },
}

/// Writes the grid and returns the written paths. Multi-channel PGM output
/// goes to `<stem>_c<k>.<ext>` per channel.
pub fn save_grid(grid: &FeatureGrid, path: &Path, format: GridFormat) -> Result<Vec<PathBuf>> {
    match format {
        GridFormat::Raw => {
            write_atomic(path, &encode_raw(grid)?)?;
            Ok(vec![path.to_path_buf()])
        }
        GridFormat::Pgm { range } => {
            if !(range[0] < range[1]) {
                return Err(Error::invalid(format!("invalid pgm range {range:?}")));
            }
            if grid.channels() == 1 {
                write_atomic(path, &encode_pgm(grid, 0, range))?;
                return Ok(vec![path.to_path_buf()]);
            }
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("grid");
            let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("pgm");
            (0..grid.channels())
                .map(|c| {
                    let p = path.with_file_name(format!("{stem}_c{c}.{ext}"));
                    write_atomic(&p, &encode_pgm(grid, c, range))?;
                    Ok(p)
                })
                .collect()
        }
    }
}

fn encode_raw(grid: &FeatureGrid) -> Result<Vec<u8>> {
    let dim = |v: usize| u32::try_from(v).map_err(|_| Error::invalid("grid dimension exceeds u32"));
    let mut out = Vec::with_capacity(16 + 8 * grid.as_slice().len());
    out.extend_from_slice(RAW_MAGIC);
    for v in [grid.height(), grid.width(), grid.channels()] {
        out.extend_from_slice(&dim(v)?.to_le_bytes());
    }
    for v in grid.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn encode_pgm(grid: &FeatureGrid, channel: usize, range: [f64; 2]) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", grid.width(), grid.height()).into_bytes();
    let span = range[1] - range[0];
    for pix in 0..grid.pixel_count() {
        let v = grid.pixel(pix)[channel];
        let s = ((v - range[0]) / span * 65535.0).round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

pub fn load_grid_raw(path: &Path, semantics: GridSemantics) -> Result<FeatureGrid> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..4] != RAW_MAGIC {
        return Err(Error::invalid(format!("{} is not a raw grid file", path.display())));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (h, w, c) = (word(4), word(8), word(12));
    let body = &bytes[16..];
    if body.len() != h * w * c * 8 {
        return Err(Error::invalid(format!(
            "raw grid {h}x{w}x{c} needs {} data bytes, found {}",
            h * w * c * 8,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    FeatureGrid::from_data(h, w, c, data, semantics)
}

/// Reads a binary 16-bit PGM as written by [`save_grid`]: `(width, height, samples)`.
pub fn read_pgm16(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    // header is three whitespace-terminated tokens after the magic
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::invalid("truncated pgm header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::invalid("bad pgm header"));
    if fields[0] != "P5" || num(&fields[3])? != 65535 {
        return Err(Error::invalid("expected a 16-bit P5 pgm"));
    }
    let (w, h) = (num(&fields[1])?, num(&fields[2])?);
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() != w * h * 2 {
        return Err(Error::invalid("pgm body size mismatch"));
    }
    let samples = body.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect();
    Ok((w, h, samples))
}
