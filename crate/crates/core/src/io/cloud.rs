use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, PointFeatures, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudFormat {
    Xyz,
    Ply,
}

impl CloudFormat {
    /// Guesses the format from the file extension (`.ply`, otherwise xyz).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("ply") => CloudFormat::Ply,
            _ => CloudFormat::Xyz,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCloud {
    pub cloud: PointCloud,
    /// Malformed lines skipped in lenient mode.
    pub skipped: usize,
}

pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    load_cloud_with(path, format, false).map(|l| l.cloud)
}

/// Reads a cloud. Strict mode rejects the first malformed line; lenient mode
/// skips it and counts it.
pub fn load_cloud_with(path: &Path, format: CloudFormat, lenient: bool) -> Result<LoadedCloud> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        CloudFormat::Xyz => parse_xyz(&text, lenient),
        CloudFormat::Ply => parse_ply(&text, lenient),
    }
}

fn parse_numbers(line: &str) -> std::result::Result<Vec<f64>, String> {
    line.split_whitespace()
        .map(|t| match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(_) => Err(format!("non-finite value {t:?}")),
            Err(_) => Err(format!("cannot parse {t:?} as a number")),
        })
        .collect()
}

fn assemble(points: Vec<Vec3>, feats: Vec<f64>, dim: usize) -> Result<PointCloud> {
    if points.is_empty() {
        return Err(Error::invalid("file contains no points"));
    }
    let cloud = PointCloud::new(points)?;
    if dim == 0 {
        Ok(cloud)
    } else {
        cloud.with_features(PointFeatures::new(dim, feats)?)
    }
}

/// Whitespace-separated `x y z [f1 ... fk]` lines; `#` starts a comment.
/// Every data line must carry the same number of columns.
pub(crate) fn parse_xyz(text: &str, lenient: bool) -> Result<LoadedCloud> {
    let mut points = Vec::new();
    let mut feats = Vec::new();
    let mut columns: Option<usize> = None;
    let mut skipped = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parsed = parse_numbers(line).and_then(|v| {
            if v.len() < 3 {
                Err(format!("expected at least 3 columns, got {}", v.len()))
            } else if columns.is_some_and(|c| c != v.len()) {
                Err(format!("expected {} columns, got {}", columns.unwrap_or(0), v.len()))
            } else {
                Ok(v)
            }
        });
        match parsed {
            Ok(v) => {
                columns = Some(v.len());
                points.push(Vec3::new(v[0], v[1], v[2]));
                feats.extend_from_slice(&v[3..]);
            }
            Err(_) if lenient => skipped += 1,
            Err(message) => return Err(Error::Parse { line: i + 1, message }),
        }
    }
    let cloud = assemble(points, feats, columns.map_or(0, |c| c - 3))?;
    Ok(LoadedCloud { cloud, skipped })
}

struct PlyElement {
    name: String,
    count: usize,
    /// `(name, type)`; list properties are recorded with type "list".
    props: Vec<(String, String)>,
}

/// ASCII PLY: reads `x`, `y`, `z` of the `vertex` element plus optional
/// `red`/`green`/`blue` (integer types scaled by 1/255). Other elements are
/// skipped.
pub(crate) fn parse_ply(text: &str, lenient: bool) -> Result<LoadedCloud> {
    let mut lines = text.lines().enumerate();
    let perr = |line: usize, message: &str| Error::Parse {
        line,
        message: message.to_string(),
    };
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(perr(1, "missing 'ply' magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut saw_format = false;
    loop {
        let Some((i, raw)) = lines.next() else {
            return Err(perr(text.lines().count(), "unterminated header"));
        };
        let toks: Vec<&str> = raw.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => saw_format = true,
            ["format", other, _] => return Err(perr(i + 1, &format!("unsupported format {other:?}; only ascii"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count.parse().map_err(|_| perr(i + 1, "bad element count"))?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            ["property", "list", _, _, name] => match elements.last_mut() {
                Some(e) => e.props.push((name.to_string(), "list".into())),
                None => return Err(perr(i + 1, "property before element")),
            },
            ["property", ty, name] => match elements.last_mut() {
                Some(e) => e.props.push((name.to_string(), ty.to_string())),
                None => return Err(perr(i + 1, "property before element")),
            },
            ["end_header"] => break,
            _ => return Err(perr(i + 1, &format!("unrecognized header line {raw:?}"))),
        }
    }
    if !saw_format {
        return Err(perr(2, "missing format line"));
    }
    let vi = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::invalid("ply has no vertex element"))?;
    let vertex = &elements[vi];
    let find = |n: &str| vertex.props.iter().position(|p| p.0 == n);
    let (Some(ix), Some(iy), Some(iz)) = (find("x"), find("y"), find("z")) else {
        return Err(Error::invalid("vertex element lacks x/y/z"));
    };
    let color = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };
    if vertex.props.iter().any(|p| p.1 == "list") {
        return Err(Error::invalid("list properties on vertices are not supported"));
    }
    let color_scale = |idx: usize| match vertex.props[idx].1.as_str() {
        "uchar" | "uint8" | "char" | "int8" => 1.0 / 255.0,
        _ => 1.0,
    };

    // skip data lines of elements declared before the vertex element
    let before: usize = elements[..vi].iter().map(|e| e.count).sum();
    for _ in 0..before {
        if lines.next().is_none() {
            return Err(Error::invalid("ply body ends early"));
        }
    }
    let mut points = Vec::with_capacity(vertex.count);
    let mut feats = Vec::new();
    let mut skipped = 0;
    for _ in 0..vertex.count {
        let Some((i, raw)) = lines.next() else {
            return Err(Error::invalid(format!(
                "ply declares {} vertices but the body ends after {}",
                vertex.count,
                points.len() + skipped
            )));
        };
        let row = parse_numbers(raw).and_then(|v| {
            if v.len() == vertex.props.len() {
                Ok(v)
            } else {
                Err(format!("expected {} values, got {}", vertex.props.len(), v.len()))
            }
        });
        match row {
            Ok(v) => {
                points.push(Vec3::new(v[ix], v[iy], v[iz]));
                if let Some(c) = color {
                    feats.extend(c.iter().map(|&k| v[k] * color_scale(k)));
                }
            }
            Err(_) if lenient => skipped += 1,
            Err(message) => return Err(Error::Parse { line: i + 1, message }),
        }
    }
    let cloud = assemble(points, feats, if color.is_some() { 3 } else { 0 })?;
    Ok(LoadedCloud { cloud, skipped })
}

/// Writes xyz (features appended as extra columns) or ASCII PLY with double
/// x/y/z and, for 3-channel features, double red/green/blue.
pub fn save_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    let mut out = String::new();
    let feats = cloud.features();
    if format == CloudFormat::Ply {
        out.push_str("ply\nformat ascii 1.0\n");
        let _ = writeln!(out, "element vertex {}", cloud.len());
        out.push_str("property double x\nproperty double y\nproperty double z\n");
        if feats.is_some_and(|f| f.dim() == 3) {
            out.push_str("property double red\nproperty double green\nproperty double blue\n");
        }
        out.push_str("end_header\n");
    }
    for (i, p) in cloud.points().iter().enumerate() {
        let _ = write!(out, "{} {} {}", p.x, p.y, p.z);
        if let Some(f) = feats {
            if format == CloudFormat::Xyz || f.dim() == 3 {
                for v in f.row(i) {
                    let _ = write!(out, " {v}");
                }
            }
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}
