use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use super::write_atomic;
use crate::error::{Error, Result};

pub const TOOL_NAME: &str = "softsplat";

/// Where a report came from: tool version, seeds and the effective config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub tool_version: String,
    pub seeds: BTreeMap<String, u64>,
    pub config: serde_json::Value,
}

impl Default for Provenance {
    fn default() -> Self {
        Self {
            tool: TOOL_NAME.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: BTreeMap::new(),
            config: serde_json::Value::Null,
        }
    }
}

impl Provenance {
    pub fn with_seed(mut self, name: &str, seed: u64) -> Self {
        self.seeds.insert(name.to_string(), seed);
        self
    }

    pub fn with_config<T: Serialize>(mut self, config: &T) -> Result<Self> {
        self.config = serde_json::to_value(config).map_err(|e| Error::Serialization(e.to_string()))?;
        Ok(self)
    }
}

/// Pretty JSON with every float written at 17 significant digits.
struct ReportFormatter {
    inner: PrettyFormatter<'static>,
}

impl Formatter for ReportFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Serializes a report deterministically: struct fields in declaration
/// order, maps sorted, floats at 17 significant digits.
pub fn to_report_string<T: Serialize>(report: &T) -> Result<String> {
    let mut buf = Vec::new();
    let fmt = ReportFormatter {
        inner: PrettyFormatter::new(),
    };
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    report
        .serialize(&mut ser)
        .map_err(|e| Error::Serialization(e.to_string()))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Serialization(e.to_string()))
}

pub fn from_report_str<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))
}

pub fn save_report<T: Serialize>(report: &T, path: &Path) -> Result<()> {
    write_atomic(path, to_report_string(report)?.as_bytes())
}

pub fn load_report<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_report_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Sample {
        name: String,
        values: Vec<f64>,
        nested: BTreeMap<String, f64>,
        count: usize,
    }

    fn sample() -> Sample {
        let mut nested = BTreeMap::new();
        nested.insert("zeta".to_string(), 1.0 / 3.0);
        nested.insert("alpha".to_string(), -0.0);
        Sample {
            name: "x".into(),
            values: vec![0.1, 1e-300, 123_456_789.123_456_78, f64::MIN_POSITIVE, 2.0],
            nested,
            count: 7,
        }
    }

    #[test]
    fn seventeen_significant_digits() {
        let s = to_report_string(&sample()).unwrap();
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        assert!(s.contains("2.0000000000000000e0"));
        assert!(s.find("alpha").unwrap() < s.find("zeta").unwrap());
    }

    #[test]
    fn round_trip_is_exact() {
        let s = to_report_string(&sample()).unwrap();
        let back: Sample = from_report_str(&s).unwrap();
        assert_eq!(back, sample());
        assert_eq!(to_report_string(&back).unwrap(), s);
    }

    #[test]
    fn provenance_records_config() {
        let p = Provenance::default()
            .with_seed("data", 4)
            .with_config(&sample())
            .unwrap();
        assert_eq!(p.seeds["data"], 4);
        assert_eq!(p.config["count"], 7);
        assert_eq!(p.tool, TOOL_NAME);
    }
}
