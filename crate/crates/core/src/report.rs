//! Machine-readable reports.
//!
//! Reports are serialized as pretty JSON with every float written at 17
//! significant digits, so identical runs produce byte-identical, diff-able
//! files that round-trip losslessly.

use std::io::Write;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};

use crate::error::Result;

/// One named check with its worst observed residual, the gate it was held
/// to, and how many evaluation points backed it.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub residual: f64,
    pub threshold: f64,
    pub samples: usize,
}

impl Check {
    pub fn from_residual(name: &str, residual: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            pass: residual.is_finite() && residual <= threshold,
            residual,
            threshold,
            samples: 1,
        }
    }

    /// A boolean expectation encoded as residual 0/1 against threshold 0.
    pub fn from_flag(name: &str, matches: bool) -> Self {
        Self {
            name: name.into(),
            pass: matches,
            residual: if matches { 0.0 } else { 1.0 },
            threshold: 0.0,
            samples: 1,
        }
    }
}

/// Pretty JSON formatter with fixed-precision floats.
struct SigDigitFormatter {
    inner: PrettyFormatter<'static>,
}

impl SigDigitFormatter {
    fn new() -> Self {
        Self {
            inner: PrettyFormatter::new(),
        }
    }
}

impl Formatter for SigDigitFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> std::io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> std::io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

/// Serialize any report to the fixed-precision JSON encoding.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = Serializer::with_formatter(&mut out, SigDigitFormatter::new());
    value
        .serialize(&mut ser)
        .map_err(|e| crate::error::Error::Config(format!("serialization failed: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, to_json_bytes(value)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_are_fixed_precision() {
        #[derive(Serialize)]
        struct S {
            v: f64,
        }
        let bytes = to_json_bytes(&S { v: 1.0 / 3.0 }).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.contains("3.3333333333333331e-1"), "{text}");
        // still valid JSON
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["v"].as_f64().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn serialization_is_deterministic() {
        let checks = vec![
            Check::from_residual("a", 1e-13, 1e-12),
            Check::from_flag("b", true),
        ];
        assert_eq!(
            to_json_bytes(&checks).unwrap(),
            to_json_bytes(&checks).unwrap()
        );
    }

    #[test]
    fn check_pass_logic() {
        assert!(Check::from_residual("x", 1e-13, 1e-12).pass);
        assert!(!Check::from_residual("x", 1e-11, 1e-12).pass);
        assert!(!Check::from_residual("x", f64::NAN, 1e-12).pass);
    }
}
