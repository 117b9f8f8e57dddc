//! Versioned binary container shared by datasets and checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! | offset        | size      | content                                        |
//! |---------------|-----------|------------------------------------------------|
//! | 0             | 8         | magic `SPECCONT` (ASCII)                       |
//! | 8             | 4         | format version, `u32`                          |
//! | 12            | 8         | header length `H` in bytes, `u64`              |
//! | 20            | `H`       | UTF-8 header, one `key = value` per line       |
//! | 20 + `H`      | 8         | payload length `P` in values, `u64`            |
//! | 28 + `H`      | `8 P`     | payload, `P` IEEE-754 binary64 values          |
//!
//! The header's `kind` key names the content (`dataset`, `unrolled`, `fcn`)
//! and its `layout` key lists the arrays of the payload in order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SPECCONT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub header: Vec<(String, String)>,
    pub payload: Vec<f64>,
}

impl Container {
    pub fn new() -> Self {
        Self {
            header: Vec::new(),
            payload: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        debug_assert!(!key.contains('=') && !key.contains('\n') && !value.contains('\n'));
        match self.header.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.header.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header: String = self
            .header
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        let mut out = Vec::with_capacity(28 + header.len() + 8 * self.payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        for x in &self.payload {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let fail = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        let mut cursor = Cursor { bytes, pos: 0 };
        let magic = cursor.take(8).ok_or_else(|| fail("file shorter than the magic string".into()))?;
        if magic != MAGIC {
            return Err(fail(format!("bad magic {:?}", String::from_utf8_lossy(magic))));
        }
        let version = cursor
            .u32()
            .ok_or_else(|| fail("truncated before the version field".into()))?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let header_len = cursor
            .u64()
            .ok_or_else(|| fail("truncated before the header length".into()))?;
        let header_bytes = usize::try_from(header_len)
            .ok()
            .and_then(|n| cursor.take(n))
            .ok_or_else(|| fail(format!("truncated header (declared {header_len} bytes)")))?;
        let text = std::str::from_utf8(header_bytes).map_err(|e| fail(format!("header is not UTF-8: {e}")))?;
        let mut header = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| fail(format!("malformed header line {line:?}")))?;
            header.push((k.to_string(), v.to_string()));
        }
        let count = cursor
            .u64()
            .ok_or_else(|| fail("truncated before the payload length".into()))?;
        let remaining = bytes.len() - cursor.pos;
        if (remaining as u64) != count.saturating_mul(8) {
            return Err(fail(format!(
                "payload declares {count} values but {remaining} bytes remain"
            )));
        }
        let payload = bytes[cursor.pos..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(Self { header, payload })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Header value that must be present and parse as `T`.
    pub fn require<T: std::str::FromStr>(&self, key: &str, path: &Path) -> Result<T> {
        let raw = self.get(key).ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            reason: format!("missing header key {key:?}"),
        })?;
        raw.parse().map_err(|_| Error::Format {
            path: path.to_path_buf(),
            reason: format!("header key {key:?} has unparsable value {raw:?}"),
        })
    }

    pub fn expect_kind(&self, kind: &str, path: &Path) -> Result<()> {
        let found: String = self.require("kind", path)?;
        if found != kind {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("expected a {kind} container, found {found}"),
            });
        }
        Ok(())
    }
}

impl Default for Container {
    fn default() -> Self {
        Self::new()
    }
}

/// Floats in headers are written with Rust's shortest round-trip formatting.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let slice = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(slice)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Container {
        let mut c = Container::new();
        c.set("kind", "dataset");
        c.set("beta", fmt_f64(10.0));
        c.payload = vec![0.1, -2.5e-300, f64::MAX, 0.0];
        c
    }

    #[test]
    fn bytes_roundtrip() {
        let c = sample();
        let back = Container::from_bytes(&c.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back.header, c.header);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.payload), bits(&c.payload));
    }

    #[test]
    fn every_truncation_is_a_format_error() {
        let bytes = sample().to_bytes();
        for cut in 0..bytes.len() {
            match Container::from_bytes(&bytes[..cut], Path::new("cut")) {
                Err(Error::Format { .. }) => {}
                other => panic!("cut at {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn version_mismatch_names_both_versions() {
        let mut bytes = sample().to_bytes();
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        let err = Container::from_bytes(&bytes, Path::new("v7")).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Version { found: 7, supported: 1, .. }));
        assert!(msg.contains('7') && msg.contains('1'), "{msg}");
    }

    #[test]
    fn bad_magic() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            Container::from_bytes(&bytes, Path::new("m")),
            Err(Error::Format { .. })
        ));
    }
}
