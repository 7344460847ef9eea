//! Payoff sequence files.
//!
//! Text files hold one real per line (blank lines and `#` comments are
//! skipped). Binary files start with the 8-byte magic `LHSEQ001` followed by
//! little-endian `f64` values.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Magic prefix of the binary format.
pub const MAGIC: &[u8; 8] = b"LHSEQ001";

/// Reads a sequence, detecting the format from the magic prefix.
pub fn read(path: &Path) -> Result<Vec<f64>> {
    let bytes =
        fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse(&bytes)
}

/// Parses either format from memory.
pub fn parse(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.starts_with(MAGIC) {
        let body = &bytes[MAGIC.len()..];
        #[allow(clippy::manual_is_multiple_of)] // is_multiple_of needs a newer MSRV
        if body.len() % 8 != 0 {
            return Err(Error::Parse(format!(
                "binary sequence body of {} bytes is not a multiple of 8",
                body.len()
            )));
        }
        return Ok(body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect());
    }
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: `{line}` is not a number", i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

/// Encodes a sequence in the binary format.
pub fn encode_binary(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(MAGIC.len() + 8 * values.len());
    out.extend_from_slice(MAGIC);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Encodes a sequence as text, one value per line, round-trip exact.
pub fn encode_text(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 20);
    for v in values {
        s.push_str(&format!("{v:?}\n"));
    }
    s
}
