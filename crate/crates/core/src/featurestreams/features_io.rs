//! Precomputed per-frame feature files.
//!
//! ```text
//! TRISTREAM-FEAT v1 T=<int> D=<int>
//! <T rows of D decimal floats>
//! ```
//!
//! The binary variant keeps the same header line and follows it with `T·D`
//! little-endian `f64` values. Readers tell the two apart by the payload: a
//! payload made only of printable ASCII is text.

use std::path::Path;

use super::{FeatureSource, FrameFeatureSequence};
use crate::error::{Error, Result};
use crate::linalg::Tensor;

const MAGIC: &str = "TRISTREAM-FEAT";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureEncoding {
    Text,
    Binary,
}

fn header_field(token: Option<&str>, key: &str) -> Result<usize> {
    let token = token.ok_or_else(|| Error::format("feature header", format!("missing {key}=")))?;
    let value = token
        .strip_prefix(key)
        .and_then(|t| t.strip_prefix('='))
        .ok_or_else(|| Error::format("feature header", format!("expected {key}=<int>, found {token:?}")))?;
    let n: usize = value
        .parse()
        .map_err(|_| Error::format("feature header", format!("{key} is not an integer: {value:?}")))?;
    if n == 0 {
        return Err(Error::format("feature header", format!("{key} must be positive")));
    }
    Ok(n)
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let mut tokens = line.split_whitespace();
    if tokens.next() != Some(MAGIC) || tokens.next() != Some("v1") {
        return Err(Error::format("feature header", format!("expected '{MAGIC} v1', found {line:?}")));
    }
    let t = header_field(tokens.next(), "T")?;
    let d = header_field(tokens.next(), "D")?;
    if let Some(extra) = tokens.next() {
        return Err(Error::format("feature header", format!("unexpected token {extra:?}")));
    }
    Ok((t, d))
}

fn is_text(payload: &[u8]) -> bool {
    payload
        .iter()
        .all(|&b| b.is_ascii_graphic() || b.is_ascii_whitespace())
}

/// Parses a feature file held in memory.
pub fn parse_features(bytes: &[u8]) -> Result<FrameFeatureSequence> {
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format("feature file", "missing header line"))?;
    let header = std::str::from_utf8(&bytes[..split])
        .map_err(|_| Error::format("feature header", "not UTF-8"))?
        .trim_end_matches('\r');
    let (t, d) = parse_header(header)?;
    let payload = &bytes[split + 1..];

    let values = if is_text(payload) {
        let text = std::str::from_utf8(payload).expect("ascii payload");
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if rows.len() != t {
            return Err(Error::RowCount {
                expected: t,
                found: rows.len(),
            });
        }
        let mut values = Vec::with_capacity(t * d);
        for (r, line) in rows.iter().enumerate() {
            let before = values.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| Error::format("feature file", format!("row {r}: bad number {tok:?}")))?;
                values.push(v);
            }
            if values.len() - before != d {
                return Err(Error::format(
                    "feature file",
                    format!("row {r} has {} values, header declares D={d}", values.len() - before),
                ));
            }
        }
        values
    } else {
        let row_bytes = d * 8;
        if payload.len() != t * row_bytes {
            return Err(Error::RowCount {
                expected: t,
                found: payload.len() / row_bytes,
            });
        }
        payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect()
    };
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("feature row {}, column {}", i / d, i % d)));
    }
    FrameFeatureSequence::new(Tensor::new(&[t, d], values)?, FeatureSource::Precomputed)
}

pub fn load_precomputed_features(path: impl AsRef<Path>) -> Result<FrameFeatureSequence> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_features(&bytes)
}

pub fn encode_features(seq: &FrameFeatureSequence, encoding: FeatureEncoding) -> Vec<u8> {
    let (t, d) = (seq.len(), seq.width());
    let mut out = format!("{MAGIC} v1 T={t} D={d}\n").into_bytes();
    match encoding {
        FeatureEncoding::Text => {
            for r in 0..t {
                let row: Vec<String> = seq.features.row(r).iter().map(|v| v.to_string()).collect();
                out.extend_from_slice(row.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
        FeatureEncoding::Binary => {
            for v in seq.features.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn save_features(path: impl AsRef<Path>, seq: &FrameFeatureSequence, encoding: FeatureEncoding) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_features(seq, encoding)).map_err(|e| Error::io(path, e))
}
