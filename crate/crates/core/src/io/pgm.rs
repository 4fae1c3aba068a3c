//! Binary 8-bit PGM (P5) images.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PgmImage {
    pub pixels: Array2<u8>,
    pub max_value: u8,
}

pub fn encode_pgm(pixels: &Array2<u8>) -> Vec<u8> {
    let (rows, cols) = pixels.dim();
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(pixels.iter());
    out
}

pub fn write_pgm(path: &Path, pixels: &Array2<u8>) -> Result<()> {
    super::write_atomic(path, &encode_pgm(pixels))
}

pub fn read_pgm(path: &Path) -> Result<PgmImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn decode_pgm(bytes: &[u8]) -> Result<PgmImage> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // skip whitespace and comments
        while pos < bytes.len() {
            match bytes[pos] {
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::Format(format!("expected binary PGM (P5), found {}", fields[0])));
    }
    let parse = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM {what}: {s}")))
    };
    let cols = parse(&fields[1], "width")?;
    let rows = parse(&fields[2], "height")?;
    let max_value = parse(&fields[3], "maxval")?;
    if !(1..=255).contains(&max_value) {
        return Err(Error::Format(format!(
            "only 8-bit PGM is supported, maxval {max_value}"
        )));
    }
    // single whitespace byte separates header from raster
    pos += 1;
    let need = rows * cols;
    if rows == 0 || cols == 0 || bytes.len() < pos + need {
        return Err(Error::Format(format!("PGM raster needs {need} bytes")));
    }
    let pixels = Array2::from_shape_vec((rows, cols), bytes[pos..pos + need].to_vec())
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok(PgmImage {
        pixels,
        max_value: max_value as u8,
    })
}

/// Min-max normalization record written next to rendered images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
    /// True when the slice is constant (`min == max`).
    pub constant: bool,
}

/// Maps `[min, max]` linearly onto `0..=255`. A constant input renders as 0.
pub fn normalize_to_u8(values: &Array2<f64>) -> Result<(Array2<u8>, Normalization)> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("cannot render non-finite values"));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let constant = min == max;
    let pixels = if constant {
        Array2::zeros(values.dim())
    } else {
        values.mapv(|v| ((v - min) / (max - min) * 255.0).round() as u8)
    };
    Ok((pixels, Normalization { min, max, constant }))
}
