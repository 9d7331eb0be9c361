//! Binary 16-bit greyscale PGM (P5) images.

use std::path::Path;

use crate::image::Image;
use crate::{Error, Result};

pub const MAXVAL: u16 = 65535;

/// Maps `[0, window_max]` linearly onto `[0, 65535]`, clamping outside.
pub fn quantize(v: f64, window_max: f64) -> u16 {
    if !(window_max > 0.0) || !v.is_finite() {
        return 0;
    }
    ((v / window_max).clamp(0.0, 1.0) * MAXVAL as f64).round() as u16
}

/// `P5\n<w> <h>\n65535\n` followed by big-endian samples, row by row.
pub fn encode_pgm(image: &Image, window_max: f64) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{MAXVAL}\n", image.w, image.h).into_bytes();
    out.reserve(2 * image.data.len());
    for &v in &image.data {
        out.extend_from_slice(&quantize(v, window_max).to_be_bytes());
    }
    out
}

/// Decoded raster: width, height and samples.
pub struct Pgm {
    pub w: usize,
    pub h: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<Pgm> {
    let bad = |d: &str| Error::format(path, d.to_string());
    // Header: magic and three integers separated by single whitespace runs.
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..i]).map_err(|_| bad("header not ASCII"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != MAXVAL as usize {
        return Err(bad("only 16-bit PGM is supported"));
    }
    let body = &bytes[i + 1..];
    if body.len() != 2 * w * h {
        return Err(bad("raster size does not match header"));
    }
    let samples = body
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok(Pgm {
        w,
        h,
        maxval: MAXVAL,
        samples,
    })
}

pub fn write_pgm(path: &Path, image: &Image, window_max: f64) -> Result<()> {
    crate::io::write_atomic(path, &encode_pgm(image, window_max))
}
