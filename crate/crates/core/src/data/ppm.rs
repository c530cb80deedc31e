//! Binary PPM (P6, maxval 255).

use std::path::Path;

use crate::error::{Error, Result};

pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

/// Parses a P6 image (comments allowed in the header) into `(width, height, rgb)`.
pub fn decode_ppm(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let corrupt = |reason: &str| Error::Corrupt {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(corrupt("truncated PPM header"));
        }
        tokens.push(
            std::str::from_utf8(&bytes[start..pos]).map_err(|_| corrupt("non-ASCII PPM header"))?,
        );
    }
    if tokens[0] != "P6" {
        return Err(corrupt("not a binary PPM (P6)"));
    }
    let num = |t: &str| {
        t.parse::<usize>()
            .map_err(|_| corrupt("bad PPM header number"))
    };
    let (w, h, maxval) = (num(tokens[1])?, num(tokens[2])?, num(tokens[3])?);
    if maxval != 255 {
        return Err(corrupt("only maxval 255 is supported"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = w * h * 3;
    if bytes.len() < pos + need {
        return Err(corrupt(&format!(
            "raster has {} bytes, expected {need}",
            bytes.len().saturating_sub(pos)
        )));
    }
    if bytes.len() > pos + need {
        return Err(corrupt("trailing bytes after the raster"));
    }
    Ok((w, h, bytes[pos..].to_vec()))
}
