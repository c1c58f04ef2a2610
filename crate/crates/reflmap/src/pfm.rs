//! Portable FloatMap (PFM) codec.
//!
//! `PF` streams carry three f32 samples per pixel, `Pf` one (replicated to
//! RGB on load). The sign of the scale token selects the payload byte order;
//! rows are stored bottom-to-top per the format convention.

use crate::img::{check_dims, LinearImage};
use crate::{Error, Result};

/// Decodes a PFM byte stream.
pub fn decode(data: &[u8]) -> Result<LinearImage> {
    let (magic, mut pos) = token(data, 0)?;
    let channels = match magic {
        b"PF" => 3usize,
        b"Pf" => 1usize,
        _ => return Err(Error::Format("not a PFM stream".into())),
    };
    let (w_tok, p) = token(data, pos)?;
    pos = p;
    let (h_tok, p) = token(data, pos)?;
    pos = p;
    let (scale_tok, p) = token(data, pos)?;
    pos = p;
    // Exactly one whitespace byte separates the scale token from the payload;
    // `token` already consumed it.

    let width: usize = parse_ascii(w_tok).ok_or_else(|| Error::Format("bad width".into()))?;
    let height: usize = parse_ascii(h_tok).ok_or_else(|| Error::Format("bad height".into()))?;
    check_dims(width, height)?;
    let scale: f64 = std::str::from_utf8(scale_tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|s: &f64| s.is_finite() && *s != 0.0)
        .ok_or_else(|| Error::Format("bad scale".into()))?;
    let little_endian = scale < 0.0;
    let magnitude = scale.abs();

    let expected = width * height * channels * 4;
    let payload = data
        .get(pos..pos + expected)
        .ok_or_else(|| Error::Format("PFM payload shorter than header claims".into()))?;
    if data.len() - pos != expected {
        return Err(Error::Format("PFM payload longer than header claims".into()));
    }

    let mut texels = vec![[0.0f64; 3]; width * height];
    for row in 0..height {
        // Rows are stored bottom-to-top.
        let y = height - 1 - row;
        for x in 0..width {
            let base = (row * width + x) * channels * 4;
            let mut rgb = [0.0f64; 3];
            for c in 0..channels {
                let b: [u8; 4] = payload[base + c * 4..base + c * 4 + 4].try_into().unwrap();
                let v = if little_endian {
                    f32::from_le_bytes(b)
                } else {
                    f32::from_be_bytes(b)
                };
                if !v.is_finite() {
                    return Err(Error::Data(format!("non-finite sample at {x},{y}")));
                }
                rgb[c] = v as f64 * magnitude;
            }
            if channels == 1 {
                rgb[1] = rgb[0];
                rgb[2] = rgb[0];
            }
            texels[y * width + x] = rgb;
        }
    }
    LinearImage::new(width, height, texels)
}

/// Encodes an image as little-endian color PFM (scale -1).
pub fn encode(image: &LinearImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(image.texels.len() * 12 + 32);
    out.extend_from_slice(format!("PF\n{} {}\n-1.0\n", image.width, image.height).as_bytes());
    for row in 0..image.height {
        let y = image.height - 1 - row;
        for x in 0..image.width {
            for c in 0..3 {
                out.extend_from_slice(&(image.texel(x, y)[c] as f32).to_le_bytes());
            }
        }
    }
    out
}

/// Next whitespace-delimited token; returns the token and the position just
/// past the single terminating whitespace byte.
fn token(data: &[u8], mut pos: usize) -> Result<(&[u8], usize)> {
    while pos < data.len() && data[pos].is_ascii_whitespace() {
        pos += 1;
    }
    let start = pos;
    while pos < data.len() && !data[pos].is_ascii_whitespace() {
        pos += 1;
    }
    if start == pos || pos >= data.len() {
        return Err(Error::Format("truncated PFM header".into()));
    }
    Ok((&data[start..pos], pos + 1))
}

fn parse_ascii(tok: &[u8]) -> Option<usize> {
    std::str::from_utf8(tok).ok()?.parse().ok()
}
