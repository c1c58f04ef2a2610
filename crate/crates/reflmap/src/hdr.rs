//! Radiance RGBE (.hdr/.pic) codec.
//!
//! Reads the `#?RADIANCE` / `#?RGBE` container with flat scanlines, old-style
//! run markers, and the newer per-component RLE. Only the standard
//! `-Y height +X width` orientation is accepted. Decoding applies the shared
//! exponent directly; no EXPOSURE metadata is applied, inputs are treated as
//! radiometrically linear.

use crate::img::{check_dims, LinearImage};
use crate::{Error, Result};

/// Decodes one RGBE texel; an exponent byte of zero is black.
#[inline]
fn rgbe_to_linear(rgbe: [u8; 4]) -> [f64; 3] {
    let e = rgbe[3];
    if e == 0 {
        return [0.0; 3];
    }
    let scale = ((e as i32 - 136) as f64).exp2();
    [
        rgbe[0] as f64 * scale,
        rgbe[1] as f64 * scale,
        rgbe[2] as f64 * scale,
    ]
}

/// Encodes a linear texel into RGBE with a shared exponent.
#[inline]
fn linear_to_rgbe(rgb: [f64; 3]) -> [u8; 4] {
    let max = rgb[0].max(rgb[1]).max(rgb[2]);
    if !(max >= 1e-32) {
        return [0, 0, 0, 0];
    }
    // max = m * 2^e with m in [0.5, 1); bytes are c * 256 / 2^e.
    let e = max.log2().floor() as i32 + 1;
    let scale = (-e as f64).exp2() * 256.0;
    let quant = |c: f64| ((c * scale + 0.5) as u32).min(255) as u8;
    [
        quant(rgb[0]),
        quant(rgb[1]),
        quant(rgb[2]),
        (e + 128).clamp(0, 255) as u8,
    ]
}

struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn u8(&mut self) -> Result<u8> {
        let b = *self
            .data
            .get(self.pos)
            .ok_or_else(|| Error::Format("unexpected end of RGBE data".into()))?;
        self.pos += 1;
        Ok(b)
    }

    fn chunk(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::Format("unexpected end of RGBE data".into()))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn line(&mut self) -> Result<&'a str> {
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
            self.pos += 1;
        }
        if self.pos >= self.data.len() {
            return Err(Error::Format("unterminated header line".into()));
        }
        let line = std::str::from_utf8(&self.data[start..self.pos])
            .map_err(|_| Error::Format("header is not valid ASCII".into()))?;
        self.pos += 1;
        Ok(line)
    }
}

/// Decodes a Radiance RGBE byte stream.
pub fn decode(data: &[u8]) -> Result<LinearImage> {
    let mut r = ByteReader { data, pos: 0 };
    let magic = r.line()?;
    if magic != "#?RADIANCE" && magic != "#?RGBE" {
        return Err(Error::Format("not a Radiance RGBE stream".into()));
    }
    // Header lines up to the blank separator; FORMAT is checked when present.
    loop {
        let line = r.line()?;
        if line.is_empty() {
            break;
        }
        if let Some(fmt) = line.strip_prefix("FORMAT=") {
            if fmt.trim() != "32-bit_rle_rgbe" {
                return Err(Error::Format(format!("unsupported FORMAT {fmt}")));
            }
        }
    }
    let dims = r.line()?;
    let mut parts = dims.split_whitespace();
    let (width, height) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
        (Some("-Y"), Some(h), Some("+X"), Some(w)) => {
            let h: usize = h
                .parse()
                .map_err(|_| Error::Format("bad height in resolution line".into()))?;
            let w: usize = w
                .parse()
                .map_err(|_| Error::Format("bad width in resolution line".into()))?;
            (w, h)
        }
        _ => {
            return Err(Error::Format(format!(
                "unsupported resolution line {dims:?}"
            )))
        }
    };
    check_dims(width, height)?;

    let mut texels = Vec::with_capacity(width.min(1024) * height.min(1024));
    let mut scanline = vec![[0u8; 4]; width];
    for _ in 0..height {
        read_scanline(&mut r, &mut scanline)?;
        texels.extend(scanline.iter().map(|&p| rgbe_to_linear(p)));
    }
    LinearImage::new(width, height, texels)
}

fn read_scanline(r: &mut ByteReader, out: &mut [[u8; 4]]) -> Result<()> {
    let width = out.len();
    let first = [r.u8()?, r.u8()?, r.u8()?, r.u8()?];
    // New-style RLE scanline: marker (2, 2, hi, lo) with the line width.
    if first[0] == 2 && first[1] == 2 && first[2] & 0x80 == 0 {
        let marked = ((first[2] as usize) << 8) | first[3] as usize;
        if marked != width {
            return Err(Error::Format("RLE scanline width mismatch".into()));
        }
        for comp in 0..4 {
            let mut filled = 0usize;
            while filled < width {
                let code = r.u8()?;
                if code > 128 {
                    let run = code as usize - 128;
                    if filled + run > width {
                        return Err(Error::Format("RLE run overflows scanline".into()));
                    }
                    let value = r.u8()?;
                    for p in &mut out[filled..filled + run] {
                        p[comp] = value;
                    }
                    filled += run;
                } else {
                    let count = code as usize;
                    if count == 0 || filled + count > width {
                        return Err(Error::Format("RLE literal overflows scanline".into()));
                    }
                    let bytes = r.chunk(count)?;
                    for (p, &b) in out[filled..filled + count].iter_mut().zip(bytes) {
                        p[comp] = b;
                    }
                    filled += count;
                }
            }
        }
        return Ok(());
    }

    // Flat scanline, possibly containing old-style (1,1,1,count) repeats.
    let mut pixel = first;
    let mut filled = 0usize;
    let mut rshift = 0u32;
    loop {
        if pixel[0] == 1 && pixel[1] == 1 && pixel[2] == 1 {
            if filled == 0 {
                return Err(Error::Format("repeat marker with no previous pixel".into()));
            }
            if rshift > 24 {
                return Err(Error::Format("old-style run shift overflow".into()));
            }
            let run = (pixel[3] as usize) << rshift;
            if filled + run > width {
                return Err(Error::Format("old-style run overflows scanline".into()));
            }
            let prev = out[filled - 1];
            for p in &mut out[filled..filled + run] {
                *p = prev;
            }
            filled += run;
            rshift += 8;
        } else {
            out[filled] = pixel;
            filled += 1;
            rshift = 0;
        }
        if filled >= width {
            return Ok(());
        }
        pixel = [r.u8()?, r.u8()?, r.u8()?, r.u8()?];
    }
}

/// Encodes an image as Radiance RGBE. Uses per-component RLE when the width
/// allows it (flat otherwise, since narrow or very wide flat scanlines are
/// the only unambiguous encoding).
pub fn encode(image: &LinearImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(image.texels.len() * 4 + 64);
    out.extend_from_slice(b"#?RADIANCE\n");
    out.extend_from_slice(b"FORMAT=32-bit_rle_rgbe\n\n");
    out.extend_from_slice(format!("-Y {} +X {}\n", image.height, image.width).as_bytes());

    let rle_capable = (8..=32767).contains(&image.width);
    let mut row = vec![[0u8; 4]; image.width];
    for y in 0..image.height {
        for (x, p) in row.iter_mut().enumerate() {
            *p = linear_to_rgbe(image.texel(x, y));
        }
        if rle_capable {
            out.push(2);
            out.push(2);
            out.push((image.width >> 8) as u8);
            out.push((image.width & 0xff) as u8);
            for comp in 0..4 {
                encode_component(&row, comp, &mut out);
            }
        } else {
            for p in &row {
                out.extend_from_slice(p);
            }
        }
    }
    out
}

/// Run-length encodes one component of a scanline.
fn encode_component(row: &[[u8; 4]], comp: usize, out: &mut Vec<u8>) {
    let mut i = 0;
    while i < row.len() {
        // Measure the run of identical bytes starting here.
        let byte = row[i][comp];
        let mut run = 1;
        while i + run < row.len() && row[i + run][comp] == byte && run < 127 {
            run += 1;
        }
        if run >= 4 {
            out.push(128 + run as u8);
            out.push(byte);
            i += run;
        } else {
            // Gather a literal segment until a worthwhile run appears.
            let start = i;
            let mut len = run;
            while i + len < row.len() && len < 128 {
                let b = row[i + len][comp];
                let mut ahead = 1;
                while i + len + ahead < row.len()
                    && row[i + len + ahead][comp] == b
                    && ahead < 4
                {
                    ahead += 1;
                }
                if ahead >= 4 {
                    break;
                }
                len += ahead;
            }
            let len = len.min(128);
            out.push(len as u8);
            out.extend(row[start..start + len].iter().map(|p| p[comp]));
            i = start + len;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gradient(width: usize, height: usize) -> LinearImage {
        let mut texels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let u = (x as f64 + 0.5) / width as f64;
                let v = (y as f64 + 0.5) / height as f64;
                texels.push([0.5 + u, 0.8, (1.0 + v) * 0.7]);
            }
        }
        LinearImage::new(width, height, texels).unwrap()
    }

    #[test]
    fn encode_decode_round_trip_within_quantization() {
        let img = gradient(32, 16);
        let decoded = decode(&encode(&img)).unwrap();
        assert_eq!(decoded.width, 32);
        assert_eq!(decoded.height, 16);
        for (a, b) in img.texels.iter().zip(&decoded.texels) {
            for c in 0..3 {
                let rel = (a[c] - b[c]).abs() / a[c].abs().max(1e-9);
                assert!(rel < 0.01, "channel error {rel} too large: {a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn narrow_images_use_flat_scanlines() {
        let img = gradient(4, 4);
        let bytes = encode(&img);
        let decoded = decode(&bytes).unwrap();
        assert_eq!(decoded.width, 4);
        for (a, b) in img.texels.iter().zip(&decoded.texels) {
            assert!((a[0] - b[0]).abs() / a[0] < 0.01);
        }
    }

    #[test]
    fn decoding_is_idempotent_after_one_quantization() {
        let img = gradient(16, 8);
        let once = decode(&encode(&img)).unwrap();
        let twice = decode(&encode(&once)).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(matches!(decode(b"#?NOPE\n\n-Y 1 +X 1\n"), Err(Error::Format(_))));
        assert!(matches!(decode(b""), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_truncated_pixels() {
        let img = gradient(16, 8);
        let bytes = encode(&img);
        assert!(decode(&bytes[..bytes.len() - 5]).is_err());
    }

    #[test]
    fn old_style_run_markers_expand() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"#?RADIANCE\n\n-Y 1 +X 4\n");
        bytes.extend_from_slice(&[128, 64, 32, 129]); // one literal pixel
        bytes.extend_from_slice(&[1, 1, 1, 3]); // repeat it three times
        let img = decode(&bytes).unwrap();
        assert_eq!(img.texels[0], img.texels[3]);
        assert!(img.texels[0][0] > 0.0);
    }

    #[test]
    fn zero_exponent_is_black() {
        assert_eq!(rgbe_to_linear([10, 20, 30, 0]), [0.0, 0.0, 0.0]);
        assert_eq!(linear_to_rgbe([0.0, 0.0, 0.0]), [0, 0, 0, 0]);
    }

    proptest! {
        #[test]
        fn texel_codec_round_trips(r in 1e-6..1e4f64, g in 1e-6..1e4f64, b in 1e-6..1e4f64) {
            let max = r.max(g).max(b);
            let decoded = rgbe_to_linear(linear_to_rgbe([r, g, b]));
            for (orig, dec) in [r, g, b].iter().zip(&decoded) {
                // Absolute quantization step is set by the max channel.
                prop_assert!((orig - dec).abs() <= max / 128.0);
            }
        }

        #[test]
        fn decode_never_panics(data in proptest::collection::vec(any::<u8>(), 0..2048)) {
            let _ = decode(&data);
        }
    }
}
