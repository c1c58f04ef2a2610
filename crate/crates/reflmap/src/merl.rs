//! Reader/writer for the binary format of the MERL BRDF database
//! ("A Data-Driven Reflectance Model", Matusik et al. 2003).
//!
//! Layout: three little-endian i32 dimensions (theta_h, theta_d, phi_d),
//! then `dims product` f64 values for red, green, blue in turn, ordered with
//! theta_h outermost and phi_d innermost. Stored values carry per-channel
//! scale factors that the reader divides out; negative stored values mark
//! invalid measurements and become masked zero entries.

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::brdf::{BrdfGrid, BrdfResolution};
use crate::{Error, Result};

use std::io::{Read, Write};

/// Per-channel radiometric scale factors applied on read (R, G, B).
pub const CHANNEL_SCALE: [f64; 3] = [1.0 / 1500.0, 1.15 / 1500.0, 1.66 / 1500.0];

/// Largest accepted table size (counts per axis and total entries); real
/// files are 90 x 90 x 180 = 1,458,000.
const MAX_AXIS: usize = 4096;
const MAX_ENTRIES: usize = 1 << 26;

/// Loads the three color-channel grids from a MERL-format stream.
pub fn load_merl<R: Read>(reader: &mut R) -> Result<(BrdfGrid, BrdfGrid, BrdfGrid)> {
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let v = reader
            .read_i32::<LittleEndian>()
            .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
        if v <= 0 || v as usize > MAX_AXIS {
            return Err(Error::Format(format!("dimension {v} out of range")));
        }
        *d = v as usize;
    }
    let resolution = BrdfResolution::new(dims[0], dims[1], dims[2])?;
    let entries = resolution.entry_count();
    if entries > MAX_ENTRIES {
        return Err(Error::Format(format!("table of {entries} entries too large")));
    }

    let mut grids = Vec::with_capacity(3);
    for channel in 0..3 {
        let scale = CHANNEL_SCALE[channel];
        let mut values = vec![0.0f64; entries];
        let mut mask = vec![true; entries];
        let mut any_masked = false;
        for (i, v) in values.iter_mut().enumerate() {
            let raw = reader.read_f64::<LittleEndian>().map_err(|e| {
                Error::Format(format!(
                    "payload ended early in channel {channel} at entry {i}: {e}"
                ))
            })?;
            if !raw.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite value in channel {channel} at entry {i}"
                )));
            }
            if raw < 0.0 {
                mask[i] = false;
                any_masked = true;
            } else {
                *v = raw * scale;
            }
        }
        grids.push(if any_masked {
            BrdfGrid::with_mask(resolution, values, mask)?
        } else {
            BrdfGrid::new(resolution, values)?
        });
    }

    // Anything after the blue channel means the header lied about the size.
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(Error::Format("payload larger than header dimensions".into()));
    }

    let b = grids.pop().unwrap();
    let g = grids.pop().unwrap();
    let r = grids.pop().unwrap();
    Ok((r, g, b))
}

/// Picks a stored value whose reload (`raw * scale`) reproduces `value`
/// bit-exactly. The naive quotient can land one ulp off after the rounded
/// multiply, so probe its immediate neighbors.
fn invert_scale(value: f64, scale: f64) -> f64 {
    let raw = value / scale;
    if raw * scale == value {
        return raw;
    }
    for candidate in [raw.next_down(), raw.next_up()] {
        if candidate * scale == value {
            return candidate;
        }
    }
    raw
}

/// Writes three channel grids in MERL format, inverting the read-side
/// scaling. Masked entries are stored as -1 so they reload as masked.
pub fn save_merl<W: Write>(
    writer: &mut W,
    red: &BrdfGrid,
    green: &BrdfGrid,
    blue: &BrdfGrid,
) -> Result<()> {
    let resolution = red.resolution();
    if green.resolution() != resolution || blue.resolution() != resolution {
        return Err(Error::Argument(
            "channel grids must share one resolution".into(),
        ));
    }
    writer.write_i32::<LittleEndian>(resolution.theta_h as i32)?;
    writer.write_i32::<LittleEndian>(resolution.theta_d as i32)?;
    writer.write_i32::<LittleEndian>(resolution.phi_d as i32)?;
    for (channel, grid) in [red, green, blue].into_iter().enumerate() {
        let scale = CHANNEL_SCALE[channel];
        for (i, v) in grid.values().iter().enumerate() {
            let raw = if grid.is_valid(i) {
                invert_scale(*v, scale)
            } else {
                -1.0
            };
            writer.write_f64::<LittleEndian>(raw)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brdf::{synthesize, SyntheticBrdfSpec};
    use byteorder::WriteBytesExt;
    use std::io::Cursor;

    fn sample_grids() -> (BrdfGrid, BrdfGrid, BrdfGrid) {
        let res = BrdfResolution::new(16, 16, 16).unwrap();
        let spec = SyntheticBrdfSpec {
            diffuse_albedo: [0.6, 0.4, 0.2],
            lobes: vec![([0.3, 0.2, 0.1], 30.0)],
        };
        let [r, g, b] = synthesize(&spec, res).unwrap();
        (r, g, b)
    }

    #[test]
    fn round_trip_is_identity_to_double_precision() {
        let (r, g, b) = sample_grids();
        let mut bytes = Vec::new();
        save_merl(&mut bytes, &r, &g, &b).unwrap();
        assert_eq!(bytes.len(), 12 + 3 * 16 * 16 * 16 * 8);
        let (r2, g2, b2) = load_merl(&mut Cursor::new(&bytes)).unwrap();
        // The channel scales are not powers of two, so a value can lack an
        // exact preimage in the stored domain; one trip may round by an ulp.
        for (a, c) in [(&r, &r2), (&g, &g2), (&b, &b2)] {
            assert_eq!(a.validity_mask(), c.validity_mask());
            for (x, y) in a.values().iter().zip(c.values()) {
                assert!((x - y).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn round_trip_is_bit_exact_for_loaded_grids() {
        // Values that came through load always have exact stored preimages,
        // so from the second trip on the cycle is the identity, bit for bit.
        let (r, g, b) = sample_grids();
        let mut bytes1 = Vec::new();
        save_merl(&mut bytes1, &r, &g, &b).unwrap();
        let (r1, g1, b1) = load_merl(&mut Cursor::new(&bytes1)).unwrap();
        let mut bytes2 = Vec::new();
        save_merl(&mut bytes2, &r1, &g1, &b1).unwrap();
        let (r2, g2, b2) = load_merl(&mut Cursor::new(&bytes2)).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(g1, g2);
        assert_eq!(b1, b2);
        // The byte stream is a fixed point as well from here on.
        let mut bytes3 = Vec::new();
        save_merl(&mut bytes3, &r2, &g2, &b2).unwrap();
        assert_eq!(bytes2, bytes3);
    }

    #[test]
    fn zero_payload_loads_as_zero_grids() {
        let mut bytes = Vec::new();
        for d in [2i32, 2, 2] {
            bytes.write_i32::<LittleEndian>(d).unwrap();
        }
        for _ in 0..3 * 8 {
            bytes.write_f64::<LittleEndian>(0.0).unwrap();
        }
        let (r, g, b) = load_merl(&mut Cursor::new(&bytes)).unwrap();
        for grid in [r, g, b] {
            assert!(grid.values().iter().all(|v| *v == 0.0));
            assert!(grid.validity_mask().is_none());
        }
    }

    #[test]
    fn negative_entries_become_masked() {
        let mut bytes = Vec::new();
        for d in [2i32, 2, 2] {
            bytes.write_i32::<LittleEndian>(d).unwrap();
        }
        for i in 0..3 * 8 {
            let v = if i == 5 { -1.0 } else { 1500.0 };
            bytes.write_f64::<LittleEndian>(v).unwrap();
        }
        let (r, _, _) = load_merl(&mut Cursor::new(&bytes)).unwrap();
        assert!(!r.is_valid(5));
        assert_eq!(r.values()[5], 0.0);
        assert_eq!(r.values()[0], 1.0);

        // Masked entries survive a save/load cycle.
        let (r1, g1, b1) = load_merl(&mut Cursor::new(&bytes)).unwrap();
        let mut again = Vec::new();
        save_merl(&mut again, &r1, &g1, &b1).unwrap();
        let (r2, _, _) = load_merl(&mut Cursor::new(&again)).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn short_payload_is_a_format_error() {
        let mut bytes = Vec::new();
        for d in [2i32, 2, 2] {
            bytes.write_i32::<LittleEndian>(d).unwrap();
        }
        for _ in 0..10 {
            bytes.write_f64::<LittleEndian>(1.0).unwrap();
        }
        assert!(matches!(
            load_merl(&mut Cursor::new(&bytes)),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn oversized_payload_is_a_format_error() {
        let (r, g, b) = sample_grids();
        let mut bytes = Vec::new();
        save_merl(&mut bytes, &r, &g, &b).unwrap();
        bytes.push(0);
        assert!(matches!(
            load_merl(&mut Cursor::new(&bytes)),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn non_finite_payload_is_a_data_error() {
        let mut bytes = Vec::new();
        for d in [1i32, 1, 1] {
            bytes.write_i32::<LittleEndian>(d).unwrap();
        }
        bytes.write_f64::<LittleEndian>(f64::NAN).unwrap();
        bytes.write_f64::<LittleEndian>(1.0).unwrap();
        bytes.write_f64::<LittleEndian>(1.0).unwrap();
        assert!(matches!(
            load_merl(&mut Cursor::new(&bytes)),
            Err(Error::Data(_))
        ));
    }
}
