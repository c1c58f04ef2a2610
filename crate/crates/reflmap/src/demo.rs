//! Desk-scale demo dataset: a designed synthetic basis of three material
//! groups and two procedural light probes.
//!
//! The groups mirror the broad strokes of measured material families:
//! matte (Lambertian with a faint wide lobe), glossy (clear diffuse body
//! plus a medium lobe), and sharp specular (dark body, tight bright lobe).
//! Group parameters overlap enough within a group that any member is well
//! approximated by the others, which is what leave-one-out evaluation
//! needs.

use crate::brdf::{synthesize, BasisLabel, BasisSet, Channel, SyntheticBrdfSpec};
use crate::brdf::BrdfResolution;
use crate::img::LinearImage;
use crate::vec3::{dot, normalize, Vec3};
use crate::{merl, Result};

use std::f64::consts::PI;
use std::path::Path;

pub const GROUPS: [&str; 3] = ["matte", "glossy", "specular"];
pub const MATERIALS_PER_GROUP: usize = 10;

/// Hue wheel used to give each material a distinct body color.
fn body_color(i: usize, saturation: f64, value: f64) -> [f64; 3] {
    let h = (i as f64 * 0.618_034) % 1.0 * 6.0;
    let x = value * (1.0 - saturation * (h % 2.0 - 1.0).abs());
    let base = match h as usize {
        0 => [value, x, value * (1.0 - saturation)],
        1 => [x, value, value * (1.0 - saturation)],
        2 => [value * (1.0 - saturation), value, x],
        3 => [value * (1.0 - saturation), x, value],
        4 => [x, value * (1.0 - saturation), value],
        _ => [value, value * (1.0 - saturation), x],
    };
    base
}

/// Synthetic spec of one demo material. `group` in 0..3, `i` in
/// 0..MATERIALS_PER_GROUP.
pub fn material_spec(group: usize, i: usize) -> SyntheticBrdfSpec {
    let t = i as f64 / (MATERIALS_PER_GROUP - 1) as f64;
    match group {
        // Matte: colored Lambertian body, faint wide sheen.
        0 => SyntheticBrdfSpec {
            diffuse_albedo: body_color(i, 0.55, 0.35 + 0.4 * t),
            lobes: vec![([0.01, 0.01, 0.01], 2.0 + 3.0 * t)],
        },
        // Glossy: mid-tone body with a medium lobe (log-spaced exponents
        // so neighbors overlap).
        1 => {
            let exponent = 15.0 * (60.0f64 / 15.0).powf(t);
            let gain = 0.05 + 0.03 * t;
            SyntheticBrdfSpec {
                diffuse_albedo: body_color(i + 3, 0.45, 0.2 + 0.25 * t),
                lobes: vec![([gain, gain, gain], exponent)],
            }
        }
        // Sharp specular: dark body, tight bright lobe.
        2 => {
            let exponent = 150.0 * (450.0f64 / 150.0).powf(t);
            let gain = 0.10 + 0.05 * t;
            // A touch of color in the lobe, like tinted metals.
            let tint = body_color(i + 6, 0.25, 1.0);
            SyntheticBrdfSpec {
                diffuse_albedo: [0.02 + 0.02 * t, 0.02 + 0.015 * t, 0.02 + 0.01 * t],
                lobes: vec![([gain * tint[0], gain * tint[1], gain * tint[2]], exponent)],
            }
        }
        _ => panic!("group out of range"),
    }
}

pub fn material_name(group: usize, i: usize) -> String {
    format!("{}-{:02}", GROUPS[group], i)
}

/// Designed group of a material name, if it follows the demo naming.
pub fn group_of(name: &str) -> Option<usize> {
    GROUPS.iter().position(|g| name.starts_with(g))
}

/// Builds the full designed basis (3 groups x 10 materials x 3 channels).
pub fn designed_basis(resolution: BrdfResolution) -> Result<BasisSet> {
    let mut columns = Vec::new();
    for group in 0..GROUPS.len() {
        for i in 0..MATERIALS_PER_GROUP {
            let spec = material_spec(group, i);
            let [r, g, b] = synthesize(&spec, resolution)?;
            let name = material_name(group, i);
            for (channel, grid) in [(Channel::R, r), (Channel::G, g), (Channel::B, b)] {
                columns.push((
                    BasisLabel {
                        material: name.clone(),
                        channel,
                    },
                    grid,
                ));
            }
        }
    }
    BasisSet::from_columns(columns)
}

/// A directional bump on the sphere: `intensity * exp(kappa * (d*c - 1))`.
fn bump(dir: Vec3, center: Vec3, kappa: f64, intensity: [f64; 3]) -> [f64; 3] {
    let a = (kappa * (dot(dir, center) - 1.0)).exp();
    [intensity[0] * a, intensity[1] * a, intensity[2] * a]
}

fn latlong_dir(x: usize, y: usize, width: usize, height: usize) -> Vec3 {
    let theta = PI * (y as f64 + 0.5) / height as f64;
    let phi = 2.0 * PI * (x as f64 + 0.5) / width as f64;
    [theta.sin() * phi.sin(), theta.cos(), theta.sin() * phi.cos()]
}

/// Indoor-style probe: warm ambient, a broad window, two tight lights.
pub fn probe_studio(width: usize, height: usize) -> LinearImage {
    let mut texels = Vec::with_capacity(width * height);
    let window = normalize([0.4, 0.25, 0.88]);
    let lamp_a = normalize([-0.6, 0.7, 0.3]);
    let lamp_b = normalize([0.2, 0.85, -0.4]);
    for y in 0..height {
        for x in 0..width {
            let d = latlong_dir(x, y, width, height);
            let sky = 0.12 + 0.08 * (d[1] + 1.0) / 2.0;
            let mut t = [sky * 1.0, sky * 0.95, sky * 0.9];
            for (c, v) in bump(d, window, 12.0, [1.6, 1.7, 1.9]).iter().enumerate() {
                t[c] += v;
            }
            for (c, v) in bump(d, lamp_a, 90.0, [14.0, 13.0, 11.0]).iter().enumerate() {
                t[c] += v;
            }
            for (c, v) in bump(d, lamp_b, 160.0, [9.0, 10.0, 12.0]).iter().enumerate() {
                t[c] += v;
            }
            texels.push(t);
        }
    }
    LinearImage {
        width,
        height,
        texels,
    }
}

/// Outdoor-style probe: sky gradient, ground bounce, a sun-like peak.
pub fn probe_garden(width: usize, height: usize) -> LinearImage {
    let mut texels = Vec::with_capacity(width * height);
    let sun = normalize([-0.45, 0.6, -0.66]);
    let tree = normalize([0.8, 0.05, 0.59]);
    for y in 0..height {
        for x in 0..width {
            let d = latlong_dir(x, y, width, height);
            let up = (d[1] + 1.0) / 2.0;
            let mut t = [
                0.06 + 0.22 * up,
                0.08 + 0.24 * up,
                0.10 + 0.34 * up,
            ];
            // Greenish ground bounce.
            let down = 1.0 - up;
            t[0] += 0.10 * down;
            t[1] += 0.14 * down;
            t[2] += 0.06 * down;
            for (c, v) in bump(d, sun, 220.0, [28.0, 26.0, 22.0]).iter().enumerate() {
                t[c] += v;
            }
            for (c, v) in bump(d, tree, 25.0, [0.5, 0.8, 0.4]).iter().enumerate() {
                t[c] += v;
            }
            texels.push(t);
        }
    }
    LinearImage {
        width,
        height,
        texels,
    }
}

/// Writes the demo tree: `basis/*.binary` MERL files plus `probes/*.hdr`.
pub fn write_demo_tree(
    root: &Path,
    resolution: BrdfResolution,
    probe_size: (usize, usize),
) -> Result<()> {
    let basis_dir = root.join("basis");
    std::fs::create_dir_all(&basis_dir)?;
    for group in 0..GROUPS.len() {
        for i in 0..MATERIALS_PER_GROUP {
            let spec = material_spec(group, i);
            let [r, g, b] = synthesize(&spec, resolution)?;
            let mut bytes = Vec::new();
            merl::save_merl(&mut bytes, &r, &g, &b)?;
            let path = basis_dir.join(format!("{}.binary", material_name(group, i)));
            crate::cache::write_atomic(&path, &bytes)?;
        }
    }
    let probe_dir = root.join("probes");
    std::fs::create_dir_all(&probe_dir)?;
    let (w, h) = probe_size;
    crate::cache::write_atomic(
        &probe_dir.join("studio.hdr"),
        &crate::hdr::encode(&probe_studio(w, h)),
    )?;
    crate::cache::write_atomic(
        &probe_dir.join("garden.hdr"),
        &crate::hdr::encode(&probe_garden(w, h)),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envlight::{EnvironmentMap, Mapping};

    #[test]
    fn all_specs_validate() {
        for group in 0..3 {
            for i in 0..MATERIALS_PER_GROUP {
                material_spec(group, i).validate().unwrap();
            }
        }
    }

    #[test]
    fn basis_has_expected_shape() {
        let res = BrdfResolution::new(8, 8, 8).unwrap();
        let basis = designed_basis(res).unwrap();
        assert_eq!(basis.len(), 90);
        assert_eq!(basis.materials().len(), 30);
        assert_eq!(group_of("glossy-03"), Some(1));
        assert_eq!(group_of("weird"), None);
    }

    #[test]
    fn probes_load_as_environments() {
        for img in [probe_studio(32, 16), probe_garden(32, 16)] {
            let bytes = crate::hdr::encode(&img);
            let env = EnvironmentMap::load_probe(&bytes, Mapping::LatLong).unwrap();
            assert_eq!(env.texel_count(), 32 * 16);
            // Lighting must be reasonably bright for stable estimation.
            let e = env.irradiance([0.0, 0.0, 1.0]);
            assert!(e.iter().all(|v| *v > 0.1), "irradiance {e:?}");
        }
    }

    #[test]
    fn materials_stay_below_unit_reflectance() {
        // Keeps rendered maps in a sane HDR range under the demo probes.
        let res = BrdfResolution::new(16, 16, 16).unwrap();
        for group in 0..3 {
            for i in 0..MATERIALS_PER_GROUP {
                let spec = material_spec(group, i);
                let [r, _, _] = synthesize(&spec, res).unwrap();
                let refl =
                    crate::brdf::directional_hemispherical(&r, [0.0, 0.0, 1.0], 128).unwrap();
                assert!(refl < 1.0, "{}-{} reflectance {refl}", GROUPS[group], i);
            }
        }
    }
}
