//! Distant natural lighting loaded from HDR light-probe images.
//!
//! A probe image becomes a quadrature rule over the sphere: every texel
//! carries a unit direction and a solid angle so that sums of
//! `radiance * f(direction) * solid_angle` approximate integrals against the
//! lighting. Two mappings are supported: Debevec's angular map and the
//! equirectangular latitude-longitude layout.

use serde::{Deserialize, Serialize};

use crate::img::LinearImage;
use crate::vec3::Vec3;
use crate::{hdr, pfm, Error, Result};

use std::f64::consts::PI;

/// Texel-to-direction convention of a probe image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mapping {
    /// Debevec angular map: the unit disc covers the sphere, radius is
    /// proportional to the angle from the view direction (0,0,-1).
    AngularMap,
    /// Equirectangular: rows are latitude (poles at +/-Y), columns longitude.
    LatLong,
}

impl std::str::FromStr for Mapping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "angular" | "angular_map" => Ok(Mapping::AngularMap),
            "latlong" | "lat_long" => Ok(Mapping::LatLong),
            other => Err(Error::Config(format!("unknown mapping {other:?}"))),
        }
    }
}

/// Distant lighting as a texel grid with precomputed quadrature data.
#[derive(Debug, Clone)]
pub struct EnvironmentMap {
    width: usize,
    height: usize,
    mapping: Mapping,
    /// Linear RGB radiance per texel, row-major.
    texels: Vec<[f64; 3]>,
    directions: Vec<Vec3>,
    solid_angles: Vec<f64>,
}

/// Relative slack allowed on the solid-angle closure over the sphere.
pub const CLOSURE_SLACK: f64 = 0.02;

impl EnvironmentMap {
    /// Builds the quadrature data for a decoded image.
    pub fn from_image(image: LinearImage, mapping: Mapping) -> Result<Self> {
        let LinearImage {
            width,
            height,
            texels,
        } = image;
        if width * height < 2 {
            return Err(Error::Argument(
                "probe needs at least two texels".into(),
            ));
        }
        for (i, t) in texels.iter().enumerate() {
            if t.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Data(format!(
                    "radiance at texel {i} is negative or non-finite"
                )));
            }
        }

        let mut directions = vec![[0.0, 0.0, -1.0]; texels.len()];
        let mut solid_angles = vec![0.0; texels.len()];
        match mapping {
            Mapping::LatLong => {
                let d_phi = 2.0 * PI / width as f64;
                for y in 0..height {
                    let theta = PI * (y as f64 + 0.5) / height as f64;
                    // Exact band integral keeps the closure at 4*pi.
                    let band = (PI * y as f64 / height as f64).cos()
                        - (PI * (y + 1) as f64 / height as f64).cos();
                    for x in 0..width {
                        let phi = 2.0 * PI * (x as f64 + 0.5) / width as f64;
                        let idx = y * width + x;
                        directions[idx] = [
                            theta.sin() * phi.sin(),
                            theta.cos(),
                            theta.sin() * phi.cos(),
                        ];
                        solid_angles[idx] = d_phi * band;
                    }
                }
            }
            Mapping::AngularMap => {
                let du = 2.0 / width as f64;
                let dv = 2.0 / height as f64;
                for y in 0..height {
                    let v = 1.0 - 2.0 * (y as f64 + 0.5) / height as f64;
                    for x in 0..width {
                        let u = 2.0 * (x as f64 + 0.5) / width as f64 - 1.0;
                        let idx = y * width + x;
                        let r = (u * u + v * v).sqrt();
                        if r > 1.0 {
                            // Corner texels outside the disc carry no light.
                            continue;
                        }
                        let psi = PI * r;
                        let (sin_psi, cos_psi) = psi.sin_cos();
                        // sin(pi r)/r tends to pi at the image center.
                        let sinc = if r < 1e-9 { PI } else { sin_psi / r };
                        directions[idx] = if r < 1e-9 {
                            [0.0, 0.0, -1.0]
                        } else {
                            [u / r * sin_psi, v / r * sin_psi, -cos_psi]
                        };
                        solid_angles[idx] = PI * sinc * du * dv;
                    }
                }
            }
        }

        let total: f64 = solid_angles.iter().sum();
        let sphere = 4.0 * PI;
        if (total - sphere).abs() > CLOSURE_SLACK * sphere {
            return Err(Error::Data(format!(
                "solid angles sum to {total:.4}, expected {sphere:.4} within {CLOSURE_SLACK:.0e}"
            )));
        }

        Ok(EnvironmentMap {
            width,
            height,
            mapping,
            texels,
            directions,
            solid_angles,
        })
    }

    /// Decodes an RGBE or PFM byte stream (selected by magic bytes) and
    /// builds the probe.
    pub fn load_probe(data: &[u8], mapping: Mapping) -> Result<Self> {
        let image = if data.starts_with(b"#?") {
            hdr::decode(data)?
        } else if data.starts_with(b"PF") || data.starts_with(b"Pf") {
            pfm::decode(data)?
        } else {
            return Err(Error::Format(
                "unknown magic bytes: expected Radiance RGBE or PFM".into(),
            ));
        };
        EnvironmentMap::from_image(image, mapping)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mapping(&self) -> Mapping {
        self.mapping
    }

    pub fn texel_count(&self) -> usize {
        self.texels.len()
    }

    pub fn radiance(&self, index: usize) -> Result<[f64; 3]> {
        self.texels
            .get(index)
            .copied()
            .ok_or_else(|| Error::Argument(format!("texel index {index} out of range")))
    }

    pub fn texel_direction(&self, index: usize) -> Result<Vec3> {
        self.directions
            .get(index)
            .copied()
            .ok_or_else(|| Error::Argument(format!("texel index {index} out of range")))
    }

    pub fn texel_solid_angle(&self, index: usize) -> Result<f64> {
        self.solid_angles
            .get(index)
            .copied()
            .ok_or_else(|| Error::Argument(format!("texel index {index} out of range")))
    }

    /// Iterator over `(radiance, direction, solid_angle)` of texels that
    /// carry light (angular-map corners are skipped).
    pub fn lit_texels(&self) -> impl Iterator<Item = ([f64; 3], Vec3, f64)> + '_ {
        self.texels
            .iter()
            .zip(&self.directions)
            .zip(&self.solid_angles)
            .filter(|(_, &sa)| sa > 0.0)
            .map(|((&t, &d), &sa)| (t, d, sa))
    }

    /// Irradiance onto a surface with the given normal (quadrature sum).
    pub fn irradiance(&self, normal: Vec3) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (radiance, dir, sa) in self.lit_texels() {
            let cos = crate::vec3::dot(dir, normal);
            if cos > 0.0 {
                for c in 0..3 {
                    out[c] += radiance[c] * cos * sa;
                }
            }
        }
        out
    }

    /// Copy with every radiance multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0) || !factor.is_finite() {
            return Err(Error::Argument("scale factor must be finite and >= 0".into()));
        }
        let mut out = self.clone();
        for t in &mut out.texels {
            for c in t.iter_mut() {
                *c *= factor;
            }
        }
        Ok(out)
    }

    /// The decoded texels as an image (for re-encoding).
    pub fn to_image(&self) -> LinearImage {
        LinearImage {
            width: self.width,
            height: self.height,
            texels: self.texels.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::vec3::length;

    fn uniform(width: usize, height: usize, value: f64) -> LinearImage {
        LinearImage::new(width, height, vec![[value; 3]; width * height]).unwrap()
    }

    fn gradient(width: usize, height: usize) -> LinearImage {
        let mut texels = Vec::new();
        for y in 0..height {
            for x in 0..width {
                let u = (x as f64 + 0.5) / width as f64;
                let v = (y as f64 + 0.5) / height as f64;
                texels.push([0.4 + 0.5 * u, 0.9 - 0.3 * v, 0.6 + 0.2 * u * v]);
            }
        }
        LinearImage::new(width, height, texels).unwrap()
    }

    #[test]
    fn latlong_closure_is_exact() {
        for (w, h) in [(2usize, 1usize), (8, 4), (64, 32)] {
            let map = EnvironmentMap::from_image(uniform(w, h, 1.0), Mapping::LatLong).unwrap();
            let total: f64 = (0..map.texel_count())
                .map(|i| map.texel_solid_angle(i).unwrap())
                .sum();
            assert_relative_eq!(total, 4.0 * PI, max_relative = 1e-12);
        }
    }

    #[test]
    fn single_texel_latlong_is_rejected() {
        assert!(EnvironmentMap::from_image(uniform(1, 1, 1.0), Mapping::LatLong).is_err());
        assert!(EnvironmentMap::from_image(uniform(2, 1, 1.0), Mapping::LatLong).is_ok());
    }

    #[test]
    fn angular_map_closure_within_slack() {
        let map = EnvironmentMap::from_image(uniform(64, 64, 1.0), Mapping::AngularMap).unwrap();
        let total: f64 = (0..map.texel_count())
            .map(|i| map.texel_solid_angle(i).unwrap())
            .sum();
        assert_relative_eq!(total, 4.0 * PI, max_relative = CLOSURE_SLACK);
    }

    #[test]
    fn angular_center_points_at_viewer() {
        let map = EnvironmentMap::from_image(uniform(65, 65, 1.0), Mapping::AngularMap).unwrap();
        let center = map.texel_direction(32 * 65 + 32).unwrap();
        assert_relative_eq!(center[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(center[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(center[2], -1.0, epsilon = 1e-12);
        // Corner texels are outside the disc and carry no solid angle.
        assert_eq!(map.texel_solid_angle(0).unwrap(), 0.0);
    }

    #[test]
    fn latlong_center_row_is_on_equator() {
        let map = EnvironmentMap::from_image(uniform(8, 5, 1.0), Mapping::LatLong).unwrap();
        let dir = map.texel_direction(2 * 8).unwrap();
        assert_relative_eq!(dir[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(length(dir), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn directions_are_unit() {
        for mapping in [Mapping::LatLong, Mapping::AngularMap] {
            let map = EnvironmentMap::from_image(uniform(32, 32, 1.0), mapping).unwrap();
            for i in 0..map.texel_count() {
                if map.texel_solid_angle(i).unwrap() > 0.0 {
                    assert!((length(map.texel_direction(i).unwrap()) - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn uniform_probe_gives_pi_irradiance() {
        let map = EnvironmentMap::from_image(uniform(64, 32, 1.0), Mapping::LatLong).unwrap();
        for normal in [[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [0.6, 0.0, 0.8]] {
            let e = map.irradiance(normal);
            for c in e {
                assert_relative_eq!(c, PI, max_relative = 0.02);
            }
        }
    }

    #[test]
    fn quadrature_matches_analytic_integral() {
        // f = cos^2(theta) against the y axis integrates to 4*pi/3 over the
        // sphere; the texel sum must agree within 1%.
        for mapping in [Mapping::LatLong, Mapping::AngularMap] {
            let map = EnvironmentMap::from_image(uniform(96, 96, 1.0), mapping).unwrap();
            let mut total = 0.0;
            for (_, dir, sa) in map.lit_texels() {
                total += dir[1] * dir[1] * sa;
            }
            assert_relative_eq!(total, 4.0 * PI / 3.0, max_relative = 0.01);
        }
    }

    #[test]
    fn rgbe_and_pfm_decode_agree() {
        let img = gradient(32, 16);
        let from_hdr =
            EnvironmentMap::load_probe(&hdr::encode(&img), Mapping::LatLong).unwrap();
        let from_pfm =
            EnvironmentMap::load_probe(&pfm::encode(&img), Mapping::LatLong).unwrap();
        for i in 0..from_hdr.texel_count() {
            let a = from_hdr.radiance(i).unwrap();
            let b = from_pfm.radiance(i).unwrap();
            for c in 0..3 {
                let rel = (a[c] - b[c]).abs() / b[c].abs().max(1e-12);
                assert!(rel <= 0.01, "texel {i} channel {c}: {} vs {}", a[c], b[c]);
            }
        }
    }

    #[test]
    fn probe_decoding_is_idempotent() {
        let img = gradient(16, 8);
        let first = EnvironmentMap::load_probe(&hdr::encode(&img), Mapping::LatLong).unwrap();
        let second =
            EnvironmentMap::load_probe(&hdr::encode(&first.to_image()), Mapping::LatLong)
                .unwrap();
        for i in 0..first.texel_count() {
            assert_eq!(first.radiance(i).unwrap(), second.radiance(i).unwrap());
        }
    }

    #[test]
    fn unknown_magic_is_rejected() {
        assert!(matches!(
            EnvironmentMap::load_probe(b"GIF89a....", Mapping::LatLong),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn out_of_range_index_is_an_error() {
        let map = EnvironmentMap::from_image(uniform(4, 2, 1.0), Mapping::LatLong).unwrap();
        assert!(map.texel_direction(8).is_err());
        assert!(map.texel_solid_angle(8).is_err());
    }

    #[test]
    fn negative_radiance_is_rejected() {
        let img = LinearImage::new(2, 1, vec![[1.0, -0.5, 0.0], [0.0; 3]]).unwrap();
        assert!(matches!(
            EnvironmentMap::from_image(img, Mapping::LatLong),
            Err(Error::Data(_))
        ));
    }
}
