//! Tabulated isotropic BRDFs in the half-angle parameterization, synthetic
//! BRDF generation, and assembly of the basis matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::halfangle::{self, to_half_diff, HalfDiffAngles};
use crate::vec3::Vec3;
use crate::{Error, Result};

use std::f64::consts::PI;

/// Table resolution along (theta_h, theta_d, phi_d).
///
/// The MERL database uses 90 x 90 x 180; smaller grids are convenient for
/// tests and synthetic data since the math is resolution-agnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BrdfResolution {
    pub theta_h: usize,
    pub theta_d: usize,
    pub phi_d: usize,
}

impl BrdfResolution {
    pub const MERL: BrdfResolution = BrdfResolution {
        theta_h: 90,
        theta_d: 90,
        phi_d: 180,
    };

    pub fn new(theta_h: usize, theta_d: usize, phi_d: usize) -> Result<Self> {
        if theta_h == 0 || theta_d == 0 || phi_d == 0 {
            return Err(Error::Argument("resolution axes must be nonzero".into()));
        }
        Ok(BrdfResolution {
            theta_h,
            theta_d,
            phi_d,
        })
    }

    /// Number of table entries `p`.
    pub fn entry_count(&self) -> usize {
        self.theta_h * self.theta_d * self.phi_d
    }

    /// Linear index of a bin; theta_h is the outermost axis, phi_d the innermost.
    #[inline]
    pub fn index(&self, th: usize, td: usize, pd: usize) -> usize {
        (th * self.theta_d + td) * self.phi_d + pd
    }

    /// Inverse of [`BrdfResolution::index`].
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let pd = idx % self.phi_d;
        let rest = idx / self.phi_d;
        (rest / self.theta_d, rest % self.theta_d, pd)
    }

    /// Bin index for a pair of local-frame directions.
    #[inline]
    pub fn bin_for_directions(&self, incoming: Vec3, outgoing: Vec3) -> Result<usize> {
        let angles = to_half_diff(incoming, outgoing)?;
        Ok(self.bin_for_angles(angles))
    }

    #[inline]
    pub fn bin_for_angles(&self, angles: HalfDiffAngles) -> usize {
        let th = halfangle::theta_h_index(angles.theta_h, self.theta_h);
        let td = halfangle::theta_d_index(angles.theta_d, self.theta_d);
        let pd = halfangle::phi_d_index(angles.phi_d, self.phi_d);
        self.index(th, td, pd)
    }

    /// Bin-center angles for a linear index.
    pub fn bin_center(&self, idx: usize) -> HalfDiffAngles {
        let (th, td, pd) = self.coords(idx);
        HalfDiffAngles {
            theta_h: halfangle::theta_h_center(th, self.theta_h),
            theta_d: halfangle::theta_d_center(td, self.theta_d),
            phi_d: halfangle::phi_d_center(pd, self.phi_d),
        }
    }
}

/// One color channel of a tabulated BRDF.
///
/// `values` holds linear radiometric BRDF samples (1/sr). Entries flagged
/// invalid (negative values in a MERL file) are stored as 0 in `values` and
/// recorded in the validity mask so error metrics can skip them; the working
/// vector never carries NaN or sentinels.
#[derive(Debug, Clone, PartialEq)]
pub struct BrdfGrid {
    resolution: BrdfResolution,
    values: Vec<f64>,
    /// `None` means every entry is valid.
    mask: Option<Vec<bool>>,
}

impl BrdfGrid {
    pub fn new(resolution: BrdfResolution, values: Vec<f64>) -> Result<Self> {
        if values.len() != resolution.entry_count() {
            return Err(Error::Argument(format!(
                "value count {} does not match resolution product {}",
                values.len(),
                resolution.entry_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("grid contains non-finite entries".into()));
        }
        Ok(BrdfGrid {
            resolution,
            values,
            mask: None,
        })
    }

    /// Builds a grid with an explicit validity mask; invalid entries are
    /// forced to 0 in the working vector.
    pub fn with_mask(
        resolution: BrdfResolution,
        mut values: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        if mask.len() != values.len() {
            return Err(Error::Argument("mask length mismatch".into()));
        }
        for (v, valid) in values.iter_mut().zip(&mask) {
            if !*valid {
                *v = 0.0;
            }
        }
        let mut grid = BrdfGrid::new(resolution, values)?;
        if mask.iter().any(|m| !*m) {
            grid.mask = Some(mask);
        }
        Ok(grid)
    }

    pub fn zeros(resolution: BrdfResolution) -> Self {
        BrdfGrid {
            resolution,
            values: vec![0.0; resolution.entry_count()],
            mask: None,
        }
    }

    pub fn resolution(&self) -> BrdfResolution {
        self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_valid(&self, idx: usize) -> bool {
        self.mask.as_ref().map_or(true, |m| m[idx])
    }

    pub fn validity_mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    /// Nearest-bin lookup for a local-frame direction pair. Invalid bins
    /// return 0; below-horizon directions are a domain error.
    pub fn eval(&self, incoming: Vec3, outgoing: Vec3) -> Result<f64> {
        let idx = self.resolution.bin_for_directions(incoming, outgoing)?;
        if !self.is_valid(idx) {
            return Ok(0.0);
        }
        Ok(self.values[idx])
    }
}

/// Color channel of a basis column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    R,
    G,
    B,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::R, Channel::G, Channel::B];

    pub fn index(self) -> usize {
        match self {
            Channel::R => 0,
            Channel::G => 1,
            Channel::B => 2,
        }
    }
}

/// Identity of one basis column: source material plus color channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisLabel {
    pub material: String,
    pub channel: Channel,
}

/// The basis matrix: measured/synthetic BRDF channels stacked as columns.
#[derive(Debug, Clone)]
pub struct BasisSet {
    resolution: BrdfResolution,
    /// p x n column-major matrix of flattened grids.
    matrix: DMatrix<f64>,
    labels: Vec<BasisLabel>,
}

impl BasisSet {
    /// Stacks grids into columns. Masked entries are already zero in the
    /// grids' working vectors, so columns are plain dense vectors.
    pub fn from_columns(columns: Vec<(BasisLabel, BrdfGrid)>) -> Result<Self> {
        if columns.len() < 2 {
            return Err(Error::Argument(
                "a basis needs at least two columns".into(),
            ));
        }
        let resolution = columns[0].1.resolution();
        if columns.iter().any(|(_, g)| g.resolution() != resolution) {
            return Err(Error::Argument(
                "all basis columns must share one resolution".into(),
            ));
        }
        let p = resolution.entry_count();
        let n = columns.len();
        let mut matrix = DMatrix::zeros(p, n);
        let mut labels = Vec::with_capacity(n);
        for (i, (label, grid)) in columns.into_iter().enumerate() {
            matrix.column_mut(i).copy_from_slice(grid.values());
            labels.push(label);
        }
        Ok(BasisSet {
            resolution,
            matrix,
            labels,
        })
    }

    pub fn resolution(&self) -> BrdfResolution {
        self.resolution
    }

    pub fn entry_count(&self) -> usize {
        self.resolution.entry_count()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[BasisLabel] {
        &self.labels
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.matrix.as_slice()[i * self.entry_count()..(i + 1) * self.entry_count()]
    }

    /// Materials in first-appearance order with their column indices.
    pub fn materials(&self) -> Vec<(String, Vec<usize>)> {
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, label) in self.labels.iter().enumerate() {
            match out.iter_mut().find(|(name, _)| *name == label.material) {
                Some((_, cols)) => cols.push(i),
                None => out.push((label.material.clone(), vec![i])),
            }
        }
        out
    }

    /// New basis keeping only the listed columns (order preserved).
    pub fn subset(&self, keep: &[usize]) -> Result<BasisSet> {
        if keep.len() < 2 {
            return Err(Error::Argument(
                "a basis needs at least two columns".into(),
            ));
        }
        let p = self.entry_count();
        let mut matrix = DMatrix::zeros(p, keep.len());
        let mut labels = Vec::with_capacity(keep.len());
        for (dst, &src) in keep.iter().enumerate() {
            if src >= self.len() {
                return Err(Error::Argument(format!("column {src} out of range")));
            }
            matrix.column_mut(dst).copy_from(&self.matrix.column(src));
            labels.push(self.labels[src].clone());
        }
        Ok(BasisSet {
            resolution: self.resolution,
            matrix,
            labels,
        })
    }

    /// Linear combination of the basis columns (no clamping).
    pub fn combine(&self, weights: &[f64]) -> Result<BrdfGrid> {
        if weights.len() != self.len() {
            return Err(Error::Argument(format!(
                "weight count {} does not match basis size {}",
                weights.len(),
                self.len()
            )));
        }
        let mut values = vec![0.0; self.entry_count()];
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (v, b) in values.iter_mut().zip(self.column(i)) {
                *v += w * b;
            }
        }
        BrdfGrid::new(self.resolution, values)
    }
}

/// Recipe for a synthetic test BRDF: Lambertian term plus Blinn-Phong
/// half-angle lobes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBrdfSpec {
    /// Diffuse albedo per channel, each in [0, 1].
    pub diffuse_albedo: [f64; 3],
    /// `(specular_albedo_rgb, exponent)` lobes; exponents must be positive.
    pub lobes: Vec<([f64; 3], f64)>,
}

impl SyntheticBrdfSpec {
    pub fn validate(&self) -> Result<()> {
        if self.diffuse_albedo.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Argument("diffuse albedo outside [0, 1]".into()));
        }
        for (albedo, exponent) in &self.lobes {
            if albedo.iter().any(|a| *a < 0.0 || !a.is_finite()) {
                return Err(Error::Argument("negative specular albedo".into()));
            }
            if !(*exponent > 0.0) {
                return Err(Error::Argument("lobe exponent must be positive".into()));
            }
        }
        let diffuse_zero = self.diffuse_albedo.iter().all(|a| *a == 0.0);
        let lobes_zero = self
            .lobes
            .iter()
            .all(|(a, _)| a.iter().all(|c| *c == 0.0));
        if diffuse_zero && lobes_zero {
            return Err(Error::Argument("spec is identically zero".into()));
        }
        Ok(())
    }

    /// BRDF value at given half/difference angles for one channel.
    pub fn eval_channel(&self, channel: usize, theta_h: f64) -> f64 {
        let mut value = self.diffuse_albedo[channel] / PI;
        for (albedo, exponent) in &self.lobes {
            value += albedo[channel] * (exponent + 2.0) / (2.0 * PI)
                * theta_h.cos().max(0.0).powf(*exponent);
        }
        value
    }
}

/// Samples a synthetic spec at the bin centers of the half-angle grid,
/// returning one grid per color channel.
pub fn synthesize(spec: &SyntheticBrdfSpec, resolution: BrdfResolution) -> Result<[BrdfGrid; 3]> {
    spec.validate()?;
    let p = resolution.entry_count();
    let mut channels = [vec![0.0; p], vec![0.0; p], vec![0.0; p]];
    // The lobe model only depends on theta_h, so fill one slab per bin.
    for th in 0..resolution.theta_h {
        let theta_h = halfangle::theta_h_center(th, resolution.theta_h);
        let start = resolution.index(th, 0, 0);
        let end = resolution.index(th, resolution.theta_d - 1, resolution.phi_d - 1);
        for c in 0..3 {
            let value = spec.eval_channel(c, theta_h);
            for v in &mut channels[c][start..=end] {
                *v = value;
            }
        }
    }
    let [r, g, b] = channels;
    Ok([
        BrdfGrid::new(resolution, r)?,
        BrdfGrid::new(resolution, g)?,
        BrdfGrid::new(resolution, b)?,
    ])
}

/// Directional-hemispherical reflectance of a grid for a given outgoing
/// direction, by quadrature over the incident hemisphere. Used by tests as
/// an energy oracle; quadrature is a plain (theta, phi) product rule.
pub fn directional_hemispherical(grid: &BrdfGrid, outgoing: Vec3, steps: usize) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..steps {
        let theta = (i as f64 + 0.5) / steps as f64 * (PI / 2.0);
        let d_theta = PI / 2.0 / steps as f64;
        for j in 0..2 * steps {
            let phi = (j as f64 + 0.5) / (2 * steps) as f64 * (2.0 * PI);
            let d_phi = 2.0 * PI / (2 * steps) as f64;
            let dir = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
            let value = grid.eval(dir, outgoing)?;
            total += value * theta.cos() * theta.sin() * d_theta * d_phi;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::halfangle::from_half_diff;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn small_res() -> BrdfResolution {
        BrdfResolution::new(16, 16, 16).unwrap()
    }

    #[test]
    fn index_round_trips() {
        let res = BrdfResolution::new(4, 5, 6).unwrap();
        for idx in 0..res.entry_count() {
            let (th, td, pd) = res.coords(idx);
            assert_eq!(res.index(th, td, pd), idx);
        }
    }

    #[test]
    fn lambertian_albedo_cancels_pi() {
        let spec = SyntheticBrdfSpec {
            diffuse_albedo: [1.0, 1.0, 1.0],
            lobes: vec![],
        };
        let [r, _, _] = synthesize(&spec, small_res()).unwrap();
        for v in r.values() {
            assert_relative_eq!(*v, 1.0 / PI, epsilon = 1e-15);
            assert_relative_eq!(v * PI, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn lobe_peak_matches_closed_form() {
        let res = small_res();
        let k = 40.0;
        let spec = SyntheticBrdfSpec {
            diffuse_albedo: [0.2, 0.2, 0.2],
            lobes: vec![([0.5, 0.5, 0.5], k)],
        };
        let [r, _, _] = synthesize(&spec, res).unwrap();
        let peak_center = crate::halfangle::theta_h_center(0, res.theta_h);
        let expected = 0.2 / PI + 0.5 * (k + 2.0) / (2.0 * PI) * peak_center.cos().powf(k);
        assert_relative_eq!(r.values()[0], expected, epsilon = 1e-12);
        // Bin-center tolerance against the exact peak value at theta_h = 0.
        let at_zero = 0.2 / PI + 0.5 * (k + 2.0) / (2.0 * PI);
        assert_relative_eq!(r.values()[0], at_zero, max_relative = 1e-3);
    }

    /// Directional-hemispherical reflectance of one half-angle lobe viewed
    /// along the normal, in units of the lobe albedo. With the outgoing
    /// direction on the normal, theta_h is half the incident polar angle, so
    /// the integral has a closed form (and the lobe carries roughly four
    /// times its nominal albedo: a half-angle lobe is about 4x wider in
    /// incident solid angle than a full-angle lobe of the same exponent).
    fn half_angle_lobe_reflectance(k: f64) -> f64 {
        let a = 2.0 * (1.0 - 0.5f64.powf((k + 4.0) / 2.0)) / (k + 4.0);
        let b = (1.0 - 0.5f64.powf((k + 2.0) / 2.0)) / (k + 2.0);
        4.0 * (k + 2.0) * (a - b)
    }

    #[test]
    fn synthesized_energy_matches_quadrature_oracle() {
        let res = BrdfResolution::new(64, 8, 8).unwrap();
        for k in [10.0, 100.0] {
            let spec = SyntheticBrdfSpec {
                diffuse_albedo: [0.3, 0.3, 0.3],
                lobes: vec![([0.4, 0.4, 0.4], k)],
            };
            let [r, _, _] = synthesize(&spec, res).unwrap();
            let refl = directional_hemispherical(&r, [0.0, 0.0, 1.0], 512).unwrap();
            let expected = 0.3 + 0.4 * half_angle_lobe_reflectance(k);
            assert_relative_eq!(refl, expected, max_relative = 0.02);
            // Energy envelope of the lobe family.
            assert!(refl <= 0.3 + 4.0 * 0.4);
        }
    }

    #[test]
    fn eval_constant_grid_returns_constant() {
        let res = small_res();
        let grid = BrdfGrid::new(res, vec![2.5; res.entry_count()]).unwrap();
        for theta in [0.1f64, 0.5, 1.2] {
            for phi in [0.0f64, 1.0, 3.0] {
                let wi = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
                let wo = [0.2, -0.1, (1.0_f64 - 0.05).sqrt()];
                assert_eq!(grid.eval(wi, wo).unwrap(), 2.5);
            }
        }
    }

    #[test]
    fn eval_is_reciprocal() {
        let res = small_res();
        let values: Vec<f64> = (0..res.entry_count()).map(|i| i as f64).collect();
        let grid = BrdfGrid::new(res, values).unwrap();
        let wi = [0.3, 0.2, (1.0_f64 - 0.13).sqrt()];
        let wo = [-0.5, 0.1, (1.0_f64 - 0.26).sqrt()];
        assert_eq!(grid.eval(wi, wo).unwrap(), grid.eval(wo, wi).unwrap());
    }

    #[test]
    fn eval_synthetic_at_bin_centers_matches_analytic() {
        let res = small_res();
        let spec = SyntheticBrdfSpec {
            diffuse_albedo: [0.5, 0.4, 0.3],
            lobes: vec![([0.2, 0.2, 0.2], 12.0)],
        };
        let [r, _, _] = synthesize(&spec, res).unwrap();
        // Keep away from the grazing cutoff where the reconstructed pair can
        // leave the upper hemisphere.
        for th in 0..res.theta_h / 2 {
            for td in 0..res.theta_d / 2 {
                for pd in [0usize, 7, 15] {
                    let idx = res.index(th, td, pd);
                    let center = res.bin_center(idx);
                    let (wi, wo) = from_half_diff(center);
                    if wi[2] <= 1e-6 || wo[2] <= 1e-6 {
                        continue;
                    }
                    let looked_up = r.eval(wi, wo).unwrap();
                    let analytic = spec.eval_channel(0, center.theta_h);
                    assert_relative_eq!(looked_up, analytic, max_relative = 1e-10);
                }
            }
        }
    }

    #[test]
    fn bin_round_trip_below_grazing() {
        let res = small_res();
        let grazing_th = res.theta_h - 3;
        let grazing_td = res.theta_d - 3;
        for th in 0..grazing_th {
            for td in 0..grazing_td {
                for pd in 0..res.phi_d {
                    let idx = res.index(th, td, pd);
                    let (wi, wo) = from_half_diff(res.bin_center(idx));
                    if wi[2] <= 0.0 || wo[2] <= 0.0 {
                        continue;
                    }
                    let back = res.bin_for_directions(wi, wo).unwrap();
                    assert_eq!(back, idx, "bin ({th},{td},{pd}) did not round-trip");
                }
            }
        }
    }

    #[test]
    fn combine_one_hot_returns_column() {
        let res = small_res();
        let specs = [
            SyntheticBrdfSpec {
                diffuse_albedo: [0.8, 0.1, 0.1],
                lobes: vec![],
            },
            SyntheticBrdfSpec {
                diffuse_albedo: [0.1, 0.1, 0.8],
                lobes: vec![([0.3, 0.3, 0.3], 25.0)],
            },
        ];
        let mut columns = Vec::new();
        for (i, spec) in specs.iter().enumerate() {
            let [r, _, _] = synthesize(spec, res).unwrap();
            columns.push((
                BasisLabel {
                    material: format!("m{i}"),
                    channel: Channel::R,
                },
                r,
            ));
        }
        let basis = BasisSet::from_columns(columns.clone()).unwrap();
        let col0 = basis.combine(&[1.0, 0.0]).unwrap();
        assert_eq!(col0.values(), columns[0].1.values());
        let zero = basis.combine(&[0.0, 0.0]).unwrap();
        assert!(zero.values().iter().all(|v| *v == 0.0));

        // Direct elementwise oracle for a two-term mix.
        let mixed = basis.combine(&[0.3, 0.7]).unwrap();
        for i in 0..res.entry_count() {
            let expected = 0.3 * columns[0].1.values()[i] + 0.7 * columns[1].1.values()[i];
            assert_relative_eq!(mixed.values()[i], expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn combine_rejects_length_mismatch() {
        let res = small_res();
        let spec = SyntheticBrdfSpec {
            diffuse_albedo: [0.5, 0.5, 0.5],
            lobes: vec![],
        };
        let [r, g, _] = synthesize(&spec, res).unwrap();
        let basis = BasisSet::from_columns(vec![
            (
                BasisLabel {
                    material: "a".into(),
                    channel: Channel::R,
                },
                r,
            ),
            (
                BasisLabel {
                    material: "a".into(),
                    channel: Channel::G,
                },
                g,
            ),
        ])
        .unwrap();
        assert!(basis.combine(&[1.0]).is_err());
    }

    #[test]
    fn masked_entries_are_zeroed_and_skipped() {
        let res = BrdfResolution::new(2, 2, 2).unwrap();
        let mut mask = vec![true; 8];
        mask[3] = false;
        let grid = BrdfGrid::with_mask(res, vec![1.0; 8], mask).unwrap();
        assert_eq!(grid.values()[3], 0.0);
        assert!(!grid.is_valid(3));
        assert!(grid.is_valid(0));
    }

    proptest! {
        #[test]
        fn combine_is_linear(
            w1 in proptest::collection::vec(-2.0..2.0f64, 3),
            w2 in proptest::collection::vec(-2.0..2.0f64, 3),
            alpha in -2.0..2.0f64,
            beta in -2.0..2.0f64,
        ) {
            let res = BrdfResolution::new(4, 4, 4).unwrap();
            let mut columns = Vec::new();
            for i in 0..3usize {
                let spec = SyntheticBrdfSpec {
                    diffuse_albedo: [0.2 + 0.2 * i as f64, 0.3, 0.4],
                    lobes: vec![([0.1 * i as f64, 0.05, 0.0], 5.0 + i as f64)],
                };
                let [r, _, _] = synthesize(&spec, res).unwrap();
                columns.push((BasisLabel { material: format!("m{i}"), channel: Channel::R }, r));
            }
            let basis = BasisSet::from_columns(columns).unwrap();
            let mixed: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = basis.combine(&mixed).unwrap();
            let u = basis.combine(&w1).unwrap();
            let v = basis.combine(&w2).unwrap();
            for i in 0..res.entry_count() {
                let rhs = alpha * u.values()[i] + beta * v.values()[i];
                let scale = rhs.abs().max(1.0);
                prop_assert!((lhs.values()[i] - rhs).abs() <= 1e-12 * scale);
            }
        }
    }
}
