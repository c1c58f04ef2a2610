//! Strictly linear reflectance-map renderer.
//!
//! For a fixed probe and sphere geometry, the rendering integral collapses
//! into a sparse matrix from BRDF bins to on-sphere pixels: every
//! (pixel, texel) pair contributes `cos(theta_i) * solid_angle * radiance`
//! to the bin the direction pair falls into. Rendering any BRDF is then a
//! matrix-vector product, which makes basis observations exact linear
//! functions of the BRDF weights rather than approximations.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::brdf::{BasisSet, BrdfResolution};
use crate::envlight::EnvironmentMap;
use crate::halfangle::to_half_diff;
use crate::img::LinearImage;
use crate::vec3::{cross, dot, normalize, Vec3};
use crate::{Error, Result};

/// Orthographic sphere geometry: pixel centers inside the unit disc carry
/// the sphere normal at that point, the viewer sits along +Z.
#[derive(Debug, Clone)]
pub struct SphereGeometry {
    image_size: usize,
    /// Row-major flag per pixel.
    on_sphere: Vec<bool>,
    /// Pixel index of each on-sphere row, ascending.
    pixels: Vec<usize>,
    /// Unit normal per on-sphere row.
    normals: Vec<Vec3>,
}

pub const VIEW_DIRECTION: Vec3 = [0.0, 0.0, 1.0];

impl SphereGeometry {
    pub fn new(image_size: usize) -> Result<Self> {
        if image_size < 2 {
            return Err(Error::Argument("image size must be at least 2".into()));
        }
        let mut on_sphere = vec![false; image_size * image_size];
        let mut pixels = Vec::new();
        let mut normals = Vec::new();
        for y in 0..image_size {
            let v = 1.0 - 2.0 * (y as f64 + 0.5) / image_size as f64;
            for x in 0..image_size {
                let u = 2.0 * (x as f64 + 0.5) / image_size as f64 - 1.0;
                let rr = u * u + v * v;
                if rr < 1.0 {
                    let idx = y * image_size + x;
                    on_sphere[idx] = true;
                    pixels.push(idx);
                    normals.push([u, v, (1.0 - rr).sqrt()]);
                }
            }
        }
        Ok(SphereGeometry {
            image_size,
            on_sphere,
            pixels,
            normals,
        })
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    /// Number of on-sphere pixels (rows of the transport matrix).
    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    pub fn normal(&self, row: usize) -> Vec3 {
        self.normals[row]
    }

    pub fn pixel_of_row(&self, row: usize) -> usize {
        self.pixels[row]
    }

    pub fn is_on_sphere(&self, pixel: usize) -> bool {
        self.on_sphere[pixel]
    }

    /// Deterministic tangent frame for a normal: the reference axis is +Z
    /// unless the normal is nearly parallel to it, then +X.
    pub fn tangent_frame(normal: Vec3) -> (Vec3, Vec3) {
        let reference = if normal[2].abs() > 0.999 {
            [1.0, 0.0, 0.0]
        } else {
            [0.0, 0.0, 1.0]
        };
        let tangent = normalize(cross(reference, normal));
        let bitangent = cross(normal, tangent);
        (tangent, bitangent)
    }
}

/// Identifies the inputs a transport operator was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportProvenance {
    pub lighting_id: String,
    pub image_size: usize,
    pub resolution: BrdfResolution,
}

/// The linear map from BRDF bins to on-sphere pixels for one lighting and
/// geometry. Stored as CSR with one shared sparsity pattern and a weight
/// per color channel (the probe radiance is folded in per channel).
#[derive(Debug, Clone)]
pub struct TransportOperator {
    resolution: BrdfResolution,
    rows: usize,
    row_offsets: Vec<u64>,
    bins: Vec<u32>,
    /// Channel weights, laid out like `bins`.
    weights: [Vec<f64>; 3],
    provenance: TransportProvenance,
}

/// Per-pixel quadrature accumulation. Bins are visited in texel order but
/// emitted sorted, so the result is independent of the thread count.
fn transport_row(
    env: &EnvironmentMap,
    resolution: BrdfResolution,
    normal: Vec3,
    scratch: &mut Vec<[f64; 3]>,
    touched: &mut Vec<u32>,
) -> (Vec<u32>, Vec<[f64; 3]>) {
    let (tangent, bitangent) = SphereGeometry::tangent_frame(normal);
    let view_local = [
        dot(VIEW_DIRECTION, tangent),
        dot(VIEW_DIRECTION, bitangent),
        dot(VIEW_DIRECTION, normal),
    ];
    touched.clear();
    for (radiance, dir, sa) in env.lit_texels() {
        let cos_in = dot(dir, normal);
        if cos_in <= 0.0 {
            continue;
        }
        if radiance[0] == 0.0 && radiance[1] == 0.0 && radiance[2] == 0.0 {
            continue;
        }
        let incoming_local = [dot(dir, tangent), dot(dir, bitangent), cos_in];
        // Both directions are in the upper hemisphere by construction.
        let angles = to_half_diff(incoming_local, view_local)
            .expect("transport directions must be above the horizon");
        let bin = resolution.bin_for_angles(angles);
        let quadrature = cos_in * sa;
        let cell = &mut scratch[bin];
        if cell[0] == 0.0 && cell[1] == 0.0 && cell[2] == 0.0 {
            touched.push(bin as u32);
        }
        for c in 0..3 {
            cell[c] += quadrature * radiance[c];
        }
    }
    touched.sort_unstable();
    let mut bins = Vec::with_capacity(touched.len());
    let mut weights = Vec::with_capacity(touched.len());
    for &bin in touched.iter() {
        let cell = &mut scratch[bin as usize];
        bins.push(bin);
        weights.push(*cell);
        *cell = [0.0; 3];
    }
    (bins, weights)
}

/// Builds the transport operator by direct summation over probe texels.
pub fn build_transport(
    env: &EnvironmentMap,
    geometry: &SphereGeometry,
    resolution: BrdfResolution,
    lighting_id: &str,
) -> TransportOperator {
    let entry_count = resolution.entry_count();
    let rows: Vec<(Vec<u32>, Vec<[f64; 3]>)> = (0..geometry.pixel_count())
        .into_par_iter()
        .map_init(
            || (vec![[0.0f64; 3]; entry_count], Vec::<u32>::new()),
            |(scratch, touched), row| {
                transport_row(env, resolution, geometry.normal(row), scratch, touched)
            },
        )
        .collect();

    let nnz: usize = rows.iter().map(|(b, _)| b.len()).sum();
    let mut row_offsets = Vec::with_capacity(rows.len() + 1);
    let mut bins = Vec::with_capacity(nnz);
    let mut weights = [
        Vec::with_capacity(nnz),
        Vec::with_capacity(nnz),
        Vec::with_capacity(nnz),
    ];
    row_offsets.push(0u64);
    for (row_bins, row_weights) in rows {
        bins.extend_from_slice(&row_bins);
        for w in row_weights {
            weights[0].push(w[0]);
            weights[1].push(w[1]);
            weights[2].push(w[2]);
        }
        row_offsets.push(bins.len() as u64);
    }

    TransportOperator {
        resolution,
        rows: geometry.pixel_count(),
        row_offsets,
        bins,
        weights,
        provenance: TransportProvenance {
            lighting_id: lighting_id.to_string(),
            image_size: geometry.image_size(),
            resolution,
        },
    }
}

impl TransportOperator {
    pub fn resolution(&self) -> BrdfResolution {
        self.resolution
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn nnz(&self) -> usize {
        self.bins.len()
    }

    pub fn provenance(&self) -> &TransportProvenance {
        &self.provenance
    }

    pub(crate) fn raw_parts(&self) -> (&[u64], &[u32], &[Vec<f64>; 3]) {
        (&self.row_offsets, &self.bins, &self.weights)
    }

    pub(crate) fn from_raw_parts(
        resolution: BrdfResolution,
        rows: usize,
        row_offsets: Vec<u64>,
        bins: Vec<u32>,
        weights: [Vec<f64>; 3],
        provenance: TransportProvenance,
    ) -> Result<Self> {
        if row_offsets.len() != rows + 1
            || row_offsets.first() != Some(&0)
            || row_offsets.last().copied() != Some(bins.len() as u64)
            || row_offsets.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::Format("inconsistent transport row offsets".into()));
        }
        let p = resolution.entry_count() as u32;
        if bins.iter().any(|&b| b >= p) {
            return Err(Error::Format("transport bin index out of range".into()));
        }
        if weights.iter().any(|w| w.len() != bins.len()) {
            return Err(Error::Format("transport weight length mismatch".into()));
        }
        Ok(TransportOperator {
            resolution,
            rows,
            row_offsets,
            bins,
            weights,
            provenance,
        })
    }

    /// Renders one channel: `y = T_c * brdf`.
    pub fn render(&self, channel: usize, brdf: &[f64]) -> Result<DVector<f64>> {
        if channel >= 3 {
            return Err(Error::Argument("channel must be 0, 1, or 2".into()));
        }
        if brdf.len() != self.resolution.entry_count() {
            return Err(Error::Argument(format!(
                "BRDF vector length {} does not match table size {}",
                brdf.len(),
                self.resolution.entry_count()
            )));
        }
        let weights = &self.weights[channel];
        let mut out = DVector::zeros(self.rows);
        for row in 0..self.rows {
            let span = self.row_offsets[row] as usize..self.row_offsets[row + 1] as usize;
            let mut acc = 0.0;
            for e in span {
                acc += weights[e] * brdf[self.bins[e] as usize];
            }
            out[row] = acc;
        }
        Ok(out)
    }

    /// Renders an RGB BRDF (one table per channel) to a reflectance map.
    pub fn render_rgb(
        &self,
        geometry: &SphereGeometry,
        channels: [&[f64]; 3],
    ) -> Result<ReflectanceMap> {
        let r = self.render(0, channels[0])?;
        let g = self.render(1, channels[1])?;
        let b = self.render(2, channels[2])?;
        ReflectanceMap::from_channel_vectors(geometry, &r, &g, &b)
    }

    /// Renders every basis column under every channel of the lighting.
    pub fn render_basis(&self, basis: &BasisSet) -> Result<ObservationMatrix> {
        if basis.resolution() != self.resolution {
            return Err(Error::Argument(
                "basis resolution does not match transport operator".into(),
            ));
        }
        let n = basis.len();
        // Transposed copy makes per-bin rows contiguous.
        let basis_t = basis.matrix().transpose();
        let mut matrices: Vec<DMatrix<f64>> = (0..3)
            .map(|_| DMatrix::zeros(self.rows, n))
            .collect();
        let row_results: Vec<[Vec<f64>; 3]> = (0..self.rows)
            .into_par_iter()
            .map(|row| {
                let span =
                    self.row_offsets[row] as usize..self.row_offsets[row + 1] as usize;
                let mut acc = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
                for e in span {
                    let bin_row = basis_t.column(self.bins[e] as usize);
                    for c in 0..3 {
                        let w = self.weights[c][e];
                        if w == 0.0 {
                            continue;
                        }
                        for (i, acc_i) in acc[c].iter_mut().enumerate() {
                            *acc_i += w * bin_row[i];
                        }
                    }
                }
                acc
            })
            .collect();
        for (row, acc) in row_results.into_iter().enumerate() {
            for c in 0..3 {
                for i in 0..n {
                    matrices[c][(row, i)] = acc[c][i];
                }
            }
        }
        let b = matrices.pop().unwrap();
        let g = matrices.pop().unwrap();
        let r = matrices.pop().unwrap();
        Ok(ObservationMatrix {
            channels: [r, g, b],
        })
    }
}

/// Basis observations: one `pixels x n` matrix per color channel, columns
/// aligned with the basis columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    pub channels: [DMatrix<f64>; 3],
}

impl ObservationMatrix {
    pub fn rows(&self) -> usize {
        self.channels[0].nrows()
    }

    pub fn len(&self) -> usize {
        self.channels[0].ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Restriction to a subset of basis columns.
    pub fn subset(&self, keep: &[usize]) -> Result<ObservationMatrix> {
        for &c in keep {
            if c >= self.len() {
                return Err(Error::Argument(format!("column {c} out of range")));
            }
        }
        let pick = |m: &DMatrix<f64>| m.select_columns(keep.iter());
        Ok(ObservationMatrix {
            channels: [
                pick(&self.channels[0]),
                pick(&self.channels[1]),
                pick(&self.channels[2]),
            ],
        })
    }
}

/// HDR image of a sphere: one radiance triple per pixel plus the off-sphere
/// mask and an optional per-pixel measurement validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectanceMap {
    image_size: usize,
    pixels: Vec<[f64; 3]>,
    on_sphere: Vec<bool>,
    validity: Option<Vec<bool>>,
}

impl ReflectanceMap {
    pub fn from_channel_vectors(
        geometry: &SphereGeometry,
        r: &DVector<f64>,
        g: &DVector<f64>,
        b: &DVector<f64>,
    ) -> Result<Self> {
        let rows = geometry.pixel_count();
        if r.len() != rows || g.len() != rows || b.len() != rows {
            return Err(Error::Argument(
                "channel vector length does not match geometry".into(),
            ));
        }
        let mut pixels = vec![[0.0; 3]; geometry.image_size() * geometry.image_size()];
        for row in 0..rows {
            pixels[geometry.pixel_of_row(row)] = [r[row], g[row], b[row]];
        }
        Ok(ReflectanceMap {
            image_size: geometry.image_size(),
            pixels,
            on_sphere: geometry.on_sphere.clone(),
            validity: None,
        })
    }

    /// Interprets a decoded HDR image as a reflectance map over the given
    /// geometry. Off-sphere pixels are ignored.
    pub fn from_image(geometry: &SphereGeometry, image: &LinearImage) -> Result<Self> {
        if image.width != geometry.image_size() || image.height != geometry.image_size() {
            return Err(Error::Argument(format!(
                "image is {}x{} but geometry expects {size}x{size}",
                image.width,
                image.height,
                size = geometry.image_size()
            )));
        }
        let mut pixels = vec![[0.0; 3]; image.texels.len()];
        for row in 0..geometry.pixel_count() {
            let idx = geometry.pixel_of_row(row);
            let t = image.texels[idx];
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("non-finite radiance at pixel {idx}")));
            }
            pixels[idx] = t;
        }
        Ok(ReflectanceMap {
            image_size: geometry.image_size(),
            pixels,
            on_sphere: geometry.on_sphere.clone(),
            validity: None,
        })
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.image_size + x]
    }

    pub fn is_on_sphere(&self, x: usize, y: usize) -> bool {
        self.on_sphere[y * self.image_size + x]
    }

    /// Attaches a validity mask (true = usable measurement), given per
    /// pixel in row-major image order.
    pub fn with_validity(mut self, validity: Vec<bool>) -> Result<Self> {
        if validity.len() != self.pixels.len() {
            return Err(Error::Argument("validity mask length mismatch".into()));
        }
        self.validity = Some(validity);
        Ok(self)
    }

    pub fn validity(&self) -> Option<&[bool]> {
        self.validity.as_deref()
    }

    /// One channel as a vector over on-sphere rows of `geometry`.
    pub fn channel_vector(&self, geometry: &SphereGeometry, channel: usize) -> Result<DVector<f64>> {
        if geometry.image_size() != self.image_size {
            return Err(Error::Argument("geometry size mismatch".into()));
        }
        let mut out = DVector::zeros(geometry.pixel_count());
        for row in 0..geometry.pixel_count() {
            out[row] = self.pixels[geometry.pixel_of_row(row)][channel];
        }
        Ok(out)
    }

    /// Per-row validity flags aligned with `channel_vector` (all true when
    /// no mask is attached).
    pub fn row_validity(&self, geometry: &SphereGeometry) -> Vec<bool> {
        (0..geometry.pixel_count())
            .map(|row| {
                self.validity
                    .as_ref()
                    .map_or(true, |m| m[geometry.pixel_of_row(row)])
            })
            .collect()
    }

    pub fn to_linear_image(&self) -> LinearImage {
        LinearImage {
            width: self.image_size,
            height: self.image_size,
            texels: self.pixels.clone(),
        }
    }

    /// Gamma tonemap for display; never used in estimation.
    pub fn tonemap(&self, gamma: f64, exposure: f64) -> image::RgbImage {
        let size = self.image_size as u32;
        image::RgbImage::from_fn(size, size, |x, y| {
            let p = self.pixel(x as usize, y as usize);
            image::Rgb([
                tonemap_value(p[0], gamma, exposure),
                tonemap_value(p[1], gamma, exposure),
                tonemap_value(p[2], gamma, exposure),
            ])
        })
    }
}

/// Clips to [0, 1] after exposure, applies gamma, quantizes to 8 bits.
pub fn tonemap_value(value: f64, gamma: f64, exposure: f64) -> u8 {
    let clipped = (value * exposure).clamp(0.0, 1.0);
    (clipped.powf(1.0 / gamma) * 255.0).round() as u8
}
