//! Versioned binary cache for precomputed pipeline artifacts.
//!
//! Three record kinds share one container: transport operators, basis
//! observation matrices, and fitted models (subspace + mixture +
//! assignment). Records carry a 32-byte key over their inputs so a stale
//! cache is detected instead of silently reused. All integers are
//! little-endian; every length is validated against the remaining payload
//! before any allocation.

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::brdf::{BasisLabel, BrdfResolution, Channel};
use crate::gmm::{ClassAssignment, GmmComponent, GmmModel};
use crate::render::{ObservationMatrix, TransportOperator, TransportProvenance};
use crate::subspace::Subspace;
use crate::{Error, Result};

use std::path::Path;

const MAGIC: &[u8; 8] = b"RMCACHE\x01";

const KIND_TRANSPORT: u8 = 1;
const KIND_OBSERVATION: u8 = 2;
const KIND_MODEL: u8 = 3;

pub type CacheKey = [u8; 32];

/// SHA-256 over a sequence of input byte strings (lengths included, so the
/// concatenation is unambiguous).
pub fn cache_key(parts: &[&[u8]]) -> CacheKey {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hasher.finalize().into()
}

/// Fitted clustering artifacts cached together (stage one of the pipeline).
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub seed: u64,
    pub subspace: Subspace,
    pub model: GmmModel,
    pub assignment: ClassAssignment,
    pub labels: Vec<BasisLabel>,
}

/// Basis observations cached per probe (stage two of the pipeline).
#[derive(Debug, Clone)]
pub struct ObservationBundle {
    pub lighting_id: String,
    pub observations: ObservationMatrix,
    pub labels: Vec<BasisLabel>,
}

#[derive(Debug, Clone)]
pub enum CachePayload {
    Transport(TransportOperator),
    Observation(ObservationBundle),
    Model(ModelBundle),
}

#[derive(Debug, Clone)]
pub struct CacheFile {
    pub key: CacheKey,
    pub payload: CachePayload,
}

// ---------------------------------------------------------------------------
// Encoding

struct Writer {
    out: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.out.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }
    fn f64_slice(&mut self, vs: &[f64]) {
        self.out.reserve(vs.len() * 8);
        for v in vs {
            self.f64(*v);
        }
    }
    fn str(&mut self, s: &str) {
        let bytes = s.as_bytes();
        self.u32(bytes.len() as u32);
        self.out.extend_from_slice(bytes);
    }
    fn label(&mut self, label: &BasisLabel) {
        self.str(&label.material);
        self.u8(label.channel.index() as u8);
    }
    fn matrix(&mut self, m: &DMatrix<f64>) {
        self.u64(m.nrows() as u64);
        self.u64(m.ncols() as u64);
        self.f64_slice(m.as_slice());
    }
}

pub fn encode(file: &CacheFile) -> Vec<u8> {
    let mut w = Writer { out: Vec::new() };
    w.out.extend_from_slice(MAGIC);
    let kind = match &file.payload {
        CachePayload::Transport(_) => KIND_TRANSPORT,
        CachePayload::Observation(_) => KIND_OBSERVATION,
        CachePayload::Model(_) => KIND_MODEL,
    };
    w.u8(kind);
    w.out.extend_from_slice(&file.key);
    match &file.payload {
        CachePayload::Transport(t) => encode_transport(&mut w, t),
        CachePayload::Observation(o) => encode_observation(&mut w, o),
        CachePayload::Model(m) => encode_model(&mut w, m),
    }
    w.out
}

fn encode_transport(w: &mut Writer, t: &TransportOperator) {
    let prov = t.provenance();
    w.str(&prov.lighting_id);
    w.u32(prov.image_size as u32);
    let res = t.resolution();
    w.u32(res.theta_h as u32);
    w.u32(res.theta_d as u32);
    w.u32(res.phi_d as u32);
    w.u64(t.rows() as u64);
    let (offsets, bins, weights) = t.raw_parts();
    w.u64(bins.len() as u64);
    for &o in offsets {
        w.u64(o);
    }
    for &b in bins {
        w.u32(b);
    }
    for channel in weights {
        w.f64_slice(channel);
    }
}

fn encode_observation(w: &mut Writer, o: &ObservationBundle) {
    w.str(&o.lighting_id);
    w.u32(o.labels.len() as u32);
    for label in &o.labels {
        w.label(label);
    }
    for c in 0..3 {
        w.matrix(&o.observations.channels[c]);
    }
}

fn encode_model(w: &mut Writer, m: &ModelBundle) {
    w.u64(m.seed);
    w.matrix(m.subspace.basis());
    w.u32(m.subspace.singular_values().len() as u32);
    w.f64_slice(m.subspace.singular_values());
    w.matrix(m.subspace.right_vectors());

    w.u32(m.model.component_count() as u32);
    for comp in m.model.components() {
        w.f64(comp.weight);
        w.u32(comp.mean.len() as u32);
        w.f64_slice(comp.mean.as_slice());
        w.matrix(&comp.covariance);
    }
    w.u32(m.model.fit_log().len() as u32);
    w.f64_slice(m.model.fit_log());

    w.u32(m.assignment.class_count() as u32);
    w.u32(m.assignment.len() as u32);
    for &c in m.assignment.classes() {
        w.u32(c as u32);
    }
    w.u32(m.labels.len() as u32);
    for label in &m.labels {
        w.label(label);
    }
}

// ---------------------------------------------------------------------------
// Decoding

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn bytes(&mut self, len: usize) -> Result<&'a [u8]> {
        if len > self.remaining() {
            return Err(Error::Format("cache record truncated".into()));
        }
        let s = &self.data[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    /// Length-checked count of fixed-size items still decodable.
    fn checked_count(&self, count: u64, item_size: usize) -> Result<usize> {
        let need = count
            .checked_mul(item_size as u64)
            .ok_or_else(|| Error::Format("cache length overflow".into()))?;
        if need > self.remaining() as u64 {
            return Err(Error::Format("cache record truncated".into()));
        }
        Ok(count as usize)
    }

    fn f64_vec(&mut self, count: u64) -> Result<Vec<f64>> {
        let count = self.checked_count(count, 8)?;
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            out.push(self.f64()?);
        }
        Ok(out)
    }

    fn str(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.bytes(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::Format("cache string is not UTF-8".into()))
    }

    fn label(&mut self) -> Result<BasisLabel> {
        let material = self.str()?;
        let channel = match self.u8()? {
            0 => Channel::R,
            1 => Channel::G,
            2 => Channel::B,
            other => return Err(Error::Format(format!("bad channel tag {other}"))),
        };
        Ok(BasisLabel { material, channel })
    }

    fn matrix(&mut self) -> Result<DMatrix<f64>> {
        let rows = self.u64()?;
        let cols = self.u64()?;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format("matrix size overflow".into()))?;
        let values = self.f64_vec(count)?;
        Ok(DMatrix::from_vec(rows as usize, cols as usize, values))
    }
}

pub fn decode(data: &[u8]) -> Result<CacheFile> {
    let mut r = Reader { data, pos: 0 };
    if r.bytes(8)? != MAGIC {
        return Err(Error::Format("not a cache file".into()));
    }
    let kind = r.u8()?;
    let key: CacheKey = r.bytes(32)?.try_into().unwrap();
    let payload = match kind {
        KIND_TRANSPORT => CachePayload::Transport(decode_transport(&mut r)?),
        KIND_OBSERVATION => CachePayload::Observation(decode_observation(&mut r)?),
        KIND_MODEL => CachePayload::Model(decode_model(&mut r)?),
        other => return Err(Error::Format(format!("unknown cache kind {other}"))),
    };
    if r.remaining() != 0 {
        return Err(Error::Format("trailing bytes after cache payload".into()));
    }
    Ok(CacheFile { key, payload })
}

fn decode_transport(r: &mut Reader) -> Result<TransportOperator> {
    let lighting_id = r.str()?;
    let image_size = r.u32()? as usize;
    let th = r.u32()? as usize;
    let td = r.u32()? as usize;
    let pd = r.u32()? as usize;
    let resolution = BrdfResolution::new(th, td, pd)?;
    let rows = r.u64()?;
    let nnz = r.u64()?;
    let offset_count = r.checked_count(
        rows.checked_add(1)
            .ok_or_else(|| Error::Format("row count overflow".into()))?,
        8,
    )?;
    let mut offsets = Vec::with_capacity(offset_count);
    for _ in 0..offset_count {
        offsets.push(r.u64()?);
    }
    let bin_count = r.checked_count(nnz, 4)?;
    let mut bins = Vec::with_capacity(bin_count);
    for _ in 0..bin_count {
        bins.push(r.u32()?);
    }
    let weights = [r.f64_vec(nnz)?, r.f64_vec(nnz)?, r.f64_vec(nnz)?];
    TransportOperator::from_raw_parts(
        resolution,
        rows as usize,
        offsets,
        bins,
        weights,
        TransportProvenance {
            lighting_id,
            image_size,
            resolution,
        },
    )
}

fn decode_observation(r: &mut Reader) -> Result<ObservationBundle> {
    let lighting_id = r.str()?;
    let label_count = r.u32()?;
    let mut labels = Vec::new();
    for _ in 0..label_count {
        labels.push(r.label()?);
    }
    let a = r.matrix()?;
    let b = r.matrix()?;
    let c = r.matrix()?;
    if a.shape() != b.shape() || a.shape() != c.shape() {
        return Err(Error::Format("observation channels disagree on shape".into()));
    }
    if a.ncols() != labels.len() {
        return Err(Error::Format("observation column count != label count".into()));
    }
    Ok(ObservationBundle {
        lighting_id,
        observations: ObservationMatrix {
            channels: [a, b, c],
        },
        labels,
    })
}

fn decode_model(r: &mut Reader) -> Result<ModelBundle> {
    let seed = r.u64()?;
    let basis = r.matrix()?;
    let sv_count = r.u32()?;
    let singular_values = r.f64_vec(sv_count as u64)?;
    let right_vectors = r.matrix()?;
    if basis.ncols() > basis.nrows() || basis.ncols() == 0 {
        return Err(Error::Format("implausible subspace shape".into()));
    }
    let subspace = Subspace::from_raw_parts(basis, singular_values, right_vectors);

    let k = r.u32()?;
    let mut components = Vec::new();
    let mut dim = None;
    for _ in 0..k {
        let weight = r.f64()?;
        let mean_len = r.u32()?;
        let mean = DVector::from_vec(r.f64_vec(mean_len as u64)?);
        let covariance = r.matrix()?;
        if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
            return Err(Error::Format("covariance shape mismatch".into()));
        }
        match dim {
            None => dim = Some(mean.len()),
            Some(d) if d != mean.len() => {
                return Err(Error::Format("component dimensions disagree".into()))
            }
            _ => {}
        }
        components.push(GmmComponent {
            weight,
            mean,
            covariance,
        });
    }
    if components.is_empty() {
        return Err(Error::Format("model has no components".into()));
    }
    let fit_len = r.u32()?;
    let fit_log = r.f64_vec(fit_len as u64)?;
    let model = GmmModel::from_components(components, fit_log);

    let class_count = r.u32()? as usize;
    let point_count = r.u32()?;
    let points = r.checked_count(point_count as u64, 4)?;
    let mut classes = Vec::with_capacity(points);
    for _ in 0..points {
        let c = r.u32()? as usize;
        if c >= class_count {
            return Err(Error::Format("class id out of range".into()));
        }
        classes.push(c);
    }
    if class_count != model.component_count() {
        return Err(Error::Format(
            "assignment class count != component count".into(),
        ));
    }
    let assignment = ClassAssignment::from_classes(classes, class_count);

    let label_count = r.u32()?;
    let mut labels = Vec::new();
    for _ in 0..label_count {
        labels.push(r.label()?);
    }
    if labels.len() != assignment.len() {
        return Err(Error::Format("label count != assignment length".into()));
    }
    Ok(ModelBundle {
        seed,
        subspace,
        model,
        assignment,
        labels,
    })
}

// ---------------------------------------------------------------------------
// Files

/// Writes bytes atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .ok_or_else(|| Error::Argument("cache path has no parent".into()))?;
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("cache"),
        std::process::id()
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save(path: &Path, file: &CacheFile) -> Result<()> {
    write_atomic(path, &encode(file))
}

/// Loads a cache file and verifies its key; a mismatch means the inputs
/// changed and the record must be rebuilt.
pub fn load(path: &Path, expected_key: &CacheKey) -> Result<Option<CachePayload>> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let file = decode(&bytes)?;
    if &file.key != expected_key {
        return Ok(None);
    }
    Ok(Some(file.payload))
}
