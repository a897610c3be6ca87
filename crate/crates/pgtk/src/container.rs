//! Model container: magic `PGTK`, u32 format version, u64 length of a
//! JSON metadata document, little-endian f32 tensor payload in manifest
//! order, u64 FNV-1a checksum of the payload. All integers little-endian.

use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use pgtk_core::dsp::NormStats;
use pgtk_core::model::{ConfigError, Model, ModelConfig};
use pgtk_core::Tensor;
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 4] = b"PGTK";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ContainerError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a model file (bad magic)")]
    Magic,
    #[error("unsupported format version {0} (expected {VERSION})")]
    Version(u32),
    #[error("truncated file: {0}")]
    Truncated(&'static str),
    #[error("payload checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    Checksum { stored: u64, computed: u64 },
    #[error("bad metadata: {0}")]
    Metadata(String),
    #[error(transparent)]
    Model(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the payload, in f32 elements.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub config: ModelConfig,
    pub norm_stats: NormStats,
    pub tensors: Vec<TensorEntry>,
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

pub fn encode_model(model: &Model<f32>) -> Vec<u8> {
    let mut tensors = Vec::with_capacity(model.params.len());
    let mut payload = Vec::with_capacity(model.params.numel() * 4);
    let mut offset = 0;
    for (_, name, t) in model.params.iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset,
        });
        offset += t.len();
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let meta = Metadata {
        config: model.config.clone(),
        norm_stats: model.norm_stats.clone(),
        tensors,
    };
    let meta = serde_json::to_vec(&meta).expect("metadata serializes");
    let mut out = Vec::with_capacity(16 + meta.len() + payload.len() + 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&fnv1a(&payload).to_le_bytes());
    out
}

fn take<'a>(buf: &mut &'a [u8], n: usize, what: &'static str) -> Result<&'a [u8], ContainerError> {
    if buf.len() < n {
        return Err(ContainerError::Truncated(what));
    }
    let (head, tail) = buf.split_at(n);
    *buf = tail;
    Ok(head)
}

pub fn decode_model(bytes: &[u8]) -> Result<Model<f32>, ContainerError> {
    let mut buf = bytes;
    if take(&mut buf, 4, "magic")? != MAGIC {
        return Err(ContainerError::Magic);
    }
    let version = u32::from_le_bytes(take(&mut buf, 4, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(ContainerError::Version(version));
    }
    let meta_len = u64::from_le_bytes(take(&mut buf, 8, "metadata length")?.try_into().unwrap());
    let meta_len = usize::try_from(meta_len).map_err(|_| ContainerError::Truncated("metadata"))?;
    let meta: Metadata = serde_json::from_slice(take(&mut buf, meta_len, "metadata")?)
        .map_err(|e| ContainerError::Metadata(e.to_string()))?;
    if buf.len() < 8 {
        return Err(ContainerError::Truncated("checksum"));
    }
    let (payload, checksum) = buf.split_at(buf.len() - 8);
    let stored = u64::from_le_bytes(checksum.try_into().unwrap());
    let computed = fnv1a(payload);
    if stored != computed {
        return Err(ContainerError::Checksum { stored, computed });
    }
    if payload.len() % 4 != 0 {
        return Err(ContainerError::Truncated("payload"));
    }
    let floats: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut tensors = Vec::with_capacity(meta.tensors.len());
    let mut expect_offset = 0;
    for e in &meta.tensors {
        let n: usize = e.shape.iter().product();
        if e.offset != expect_offset || e.offset + n > floats.len() {
            return Err(ContainerError::Metadata(format!(
                "tensor {} at offset {} does not fit the payload",
                e.name, e.offset
            )));
        }
        let t = Tensor::from_vec(&e.shape, floats[e.offset..e.offset + n].to_vec())
            .map_err(|err| ContainerError::Metadata(err.to_string()))?;
        tensors.push((e.name.clone(), t));
        expect_offset += n;
    }
    if expect_offset != floats.len() {
        return Err(ContainerError::Metadata(format!(
            "payload holds {} values, manifest {}",
            floats.len(),
            expect_offset
        )));
    }
    meta.norm_stats
        .validate()
        .map_err(|e| ContainerError::Metadata(e.0))?;
    if meta.norm_stats.mean.len() != meta.config.n_bins {
        return Err(ContainerError::Metadata(format!(
            "norm stats for {} bins, model has {}",
            meta.norm_stats.mean.len(),
            meta.config.n_bins
        )));
    }
    Ok(Model::from_tensors(meta.config, meta.norm_stats, tensors)?)
}

pub fn save_model(model: &Model<f32>, path: &Path) -> Result<(), ContainerError> {
    std::fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model<f32>, ContainerError> {
    decode_model(&std::fs::read(path)?)
}
