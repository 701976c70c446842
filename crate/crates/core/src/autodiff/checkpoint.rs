//! Model checkpoint container.
//!
//! Layout: `b"PTPP"` magic, `u16` format version (LE), `u32` metadata length
//! (LE), metadata JSON, then tensor payloads as little-endian `f32` words.
//! The metadata carries the run config, the vocabulary hash, and a directory
//! of tensor names/shapes/offsets sorted by name, so saving the same store
//! twice yields identical bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ParamStore, Tensor, TensorError};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PTPP";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic {0:?})")]
    BadMagic(Vec<u8>),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u16),
    #[error("checkpoint metadata: {0}")]
    Meta(#[from] serde_json::Error),
    #[error("checkpoint truncated: expected {expect} bytes, found {got}")]
    Truncated { expect: usize, got: usize },
    #[error("checkpoint directory invalid: {0}")]
    BadDirectory(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// User-facing metadata stored alongside the tensors.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckpointMeta {
    /// Run configuration as recorded by the trainer.
    pub config: serde_json::Value,
    /// Hash of the vocabulary the tensors were trained against.
    pub vocab_hash: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct DirEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    count: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct FileMeta {
    config: serde_json::Value,
    vocab_hash: String,
    tensors: Vec<DirEntry>,
}

/// Serializes `params` plus `meta` to `path`.
pub fn save_checkpoint(path: &Path, meta: &CheckpointMeta, params: &ParamStore) -> Result<(), CheckpointError> {
    let mut names: Vec<&str> = params.iter().map(|(n, _)| n).collect();
    names.sort_unstable();

    let mut dir = Vec::with_capacity(names.len());
    let mut offset = 0u64;
    for name in &names {
        let t = params.by_name(name).expect("name taken from the store");
        let count = t.values().len() as u64;
        dir.push(DirEntry { name: name.to_string(), shape: t.shape().to_vec(), offset, count });
        offset += count * 4;
    }
    let file_meta = FileMeta { config: meta.config.clone(), vocab_hash: meta.vocab_hash.clone(), tensors: dir };
    let meta_bytes = serde_json::to_vec(&file_meta)?;

    let mut out = Vec::with_capacity(4 + 2 + 4 + meta_bytes.len() + offset as usize);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta_bytes);
    for name in &names {
        let t = params.by_name(name).unwrap();
        for &v in t.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a checkpoint back into a parameter store (tensors in directory
/// order, all trainable) plus its metadata. Values round-trip bit exactly.
pub fn load_checkpoint(path: &Path) -> Result<(CheckpointMeta, ParamStore), CheckpointError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 10 {
        return Err(CheckpointError::Truncated { expect: 10, got: bytes.len() });
    }
    if &bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic(bytes[0..4].to_vec()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let meta_len = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
    let payload_start = 10 + meta_len;
    if bytes.len() < payload_start {
        return Err(CheckpointError::Truncated { expect: payload_start, got: bytes.len() });
    }
    let file_meta: FileMeta = serde_json::from_slice(&bytes[10..payload_start])?;

    let payload = &bytes[payload_start..];
    let mut store = ParamStore::new();
    for entry in &file_meta.tensors {
        let numel: usize = entry.shape.iter().product();
        if numel as u64 != entry.count {
            return Err(CheckpointError::BadDirectory(format!(
                "tensor {:?}: shape {:?} disagrees with count {}",
                entry.name, entry.shape, entry.count
            )));
        }
        let start = entry.offset as usize;
        let end = start + entry.count as usize * 4;
        if end > payload.len() {
            return Err(CheckpointError::Truncated { expect: payload_start + end, got: bytes.len() });
        }
        let values: Vec<f32> = payload[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let tensor = Tensor::param(entry.shape.clone(), values)?;
        store
            .insert(&entry.name, tensor)
            .map_err(|_| CheckpointError::BadDirectory(format!("duplicate tensor name {:?}", entry.name)))?;
    }
    Ok((CheckpointMeta { config: file_meta.config, vocab_hash: file_meta.vocab_hash }, store))
}
