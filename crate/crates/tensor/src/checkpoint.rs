//! Binary checkpoint format.
//!
//! ```text
//! b"SPACCKPT" | u32 LE version | u64 LE header length | header JSON | f32 LE blob
//! ```
//!
//! The header carries the format version, the SHA-256 of the serialized model
//! config, the config itself and a manifest of `(name, shape, offset)` entries.
//! Offsets count `f32` values from the start of the blob; parameters are laid
//! out in name order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"SPACCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub params: Vec<ParamEntry>,
}

/// Hex SHA-256 of the compact JSON form of `config`.
pub fn config_hash(config: &serde_json::Value) -> String {
    let text = serde_json::to_string(config).expect("JSON values always serialize");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn ckpt_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Checkpoint(msg.into()))
}

pub fn write_checkpoint(out: &mut impl Write, store: &ParamStore<f32>, config: &serde_json::Value) -> Result<()> {
    let mut params = Vec::with_capacity(store.len());
    let mut offset = 0;
    for (name, t) in store.iter() {
        params.push(ParamEntry { name: name.to_string(), shape: t.shape().to_vec(), offset });
        offset += t.numel();
    }
    let header = CheckpointHeader {
        version: FORMAT_VERSION,
        config_hash: config_hash(config),
        config: config.clone(),
        params,
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    let mut blob = Vec::with_capacity(offset * 4);
    for (_, t) in store.iter() {
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&blob)?;
    Ok(())
}

pub fn checkpoint_bytes(store: &ParamStore<f32>, config: &serde_json::Value) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, store, config)?;
    Ok(buf)
}

pub fn read_checkpoint(input: &mut impl Read) -> Result<(CheckpointHeader, ParamStore<f32>)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return ckpt_err("bad magic bytes");
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return ckpt_err(format!("unsupported version {version}"));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let len = usize::try_from(u64::from_le_bytes(len)).map_err(|_| Error::Checkpoint("header too large".into()))?;
    let mut header = vec![0u8; len];
    input.read_exact(&mut header)?;
    let header: CheckpointHeader = serde_json::from_slice(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if header.version != version {
        return ckpt_err("header version disagrees with preamble");
    }
    if header.config_hash != config_hash(&header.config) {
        return ckpt_err("config hash mismatch");
    }
    let mut blob = Vec::new();
    input.read_to_end(&mut blob)?;
    if blob.len() % 4 != 0 {
        return ckpt_err("blob length is not a multiple of 4");
    }
    let values: Vec<f32> = blob.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    let mut store = ParamStore::new();
    let mut expected = 0;
    for entry in &header.params {
        let n: usize = entry.shape.iter().product();
        if entry.offset != expected || entry.offset + n > values.len() {
            return ckpt_err(format!("parameter `{}` has an inconsistent offset", entry.name));
        }
        store.insert(&entry.name, Tensor::new(&entry.shape, values[entry.offset..entry.offset + n].to_vec())?)?;
        expected += n;
    }
    if expected != values.len() {
        return ckpt_err(format!("blob holds {} values, manifest describes {expected}", values.len()));
    }
    Ok((header, store))
}
