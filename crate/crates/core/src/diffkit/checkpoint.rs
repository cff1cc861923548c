//! Tensor container: a magic tag, a little-endian `u64` manifest length, a
//! JSON manifest (`meta` plus per-tensor name, shape, byte offset and
//! length), then the raw little-endian `f32` blob.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{DiffError, Float, Tensor};

pub const MODEL_MAGIC: &[u8; 5] = b"EKGC1";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub bytes: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub meta: Value,
    pub tensors: Vec<TensorEntry>,
}

/// Named `f32` tensors plus free-form metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: Value,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn new(meta: Value) -> Self {
        Self {
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push<F: Float>(&mut self, name: impl Into<String>, t: &Tensor<F>) {
        self.tensors.push((name.into(), t.cast()));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn write_to(&self, magic: &[u8; 5], mut w: impl Write) -> Result<(), DiffError> {
        let mut offset = 0;
        let entries: Vec<TensorEntry> = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let bytes = t.numel() * 4;
                let e = TensorEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                    bytes,
                };
                offset += bytes;
                e
            })
            .collect();
        let manifest = serde_json::to_vec(&Manifest {
            meta: self.meta.clone(),
            tensors: entries,
        })
        .map_err(|e| DiffError::Checkpoint(e.to_string()))?;
        w.write_all(magic)?;
        w.write_all(&(manifest.len() as u64).to_le_bytes())?;
        w.write_all(&manifest)?;
        let mut blob = Vec::with_capacity(offset);
        for (_, t) in &self.tensors {
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&blob)?;
        Ok(())
    }

    pub fn to_bytes(&self, magic: &[u8; 5]) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(magic, &mut out).expect("in-memory write");
        out
    }

    pub fn read_from(magic: &[u8; 5], mut r: impl Read) -> Result<Self, DiffError> {
        let mut tag = [0u8; 5];
        r.read_exact(&mut tag)?;
        if &tag != magic {
            return Err(DiffError::Checkpoint(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&tag),
                String::from_utf8_lossy(magic)
            )));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut manifest = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut manifest)?;
        let manifest: Manifest = serde_json::from_slice(&manifest).map_err(|e| DiffError::Checkpoint(e.to_string()))?;
        let mut blob = Vec::new();
        r.read_to_end(&mut blob)?;
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for e in manifest.tensors {
            let end = e.offset + e.bytes;
            if end > blob.len() || e.bytes % 4 != 0 {
                return Err(DiffError::Checkpoint(format!(
                    "tensor {} spans {}..{end} beyond blob of {} bytes",
                    e.name,
                    e.offset,
                    blob.len()
                )));
            }
            let data = blob[e.offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push((e.name, Tensor::new(e.shape, data)?));
        }
        Ok(Self {
            meta: manifest.meta,
            tensors,
        })
    }
}
