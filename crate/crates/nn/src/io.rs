//! Flat little-endian weight container.
//!
//! ```text
//! offset 0   4 bytes   magic "GCW1"
//! offset 4   u32 LE    header length H
//! offset 8   H bytes   UTF-8 JSON {"meta": <any>, "tensors": [{"name": str, "shape": [u32..]}, ..]}
//! offset 8+H           f32 LE values of every tensor, row-major, in header order
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::params::ParamStore;
use crate::tensor::{numel, Tensor};
use crate::NnError;

pub const MAGIC: &[u8; 4] = b"GCW1";

#[derive(Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Tensor)>,
}

impl Container {
    pub fn new(meta: serde_json::Value) -> Self {
        Container {
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.push((name.into(), t));
    }

    /// Appends every entry of `store` with names prefixed by `prefix`.
    pub fn push_store(&mut self, prefix: &str, store: &ParamStore) {
        for p in store.iter() {
            self.push(format!("{prefix}{}", p.name), p.value.clone());
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Overwrites the values of `store` from entries named `{prefix}{param}`.
    pub fn load_store(&self, prefix: &str, store: &mut ParamStore) -> Result<(), NnError> {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let name = format!("{prefix}{}", store.param(id).name);
            let t = self.get(&name).ok_or_else(|| NnError::MissingTensor(name.clone()))?;
            if t.shape() != store.get(id).shape() {
                return Err(NnError::ShapeMismatch {
                    name,
                    expected: store.get(id).shape().to_vec(),
                    found: t.shape().to_vec(),
                });
            }
            *store.get_mut(id) = t.clone();
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| Entry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let payload: usize = self.tensors.iter().map(|(_, t)| t.len() * 4).sum();
        let mut out = Vec::with_capacity(8 + json.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(NnError::Format("bad magic".into()));
        }
        let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let body = bytes
            .get(8..8 + hlen)
            .ok_or_else(|| NnError::Format("truncated header".into()))?;
        let header: Header =
            serde_json::from_slice(body).map_err(|e| NnError::Format(format!("header: {e}")))?;
        let mut off = 8 + hlen;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let n = numel(&e.shape);
            let raw = bytes
                .get(off..off + 4 * n)
                .ok_or_else(|| NnError::Format(format!("truncated data for {}", e.name)))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((e.name, Tensor::new(&e.shape, data)));
            off += 4 * n;
        }
        if off != bytes.len() {
            return Err(NnError::Format(format!("{} trailing bytes", bytes.len() - off)));
        }
        Ok(Container {
            meta: header.meta,
            tensors,
        })
    }

    /// Writes via a temporary file and rename so readers never see a partial file.
    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let tmp = path.with_extension("partial");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::from_bytes(&fs::read(path)?)
    }
}
