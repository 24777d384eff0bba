//! Named-tensor container shared by checkpoints and feature files.
//!
//! Layout: `u64` little-endian manifest length, the JSON manifest, then the
//! little-endian `f32` payload. Manifest offsets are byte offsets into the
//! payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    #[serde(default = "default_true")]
    pub trainable: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format_version: String,
    kind: String,
    meta: Value,
    tensors: Vec<TensorMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub kind: String,
    pub meta: Value,
    pub tensors: Vec<TensorEntry>,
}

impl TensorFile {
    pub fn new(kind: &str, meta: Value) -> Self {
        TensorFile {
            kind: kind.to_string(),
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, shape: Vec<usize>, data: Vec<f32>, trainable: bool) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(TensorEntry {
            name: name.to_string(),
            shape,
            data,
            trainable,
        });
    }

    pub fn get(&self, name: &str) -> Option<&TensorEntry> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0;
        let mut metas = Vec::with_capacity(self.tensors.len());
        for t in &self.tensors {
            metas.push(TensorMeta {
                name: t.name.clone(),
                dtype: "f32".into(),
                shape: t.shape.clone(),
                offset,
                trainable: t.trainable,
            });
            offset += t.data.len() * 4;
        }
        let manifest = Manifest {
            format_version: FORMAT_VERSION.into(),
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors: metas,
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut out = Vec::with_capacity(8 + json.len() + offset);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Format("truncated container: missing manifest length".into()));
        }
        let len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
        if bytes.len() - 8 < len {
            return Err(Error::Format(format!(
                "truncated container: manifest needs {len} bytes, {} available",
                bytes.len() - 8
            )));
        }
        let manifest: Manifest = serde_json::from_slice(&bytes[8..8 + len])?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Version {
                found: manifest.format_version,
                expected: FORMAT_VERSION.into(),
            });
        }
        let payload = &bytes[8 + len..];
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        let mut cursor = 0usize;
        let offsets: Vec<usize> = manifest.tensors.iter().map(|m| m.offset).collect();
        for (i, m) in manifest.tensors.into_iter().enumerate() {
            if m.dtype != "f32" {
                return Err(Error::Unsupported(format!("tensor {}: dtype {}", m.name, m.dtype)));
            }
            if m.shape.is_empty() || m.shape.len() > 3 {
                return Err(Error::Format(format!("tensor {}: rank {} not in 1..=3", m.name, m.shape.len())));
            }
            let n: usize = m.shape.iter().product();
            let end = m.offset.checked_add(n * 4).unwrap_or(usize::MAX);
            if end > payload.len() {
                return Err(Error::Format(format!(
                    "tensor {}: shape {:?} needs bytes {}..{} but payload holds {} (truncated or wrong shape)",
                    m.name,
                    m.shape,
                    m.offset,
                    end,
                    payload.len()
                )));
            }
            if m.offset != cursor {
                return Err(Error::Format(format!("tensor {}: offset {} expected {cursor}", m.name, m.offset)));
            }
            let extent = offsets.get(i + 1).copied().unwrap_or(payload.len());
            if end != extent {
                return Err(Error::Format(format!(
                    "tensor {}: shape {:?} covers bytes {}..{end} but its extent ends at {extent}",
                    m.name, m.shape, m.offset
                )));
            }
            cursor = end;
            let data = payload[m.offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.push(TensorEntry {
                name: m.name,
                shape: m.shape,
                data,
                trainable: m.trainable,
            });
        }
        if cursor != payload.len() {
            return Err(Error::Format(format!("payload holds {} bytes but tensors cover {cursor}", payload.len())));
        }
        Ok(TensorFile {
            kind: manifest.kind,
            meta: manifest.meta,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Rewrites the manifest of an encoded container. Used to build corrupt
/// fixtures in tests.
pub fn edit_manifest(bytes: &[u8], f: impl FnOnce(&mut Value)) -> Result<Vec<u8>> {
    let len = u64::from_le_bytes(
        bytes
            .get(..8)
            .ok_or_else(|| Error::Format("truncated container".into()))?
            .try_into()
            .expect("8 bytes"),
    ) as usize;
    let mut v: Value = serde_json::from_slice(&bytes[8..8 + len])?;
    f(&mut v);
    let json = serde_json::to_vec(&v)?;
    let mut out = Vec::with_capacity(bytes.len());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&bytes[8 + len..]);
    Ok(out)
}
