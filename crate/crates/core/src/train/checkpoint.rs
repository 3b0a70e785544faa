//! Checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "VITF" | u32 version (1) | u64 manifest length | UTF-8 JSON manifest | payload
//! ```
//!
//! The payload holds raw `f32` tensors. Each tensor starts at a multiple of
//! 64 bytes from the payload start; `byte_offset` in the manifest is relative
//! to the payload start. Optimizer moments are stored as extra tensors named
//! `adam.m.<param>` and `adam.v.<param>`.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{ViTConfig, ViTParams};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"VITF";
pub const VERSION: u32 = 1;
pub const ALIGN: usize = 64;

/// Position of the data shuffling stream; epoch `e` shuffles with `seed ^ e`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub next_epoch: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ViTConfig,
    pub train_config: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub rng_state: RngState,
    pub class_names: Vec<String>,
    pub params: ViTParams,
    pub adam: Option<AdamState>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub byte_offset: u64,
    pub byte_len: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config: ViTConfig,
    pub train_config: TrainConfig,
    pub epoch: usize,
    pub rng_state: RngState,
    pub class_names: Vec<String>,
    pub adam_step: Option<u64>,
    pub tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = self.params.named();
        if let Some(adam) = &self.adam {
            let names: Vec<String> = out.iter().map(|(n, _)| n.clone()).collect();
            for (n, m) in names.iter().zip(&adam.m) {
                out.push((format!("adam.m.{n}"), m));
            }
            for (n, v) in names.iter().zip(&adam.v) {
                out.push((format!("adam.v.{n}"), v));
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.tensors();
        let mut entries = Vec::with_capacity(tensors.len());
        let mut offset = 0usize;
        for (name, t) in &tensors {
            let len = t.len() * 4;
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                dtype: "f32".into(),
                byte_offset: offset as u64,
                byte_len: len as u64,
            });
            offset = (offset + len).next_multiple_of(ALIGN);
        }
        let manifest = CheckpointManifest {
            config: self.config.clone(),
            train_config: self.train_config.clone(),
            epoch: self.epoch,
            rng_state: self.rng_state,
            class_names: self.class_names.clone(),
            adam_step: self.adam.as_ref().map(|a| a.t),
            tensors: entries,
        };
        let json = serde_json::to_vec(&manifest).expect("manifest serializes");

        let mut out = Vec::with_capacity(16 + json.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let payload_start = out.len();
        for ((_, t), e) in tensors.iter().zip(&manifest.tensors) {
            out.resize(payload_start + e.byte_offset as usize, 0);
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::format("magic", "expected \"VITF\""));
        }
        let version = bytes
            .get(4..8)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| Error::format("version", "file truncated"))?;
        if version != VERSION {
            return Err(Error::format(
                "version",
                format!("unsupported version {version}"),
            ));
        }
        let manifest_len = bytes
            .get(8..16)
            .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| Error::format("manifest_length", "file truncated"))?;
        let manifest_end = 16usize
            .checked_add(usize::try_from(manifest_len).unwrap_or(usize::MAX))
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| {
                Error::format(
                    "manifest_length",
                    format!("{manifest_len} bytes exceed file size"),
                )
            })?;
        let manifest: CheckpointManifest = serde_json::from_slice(&bytes[16..manifest_end])
            .map_err(|e| Error::format("manifest", e.to_string()))?;
        manifest
            .config
            .validate()
            .map_err(|e| Error::format("config", e.to_string()))?;
        let payload = &bytes[manifest_end..];

        let read = |name: &str| -> Result<Tensor> {
            let e = manifest
                .tensors
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| Error::format("tensors", format!("missing tensor {name}")))?;
            let field = |f: &str| format!("tensors[{name}].{f}");
            if e.dtype != "f32" {
                return Err(Error::format(
                    field("dtype"),
                    format!("unsupported dtype {}", e.dtype),
                ));
            }
            let count: usize = e.shape.iter().product();
            if e.byte_len != 4 * count as u64 {
                return Err(Error::format(
                    field("byte_len"),
                    format!("{} bytes for shape {:?}", e.byte_len, e.shape),
                ));
            }
            let start = e.byte_offset as usize;
            let data = payload
                .get(start..start + e.byte_len as usize)
                .ok_or_else(|| Error::format(field("byte_offset"), "payload truncated"))?;
            let values = data
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Tensor::new(e.shape.clone(), values)
                .map_err(|err| Error::format(field("shape"), err.to_string()))
        };

        let mut params = ViTParams::zeros(&manifest.config);
        let mut names = Vec::new();
        for (name, slot) in params.named_mut() {
            let t = read(&name)?;
            if t.shape() != slot.shape() {
                return Err(Error::format(
                    format!("tensors[{name}].shape"),
                    format!("{:?}, config expects {:?}", t.shape(), slot.shape()),
                ));
            }
            *slot = t;
            names.push(name);
        }
        let adam = match manifest.adam_step {
            None => None,
            Some(t) => {
                let mut m = Vec::with_capacity(names.len());
                let mut v = Vec::with_capacity(names.len());
                for (n, (_, p)) in names.iter().zip(params.named()) {
                    for (prefix, dst) in [("adam.m", &mut m), ("adam.v", &mut v)] {
                        let t = read(&format!("{prefix}.{n}"))?;
                        if t.shape() != p.shape() {
                            return Err(Error::format(
                                format!("tensors[{prefix}.{n}].shape"),
                                "does not match parameter shape",
                            ));
                        }
                        dst.push(t);
                    }
                }
                Some(AdamState { m, v, t })
            }
        };
        Ok(Self {
            config: manifest.config,
            train_config: manifest.train_config,
            epoch: manifest.epoch,
            rng_state: manifest.rng_state,
            class_names: manifest.class_names,
            params,
            adam,
        })
    }

    /// Writes to a sibling temporary file, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
        tmp_name.push(".tmp");
        let tmp: PathBuf = path.with_file_name(tmp_name);
        let write = || -> std::io::Result<()> {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()
        };
        write().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
