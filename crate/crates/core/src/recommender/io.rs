//! Binary model files.
//!
//! Layout: the 8-byte magic `TAGCFMDL`, a little-endian `u32` format version,
//! a `u32` header length, the canonical-JSON header, then every tensor's data
//! as little-endian `f64` in [`ModelParameters::for_each`] order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Architecture, TrainingConfig};
use super::params::ModelParameters;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::util::{canonical_json, sha256_hex};

pub const MODEL_MAGIC: &[u8; 8] = b"TAGCFMDL";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub arch: Architecture,
    pub n_items: usize,
    pub tag_ids: Vec<u32>,
    pub config: TrainingConfig,
    /// SHA-256 of the canonical JSON of `config`.
    pub config_hash: String,
    pub tensors: Vec<(String, usize, usize)>,
}

/// Trained parameters together with the configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub config: TrainingConfig,
    pub params: ModelParameters,
}

pub fn config_hash(cfg: &TrainingConfig) -> Result<String> {
    Ok(sha256_hex(canonical_json(cfg)?.as_bytes()))
}

impl ModelFile {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = Vec::new();
        self.params
            .for_each(|name, t| tensors.push((name.to_string(), t.rows, t.cols)));
        let header = ModelHeader {
            arch: self.params.arch,
            n_items: self.params.n_items(),
            tag_ids: self.params.tag_ids.clone(),
            config: self.config.clone(),
            config_hash: config_hash(&self.config)?,
            tensors,
        };
        let json = canonical_json(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + 8 * self.params.num_params());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(json.as_bytes());
        self.params.for_each(|_, t| {
            for x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        });
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::CorruptModel(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MODEL_MAGIC {
            return Err(corrupt("missing magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::CorruptModel(format!(
                "format version {version}, expected {MODEL_FORMAT_VERSION}"
            )));
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| corrupt("truncated header"))?;
        let header: ModelHeader =
            serde_json::from_slice(body).map_err(|e| Error::CorruptModel(format!("bad header: {e}")))?;
        if header.config_hash != config_hash(&header.config)? {
            return Err(corrupt("config hash mismatch"));
        }
        let mut params = ModelParameters::init(header.arch, header.n_items, &header.tag_ids, 0);
        let mut shapes = Vec::new();
        params.for_each(|name, t| shapes.push((name.to_string(), t.rows, t.cols)));
        if shapes != header.tensors {
            return Err(corrupt("tensor layout does not match the architecture"));
        }
        let mut data = &bytes[16 + hlen..];
        let mut short = false;
        params.for_each_mut(|_, t: &mut Tensor| {
            for x in &mut t.data {
                match data.split_first_chunk::<8>() {
                    Some((chunk, rest)) => {
                        *x = f64::from_le_bytes(*chunk);
                        data = rest;
                    }
                    None => short = true,
                }
            }
        });
        if short {
            return Err(corrupt("truncated tensor data"));
        }
        if !data.is_empty() {
            return Err(corrupt("trailing bytes after tensor data"));
        }
        Ok(ModelFile {
            config: header.config,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
