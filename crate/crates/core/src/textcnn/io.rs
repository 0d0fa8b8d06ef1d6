//! Parameter files: the magic bytes `ATPR1`, a little-endian `u64` header
//! length, a JSON header (format version, config, tensor names and
//! shapes), then every tensor as little-endian `f64` in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ConvBlock, ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

const MAGIC: &[u8; 5] = b"ATPR1";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    tensors: Vec<TensorSpec>,
}

#[derive(Serialize, Deserialize)]
struct TensorSpec {
    name: String,
    shape: Vec<usize>,
}

impl ModelParams {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            tensors: self
                .config
                .tensor_specs()
                .into_iter()
                .map(|(name, shape)| TensorSpec { name, shape })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let floats: usize = self.tensors().iter().map(|t| t.len()).sum();
        let mut bytes = Vec::with_capacity(MAGIC.len() + 8 + header.len() + 8 * floats);
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&header);
        for tensor in self.tensors() {
            for v in tensor {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Corrupt { reason, .. } => Error::Corrupt {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }

    /// Loads a parameter file and checks it was written for `expected`'s
    /// architecture, naming the first field that differs.
    pub fn load_expecting(path: &Path, expected: &ModelConfig) -> Result<Self> {
        let params = Self::load(path)?;
        let found = &params.config;
        let checks: [(&str, String, String); 6] = [
            ("vocab_size", expected.vocab_size.to_string(), found.vocab_size.to_string()),
            ("embed_dim", expected.embed_dim.to_string(), found.embed_dim.to_string()),
            (
                "filter_widths",
                format!("{:?}", expected.filter_widths),
                format!("{:?}", found.filter_widths),
            ),
            (
                "filters_per_width",
                expected.filters_per_width.to_string(),
                found.filters_per_width.to_string(),
            ),
            ("num_classes", expected.num_classes.to_string(), found.num_classes.to_string()),
            ("seq_len", expected.seq_len.to_string(), found.seq_len.to_string()),
        ];
        for (field, want, got) in checks {
            if want != got {
                return Err(Error::shape(field, want, got));
            }
        }
        Ok(params)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |reason: &str| Error::Corrupt {
            path: Default::default(),
            reason: reason.to_string(),
        };
        if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(corrupt("missing ATPR1 magic"));
        }
        let mut offset = MAGIC.len();
        let header_len = u64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap());
        offset += 8;
        let header_end = usize::try_from(header_len)
            .ok()
            .and_then(|n| offset.checked_add(n))
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| corrupt("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[offset..header_end])
            .map_err(|e| corrupt(&format!("unreadable header: {e}")))?;
        offset = header_end;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Version {
                found: header.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let config = header.config;
        config.validate()?;

        let specs = config.tensor_specs();
        if specs.len() != header.tensors.len() {
            return Err(Error::shape(
                "tensors",
                specs.len(),
                header.tensors.len(),
            ));
        }
        for ((name, shape), declared) in specs.iter().zip(&header.tensors) {
            if *name != declared.name || *shape != declared.shape {
                return Err(Error::shape(
                    name.clone(),
                    format!("{name} {shape:?}"),
                    format!("{} {:?}", declared.name, declared.shape),
                ));
            }
        }
        let floats: usize = specs.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        let payload = &bytes[offset..];
        if payload.len() < floats * 8 {
            return Err(corrupt("truncated tensor data"));
        }
        if payload.len() > floats * 8 {
            return Err(corrupt("trailing bytes after tensor data"));
        }
        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };

        let embedding = Matrix::from_vec(
            config.vocab_size,
            config.embed_dim,
            take(config.vocab_size * config.embed_dim),
        );
        let conv = config
            .filter_widths
            .iter()
            .map(|&width| {
                let cols = width * config.embed_dim;
                let weights = Matrix::from_vec(
                    config.filters_per_width,
                    cols,
                    take(config.filters_per_width * cols),
                );
                let bias = take(config.filters_per_width);
                ConvBlock {
                    width,
                    weights,
                    bias,
                }
            })
            .collect();
        let dense_weights = Matrix::from_vec(
            config.pooled_len(),
            config.num_classes,
            take(config.pooled_len() * config.num_classes),
        );
        let dense_bias = take(config.num_classes);
        let params = ModelParams {
            config,
            embedding,
            conv,
            dense_weights,
            dense_bias,
        };
        params.validate()?;
        Ok(params)
    }
}
