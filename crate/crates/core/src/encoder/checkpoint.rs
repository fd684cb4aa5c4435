//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `SNTCKPT\0`, a little-endian `u32` format
//! version, a little-endian `u64` header length, a JSON header, and then raw
//! little-endian `f64` blobs in header order: encoder parameters, optional
//! Adam moments (`m` then `v` per tensor), and optional extra tensors such as
//! a task head. A SHA-256 digest of everything before it closes the file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::adam::AdamState;
use crate::encoder::config::EncoderConfig;
use crate::encoder::params::EncoderParams;
use crate::encoder::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SNTCKPT\0";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: EncoderParams,
    pub adam: Option<AdamState>,
    /// Named tensors outside the encoder, e.g. a fine-tuning head.
    pub extra: Vec<(String, Tensor)>,
    /// Free-form metadata stored in the header.
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Shape {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: EncoderConfig,
    tensors: Vec<Shape>,
    adam_step: Option<u64>,
    extra: Vec<Shape>,
    meta: serde_json::Value,
}

fn shape(name: &str, t: &Tensor) -> Shape {
    Shape {
        name: name.to_string(),
        rows: t.rows(),
        cols: t.cols(),
    }
}

impl Checkpoint {
    pub fn new(params: EncoderParams) -> Self {
        Checkpoint {
            params,
            adam: None,
            extra: Vec::new(),
            meta: serde_json::Value::Null,
        }
    }

    pub fn extra(&self, name: &str) -> Option<&Tensor> {
        self.extra.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.params.config,
            tensors: self.params.named_tensors().iter().map(|(n, t)| shape(n, t)).collect(),
            adam_step: self.adam.as_ref().map(|a| a.step),
            extra: self.extra.iter().map(|(n, t)| shape(n, t)).collect(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(20 + json.len() + 8 * self.params.num_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut put = |data: &[f64]| {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        for t in self.params.tensors() {
            put(t.data());
        }
        if let Some(adam) = &self.adam {
            for (m, v) in adam.m.iter().zip(&adam.v) {
                put(m);
                put(v);
            }
        }
        for (_, t) in &self.extra {
            put(t.data());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 20 + DIGEST_LEN || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let (bytes, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(bytes).as_slice() != digest {
            return Err(bad("checksum mismatch; the file is corrupted or truncated"));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body_start = 20usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[20..body_start])
            .map_err(|e| Error::Checkpoint(format!("malformed header: {e}")))?;
        header
            .config
            .validate()
            .map_err(|e| Error::Checkpoint(format!("invalid config: {e}")))?;

        let mut cursor = body_start;
        let mut take = |len: usize| -> Result<Vec<f64>> {
            let end = len
                .checked_mul(8)
                .and_then(|b| cursor.checked_add(b))
                .filter(|&e| e <= bytes.len());
            let end = end.ok_or_else(|| bad("truncated parameter data"))?;
            let out = bytes[cursor..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            cursor = end;
            Ok(out)
        };

        let mut params = EncoderParams::init(header.config, 0);
        let expected: Vec<(String, (usize, usize))> = params
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape()))
            .collect();
        if expected.len() != header.tensors.len() {
            return Err(bad("tensor list does not match the configuration"));
        }
        for ((name, shp), (t, stored)) in expected
            .iter()
            .zip(params.tensors_mut().into_iter().zip(&header.tensors))
        {
            if *name != stored.name || *shp != (stored.rows, stored.cols) {
                return Err(Error::Checkpoint(format!(
                    "tensor {} has shape {}x{}, expected {} {}x{}",
                    stored.name, stored.rows, stored.cols, name, shp.0, shp.1
                )));
            }
            *t = Tensor::from_vec(shp.0, shp.1, take(shp.0 * shp.1)?);
        }
        let adam = match header.adam_step {
            Some(step) => {
                let mut m = Vec::with_capacity(expected.len());
                let mut v = Vec::with_capacity(expected.len());
                for (_, (r, c)) in &expected {
                    m.push(take(r * c)?);
                    v.push(take(r * c)?);
                }
                Some(AdamState { step, m, v })
            }
            None => None,
        };
        let mut extra = Vec::with_capacity(header.extra.len());
        for s in &header.extra {
            extra.push((s.name.clone(), Tensor::from_vec(s.rows, s.cols, take(s.rows * s.cols)?)));
        }
        if cursor != bytes.len() {
            return Err(bad("trailing bytes after parameter data"));
        }
        if !params.is_finite() {
            return Err(bad("non-finite parameter values"));
        }
        Ok(Checkpoint {
            params,
            adam,
            extra,
            meta: header.meta,
        })
    }

    /// Writes through a temporary file so a crash never leaves a torn checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Loads and checks that the model was built for a vocabulary of `vocab_size`.
    pub fn load_for_vocab(path: &Path, vocab_size: usize) -> Result<Self> {
        let ckpt = Self::load(path)?;
        if ckpt.params.config.vocab_size != vocab_size {
            return Err(Error::VocabMismatch {
                checkpoint: ckpt.params.config.vocab_size,
                vocab: vocab_size,
            });
        }
        Ok(ckpt)
    }
}
