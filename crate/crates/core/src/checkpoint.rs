//! Binary checkpoint format.
//!
//! ```text
//! "AWBL" | u32 version | u64 header_len | JSON header | f64 payload | u64 checksum
//! ```
//! All integers and floats are little-endian. The header holds the model
//! configuration, the vocabulary and a manifest of `(name, shape, offset)`
//! entries, where `offset` is the byte offset of the tensor inside the
//! payload. The checksum is the first eight bytes of SHA-256 over the payload.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::ModelConfig;
use crate::embeddings::Vocabulary;
use crate::model::Model;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"AWBL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,
    #[error("incompatible checkpoint format version {found} (this build reads version {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint is truncated: {0}")]
    Truncated(String),
    #[error("checkpoint integrity check failed: payload checksum mismatch")]
    Checksum,
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("tensor {name}: stored shape {found:?} does not match configured shape {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("tensor {0} is missing from the checkpoint")]
    Missing(String),
    #[error("checkpoint contains unexpected tensor {0}")]
    Unexpected(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocabulary: Vocabulary,
    tensors: Vec<ManifestEntry>,
}

fn checksum(payload: &[u8]) -> u64 {
    let digest = Sha256::digest(payload);
    u64::from_le_bytes(digest[..8].try_into().expect("eight bytes"))
}

/// Serializes `model` into checkpoint bytes.
pub fn to_bytes(model: &Model) -> Vec<u8> {
    let mut payload = Vec::new();
    let mut tensors = Vec::new();
    for (name, t) in model.params.named() {
        tensors.push(ManifestEntry {
            name,
            shape: t.shape().to_vec(),
            offset: payload.len() as u64,
        });
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        config: model.config.clone(),
        vocabulary: model.vocab.clone(),
        tensors,
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(24 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&checksum(&payload).to_le_bytes());
    out
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
    let end = at
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| CheckpointError::Truncated(format!("missing {what}")))?;
    let s = &bytes[*at..end];
    *at = end;
    Ok(s)
}

/// Parses checkpoint bytes back into a model.
pub fn from_bytes(bytes: &[u8]) -> Result<Model, CheckpointError> {
    let mut at = 0;
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(if bytes.len() < 4 {
            CheckpointError::Truncated("missing magic".into())
        } else {
            CheckpointError::BadMagic
        });
    }
    at += 4;
    let version = u32::from_le_bytes(take(bytes, &mut at, 4, "version")?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let header_len = u64::from_le_bytes(take(bytes, &mut at, 8, "header length")?.try_into().unwrap());
    let header_len =
        usize::try_from(header_len).map_err(|_| CheckpointError::Truncated("header length".into()))?;
    let header: Header = serde_json::from_slice(take(bytes, &mut at, header_len, "header")?)
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    if bytes.len() < at + 8 {
        return Err(CheckpointError::Truncated("missing payload checksum".into()));
    }
    let payload = &bytes[at..bytes.len() - 8];
    let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    let expected_len: usize = header
        .tensors
        .iter()
        .map(|e| e.shape.iter().product::<usize>() * 8)
        .sum();
    if payload.len() != expected_len {
        return Err(CheckpointError::Truncated(format!(
            "payload has {} bytes, manifest needs {expected_len}",
            payload.len()
        )));
    }
    if checksum(payload) != stored {
        return Err(CheckpointError::Checksum);
    }
    header
        .config
        .validate()
        .map_err(|e| CheckpointError::Header(e.to_string()))?;

    let mut model = Model::new(header.config, header.vocabulary);
    let mut entries = header.tensors.into_iter().peekable();
    let mut failure = None;
    model.params.for_each_mut(&mut |name, t| {
        if failure.is_some() {
            return;
        }
        let Some(e) = entries.next() else {
            failure = Some(CheckpointError::Missing(name.to_string()));
            return;
        };
        if e.name != name {
            failure = Some(CheckpointError::Missing(name.to_string()));
            return;
        }
        if e.shape != t.shape() {
            failure = Some(CheckpointError::Shape {
                name: name.to_string(),
                expected: t.shape().to_vec(),
                found: e.shape,
            });
            return;
        }
        let start = e.offset as usize;
        let data: Vec<f64> = payload[start..start + t.len() * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        *t = Tensor::new(e.shape, data).expect("shape checked");
    });
    if let Some(err) = failure {
        return Err(err);
    }
    if let Some(extra) = entries.next() {
        return Err(CheckpointError::Unexpected(extra.name));
    }
    Ok(model)
}

pub fn save(model: &Model, path: &Path) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&to_bytes(model)).map_err(io)?;
    f.sync_all().map_err(io)
}

pub fn load(path: &Path) -> Result<Model, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_bytes(&bytes)
}
