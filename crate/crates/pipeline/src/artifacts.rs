//! Binary containers for network weights and survival models.
//!
//! Weight file layout (all integers little-endian):
//!
//! ```text
//! b"GLWT" | u32 version | u32 header length | JSON header | f32 data
//! ```
//!
//! The JSON header lists every tensor's name and shape in storage order,
//! together with the architecture fingerprint, the cascade stage and the
//! checksum of the parent stage's weight file.

use std::path::Path;

use glioma_core::nn::{NamedTensor, NetworkSpec, WeightSet};
use glioma_core::survival::ForestModel;
use glioma_core::SubregionId;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};
use crate::fsutil;

const WEIGHTS_MAGIC: &[u8; 4] = b"GLWT";
const WEIGHTS_VERSION: u32 = 1;
const MODEL_MAGIC: &[u8; 4] = b"GLRF";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightHeader {
    pub fingerprint: String,
    pub spec: NetworkSpec,
    pub stage: SubregionId,
    pub parent: Option<SubregionId>,
    /// sha256 of the parent stage's weight file.
    pub parent_checksum: Option<String>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightFile {
    pub header: WeightHeader,
    pub weights: WeightSet,
}

pub fn encode_weights(header: &WeightHeader, weights: &WeightSet) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serializes");
    let floats: usize = weights.tensors.iter().map(|t| t.data.len()).sum();
    let mut out = Vec::with_capacity(12 + json.len() + 4 * floats);
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in &weights.tensors {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn header_for(
    spec: &NetworkSpec,
    weights: &WeightSet,
    stage: SubregionId,
    parent: Option<(SubregionId, String)>,
) -> WeightHeader {
    let (parent, parent_checksum) = match parent {
        Some((p, c)) => (Some(p), Some(c)),
        None => (None, None),
    };
    WeightHeader {
        fingerprint: weights.fingerprint.clone(),
        spec: spec.clone(),
        stage,
        parent,
        parent_checksum,
        tensors: weights
            .tensors
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    }
}

/// Writes the file and returns its sha256.
pub fn save_weights(path: &Path, header: &WeightHeader, weights: &WeightSet) -> Result<String> {
    let bytes = encode_weights(header, weights);
    fsutil::write_atomic(path, &bytes)?;
    Ok(fsutil::sha256_hex(&bytes))
}

fn take<'a>(path: &Path, bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(PipelineError::format(path, "weight file is truncated"));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

pub fn decode_weights(path: &Path, mut bytes: &[u8]) -> Result<WeightFile> {
    let b = &mut bytes;
    if take(path, b, 4)? != WEIGHTS_MAGIC {
        return Err(PipelineError::format(path, "not a weight file"));
    }
    let version = u32::from_le_bytes(take(path, b, 4)?.try_into().expect("4 bytes"));
    if version != WEIGHTS_VERSION {
        return Err(PipelineError::format(path, format!("unsupported weight file version {version}")));
    }
    let len = u32::from_le_bytes(take(path, b, 4)?.try_into().expect("4 bytes")) as usize;
    let header: WeightHeader =
        serde_json::from_slice(take(path, b, len)?).map_err(|e| PipelineError::format(path, e))?;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        let n: usize = entry.shape.iter().product();
        let raw = take(path, b, 4 * n)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        tensors.push(NamedTensor {
            name: entry.name.clone(),
            shape: entry.shape.clone(),
            data,
        });
    }
    if !b.is_empty() {
        return Err(PipelineError::format(path, format!("{} trailing bytes after tensor data", b.len())));
    }
    let weights = WeightSet {
        fingerprint: header.fingerprint.clone(),
        tensors,
    };
    Ok(WeightFile { header, weights })
}

pub fn load_weights(path: &Path) -> Result<WeightFile> {
    decode_weights(path, &fsutil::read(path)?)
}

/// Survival model file: magic, version, then the bincode-encoded model.
pub fn save_model(path: &Path, model: &ForestModel) -> Result<String> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MODEL_MAGIC);
    bytes.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    bincode::serialize_into(&mut bytes, model).map_err(|e| PipelineError::format(path, e))?;
    fsutil::write_atomic(path, &bytes)?;
    Ok(fsutil::sha256_hex(&bytes))
}

pub fn load_model(path: &Path) -> Result<ForestModel> {
    let bytes = fsutil::read(path)?;
    if bytes.len() < 8 || &bytes[..4] != MODEL_MAGIC {
        return Err(PipelineError::format(path, "not a survival model file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != MODEL_VERSION {
        return Err(PipelineError::format(path, format!("unsupported model file version {version}")));
    }
    bincode::deserialize(&bytes[8..]).map_err(|e| PipelineError::format(path, e))
}
