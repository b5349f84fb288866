//! Binary checkpoint: `DCN1`, a `u32` version, a `u64` JSON length, the JSON
//! metadata, then little-endian tensor payloads in manifest order.

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{AdamState, BestEpoch, RunMetrics, Session, TrainConfig};
use crate::autodiff::Tensor;
use crate::dag::ArchitectureDag;
use crate::data::Normalization;
use crate::error::{Error, Result};
use crate::model::{DcnModel, ModelConfig};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"DCN1";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TensorKind {
    Param,
    Buffer,
    AdamM,
    AdamV,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    name: String,
    kind: TensorKind,
    dtype: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    config: TrainConfig,
    model: ModelConfig,
    dag: Option<ArchitectureDag>,
    adam_step: u64,
    epochs_done: usize,
    metrics: RunMetrics,
    best: Option<BestEpoch>,
    normalization: Option<Normalization>,
    manifest: Vec<ManifestEntry>,
}

/// Encode a session.
pub fn save_checkpoint<T: Scalar>(session: &Session<T>) -> Result<Vec<u8>> {
    let mut manifest = Vec::new();
    let mut tensors: Vec<&Tensor<T>> = Vec::new();
    let mut push = |name: &str, kind, t: &'_ Tensor<T>| {
        manifest.push(ManifestEntry {
            name: name.to_string(),
            kind,
            dtype: T::DTYPE.to_string(),
            shape: t.shape().to_vec(),
        });
    };
    let model = &session.model;
    for (name, t) in model.params() {
        push(name, TensorKind::Param, t);
        tensors.push(t);
    }
    for (name, t) in model.buffers() {
        push(name, TensorKind::Buffer, t);
        tensors.push(t);
    }
    for (name, t) in &session.adam.m {
        push(name, TensorKind::AdamM, t);
        tensors.push(t);
    }
    for (name, t) in &session.adam.v {
        push(name, TensorKind::AdamV, t);
        tensors.push(t);
    }
    let meta = Metadata {
        config: session.config.clone(),
        model: model.config().clone(),
        dag: model.dag().cloned(),
        adam_step: session.adam.step,
        epochs_done: session.epochs_done(),
        metrics: session.metrics.clone(),
        best: session.best,
        normalization: session.normalization,
        manifest,
    };
    let json = serde_json::to_vec(&meta)?;
    let payload: usize = tensors.iter().map(|t| t.numel() * T::BYTES).sum();
    let mut out = Vec::with_capacity(HEADER_LEN + json.len() + payload);
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in tensors {
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

/// Decode a session written by [`save_checkpoint`] with the same scalar
/// type.
pub fn load_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Session<T>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Checkpoint(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Magic {
            expected: u32::from_be_bytes(CHECKPOINT_MAGIC),
            actual: u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes")),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let json_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let rest = &bytes[HEADER_LEN..];
    if json_len > rest.len() as u64 {
        return Err(Error::Checkpoint(format!(
            "metadata length {json_len} exceeds the {} bytes that follow",
            rest.len()
        )));
    }
    let (json, mut payload) = rest.split_at(json_len as usize);
    let meta: Metadata = serde_json::from_slice(json)
        .map_err(|e| Error::Checkpoint(format!("bad metadata: {e}")))?;
    if meta.epochs_done != meta.metrics.epochs.len() {
        return Err(Error::Checkpoint(format!(
            "{} epochs recorded but {} metric rows",
            meta.epochs_done,
            meta.metrics.epochs.len()
        )));
    }
    let expected: usize = meta
        .manifest
        .iter()
        .map(|e| e.shape.iter().product::<usize>() * T::BYTES)
        .sum();
    if expected != payload.len() {
        return Err(Error::Checkpoint(format!(
            "manifest describes {expected} payload bytes, found {}",
            payload.len()
        )));
    }
    let mut params = Vec::new();
    let mut buffers = Vec::new();
    let mut adam = AdamState {
        step: meta.adam_step,
        m: IndexMap::new(),
        v: IndexMap::new(),
    };
    for entry in meta.manifest {
        if entry.dtype != T::DTYPE {
            return Err(Error::Checkpoint(format!(
                "tensor `{}` has dtype {}, expected {}",
                entry.name,
                entry.dtype,
                T::DTYPE
            )));
        }
        let n: usize = entry.shape.iter().product();
        let (chunk, tail) = payload.split_at(n * T::BYTES);
        payload = tail;
        let data = chunk.chunks_exact(T::BYTES).map(T::read_le).collect();
        let t = Tensor::new(&entry.shape, data)?;
        match entry.kind {
            TensorKind::Param => params.push((entry.name, t)),
            TensorKind::Buffer => buffers.push((entry.name, t)),
            TensorKind::AdamM => {
                adam.m.insert(entry.name, t);
            }
            TensorKind::AdamV => {
                adam.v.insert(entry.name, t);
            }
        }
    }
    let mut model = DcnModel::from_parts(meta.model, meta.dag, params, buffers)?;
    model.set_frozen(meta.config.freeze_graph);
    for (name, m) in &adam.m {
        let shape_ok = model.param(name).is_some_and(|p| p.shape() == m.shape());
        if !shape_ok || model.is_frozen(name) || adam.v.get(name).map(Tensor::shape) != Some(m.shape()) {
            return Err(Error::Checkpoint(format!(
                "optimizer moments for `{name}` do not match a trainable parameter"
            )));
        }
    }
    if adam.m.len() != adam.v.len() {
        return Err(Error::Checkpoint(format!(
            "{} first moments but {} second moments",
            adam.m.len(),
            adam.v.len()
        )));
    }
    Ok(Session {
        config: meta.config,
        model,
        adam,
        metrics: meta.metrics,
        best: meta.best,
        normalization: meta.normalization,
    })
}

pub fn write_checkpoint<T: Scalar>(path: &Path, session: &Session<T>) -> Result<()> {
    let bytes = save_checkpoint(session)?;
    std::fs::write(path, bytes)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn read_checkpoint<T: Scalar>(path: &Path) -> Result<Session<T>> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    load_checkpoint(&bytes)
}
