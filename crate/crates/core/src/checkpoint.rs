//! Single-file checkpoint container: `ORKT` magic, version, JSON header
//! mapping tensor names to payload spans, metadata, then a raw
//! little-endian tensor payload. Writes are atomic (temp file + rename);
//! loading re-validates header invariants before touching the payload.

use crate::data::BandStats;
use crate::element::{Dtype, Element};
use crate::error::{Error, Result};
use crate::mae::{MaeConfig, MaeModel};
use crate::tensor::Tensor;
use crate::vit::{ViTModel, ViTRecipe};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

pub const CKPT_MAGIC: &[u8; 4] = b"ORKT";
pub const CKPT_VERSION: u16 = 1;

/// Header record for one tensor in the payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorRecord {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub nbytes: u64,
}

/// Checkpoint metadata: enough to rebuild the model and resume training.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct CheckpointMeta {
    pub recipe: Option<ViTRecipe>,
    pub mae: Option<MaeConfig>,
    pub norm_stats: Option<BandStats>,
    pub mask_ratio: Option<f64>,
    pub step: u64,
    pub root_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    meta: CheckpointMeta,
    tensors: BTreeMap<String, TensorRecord>,
}

/// In-memory checkpoint: metadata plus named tensor payloads.
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    records: BTreeMap<String, TensorRecord>,
    payload: Vec<u8>,
}

impl Checkpoint {
    pub fn new(meta: CheckpointMeta) -> Self {
        Checkpoint {
            meta,
            records: BTreeMap::new(),
            payload: Vec::new(),
        }
    }

    /// Append a tensor. Names are unique; insertion order defines payload
    /// order, the header map is name-sorted.
    pub fn add_tensor<T: Element>(&mut self, name: &str, tensor: &Tensor<T>) -> Result<()> {
        if self.records.contains_key(name) {
            return Err(Error::Checkpoint(format!("duplicate tensor name '{name}'")));
        }
        let shape = tensor.shape();
        let offset = self.payload.len() as u64;
        tensor.with_data(|data| {
            for &v in data {
                v.write_le(&mut self.payload);
            }
        });
        let nbytes = self.payload.len() as u64 - offset;
        self.records.insert(
            name.to_string(),
            TensorRecord {
                dtype: T::DTYPE,
                shape,
                offset,
                nbytes,
            },
        );
        Ok(())
    }

    pub fn tensor_names(&self) -> Vec<String> {
        self.records.keys().cloned().collect()
    }

    pub fn has_tensor(&self, name: &str) -> bool {
        self.records.contains_key(name)
    }

    pub fn record(&self, name: &str) -> Option<&TensorRecord> {
        self.records.get(name)
    }

    /// Read a tensor back; dtype and shape come from the header.
    pub fn get_tensor<T: Element>(&self, name: &str) -> Result<Tensor<T>> {
        let rec = self
            .records
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor '{name}'")))?;
        if rec.dtype != T::DTYPE {
            return Err(Error::Checkpoint(format!(
                "tensor '{name}' has dtype {:?}, requested {:?}",
                rec.dtype,
                T::DTYPE
            )));
        }
        let start = rec.offset as usize;
        let end = start + rec.nbytes as usize;
        let bytes = &self.payload[start..end];
        let esize = rec.dtype.size_bytes();
        let data: Vec<T> = bytes.chunks_exact(esize).map(T::read_le).collect();
        Tensor::from_vec(data, &rec.shape)
    }

    pub fn get_vec<T: Element>(&self, name: &str) -> Result<Vec<T>> {
        Ok(self.get_tensor::<T>(name)?.to_vec())
    }

    /// Raw payload bytes of one tensor.
    pub fn raw(&self, name: &str) -> Option<(&TensorRecord, &[u8])> {
        self.records.get(name).map(|rec| {
            let start = rec.offset as usize;
            (rec, &self.payload[start..start + rec.nbytes as usize])
        })
    }

    /// Append a tensor from raw little-endian bytes (dtype/shape supplied).
    pub fn add_raw(
        &mut self,
        name: &str,
        dtype: Dtype,
        shape: Vec<usize>,
        bytes: &[u8],
    ) -> Result<()> {
        if self.records.contains_key(name) {
            return Err(Error::Checkpoint(format!("duplicate tensor name '{name}'")));
        }
        let numel: usize = shape.iter().product();
        if numel * dtype.size_bytes() != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "raw tensor '{name}': {} bytes does not match shape {shape:?}",
                bytes.len()
            )));
        }
        let offset = self.payload.len() as u64;
        self.payload.extend_from_slice(bytes);
        self.records.insert(
            name.to_string(),
            TensorRecord {
                dtype,
                shape,
                offset,
                nbytes: bytes.len() as u64,
            },
        );
        Ok(())
    }

    /// Serialize: magic, version, header length, header JSON, payload.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            meta: self.meta.clone(),
            tensors: self.records.clone(),
        };
        let header_json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(14 + header_json.len() + self.payload.len());
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
        out.extend_from_slice(&header_json);
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Atomic write: temp file in the target directory, then rename.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        std::fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(
            ".{}.tmp",
            path.file_name().map(|f| f.to_string_lossy()).unwrap_or_default()
        ));
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |msg: String| Error::Checkpoint(msg);
        if bytes.len() < 14 {
            return Err(fail("truncated checkpoint".into()));
        }
        if &bytes[0..4] != CKPT_MAGIC {
            return Err(fail("wrong magic (expected ORKT)".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != CKPT_VERSION {
            return Err(fail(format!("unsupported checkpoint version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[6..14].try_into().unwrap()) as usize;
        if bytes.len() < 14 + header_len {
            return Err(fail("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&bytes[14..14 + header_len])?;
        let payload = bytes[14 + header_len..].to_vec();

        // validate: spans in bounds, lengths consistent, no overlap
        let mut spans: Vec<(u64, u64, &str)> = Vec::new();
        for (name, rec) in &header.tensors {
            let numel: usize = rec.shape.iter().product();
            let expect = (numel * rec.dtype.size_bytes()) as u64;
            if expect != rec.nbytes {
                return Err(fail(format!(
                    "tensor '{name}': nbytes {} != shape {:?} x dtype size",
                    rec.nbytes, rec.shape
                )));
            }
            if rec.offset + rec.nbytes > payload.len() as u64 {
                return Err(fail(format!("tensor '{name}' span exceeds payload")));
            }
            spans.push((rec.offset, rec.offset + rec.nbytes, name));
        }
        spans.sort_unstable();
        for pair in spans.windows(2) {
            if pair[0].1 > pair[1].0 {
                return Err(fail(format!(
                    "overlapping tensors '{}' and '{}'",
                    pair[0].2, pair[1].2
                )));
            }
        }
        Ok(Checkpoint {
            meta: header.meta,
            records: header.tensors,
            payload,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path.as_ref())?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

/// Save an encoder (its full state) with metadata.
pub fn save_vit<T: Element>(
    path: impl AsRef<Path>,
    model: &ViTModel<T>,
    mut meta: CheckpointMeta,
) -> Result<()> {
    meta.recipe = Some(model.recipe.clone());
    let mut ckpt = Checkpoint::new(meta);
    for (name, tensor) in model.state_tensors() {
        ckpt.add_tensor(&name, &tensor)?;
    }
    ckpt.save(path)
}

/// Save an MAE encoder+decoder pair.
pub fn save_mae<T: Element>(
    path: impl AsRef<Path>,
    model: &MaeModel<T>,
    mut meta: CheckpointMeta,
) -> Result<()> {
    meta.recipe = Some(model.encoder.recipe.clone());
    meta.mae = Some(model.config.clone());
    meta.mask_ratio = Some(model.config.mask_ratio);
    let mut ckpt = Checkpoint::new(meta);
    for (name, tensor) in model.state_tensors() {
        ckpt.add_tensor(&name, &tensor)?;
    }
    ckpt.save(path)
}

fn fill_from_checkpoint<T: Element>(
    ckpt: &Checkpoint,
    tensors: Vec<(String, Tensor<T>)>,
) -> Result<()> {
    for (name, tensor) in tensors {
        let loaded = ckpt.get_tensor::<T>(&name)?;
        if loaded.shape() != tensor.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor '{name}' shape {:?} does not match model shape {:?}",
                loaded.shape(),
                tensor.shape()
            )));
        }
        tensor.set_data(loaded.to_vec());
    }
    Ok(())
}

/// Rebuild an encoder from a checkpoint's recipe and payload.
pub fn load_vit<T: Element>(ckpt: &Checkpoint) -> Result<ViTModel<T>> {
    let recipe = ckpt
        .meta
        .recipe
        .clone()
        .ok_or_else(|| Error::Checkpoint("checkpoint has no recipe metadata".into()))?;
    let model = ViTModel::init(&recipe, ckpt.meta.root_seed)?;
    fill_from_checkpoint(ckpt, model.state_tensors())?;
    Ok(model)
}

/// Rebuild an MAE model (encoder + decoder) from a checkpoint.
pub fn load_mae<T: Element>(ckpt: &Checkpoint) -> Result<MaeModel<T>> {
    let recipe = ckpt
        .meta
        .recipe
        .clone()
        .ok_or_else(|| Error::Checkpoint("checkpoint has no recipe metadata".into()))?;
    let config = ckpt
        .meta
        .mae
        .clone()
        .ok_or_else(|| Error::Checkpoint("checkpoint has no MAE config metadata".into()))?;
    let model = MaeModel::init(&recipe, config, ckpt.meta.root_seed)?;
    fill_from_checkpoint(ckpt, model.state_tensors())?;
    Ok(model)
}

/// Check that a checkpoint's band count fits a target recipe, with a
/// remediation hint when it does not.
pub fn check_band_compat(ckpt: &Checkpoint, target: &ViTRecipe) -> Result<()> {
    if let Some(recipe) = &ckpt.meta.recipe {
        if recipe.bands != target.bands {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} band(s) but the model expects {}; run `vitmae inflate \
                 --bands {}` on the checkpoint first",
                recipe.bands, target.bands, target.bands
            )));
        }
    }
    Ok(())
}
