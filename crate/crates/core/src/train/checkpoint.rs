//! Binary checkpoints.
//!
//! Layout (little endian): `"MMCK"`, `u32` version, `u32` length plus UTF-8
//! JSON header (model config, seed, stage tag), `u32` tensor count, then per
//! tensor `u32` name length, name bytes, `u8` rank, `rank × u32` extents and
//! `f32` values.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MedVlm, ModelConfig};
use crate::param::Module;
use crate::tensor::Elem;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model: ModelConfig,
    pub seed: u64,
    pub stage: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: Vec<StoredTensor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadMode {
    /// Names and shapes must match the model one-to-one.
    Strict,
    /// Loads the stored tensors the model has; everything else keeps its value.
    Partial,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub loaded: Vec<String>,
    /// Model parameters left at their current values.
    pub untouched: Vec<String>,
    /// Stored tensors the model has no slot for.
    pub ignored: Vec<String>,
}

impl Checkpoint {
    pub fn from_model<E: Elem>(model: &MedVlm<E>, seed: u64, stage: &str) -> Self {
        let mut tensors = Vec::new();
        model.visit(&mut |p| {
            tensors.push(StoredTensor {
                name: p.name().to_string(),
                shape: p.shape().to_vec(),
                data: p.tensor().to_vec_f32(),
            })
        });
        Checkpoint { header: CheckpointHeader { model: model.cfg.clone(), seed, stage: stage.to_string() }, tensors }
    }

    pub fn get(&self, name: &str) -> Option<&StoredTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.tensors.iter().map(|t| t.name.as_str()).collect()
    }

    /// Keeps only tensors whose name satisfies `keep`.
    pub fn retain(&mut self, keep: impl Fn(&str) -> bool) {
        self.tensors.retain(|t| keep(&t.name));
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.shape.len() as u8);
            for &e in &t.shape {
                out.extend_from_slice(&(e as u32).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}, expected {CHECKPOINT_VERSION}")));
        }
        let hlen = r.u32()? as usize;
        let header: CheckpointHeader = serde_json::from_slice(r.take(hlen)?)
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = String::from_utf8(r.take(nlen)?.to_vec()).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            let rank = r.take(1)?[0] as usize;
            let shape = (0..rank).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = r
                .take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(StoredTensor { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { header, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Copies stored values into `model`. Everything is checked before the
    /// first write, so a failed load leaves the model untouched.
    pub fn apply<E: Elem>(&self, model: &mut MedVlm<E>, mode: LoadMode) -> Result<LoadReport> {
        let stored: HashMap<&str, &StoredTensor> = self.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        if stored.len() != self.tensors.len() {
            return Err(Error::Checkpoint("duplicate tensor names".into()));
        }
        let mut report = LoadReport::default();
        let mut problem = None;
        model.visit(&mut |p| match stored.get(p.name()) {
            Some(t) if t.shape != p.shape() => {
                problem.get_or_insert(format!("`{}` has shape {:?}, model expects {:?}", p.name(), t.shape, p.shape()));
            }
            Some(t) if t.data.len() != p.data().len() => {
                problem.get_or_insert(format!("`{}` holds {} values for shape {:?}", p.name(), t.data.len(), t.shape));
            }
            Some(_) => report.loaded.push(p.name().to_string()),
            None => report.untouched.push(p.name().to_string()),
        });
        if let Some(msg) = problem {
            return Err(Error::Checkpoint(msg));
        }
        report.ignored = self
            .tensors
            .iter()
            .filter(|t| !report.loaded.contains(&t.name))
            .map(|t| t.name.clone())
            .collect();
        if mode == LoadMode::Strict && (!report.untouched.is_empty() || !report.ignored.is_empty()) {
            return Err(Error::Checkpoint(format!(
                "strict load: missing {:?}, unexpected {:?}",
                report.untouched, report.ignored
            )));
        }
        model.visit_mut(&mut |p| {
            if let Some(t) = stored.get(p.name()) {
                let data = t.data.iter().map(|&v| E::lit(v as f64)).collect();
                p.set_data(data).expect("shape checked above");
            }
        });
        Ok(report)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn save_checkpoint<E: Elem>(model: &MedVlm<E>, path: &Path, seed: u64, stage: &str) -> Result<()> {
    Checkpoint::from_model(model, seed, stage).save(path)
}

/// Strict load of `path` into `model`.
pub fn load_checkpoint<E: Elem>(path: &Path, model: &mut MedVlm<E>) -> Result<Checkpoint> {
    let ck = Checkpoint::load(path)?;
    ck.apply(model, LoadMode::Strict)?;
    Ok(ck)
}

/// Rebuilds a model from a checkpoint's own config.
pub fn model_from_checkpoint<E: Elem>(ck: &Checkpoint) -> Result<MedVlm<E>> {
    let mut model = MedVlm::new(&ck.header.model, ck.header.seed)?;
    if ck.tensors.iter().any(|t| t.name.ends_with(".lora_a")) {
        return Err(Error::Checkpoint("checkpoint holds unmerged adapters".into()));
    }
    ck.apply(&mut model, LoadMode::Strict)?;
    Ok(model)
}
