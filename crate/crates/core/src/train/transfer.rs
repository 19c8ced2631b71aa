//! Initializing a volumetric model from a trained 2D checkpoint.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{EncoderConfig, MedVlm};
use crate::param::Module;
use crate::tensor::Elem;

use super::checkpoint::{Checkpoint, StoredTensor};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransferReport {
    pub loaded: Vec<String>,
    /// Parameters kept at their fresh initialization.
    pub fresh: Vec<String>,
}

fn transferable(encoder: &EncoderConfig, name: &str) -> bool {
    let shared = name.starts_with("connector.mlp.") || name.starts_with("lm.") || name.starts_with("embed.");
    match encoder {
        EncoderConfig::Slices(_) => shared || name.starts_with("encoder2d."),
        _ => shared,
    }
}

/// Per-slice models take the 2D encoder, projector MLP and LM; the attention
/// compressor stays fresh. 3D-encoder models take only the projector and LM.
pub fn transfer_2d_to_3d<E: Elem>(ck2d: &Checkpoint, model3d: &mut MedVlm<E>) -> Result<TransferReport> {
    if matches!(model3d.cfg.encoder, EncoderConfig::TwoD(_)) {
        return Err(Error::Config("transfer target must be a volumetric model".into()));
    }
    if !matches!(ck2d.header.model.encoder, EncoderConfig::TwoD(_)) {
        return Err(Error::Config("transfer source must be a 2D checkpoint".into()));
    }
    let stored: HashMap<&str, &StoredTensor> = ck2d.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
    let enc = model3d.cfg.encoder.clone();
    let mut report = TransferReport::default();
    let mut problem: Option<Error> = None;
    model3d.visit(&mut |p| {
        if !transferable(&enc, p.name()) {
            report.fresh.push(p.name().to_string());
            return;
        }
        let err = |msg: String| Error::Transfer { name: p.name().to_string(), msg };
        match stored.get(p.name()) {
            None => {
                problem.get_or_insert(err("missing from the 2D checkpoint".into()));
            }
            Some(t) if t.shape != p.shape() => {
                problem.get_or_insert(err(format!("shape {:?} in checkpoint, {:?} in target", t.shape, p.shape())));
            }
            Some(_) => report.loaded.push(p.name().to_string()),
        }
    });
    if let Some(e) = problem {
        return Err(e);
    }
    model3d.visit_mut(&mut |p| {
        if transferable(&enc, p.name()) {
            let t = stored[p.name()];
            p.set_data(t.data.iter().map(|&v| E::lit(v as f64)).collect()).expect("shape checked above");
        }
    });
    Ok(report)
}
