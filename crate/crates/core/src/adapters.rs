//! Per-module trainability and low-rank adapters on linear layers.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::DEFAULT_SEQ_CAP;
use crate::error::{Error, Result};
use crate::model::{EncoderConfig, MedVlm};
use crate::nn::{LoraAdapter, INIT_STD};
use crate::param::{Module, Parameter};
use crate::rng::SeedTree;
use crate::tensor::Elem;

/// Namespaces accepted in a frozen set. `encoder` names whichever encoder
/// the model has.
pub const NAMESPACES: [&str; 6] = ["encoder", "encoder2d", "encoder3d", "connector", "lm", "embed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageName {
    Pretrain,
    Instruct,
}

impl StageName {
    pub fn as_str(&self) -> &'static str {
        match self {
            StageName::Pretrain => "pretrain",
            StageName::Instruct => "instruct",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraSpec {
    pub rank: usize,
    /// Scale numerator; the update is multiplied by `alpha / rank`. Defaults to `2 · rank`.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_targets")]
    pub targets: Vec<String>,
    /// Learning rate for adapter weights, replacing the stage rate.
    #[serde(default)]
    pub lr_override: Option<f64>,
}

fn default_targets() -> Vec<String> {
    vec!["lm.blocks.*.attn.*".into(), "lm.blocks.*.mlp.*".into()]
}

impl LoraSpec {
    pub fn new(rank: usize) -> Self {
        LoraSpec { rank, alpha: None, targets: default_targets(), lr_override: None }
    }

    pub fn scale(&self) -> f64 {
        self.alpha.unwrap_or(2.0 * self.rank as f64) / self.rank as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub name: StageName,
    #[serde(default)]
    pub frozen: BTreeSet<String>,
    #[serde(default)]
    pub lora: Option<LoraSpec>,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default = "default_seq_cap")]
    pub seq_cap: usize,
    #[serde(default)]
    pub grad_clip: Option<f64>,
}

fn default_seq_cap() -> usize {
    DEFAULT_SEQ_CAP
}

impl StageConfig {
    /// Connector-only alignment: encoder, LM and embeddings frozen, lr 1e-3.
    pub fn pretrain() -> Self {
        StageConfig {
            name: StageName::Pretrain,
            frozen: ["encoder", "lm", "embed"].map(String::from).into(),
            lora: None,
            lr: 1e-3,
            epochs: 1,
            batch_size: 64,
            seq_cap: DEFAULT_SEQ_CAP,
            grad_clip: None,
        }
    }

    /// Joint training of every module, lr 2e-5.
    pub fn instruct() -> Self {
        StageConfig {
            name: StageName::Instruct,
            frozen: BTreeSet::new(),
            lora: None,
            lr: 2e-5,
            epochs: 3,
            batch_size: 16,
            seq_cap: DEFAULT_SEQ_CAP,
            grad_clip: None,
        }
    }

    /// Instruction tuning with the LM and embeddings frozen.
    pub fn instruct_frozen_lm() -> Self {
        StageConfig { frozen: ["lm", "embed"].map(String::from).into(), ..Self::instruct() }
    }

    /// LM trained only through adapters at the stage rate.
    pub fn instruct_lora(rank: usize) -> Self {
        StageConfig { lora: Some(LoraSpec::new(rank)), ..Self::instruct_frozen_lm() }
    }

    /// LM adapters trained at the higher 2e-4 rate.
    pub fn instruct_lora_star(rank: usize) -> Self {
        StageConfig { lora: Some(LoraSpec { lr_override: Some(2e-4), ..LoraSpec::new(rank) }), ..Self::instruct_frozen_lm() }
    }

    /// Learning rate applied to `p`.
    pub fn lr_for<E: Elem>(&self, p: &Parameter<E>) -> f64 {
        match (&self.lora, p.is_adapter()) {
            (Some(LoraSpec { lr_override: Some(lr), .. }), true) => *lr,
            _ => self.lr,
        }
    }
}

fn model_namespaces<E: Elem>(model: &MedVlm<E>) -> BTreeSet<&'static str> {
    let enc = match model.cfg.encoder {
        EncoderConfig::ThreeD(_) => "encoder3d",
        _ => "encoder2d",
    };
    ["encoder", enc, "connector", "lm", "embed"].into()
}

fn is_frozen(frozen: &BTreeSet<String>, ns: &str) -> bool {
    frozen.contains(ns) || (ns.starts_with("encoder") && frozen.contains("encoder"))
}

/// Applies the stage's frozen set. Adapter weights stay trainable; base
/// weights of adapted layers are always frozen.
pub fn set_trainable<E: Elem>(model: &mut MedVlm<E>, stage: &StageConfig) -> Result<()> {
    let present = model_namespaces(model);
    if let Some(bad) = stage.frozen.iter().find(|ns| !present.contains(ns.as_str())) {
        return Err(Error::Config(format!(
            "unknown module namespace `{bad}` (model has {})",
            present.iter().copied().collect::<Vec<_>>().join(", ")
        )));
    }
    model.visit_mut(&mut |p| {
        let on = p.is_adapter() || !is_frozen(&stage.frozen, p.namespace());
        p.set_trainable(on);
    });
    model.visit_linears_mut(&mut |l| {
        if l.lora.is_some() {
            l.weight.set_trainable(false);
            if let Some(b) = &mut l.bias {
                b.set_trainable(false);
            }
        }
    });
    Ok(())
}

/// `*` matches any run of characters, dots included.
pub fn pattern_matches(pattern: &str, name: &str) -> bool {
    let parts: Vec<&str> = pattern.split('*').collect();
    if parts.len() == 1 {
        return pattern == name;
    }
    let (first, last) = (parts[0], parts[parts.len() - 1]);
    if !name.starts_with(first) || name.len() < first.len() + last.len() || !name.ends_with(last) {
        return false;
    }
    let mut rest = &name[first.len()..name.len() - last.len()];
    for mid in &parts[1..parts.len() - 1] {
        match rest.find(mid) {
            Some(i) => rest = &rest[i + mid.len()..],
            None => return false,
        }
    }
    true
}

/// Adds a zero-output adapter to every linear layer matching the spec's
/// targets and freezes the base weights. Returns the number of adapted layers.
pub fn lora_inject<E: Elem>(model: &mut MedVlm<E>, spec: &LoraSpec, seeds: &SeedTree) -> Result<usize> {
    if spec.rank < 1 {
        return Err(Error::Config("LoRA rank must be at least 1".into()));
    }
    let scale = spec.scale();
    let mut count = 0;
    model.visit_linears_mut(&mut |l| {
        if l.lora.is_some() || !spec.targets.iter().any(|t| pattern_matches(t, l.name())) {
            return;
        }
        let name = l.name().to_string();
        l.lora = Some(LoraAdapter {
            a: Parameter::trunc_normal(format!("{name}.lora_a"), &[spec.rank, l.fan_in()], INIT_STD, seeds).mark_adapter(),
            b: Parameter::zeros(format!("{name}.lora_b"), &[l.fan_out(), spec.rank]).mark_adapter(),
            scale,
        });
        l.weight.set_trainable(false);
        if let Some(b) = &mut l.bias {
            b.set_trainable(false);
        }
        count += 1;
    });
    if count == 0 {
        return Err(Error::Config(format!("LoRA targets {:?} match no linear layer", spec.targets)));
    }
    Ok(count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeStatus {
    Merged(usize),
    /// Nothing to merge; the model is untouched.
    NoAdapters,
}

/// Folds every adapter into its base weight (`W += scale · B·A`) and removes it.
pub fn lora_merge<E: Elem>(model: &mut MedVlm<E>) -> Result<MergeStatus> {
    let mut merged = 0;
    let mut result = Ok(());
    model.visit_linears_mut(&mut |l| {
        let Some(ad) = l.lora.take() else { return };
        let (out, inp, r) = (l.fan_out(), l.fan_in(), ad.a.shape()[0]);
        let (a, b) = (ad.a.data(), ad.b.data());
        let mut w = l.weight.data().to_vec();
        for o in 0..out {
            for i in 0..inp {
                let mut acc = 0.0f64;
                for k in 0..r {
                    acc += b[o * r + k].to_f64().unwrap_or(0.0) * a[k * inp + i].to_f64().unwrap_or(0.0);
                }
                if acc != 0.0 {
                    w[o * inp + i] = w[o * inp + i] + E::lit(ad.scale * acc);
                }
            }
        }
        if let Err(e) = l.weight.set_data(w) {
            result = Err(e);
        }
        merged += 1;
    });
    result?;
    if merged == 0 {
        log::warn!("lora_merge: model has no adapters");
        return Ok(MergeStatus::NoAdapters);
    }
    Ok(MergeStatus::Merged(merged))
}

pub fn has_adapters<E: Elem>(model: &MedVlm<E>) -> bool {
    let mut any = false;
    model.visit(&mut |p| any |= p.is_adapter());
    any
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Encoder2DConfig, LmConfig, ModelConfig};

    fn cfg() -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig::TwoD(Encoder2DConfig { image_size: 16, patch_size: 8, channels: 3, depth: 1, heads: 2, width: 8, use_pos_embed: true }),
            lm: LmConfig { width: 16, depth: 2, heads: 2, max_seq: 64, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn presets_carry_rates() {
        assert_eq!(StageConfig::pretrain().lr, 1e-3);
        assert_eq!(StageConfig::instruct().lr, 2e-5);
        assert_eq!(StageConfig::instruct_lora_star(4).lora.unwrap().lr_override, Some(2e-4));
        assert_eq!(LoraSpec::new(8).scale(), 2.0);
    }

    #[test]
    fn patterns() {
        assert!(pattern_matches("lm.blocks.*.attn.*", "lm.blocks.0.attn.q"));
        assert!(pattern_matches("lm.blocks.*.mlp.*", "lm.blocks.11.mlp.fc2"));
        assert!(!pattern_matches("lm.blocks.*.attn.*", "encoder2d.blocks.0.attn.q"));
        assert!(pattern_matches("connector.mlp.fc1", "connector.mlp.fc1"));
        assert!(!pattern_matches("a*b*c", "abd"));
    }

    #[test]
    fn pretrain_freezes_all_but_connector() {
        let mut m = MedVlm::<f32>::new(&cfg(), 0).unwrap();
        set_trainable(&mut m, &StageConfig::pretrain()).unwrap();
        m.visit(&mut |p| assert_eq!(p.trainable(), p.namespace() == "connector", "{}", p.name()));
        set_trainable(&mut m, &StageConfig::instruct()).unwrap();
        m.visit(&mut |p| assert!(p.trainable()));
    }

    #[test]
    fn unknown_namespace_rejected() {
        let mut m = MedVlm::<f32>::new(&cfg(), 0).unwrap();
        let mut s = StageConfig::instruct();
        s.frozen.insert("encoder3d".into());
        assert!(matches!(set_trainable(&mut m, &s), Err(Error::Config(_))));
    }

    #[test]
    fn inject_rules() {
        let mut m = MedVlm::<f32>::new(&cfg(), 0).unwrap();
        assert!(lora_inject(&mut m, &LoraSpec::new(0), &SeedTree::new(0)).is_err());
        let none = LoraSpec { targets: vec!["nothing.*".into()], ..LoraSpec::new(2) };
        assert!(lora_inject(&mut m, &none, &SeedTree::new(0)).is_err());
        assert_eq!(lora_inject(&mut m, &LoraSpec::new(2), &SeedTree::new(0)).unwrap(), 12);
        let names = m.param_names();
        assert!(names.contains(&"lm.blocks.1.mlp.fc2.lora_b".to_string()));
        assert!(!names.iter().any(|n| n.starts_with("encoder2d") && n.contains("lora")));
        set_trainable(&mut m, &StageConfig::instruct()).unwrap();
        m.visit(&mut |p| {
            if p.name().starts_with("lm.blocks.0.attn.q.") {
                assert_eq!(p.trainable(), p.is_adapter(), "{}", p.name());
            }
        });
    }

    #[test]
    fn merge_without_adapters_is_a_noop() {
        let mut m = MedVlm::<f32>::new(&cfg(), 0).unwrap();
        let before = m.snapshot();
        assert_eq!(lora_merge(&mut m).unwrap(), MergeStatus::NoAdapters);
        assert_eq!(m.snapshot(), before);
    }

    #[test]
    fn zero_b_merge_is_bit_exact() {
        let mut m = MedVlm::<f32>::new(&cfg(), 0).unwrap();
        let before = m.snapshot();
        lora_inject(&mut m, &LoraSpec::new(2), &SeedTree::new(0)).unwrap();
        assert_eq!(lora_merge(&mut m).unwrap(), MergeStatus::Merged(12));
        assert_eq!(m.snapshot(), before);
        assert!(!has_adapters(&m));
        assert_eq!(lora_merge(&mut m).unwrap(), MergeStatus::NoAdapters);
    }
}
