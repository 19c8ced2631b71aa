//! Encoder–connector–LM assembly.

pub mod connector;
pub mod encoders;
pub mod lm;

use serde::{Deserialize, Serialize};

pub use connector::{Connector, ConnectorConfig, ConnectorKind};
pub use encoders::{Encoder2D, Encoder2DConfig, Encoder3D, Encoder3DConfig};
pub use lm::{LanguageModel, LmConfig};

use crate::data::batch::prompt_ids;
use crate::data::{ImagePayload, Modality, MultimodalSample, IMG};
use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::param::{Module, Parameter};
use crate::rng::SeedTree;
use crate::tensor::{no_grad, Elem, Tensor};

/// Which visual front-end the model uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EncoderConfig {
    /// 2D patch encoder on single images.
    #[serde(rename = "2d")]
    TwoD(Encoder2DConfig),
    /// 3D patch encoder on whole volumes.
    #[serde(rename = "3d")]
    ThreeD(Encoder3DConfig),
    /// 2D encoder applied to each slice of a volume.
    #[serde(rename = "slices")]
    Slices(Encoder2DConfig),
}

impl EncoderConfig {
    pub fn width(&self) -> usize {
        match self {
            EncoderConfig::TwoD(c) | EncoderConfig::Slices(c) => c.width,
            EncoderConfig::ThreeD(c) => c.width,
        }
    }

    pub fn modality(&self) -> Modality {
        match self {
            EncoderConfig::TwoD(_) => Modality::TwoD,
            _ => Modality::ThreeD,
        }
    }

    /// Tokens per image (or per slice) before the connector.
    pub fn num_tokens(&self) -> usize {
        match self {
            EncoderConfig::TwoD(c) | EncoderConfig::Slices(c) => c.num_tokens(),
            EncoderConfig::ThreeD(c) => c.num_tokens(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectorSettings {
    pub kind: ConnectorKind,
    #[serde(default = "default_l_attn")]
    pub l_attn: usize,
    #[serde(default = "default_heads")]
    pub heads: usize,
}

fn default_l_attn() -> usize {
    256
}

fn default_heads() -> usize {
    4
}

impl Default for ConnectorSettings {
    fn default() -> Self {
        ConnectorSettings { kind: ConnectorKind::Mlp, l_attn: default_l_attn(), heads: default_heads() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub connector: ConnectorSettings,
    pub lm: LmConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::TwoD(Encoder2DConfig::default()),
            connector: ConnectorSettings::default(),
            lm: LmConfig { max_seq: 256, ..LmConfig::default() },
        }
    }
}

impl ModelConfig {
    pub fn connector_config(&self) -> ConnectorConfig {
        ConnectorConfig {
            kind: self.connector.kind,
            d_in: self.encoder.width(),
            d_out: self.lm.width,
            l_attn: self.connector.l_attn,
            heads: self.connector.heads,
        }
    }

    /// Length of the image-token run in every row.
    pub fn image_tokens(&self) -> usize {
        match self.connector.kind {
            ConnectorKind::AttnCompress => self.connector.l_attn,
            _ => self.encoder.num_tokens(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.encoder, EncoderConfig::Slices(_)) && self.connector.kind == ConnectorKind::Mlp {
            return Err(Error::Config(
                "per-slice encoding needs an attn_compress or avg_pool connector".into(),
            ));
        }
        self.connector_config().validate()?;
        self.lm.validate()?;
        if self.image_tokens() >= self.lm.max_seq {
            return Err(Error::Config(format!(
                "{} image tokens leave no room in max_seq {}",
                self.image_tokens(),
                self.lm.max_seq
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum VisualEncoder<E: Elem = f32> {
    TwoD(Encoder2D<E>),
    ThreeD(Encoder3D<E>),
    Slices(Encoder2D<E>),
}

impl<E: Elem> VisualEncoder<E> {
    /// `[L × D_I]`, or `[N × L × D_I]` for per-slice encoding.
    pub fn encode(&self, image: &ImagePayload) -> Result<Tensor<E>> {
        match (self, image) {
            (VisualEncoder::TwoD(e), ImagePayload::Image(i)) => e.encode(i),
            (VisualEncoder::ThreeD(e), ImagePayload::Volume(v)) => e.encode(v),
            (VisualEncoder::Slices(e), ImagePayload::Volume(v)) => e.encode_slices(v),
            (_, other) => Err(Error::validation(format!(
                "encoder cannot take a `{}` image",
                other.modality().as_str()
            ))),
        }
    }

    fn inner_mut(&mut self) -> &mut encoders::PatchTransformer<E> {
        match self {
            VisualEncoder::TwoD(e) | VisualEncoder::Slices(e) => &mut e.net,
            VisualEncoder::ThreeD(e) => &mut e.net,
        }
    }
}

impl<E: Elem> Module<E> for VisualEncoder<E> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<E>)) {
        match self {
            VisualEncoder::TwoD(e) | VisualEncoder::Slices(e) => e.visit(f),
            VisualEncoder::ThreeD(e) => e.visit(f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<E>)) {
        match self {
            VisualEncoder::TwoD(e) | VisualEncoder::Slices(e) => e.visit_mut(f),
            VisualEncoder::ThreeD(e) => e.visit_mut(f),
        }
    }
}

/// The full vision-language model.
#[derive(Debug, Clone)]
pub struct MedVlm<E: Elem = f32> {
    pub cfg: ModelConfig,
    pub encoder: VisualEncoder<E>,
    pub connector: Connector<E>,
    pub lm: LanguageModel<E>,
}

impl<E: Elem> MedVlm<E> {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let seeds = SeedTree::new(seed);
        let encoder = match &cfg.encoder {
            EncoderConfig::TwoD(c) => VisualEncoder::TwoD(Encoder2D::new(c, &seeds)?),
            EncoderConfig::ThreeD(c) => VisualEncoder::ThreeD(Encoder3D::new(c, &seeds)?),
            EncoderConfig::Slices(c) => VisualEncoder::Slices(Encoder2D::new(c, &seeds)?),
        };
        Ok(MedVlm {
            cfg: cfg.clone(),
            encoder,
            connector: Connector::new(&cfg.connector_config(), &seeds)?,
            lm: LanguageModel::new(&cfg.lm, &seeds)?,
        })
    }

    pub fn image_tokens(&self) -> usize {
        self.cfg.image_tokens()
    }

    /// Connector output `[L_img × D_T]` for one image.
    pub fn visual_tokens(&self, image: &ImagePayload) -> Result<Tensor<E>> {
        self.connector.forward(&self.encoder.encode(image)?)
    }

    /// Embeds a row, splicing the image tokens over its run of [`IMG`] placeholders.
    pub fn embed_row(&self, image: Option<&ImagePayload>, ids: &[usize]) -> Result<Tensor<E>> {
        let start = ids.iter().position(|&t| t == IMG);
        let count = ids.iter().filter(|&&t| t == IMG).count();
        match (image, start) {
            (None, None) => self.lm.embed_ids(ids),
            (Some(img), Some(s)) => {
                let end = s + count;
                if ids[s..end].iter().any(|&t| t != IMG) {
                    return Err(Error::Contract("image placeholders must be contiguous".into()));
                }
                let visual = self.visual_tokens(img)?;
                if visual.shape()[0] != count {
                    return Err(Error::Contract(format!(
                        "row reserves {count} image slots, connector emits {}",
                        visual.shape()[0]
                    )));
                }
                let mut parts = Vec::with_capacity(3);
                let head = self.lm.embed_ids(&ids[..s])?;
                let tail = (end < ids.len()).then(|| self.lm.embed_ids(&ids[end..])).transpose()?;
                if s > 0 {
                    parts.push(&head);
                }
                parts.push(&visual);
                if let Some(t) = &tail {
                    parts.push(t);
                }
                Tensor::concat(&parts)
            }
            (Some(_), None) => Err(Error::Contract("image given but row has no placeholders".into())),
            (None, Some(_)) => Err(Error::Contract("row has image placeholders but no image".into())),
        }
    }

    /// Next-token logits `[T × vocab]` for one unpadded row.
    pub fn forward_row(&self, image: Option<&ImagePayload>, ids: &[usize]) -> Result<Tensor<E>> {
        if ids.len() > self.cfg.lm.max_seq {
            return Err(Error::SequenceTooLong { len: ids.len(), max: self.cfg.lm.max_seq });
        }
        self.lm.forward_embeddings(&self.embed_row(image, ids)?, None)
    }

    /// Greedy answer ids for a sample's image and prompt.
    pub fn generate(&self, sample: &MultimodalSample, max_new: usize) -> Result<Vec<usize>> {
        no_grad(|| {
            let ids = prompt_ids(sample, self.image_tokens());
            let prefix = self.embed_row(sample.image.as_ref(), &ids)?;
            self.lm.generate_from(&prefix, max_new)
        })
    }

    /// Cache-free generation, used to cross-check [`MedVlm::generate`].
    pub fn generate_replay(&self, sample: &MultimodalSample, max_new: usize) -> Result<Vec<usize>> {
        no_grad(|| {
            let ids = prompt_ids(sample, self.image_tokens());
            let prefix = self.embed_row(sample.image.as_ref(), &ids)?;
            self.lm.generate_replay(&prefix, max_new)
        })
    }

    /// Every linear layer, visited with its path name.
    pub fn visit_linears_mut(&mut self, f: &mut dyn FnMut(&mut Linear<E>)) {
        let enc = self.encoder.inner_mut();
        f(&mut enc.patch_proj);
        for b in &mut enc.blocks {
            b.linears_mut().into_iter().for_each(&mut *f);
        }
        f(&mut self.connector.mlp.fc1);
        f(&mut self.connector.mlp.fc2);
        if let Some(c) = &mut self.connector.compressor {
            let a = &mut c.attn;
            for l in [&mut a.q, &mut a.k, &mut a.v, &mut a.o] {
                f(l);
            }
        }
        for b in &mut self.lm.blocks {
            b.linears_mut().into_iter().for_each(&mut *f);
        }
        if let Some(h) = &mut self.lm.head {
            f(h);
        }
    }
}

impl<E: Elem> Module<E> for MedVlm<E> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<E>)) {
        self.encoder.visit(f);
        self.connector.visit(f);
        self.lm.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<E>)) {
        self.encoder.visit_mut(f);
        self.connector.visit_mut(f);
        self.lm.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Image2D, Task, Volume3D};

    pub(crate) fn tiny_2d() -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig::TwoD(Encoder2DConfig { image_size: 16, patch_size: 8, channels: 3, depth: 1, heads: 2, width: 8, use_pos_embed: true }),
            connector: ConnectorSettings::default(),
            lm: LmConfig { width: 16, depth: 1, heads: 2, max_seq: 64, ..Default::default() },
        }
    }

    fn sample(img: ImagePayload) -> MultimodalSample {
        MultimodalSample { image: Some(img), prompt: "q?".into(), response: "a".into(), task: Task::VqaShort }
    }

    #[test]
    fn config_json_round_trip() {
        let mut cfg = tiny_2d();
        cfg.connector.kind = ConnectorKind::AvgPool;
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"kind\":\"2d\""));
        assert_eq!(serde_json::from_str::<ModelConfig>(&json).unwrap(), cfg);
    }

    #[test]
    fn namespaces_are_disjoint_and_named() {
        let m = MedVlm::<f32>::new(&tiny_2d(), 0).unwrap();
        let names = m.param_names();
        let mut uniq = names.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), names.len());
        for n in &names {
            let ns = n.split('.').next().unwrap();
            assert!(["encoder2d", "connector", "lm", "embed"].contains(&ns), "{n}");
        }
    }

    #[test]
    fn row_forward_splices_image() {
        let m = MedVlm::<f64>::new(&tiny_2d(), 1).unwrap();
        let s = sample(ImagePayload::Image(Image2D::zeros(16, 16, 3)));
        let ids = prompt_ids(&s, m.image_tokens());
        assert_eq!(ids.len(), 1 + 4 + 2);
        let logits = m.forward_row(s.image.as_ref(), &ids).unwrap();
        assert_eq!(logits.shape(), &[7, 260]);
        let visual = m.visual_tokens(s.image.as_ref().unwrap()).unwrap();
        let prefix = Tensor::concat(&[&m.lm.embed_ids(&[ids[0]]).unwrap(), &visual]).unwrap();
        let manual = m.lm.forward_prefix(Some(&prefix), &ids[5..]).unwrap();
        assert_eq!(manual.data(), logits.data());
        assert!(m.forward_row(None, &ids).is_err());
    }

    #[test]
    fn slices_need_a_pooling_connector() {
        let mut cfg = tiny_2d();
        let EncoderConfig::TwoD(c) = cfg.encoder.clone() else { unreachable!() };
        cfg.encoder = EncoderConfig::Slices(c);
        assert!(matches!(MedVlm::<f32>::new(&cfg, 0), Err(Error::Config(_))));
        cfg.connector.kind = ConnectorKind::AvgPool;
        let m = MedVlm::<f32>::new(&cfg, 0).unwrap();
        let vol = Volume3D::new(3, 16, 16, vec![0.5; 768]).unwrap();
        assert_eq!(no_grad(|| m.visual_tokens(&ImagePayload::Volume(vol)).unwrap()).shape(), &[4, 16]);
    }

    #[test]
    fn generation_matches_replay() {
        let m = MedVlm::<f32>::new(&tiny_2d(), 9).unwrap();
        let s = sample(ImagePayload::Image(Image2D::new(16, 16, 3, (0..768).map(|i| (i % 5) as f32 / 5.0).collect()).unwrap()));
        assert_eq!(m.generate(&s, 10).unwrap(), m.generate_replay(&s, 10).unwrap());
    }
}
