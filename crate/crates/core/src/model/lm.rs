//! Decoder-only language model over an image-token prefix plus embedded text.

use serde::{Deserialize, Serialize};

use crate::data::{EOS, VOCAB_SIZE};
use crate::error::{Error, Result};
use crate::nn::{Block, KvCache, LayerNorm, Linear, INIT_STD};
use crate::param::{Module, Parameter};
use crate::rng::SeedTree;
use crate::tensor::{no_grad, Elem, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub vocab_size: usize,
    /// Token width `D_T`.
    pub width: usize,
    pub depth: usize,
    pub heads: usize,
    pub max_seq: usize,
    pub tie_embeddings: bool,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig { vocab_size: VOCAB_SIZE, width: 128, depth: 2, heads: 4, max_seq: 2048, tie_embeddings: true }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.width % self.heads != 0 {
            return Err(Error::Config(format!("lm width {} not divisible by {} heads", self.width, self.heads)));
        }
        if self.vocab_size < VOCAB_SIZE || self.max_seq == 0 {
            return Err(Error::Config(format!(
                "lm needs vocab_size >= {VOCAB_SIZE} and max_seq > 0, got {} / {}",
                self.vocab_size, self.max_seq
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LanguageModel<E: Elem = f32> {
    pub cfg: LmConfig,
    /// `[vocab × D_T]`, also the output head when tied.
    pub embed: Parameter<E>,
    /// Learned absolute positions `[max_seq × D_T]`; image tokens take the leading ones.
    pub pos_embed: Parameter<E>,
    pub blocks: Vec<Block<E>>,
    pub ln_f: LayerNorm<E>,
    pub head: Option<Linear<E>>,
}

impl<E: Elem> LanguageModel<E> {
    pub fn new(cfg: &LmConfig, seeds: &SeedTree) -> Result<Self> {
        cfg.validate()?;
        Ok(LanguageModel {
            cfg: cfg.clone(),
            embed: Parameter::trunc_normal("embed.tokens", &[cfg.vocab_size, cfg.width], INIT_STD, seeds),
            pos_embed: Parameter::trunc_normal("lm.pos_embed", &[cfg.max_seq, cfg.width], INIT_STD, seeds),
            blocks: (0..cfg.depth)
                .map(|i| Block::new(&format!("lm.blocks.{i}"), cfg.width, cfg.heads, seeds))
                .collect::<Result<_>>()?,
            ln_f: LayerNorm::new("lm.ln_f", cfg.width),
            head: (!cfg.tie_embeddings).then(|| Linear::new("lm.head", cfg.width, cfg.vocab_size, false, seeds)),
        })
    }

    /// Token embeddings `[n × D_T]`.
    pub fn embed_ids(&self, ids: &[usize]) -> Result<Tensor<E>> {
        Tensor::embedding(self.embed.tensor(), ids)
    }

    /// Next-token logits for an embedded sequence continuing `caches` (one per block).
    pub fn forward_embeddings(&self, x: &Tensor<E>, caches: Option<&mut [KvCache<E>]>) -> Result<Tensor<E>> {
        if x.rank() != 2 || x.shape()[1] != self.cfg.width {
            return Err(Error::Dimension { op: "lm forward", lhs: x.shape().to_vec(), rhs: vec![self.cfg.width] });
        }
        let offset = caches.as_ref().and_then(|c| c.first()).map(|c| c.len()).unwrap_or(0);
        let len = offset + x.shape()[0];
        if len > self.cfg.max_seq {
            return Err(Error::SequenceTooLong { len, max: self.cfg.max_seq });
        }
        let pos = self.pos_embed.tensor().narrow(offset, x.shape()[0])?;
        let mut h = x.add(&pos)?;
        match caches {
            Some(caches) => {
                if caches.len() != self.blocks.len() {
                    return Err(Error::Contract(format!("{} caches for {} blocks", caches.len(), self.blocks.len())));
                }
                for (b, c) in self.blocks.iter().zip(caches.iter_mut()) {
                    h = b.forward(&h, true, Some(c))?;
                }
            }
            None => {
                for b in &self.blocks {
                    h = b.forward(&h, true, None)?;
                }
            }
        }
        let h = self.ln_f.forward(&h)?;
        match &self.head {
            Some(head) => head.forward(&h),
            None => h.linear(self.embed.tensor(), None),
        }
    }

    /// `concat(image_tokens, embed(text_ids))`.
    pub fn prefix_embeddings(&self, image_tokens: Option<&Tensor<E>>, text_ids: &[usize]) -> Result<Tensor<E>> {
        let text = self.embed_ids(text_ids)?;
        match image_tokens {
            Some(img) if img.shape()[0] > 0 => {
                if img.rank() != 2 || img.shape()[1] != self.cfg.width {
                    return Err(Error::Dimension { op: "forward_prefix", lhs: img.shape().to_vec(), rhs: vec![self.cfg.width] });
                }
                if text_ids.is_empty() {
                    Ok(img.clone())
                } else {
                    Tensor::concat(&[img, &text])
                }
            }
            _ => Ok(text),
        }
    }

    /// Logits `[(L_img + L_text) × vocab]`.
    pub fn forward_prefix(&self, image_tokens: Option<&Tensor<E>>, text_ids: &[usize]) -> Result<Tensor<E>> {
        let len = image_tokens.map(|t| t.shape()[0]).unwrap_or(0) + text_ids.len();
        if len > self.cfg.max_seq {
            return Err(Error::SequenceTooLong { len, max: self.cfg.max_seq });
        }
        self.forward_embeddings(&self.prefix_embeddings(image_tokens, text_ids)?, None)
    }

    fn check_budget(&self, prefix: &Tensor<E>, max_new: usize) -> Result<()> {
        let len = prefix.shape()[0] + max_new;
        if len > self.cfg.max_seq {
            return Err(Error::SequenceTooLong { len, max: self.cfg.max_seq });
        }
        if prefix.shape()[0] == 0 && max_new > 0 {
            return Err(Error::Contract("generation needs a non-empty prefix".into()));
        }
        Ok(())
    }

    /// Greedy decoding with per-block key/value caches. Returns new ids, EOS excluded.
    pub fn generate_from(&self, prefix: &Tensor<E>, max_new: usize) -> Result<Vec<usize>> {
        self.check_budget(prefix, max_new)?;
        no_grad(|| {
            let mut caches = vec![KvCache::default(); self.blocks.len()];
            let mut out = Vec::new();
            let mut input = prefix.clone();
            for _ in 0..max_new {
                let logits = self.forward_embeddings(&input, Some(&mut caches))?;
                let next = last_argmax(&logits);
                if next == EOS {
                    break;
                }
                out.push(next);
                input = self.embed_ids(&[next])?;
            }
            Ok(out)
        })
    }

    /// Same decoding without caches: re-runs the whole sequence every step.
    pub fn generate_replay(&self, prefix: &Tensor<E>, max_new: usize) -> Result<Vec<usize>> {
        self.check_budget(prefix, max_new)?;
        no_grad(|| {
            let mut out = Vec::new();
            for _ in 0..max_new {
                let seq = if out.is_empty() { prefix.clone() } else { Tensor::concat(&[prefix, &self.embed_ids(&out)?])? };
                let next = last_argmax(&self.forward_embeddings(&seq, None)?);
                if next == EOS {
                    break;
                }
                out.push(next);
            }
            Ok(out)
        })
    }

    pub fn generate(&self, image_tokens: Option<&Tensor<E>>, prompt_ids: &[usize], max_new: usize) -> Result<Vec<usize>> {
        let prefix = self.prefix_embeddings(image_tokens, prompt_ids)?;
        self.generate_from(&prefix, max_new)
    }
}

/// Argmax of the last row; ties go to the lowest id.
pub fn last_argmax<E: Elem>(logits: &Tensor<E>) -> usize {
    let v = logits.shape()[1];
    let row = &logits.data()[logits.numel() - v..];
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

impl<E: Elem> Module<E> for LanguageModel<E> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<E>)) {
        f(&self.embed);
        f(&self.pos_embed);
        self.blocks.iter().for_each(|b| b.visit(f));
        self.ln_f.visit(f);
        if let Some(h) = &self.head {
            h.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<E>)) {
        f(&mut self.embed);
        f(&mut self.pos_embed);
        self.blocks.iter_mut().for_each(|b| b.visit_mut(f));
        self.ln_f.visit_mut(f);
        if let Some(h) = &mut self.head {
            h.visit_mut(f);
        }
    }
}
