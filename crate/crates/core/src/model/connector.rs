//! Connectors from encoder space (`D_I`) to language-model space (`D_T`).
//!
//! Every variant ends in the same two-layer MLP projector; the attention
//! compressor and the slice-average pooler only change what is fed to it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Attention, Linear, INIT_STD};
use crate::param::{Module, Parameter};
use crate::rng::SeedTree;
use crate::tensor::{Elem, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectorKind {
    Mlp,
    AttnCompress,
    AvgPool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectorConfig {
    pub kind: ConnectorKind,
    pub d_in: usize,
    pub d_out: usize,
    /// Learned query count of the attention compressor.
    pub l_attn: usize,
    pub heads: usize,
}

impl ConnectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_out == 0 {
            return Err(Error::Config("connector widths must be positive".into()));
        }
        if self.kind == ConnectorKind::AttnCompress {
            if self.l_attn < 1 {
                return Err(Error::Config("attn_compress needs at least one query".into()));
            }
            if self.heads == 0 || self.d_in % self.heads != 0 {
                return Err(Error::Config(format!("compressor width {} not divisible by {} heads", self.d_in, self.heads)));
            }
        }
        Ok(())
    }
}

/// Per-token `Linear(D_I→D_T) → GELU → Linear(D_T→D_T)`.
#[derive(Debug, Clone)]
pub struct ProjectorMlp<E: Elem = f32> {
    pub fc1: Linear<E>,
    pub fc2: Linear<E>,
}

impl<E: Elem> ProjectorMlp<E> {
    pub fn new(d_in: usize, d_out: usize, seeds: &SeedTree) -> Self {
        ProjectorMlp {
            fc1: Linear::new("connector.mlp.fc1", d_in, d_out, true, seeds),
            fc2: Linear::new("connector.mlp.fc2", d_out, d_out, true, seeds),
        }
    }

    pub fn forward(&self, z: &Tensor<E>) -> Result<Tensor<E>> {
        let d_in = self.fc1.fan_in();
        if z.rank() != 2 || z.shape()[1] != d_in {
            return Err(Error::Dimension { op: "project_mlp", lhs: z.shape().to_vec(), rhs: vec![d_in] });
        }
        self.fc2.forward(&self.fc1.forward(z)?.gelu())
    }
}

impl<E: Elem> Module<E> for ProjectorMlp<E> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<E>)) {
        self.fc1.visit(f);
        self.fc2.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<E>)) {
        self.fc1.visit_mut(f);
        self.fc2.visit_mut(f);
    }
}

/// `L_attn` position-free learned queries cross-attending over all slice tokens.
#[derive(Debug, Clone)]
pub struct AttentionCompressor<E: Elem = f32> {
    pub queries: Parameter<E>,
    pub attn: Attention<E>,
}

impl<E: Elem> AttentionCompressor<E> {
    pub fn new(l_attn: usize, d_in: usize, heads: usize, seeds: &SeedTree) -> Result<Self> {
        Ok(AttentionCompressor {
            queries: Parameter::trunc_normal("connector.compress.queries", &[l_attn, d_in], INIT_STD, seeds),
            attn: Attention::new("connector.compress.attn", d_in, heads, seeds)?,
        })
    }

    /// `[S × D_I] -> [L_attn × D_I]`.
    pub fn forward(&self, tokens: &Tensor<E>) -> Result<Tensor<E>> {
        self.attn.cross(self.queries.tensor(), tokens)
    }

    /// Attention weights `[heads × L_attn × S]`.
    pub fn attention_weights(&self, tokens: &Tensor<E>) -> Result<Tensor<E>> {
        let q = self.attn.q.forward(self.queries.tensor())?;
        let k = self.attn.k.forward(tokens)?;
        Tensor::attention_probs(&q, &k, self.attn.heads, false)
    }
}

impl<E: Elem> Module<E> for AttentionCompressor<E> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<E>)) {
        f(&self.queries);
        self.attn.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<E>)) {
        f(&mut self.queries);
        self.attn.visit_mut(f);
    }
}

#[derive(Debug, Clone)]
pub struct Connector<E: Elem = f32> {
    pub cfg: ConnectorConfig,
    pub mlp: ProjectorMlp<E>,
    pub compressor: Option<AttentionCompressor<E>>,
}

impl<E: Elem> Connector<E> {
    pub fn new(cfg: &ConnectorConfig, seeds: &SeedTree) -> Result<Self> {
        cfg.validate()?;
        let compressor = match cfg.kind {
            ConnectorKind::AttnCompress => Some(AttentionCompressor::new(cfg.l_attn, cfg.d_in, cfg.heads, seeds)?),
            _ => None,
        };
        Ok(Connector { cfg: cfg.clone(), mlp: ProjectorMlp::new(cfg.d_in, cfg.d_out, seeds), compressor })
    }

    pub fn project_mlp(&self, z: &Tensor<E>) -> Result<Tensor<E>> {
        self.mlp.forward(z)
    }

    /// Compresses concatenated slice tokens (`[N·L × D_I]` or `[N × L × D_I]`)
    /// to exactly `L_attn` tokens of width `D_T`.
    pub fn compress_attention(&self, slice_tokens: &Tensor<E>) -> Result<Tensor<E>> {
        let comp = self
            .compressor
            .as_ref()
            .ok_or_else(|| Error::Config("connector has no attention compressor".into()))?;
        let flat = self.flatten(slice_tokens)?;
        self.mlp.forward(&comp.forward(&flat)?)
    }

    /// Mean over the slice axis of `[N × L × D_I]`, then the MLP: `[L × D_T]`.
    pub fn compress_average(&self, slice_tokens: &Tensor<E>) -> Result<Tensor<E>> {
        let s = slice_tokens.shape();
        let pooled = match s.len() {
            3 if s[0] == 0 => return Err(Error::Shape("average over zero slices".into())),
            3 => slice_tokens.mean_axis(0)?,
            2 => slice_tokens.clone(),
            _ => return Err(Error::Shape(format!("compress_average expects [N, L, D], got {s:?}"))),
        };
        self.mlp.forward(&pooled)
    }

    fn flatten(&self, t: &Tensor<E>) -> Result<Tensor<E>> {
        let s = t.shape();
        let flat = match s.len() {
            3 => t.reshape(&[s[0] * s[1], s[2]])?,
            2 => t.clone(),
            _ => return Err(Error::Shape(format!("slice tokens must be rank 2 or 3, got {s:?}"))),
        };
        if flat.shape()[0] == 0 {
            return Err(Error::Shape("empty slice token sequence".into()));
        }
        if flat.shape()[1] != self.cfg.d_in {
            return Err(Error::Dimension { op: "compress_attention", lhs: s.to_vec(), rhs: vec![self.cfg.d_in] });
        }
        Ok(flat)
    }

    /// Dispatches on the configured kind. Input is `[L × D_I]` for a single
    /// feature map or `[N × L × D_I]` for per-slice features.
    pub fn forward(&self, features: &Tensor<E>) -> Result<Tensor<E>> {
        match self.cfg.kind {
            ConnectorKind::Mlp => self.project_mlp(features),
            ConnectorKind::AttnCompress => self.compress_attention(features),
            ConnectorKind::AvgPool => self.compress_average(features),
        }
    }
}

impl<E: Elem> Module<E> for Connector<E> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<E>)) {
        self.mlp.visit(f);
        if let Some(c) = &self.compressor {
            c.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<E>)) {
        self.mlp.visit_mut(f);
        if let Some(c) = &mut self.compressor {
            c.visit_mut(f);
        }
    }
}
