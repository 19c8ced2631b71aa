//! Building blocks shared by the encoders, connectors and the language model.

use crate::error::{Error, Result};
use crate::param::{Module, Parameter};
use crate::rng::SeedTree;
use crate::tensor::{Elem, Tensor};

pub const INIT_STD: f32 = 0.02;
pub const LN_EPS: f64 = 1e-5;

/// Low-rank update `scale · B·A` riding on a frozen linear layer.
#[derive(Debug, Clone)]
pub struct LoraAdapter<E: Elem = f32> {
    /// `[rank × in]`
    pub a: Parameter<E>,
    /// `[out × rank]`, zero at injection.
    pub b: Parameter<E>,
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct Linear<E: Elem = f32> {
    name: String,
    pub weight: Parameter<E>,
    pub bias: Option<Parameter<E>>,
    pub lora: Option<LoraAdapter<E>>,
}

impl<E: Elem> Linear<E> {
    pub fn new(name: &str, fan_in: usize, fan_out: usize, bias: bool, seeds: &SeedTree) -> Self {
        Linear {
            name: name.to_string(),
            weight: Parameter::trunc_normal(format!("{name}.weight"), &[fan_out, fan_in], INIT_STD, seeds),
            bias: bias.then(|| Parameter::zeros(format!("{name}.bias"), &[fan_out])),
            lora: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let base = x.linear(self.weight.tensor(), self.bias.as_ref().map(|b| b.tensor()))?;
        match &self.lora {
            None => Ok(base),
            Some(l) => {
                let low = x.linear(l.a.tensor(), None)?.linear(l.b.tensor(), None)?;
                base.add(&low.mul_scalar(l.scale))
            }
        }
    }
}

impl<E: Elem> Module<E> for Linear<E> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<E>)) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
        if let Some(l) = &self.lora {
            f(&l.a);
            f(&l.b);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<E>)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
        if let Some(l) = &mut self.lora {
            f(&mut l.a);
            f(&mut l.b);
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm<E: Elem = f32> {
    pub gamma: Parameter<E>,
    pub beta: Parameter<E>,
}

impl<E: Elem> LayerNorm<E> {
    pub fn new(name: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: Parameter::filled(format!("{name}.gamma"), &[dim], 1.0),
            beta: Parameter::zeros(format!("{name}.beta"), &[dim]),
        }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        x.layer_norm(self.gamma.tensor(), self.beta.tensor(), LN_EPS)
    }
}

impl<E: Elem> Module<E> for LayerNorm<E> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<E>)) {
        f(&self.gamma);
        f(&self.beta);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<E>)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}

/// `Linear → GELU → Linear`.
#[derive(Debug, Clone)]
pub struct FeedForward<E: Elem = f32> {
    pub fc1: Linear<E>,
    pub fc2: Linear<E>,
}

impl<E: Elem> FeedForward<E> {
    pub fn new(name: &str, dim_in: usize, hidden: usize, dim_out: usize, seeds: &SeedTree) -> Self {
        FeedForward {
            fc1: Linear::new(&format!("{name}.fc1"), dim_in, hidden, true, seeds),
            fc2: Linear::new(&format!("{name}.fc2"), hidden, dim_out, true, seeds),
        }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        self.fc2.forward(&self.fc1.forward(x)?.gelu())
    }
}

impl<E: Elem> Module<E> for FeedForward<E> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<E>)) {
        self.fc1.visit(f);
        self.fc2.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<E>)) {
        self.fc1.visit_mut(f);
        self.fc2.visit_mut(f);
    }
}

/// Keys and values seen so far by one attention layer.
#[derive(Debug, Default, Clone)]
pub struct KvCache<E: Elem = f32> {
    pub keys: Option<Tensor<E>>,
    pub values: Option<Tensor<E>>,
}

impl<E: Elem> KvCache<E> {
    pub fn len(&self) -> usize {
        self.keys.as_ref().map(|k| k.shape()[0]).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn extend(slot: &mut Option<Tensor<E>>, new: Tensor<E>) -> Result<Tensor<E>> {
        let all = match slot.take() {
            Some(old) => Tensor::concat(&[&old, &new])?,
            None => new,
        };
        *slot = Some(all.clone());
        Ok(all)
    }
}

/// Multi-head attention with separate query/key/value/output projections.
#[derive(Debug, Clone)]
pub struct Attention<E: Elem = f32> {
    pub q: Linear<E>,
    pub k: Linear<E>,
    pub v: Linear<E>,
    pub o: Linear<E>,
    pub heads: usize,
}

impl<E: Elem> Attention<E> {
    pub fn new(name: &str, dim: usize, heads: usize, seeds: &SeedTree) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!("{name}: width {dim} not divisible by {heads} heads")));
        }
        Ok(Attention {
            q: Linear::new(&format!("{name}.q"), dim, dim, true, seeds),
            k: Linear::new(&format!("{name}.k"), dim, dim, true, seeds),
            v: Linear::new(&format!("{name}.v"), dim, dim, true, seeds),
            o: Linear::new(&format!("{name}.o"), dim, dim, true, seeds),
            heads,
        })
    }

    /// Queries from `queries`, keys and values from `context`.
    pub fn cross(&self, queries: &Tensor<E>, context: &Tensor<E>) -> Result<Tensor<E>> {
        let q = self.q.forward(queries)?;
        let k = self.k.forward(context)?;
        let v = self.v.forward(context)?;
        self.o.forward(&Tensor::attention(&q, &k, &v, self.heads, false)?)
    }

    pub fn forward(&self, x: &Tensor<E>, causal: bool, cache: Option<&mut KvCache<E>>) -> Result<Tensor<E>> {
        let q = self.q.forward(x)?;
        let mut k = self.k.forward(x)?;
        let mut v = self.v.forward(x)?;
        if let Some(cache) = cache {
            k = KvCache::extend(&mut cache.keys, k)?;
            v = KvCache::extend(&mut cache.values, v)?;
        }
        self.o.forward(&Tensor::attention(&q, &k, &v, self.heads, causal)?)
    }
}

impl<E: Elem> Module<E> for Attention<E> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<E>)) {
        for l in [&self.q, &self.k, &self.v, &self.o] {
            l.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<E>)) {
        for l in [&mut self.q, &mut self.k, &mut self.v, &mut self.o] {
            l.visit_mut(f);
        }
    }
}

/// Pre-norm transformer block: `x + attn(ln(x))`, then `x + mlp(ln(x))`.
#[derive(Debug, Clone)]
pub struct Block<E: Elem = f32> {
    pub ln1: LayerNorm<E>,
    pub attn: Attention<E>,
    pub ln2: LayerNorm<E>,
    pub mlp: FeedForward<E>,
}

impl<E: Elem> Block<E> {
    pub fn new(name: &str, dim: usize, heads: usize, seeds: &SeedTree) -> Result<Self> {
        Ok(Block {
            ln1: LayerNorm::new(&format!("{name}.ln1"), dim),
            attn: Attention::new(&format!("{name}.attn"), dim, heads, seeds)?,
            ln2: LayerNorm::new(&format!("{name}.ln2"), dim),
            mlp: FeedForward::new(&format!("{name}.mlp"), dim, 4 * dim, dim, seeds),
        })
    }

    pub fn forward(&self, x: &Tensor<E>, causal: bool, cache: Option<&mut KvCache<E>>) -> Result<Tensor<E>> {
        let x = x.add(&self.attn.forward(&self.ln1.forward(x)?, causal, cache)?)?;
        x.add(&self.mlp.forward(&self.ln2.forward(&x)?)?)
    }

    pub fn linears_mut(&mut self) -> [&mut Linear<E>; 6] {
        let Attention { q, k, v, o, .. } = &mut self.attn;
        let FeedForward { fc1, fc2 } = &mut self.mlp;
        [q, k, v, o, fc1, fc2]
    }
}

impl<E: Elem> Module<E> for Block<E> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<E>)) {
        self.ln1.visit(f);
        self.attn.visit(f);
        self.ln2.visit(f);
        self.mlp.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<E>)) {
        self.ln1.visit_mut(f);
        self.attn.visit_mut(f);
        self.ln2.visit_mut(f);
        self.mlp.visit_mut(f);
    }
}
