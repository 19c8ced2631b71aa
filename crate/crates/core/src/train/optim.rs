use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::param::{Module, Parameter};
use crate::tensor::Elem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm cap.
    pub grad_clip: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0, grad_clip: None }
    }
}

#[derive(Debug, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// AdamW with decoupled weight decay and a constant learning rate.
/// Moments are kept only for parameters that were trainable when stepped.
#[derive(Debug, Default)]
pub struct AdamW {
    pub cfg: AdamWConfig,
    step: u64,
    state: HashMap<String, Moments>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig) -> Self {
        AdamW { cfg, step: 0, state: HashMap::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn state_len(&self) -> usize {
        self.state.len()
    }

    pub fn has_state(&self, name: &str) -> bool {
        self.state.contains_key(name)
    }

    /// One update of every trainable parameter that holds a gradient, then
    /// clears gradients. Returns the global gradient norm before clipping.
    pub fn step<E: Elem, M: Module<E> + ?Sized>(&mut self, model: &mut M, lr_for: &dyn Fn(&Parameter<E>) -> f64) -> Result<f64> {
        let mut sq = 0.0;
        model.visit(&mut |p| {
            if p.trainable() {
                if let Some(g) = p.grad() {
                    sq += g.iter().map(|v| v.to_f64().unwrap_or(0.0).powi(2)).sum::<f64>();
                }
            }
        });
        let norm = sq.sqrt();
        let clip = match self.cfg.grad_clip {
            Some(c) if norm > c && norm > 0.0 => c / norm,
            _ => 1.0,
        };
        self.step += 1;
        let t = self.step as i32;
        let AdamWConfig { beta1, beta2, eps, weight_decay, .. } = self.cfg;
        let (bc1, bc2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
        let mut result = Ok(());
        let state = &mut self.state;
        model.visit_mut(&mut |p| {
            if !p.trainable() {
                return;
            }
            let Some(g) = p.grad() else { return };
            let lr = lr_for(p);
            let st = state.entry(p.name().to_string()).or_insert_with(|| Moments {
                m: vec![0.0; g.len()],
                v: vec![0.0; g.len()],
            });
            let data: Vec<E> = p
                .data()
                .iter()
                .zip(&g)
                .enumerate()
                .map(|(i, (&w, &gi))| {
                    let gi = gi.to_f64().unwrap_or(0.0) * clip;
                    st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * gi;
                    st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * gi * gi;
                    let (mh, vh) = (st.m[i] / bc1, st.v[i] / bc2);
                    let w = w.to_f64().unwrap_or(0.0);
                    E::lit(w - lr * (mh / (vh.sqrt() + eps) + weight_decay * w))
                })
                .collect();
            if let Err(e) = p.set_data(data) {
                result = Err(e);
            }
        });
        result.map(|_| norm)
    }
}
