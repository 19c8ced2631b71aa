//! Central finite-difference gradient checking.
//!
//! The checker only ever calls the function under test forward (inside
//! [`no_grad`]), so it is independent of the backward closures it audits.

use rand::seq::index::sample;
use rand::Rng;

use super::{no_grad, Tensor};
use crate::error::Result;

/// Worst relative error seen during a check.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub worst_input: usize,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

impl GradReport {
    fn new() -> Self {
        GradReport {
            max_rel_err: 0.0,
            worst_input: 0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
            checked: 0,
        }
    }

    fn record(&mut self, input: usize, index: usize, analytic: f64, numeric: f64) {
        let rel = relative_error(analytic, numeric);
        self.checked += 1;
        if rel > self.max_rel_err || self.checked == 1 {
            *self = GradReport {
                max_rel_err: rel,
                worst_input: input,
                worst_index: index,
                analytic,
                numeric,
                checked: self.checked,
            };
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (numeric.abs() + 1e-8)
}

/// Which coordinates of a tensor with `n` entries to probe.
fn coords(n: usize, max: Option<usize>, rng: &mut impl Rng) -> Vec<usize> {
    match max {
        Some(m) if m < n => {
            let mut v = sample(rng, n, m).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..n).collect(),
    }
}

/// Checks `f` (mapping the inputs to a scalar) against central differences
/// with step `h`. `max_coords` caps how many entries of each input are probed.
pub fn check_fn<F>(inputs: &[Vec<f64>], shapes: &[Vec<usize>], f: F, h: f64, max_coords: Option<usize>, rng: &mut impl Rng) -> Result<GradReport>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let leaves: Vec<Tensor<f64>> = inputs
        .iter()
        .zip(shapes)
        .map(|(d, s)| Tensor::leaf(d.clone(), s, true))
        .collect::<Result<_>>()?;
    f(&leaves)?.backward()?;
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|l| l.grad().unwrap_or_else(|| vec![0.0; l.numel()]))
        .collect();

    let eval = |which: usize, idx: usize, delta: f64| -> Result<f64> {
        no_grad(|| {
            let perturbed: Vec<Tensor<f64>> = inputs
                .iter()
                .zip(shapes)
                .enumerate()
                .map(|(i, (d, s))| {
                    let mut d = d.clone();
                    if i == which {
                        d[idx] += delta;
                    }
                    Tensor::new(d, s)
                })
                .collect::<Result<_>>()?;
            f(&perturbed)?.item()
        })
    };

    let mut report = GradReport::new();
    for (i, input) in inputs.iter().enumerate() {
        for idx in coords(input.len(), max_coords, rng) {
            let numeric = (eval(i, idx, h)? - eval(i, idx, -h)?) / (2.0 * h);
            report.record(i, idx, analytic[i][idx], numeric);
        }
    }
    Ok(report)
}

/// Parameter-level check for stateful modules: `get`/`set` expose the
/// module's parameters as flat vectors, `loss` runs a forward pass.
pub fn check_params<M, L>(
    module: &mut M,
    params: &dyn Fn(&M) -> Vec<Tensor<f64>>,
    set: &dyn Fn(&mut M, usize, Vec<f64>),
    loss: L,
    h: f64,
    max_coords: Option<usize>,
    rng: &mut impl Rng,
) -> Result<GradReport>
where
    L: Fn(&M) -> Result<Tensor<f64>>,
{
    let tensors = params(module);
    tensors.iter().for_each(|t| t.zero_grad());
    loss(module)?.backward()?;
    let analytic: Vec<Vec<f64>> = tensors
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();
    let originals: Vec<Vec<f64>> = tensors.iter().map(|t| t.data().to_vec()).collect();
    drop(tensors);

    let mut report = GradReport::new();
    for (i, orig) in originals.iter().enumerate() {
        for idx in coords(orig.len(), max_coords, rng) {
            let mut probe = |delta: f64| -> Result<f64> {
                let mut d = orig.clone();
                d[idx] += delta;
                set(module, i, d);
                no_grad(|| loss(module)?.item())
            };
            let plus = probe(h)?;
            let minus = probe(-h)?;
            set(module, i, orig.clone());
            report.record(i, idx, analytic[i][idx], (plus - minus) / (2.0 * h));
        }
    }
    Ok(report)
}
