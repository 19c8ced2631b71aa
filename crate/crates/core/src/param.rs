use crate::error::{Error, Result};
use crate::rng::{trunc_normal, SeedTree};
use crate::tensor::{Elem, Tensor};

/// Named, optionally trainable model weight.
///
/// The backing leaf tracks gradients only while the parameter is trainable,
/// so frozen weights never accumulate a grad buffer while gradients still
/// flow through them to upstream trainable weights.
#[derive(Debug, Clone)]
pub struct Parameter<E: Elem = f32> {
    name: String,
    tensor: Tensor<E>,
    trainable: bool,
    adapter: bool,
}

impl<E: Elem> Parameter<E> {
    pub fn new(name: impl Into<String>, data: Vec<E>, shape: &[usize]) -> Result<Self> {
        Ok(Parameter {
            name: name.into(),
            tensor: Tensor::leaf(data, shape, true)?,
            trainable: true,
            adapter: false,
        })
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::new(name, vec![E::zero(); n], shape).expect("consistent shape")
    }

    pub fn filled(name: impl Into<String>, shape: &[usize], v: f64) -> Self {
        let n = shape.iter().product();
        Self::new(name, vec![E::lit(v); n], shape).expect("consistent shape")
    }

    /// Truncated-normal init drawn from the stream named after the parameter.
    pub fn trunc_normal(name: impl Into<String>, shape: &[usize], std: f32, seeds: &SeedTree) -> Self {
        let name = name.into();
        let n = shape.iter().product();
        let data = trunc_normal(&mut seeds.rng(&name), std, n)
            .into_iter()
            .map(|v| E::lit(v as f64))
            .collect();
        Self::new(name, data, shape).expect("consistent shape")
    }

    pub(crate) fn mark_adapter(mut self) -> Self {
        self.adapter = true;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// First dotted component, e.g. `"lm"` for `"lm.blocks.0.attn.q.weight"`.
    pub fn namespace(&self) -> &str {
        self.name.split('.').next().unwrap_or("")
    }

    pub fn tensor(&self) -> &Tensor<E> {
        &self.tensor
    }

    pub fn shape(&self) -> &[usize] {
        self.tensor.shape()
    }

    pub fn data(&self) -> &[E] {
        self.tensor.data()
    }

    pub fn grad(&self) -> Option<Vec<E>> {
        self.tensor.grad()
    }

    pub fn zero_grad(&self) {
        self.tensor.zero_grad();
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn is_adapter(&self) -> bool {
        self.adapter
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        if trainable != self.trainable {
            self.trainable = trainable;
            self.tensor = Tensor::leaf(self.tensor.data().to_vec(), self.tensor.shape(), trainable)
                .expect("same shape");
        }
    }

    /// Replaces the values in place of the old leaf; any accumulated grad is dropped.
    pub fn set_data(&mut self, data: Vec<E>) -> Result<()> {
        if data.len() != self.tensor.numel() {
            return Err(Error::Dimension {
                op: "set_data",
                lhs: self.shape().to_vec(),
                rhs: vec![data.len()],
            });
        }
        self.tensor = Tensor::leaf(data, self.tensor.shape(), self.trainable)?;
        Ok(())
    }
}

/// Anything owning parameters.
pub trait Module<E: Elem = f32> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<E>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<E>));

    fn param_tensors(&self) -> Vec<Tensor<E>> {
        let mut out = Vec::new();
        self.visit(&mut |p| out.push(p.tensor().clone()));
        out
    }

    fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |p| out.push(p.name().to_string()));
        out
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| n += p.tensor().numel());
        n
    }

    /// Overwrites the `index`-th parameter in visit order.
    fn set_param_data(&mut self, index: usize, data: Vec<E>) -> Result<()> {
        let mut i = 0;
        let mut data = Some(data);
        let mut res = Err(Error::Index { index, extent: 0 });
        self.visit_mut(&mut |p| {
            if i == index {
                res = p.set_data(data.take().unwrap_or_default());
            }
            i += 1;
        });
        if let Err(Error::Index { index, .. }) = res {
            return Err(Error::Index { index, extent: i });
        }
        res
    }

    fn zero_grads(&self) {
        self.visit(&mut |p| p.zero_grad());
    }

    /// `name -> values` copy, used to compare before/after training.
    fn snapshot(&self) -> Vec<(String, Vec<E>)> {
        let mut out = Vec::new();
        self.visit(&mut |p| out.push((p.name().to_string(), p.data().to_vec())));
        out
    }
}
