use std::collections::HashMap;

use super::graph::{Gradients, Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 2e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Named parameters in insertion order, with Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<S> {
    names: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<Tensor<S>>,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
    step: u64,
}

impl<S: Real> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Real> ParamStore<S> {
    pub fn new() -> Self {
        Self { names: Vec::new(), index: HashMap::new(), values: Vec::new(), m: Vec::new(), v: Vec::new(), step: 0 }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<S>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter name `{name}`")));
        }
        let n = value.len();
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.values.push(value);
        self.m.push(vec![S::zero(); n]);
        self.v.push(vec![S::zero(); n]);
        Ok(ParamId(self.names.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.values[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<S>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn values(&self) -> &[Tensor<S>] {
        &self.values
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// First and second Adam moments of parameter `id`.
    pub fn moments(&self, id: ParamId) -> (&[S], &[S]) {
        (&self.m[id.0], &self.v[id.0])
    }

    /// Restores optimizer state, e.g. from a checkpoint.
    pub fn set_optimizer_state(&mut self, step: u64, m: Vec<Vec<S>>, v: Vec<Vec<S>>) -> Result<()> {
        let fits = |mm: &[Vec<S>]| mm.len() == self.len() && mm.iter().zip(&self.values).all(|(a, t)| a.len() == t.len());
        if !fits(&m) || !fits(&v) {
            return Err(Error::ShapeMismatch("optimizer moments do not match parameters".into()));
        }
        self.step = step;
        self.m = m;
        self.v = v;
        Ok(())
    }

    /// Places every parameter on `g` as a trainable or constant leaf.
    pub fn bind(&self, g: &mut Graph<S>, trainable: bool) -> Vec<Var> {
        self.values
            .iter()
            .map(|t| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
            .collect()
    }

    /// Gradient for each bound parameter, zero where none flowed.
    pub fn collect_grads(&self, grads: &mut Gradients<S>, bound: &[Var]) -> Vec<Vec<S>> {
        bound
            .iter()
            .zip(&self.values)
            .map(|(&var, t)| grads.take(var).unwrap_or_else(|| vec![S::zero(); t.len()]))
            .collect()
    }

    /// One bias-corrected Adam update.
    pub fn adam_step(&mut self, grads: &[Vec<S>], cfg: &AdamConfig) -> Result<()> {
        if grads.len() != self.len() {
            return Err(Error::ShapeMismatch(format!("{} gradients for {} parameters", grads.len(), self.len())));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.len() != self.values[i].len() {
                return Err(Error::ShapeMismatch(format!("gradient for `{}` has wrong length", self.names[i])));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::Diverged(self.names[i].clone()));
            }
        }
        self.step += 1;
        let (b1, b2) = (S::lit(cfg.beta1), S::lit(cfg.beta2));
        let t = self.step as i32;
        let c1 = S::one() - S::lit(cfg.beta1.powi(t));
        let c2 = S::one() - S::lit(cfg.beta2.powi(t));
        let (lr, eps) = (S::lit(cfg.lr), S::lit(cfg.eps));
        for (i, g) in grads.iter().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((p, &gi), mi), vi) in self.values[i].data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (S::one() - b1) * gi;
                *vi = b2 * *vi + (S::one() - b2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Order-sensitive FNV-1a digest of every parameter bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.values {
            for &x in t.data() {
                for b in x.as_f64().to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x100_0000_01b3);
                }
            }
        }
        h
    }
}
