use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Error, Result};
use crate::real::Real;
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
struct Moments<T> {
    first: Tensor<T>,
    second: Tensor<T>,
}

/// Named parameters plus AdamW state.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    params: BTreeMap<String, Tensor<T>>,
    state: BTreeMap<String, Moments<T>>,
    step: u64,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: BTreeMap::new(), state: BTreeMap::new(), step: 0 }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return param_err(format!("parameter `{name}` registered twice"));
        }
        self.params.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.params.get(name).ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.params.get_mut(name).ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    /// Zeroes every parameter whose name starts with `prefix`; returns how many.
    pub fn zero_prefix(&mut self, prefix: &str) -> usize {
        let mut n = 0;
        for (name, t) in self.params.iter_mut() {
            if name.starts_with(prefix) {
                t.fill(T::ZERO);
                n += 1;
            }
        }
        n
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Parameter values converted to another scalar type; optimizer state is dropped.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
            state: BTreeMap::new(),
            step: 0,
        }
    }

    /// One decoupled-weight-decay Adam update. Parameters without a gradient
    /// are left untouched, as are their moments.
    pub fn adamw_step(&mut self, grads: &BTreeMap<String, Tensor<T>>, cfg: &AdamW) -> Result<()> {
        for (name, g) in grads {
            let p = self.get(name)?;
            if p.shape() != g.shape() {
                return shape_err("adamw_step", p.shape(), g.shape());
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (name, g) in grads {
            let p = self.params.get_mut(name).expect("checked above");
            let st = self.state.entry(name.clone()).or_insert_with(|| Moments {
                first: Tensor::zeros(p.shape()),
                second: Tensor::zeros(p.shape()),
            });
            let (m, v) = (st.first.data_mut(), st.second.data_mut());
            for (i, (w, gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let gi = gi.to_f64();
                let mut wi = w.to_f64();
                wi -= cfg.lr * cfg.weight_decay * wi;
                let mi = cfg.beta1 * m[i].to_f64() + (1.0 - cfg.beta1) * gi;
                let vi = cfg.beta2 * v[i].to_f64() + (1.0 - cfg.beta2) * gi * gi;
                m[i] = T::from_f64(mi);
                v[i] = T::from_f64(vi);
                wi -= cfg.lr * (mi / bc1) / ((vi / bc2).sqrt() + cfg.eps);
                *w = T::from_f64(wi);
            }
        }
        Ok(())
    }
}

/// AdamW hyper-parameters (PyTorch update order).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self { lr: 5e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 5e-4 }
    }
}

/// A tape plus the parameters bound into it as leaves.
///
/// Parameters are bound lazily on first use, so a forward pass only records
/// the weights it actually touches.
pub struct Graph<'s, T: Real> {
    pub tape: Tape<T>,
    store: &'s ParamStore<T>,
    bound: BTreeMap<String, Var>,
}

impl<'s, T: Real> Graph<'s, T> {
    pub fn new(store: &'s ParamStore<T>) -> Self {
        Self { tape: Tape::new(), store, bound: BTreeMap::new() }
    }

    pub fn store(&self) -> &'s ParamStore<T> {
        self.store
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let v = self.tape.leaf(self.store.get(name)?.clone())?;
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn bound_names(&self) -> impl Iterator<Item = &str> {
        self.bound.keys().map(String::as_str)
    }

    /// Backward pass from `loss`, returning gradients keyed by parameter name.
    pub fn param_grads(&self, loss: Var) -> Result<BTreeMap<String, Tensor<T>>> {
        let mut grads: Gradients<T> = self.tape.backward(loss)?;
        Ok(self
            .bound
            .iter()
            .map(|(name, &v)| {
                let g = grads.take(v).unwrap_or_else(|| Tensor::zeros(self.tape.shape(v)));
                (name.clone(), g)
            })
            .collect())
    }
}
