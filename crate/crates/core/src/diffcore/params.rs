use std::collections::BTreeMap;

use super::Tensor;
use crate::error::{param_err, Error, Result};
use crate::scalar::Real;

/// One trainable tensor with its gradient and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub adam_m: Tensor<T>,
    pub adam_v: Tensor<T>,
}

impl<T: Real> Param<T> {
    fn new(value: Tensor<T>) -> Self {
        let shape = value.shape().to_vec();
        Self {
            value,
            grad: Tensor::zeros(&shape),
            adam_m: Tensor::zeros(&shape),
            adam_v: Tensor::zeros(&shape),
        }
    }
}

/// Named parameters in deterministic (sorted) order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: BTreeMap<String, Param<T>>,
    step_count: u64,
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
        Self {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: BTreeMap::new(),
            step_count: 0,
        }
    }

    /// Registers a parameter; replacing an existing name resets its state.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.params.insert(name.into(), Param::new(value));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Param<T>> {
        self.params
            .get(name)
            .ok_or_else(|| Error::State(format!("unknown parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param<T>> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::State(format!("unknown parameter `{name}`")))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.get(name)?.value)
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.get(name)?.grad)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar weights.
    pub fn scalar_count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Adds `grad` into the named parameter's gradient.
    pub fn accumulate_grad(&mut self, name: &str, grad: &Tensor<T>) -> Result<()> {
        let p = self.get_mut(name)?;
        if p.grad.shape() != grad.shape() {
            return Err(Error::Dimension(format!(
                "gradient shape {:?} does not match parameter `{name}` {:?}",
                grad.shape(),
                p.grad.shape()
            )));
        }
        p.grad.add_assign(grad);
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(T::zero());
        }
    }

    /// Drops optimizer moments and the step counter, keeping values.
    pub fn reset_optimizer(&mut self) {
        self.step_count = 0;
        for p in self.params.values_mut() {
            p.adam_m.fill(T::zero());
            p.adam_v.fill(T::zero());
        }
    }

    /// One bias-corrected Adam update of every parameter. Gradients are left
    /// in place.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        if !(cfg.lr > 0.0) {
            return Err(param_err!("learning rate must be positive, got {}", cfg.lr));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let b1 = T::c(cfg.beta1);
        let b2 = T::c(cfg.beta2);
        let one = T::one();
        let bc1 = one - b1.powi(t);
        let bc2 = one - b2.powi(t);
        let lr = T::c(cfg.lr);
        let eps = T::c(cfg.eps);
        for p in self.params.values_mut() {
            let g = p.grad.data();
            let m = p.adam_m.data_mut();
            for (mi, &gi) in m.iter_mut().zip(g) {
                *mi = b1 * *mi + (one - b1) * gi;
            }
            let v = p.adam_v.data_mut();
            for (vi, &gi) in v.iter_mut().zip(g) {
                *vi = b2 * *vi + (one - b2) * gi * gi;
            }
            let (m, v) = (p.adam_m.data(), p.adam_v.data());
            for ((w, &mi), &vi) in p.value.data_mut().iter_mut().zip(m).zip(v) {
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Copies values (not optimizer state) of every parameter whose name
    /// starts with `from_prefix` onto the same suffix under `to_prefix`.
    pub fn copy_prefixed(&mut self, src: &ParamStore<T>, from_prefix: &str, to_prefix: &str) {
        for (name, p) in src.iter() {
            if let Some(rest) = name.strip_prefix(from_prefix) {
                self.insert(format!("{to_prefix}{rest}"), p.value.clone());
            }
        }
    }
}
