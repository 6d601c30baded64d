use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::Tensor;
use crate::math;
use crate::{Error, Result};

/// A trainable tensor with its Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

/// Layer-qualified parameter names mapped to their values and optimizer
/// state. Iteration order is the lexicographic name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
    steps_taken: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces `name`, resetting its moments.
    pub fn insert(&mut self, name: &str, value: Tensor) {
        let n = value.len();
        self.params.insert(
            String::from(name),
            Param { value, first_moment: vec![0.0; n], second_moment: vec![0.0; n] },
        );
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name).map(|p| &mut p.value)
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, p)| (k.as_str(), &p.value))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|k| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    /// Restores optimizer state, e.g. after loading a checkpoint.
    pub fn set_moments(&mut self, name: &str, first: Vec<f64>, second: Vec<f64>) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::InvalidArgument(alloc::format!("unknown parameter {name}")))?;
        if first.len() != p.value.len() || second.len() != p.value.len() {
            return Err(Error::shape("moment length differs from parameter length"));
        }
        p.first_moment = first;
        p.second_moment = second;
        Ok(())
    }

    pub fn set_steps_taken(&mut self, steps: u64) {
        self.steps_taken = steps;
    }
}

/// Base learning rate held for the leading part of training, then decayed to
/// zero along a half cosine over the final `tail_fraction` of steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub total_steps: usize,
    pub tail_fraction: f64,
}

impl LrSchedule {
    /// First step index of the cosine tail.
    pub fn tail_start(&self) -> usize {
        let flat = (1.0 - self.tail_fraction) * self.total_steps as f64;
        math::round(flat) as usize
    }

    /// Learning rate used at zero-based `step`.
    pub fn lr_at(&self, step: usize) -> f64 {
        let start = self.tail_start();
        let last = self.total_steps.saturating_sub(1);
        if step <= start || last <= start {
            return self.base_lr;
        }
        let progress = ((step - start) as f64 / (last - start) as f64).min(1.0);
        0.5 * self.base_lr * (1.0 + math::cos(math::PI * progress))
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Adam {
    /// One update of every parameter at learning rate `lr`. `grads` must
    /// cover every parameter in `store`.
    pub fn step(&self, store: &mut ParamStore, grads: &BTreeMap<String, Tensor>, lr: f64) -> Result<()> {
        for name in store.params.keys() {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::InvalidArgument(alloc::format!("missing gradient for {name}")))?;
            if g.len() != store.params[name].value.len() {
                return Err(Error::shape(alloc::format!("gradient shape for {name}")));
            }
        }
        store.steps_taken += 1;
        let t = store.steps_taken as f64;
        let c1 = 1.0 - libm::pow(self.beta1, t);
        let c2 = 1.0 - libm::pow(self.beta2, t);
        for (name, p) in store.params.iter_mut() {
            let g = grads[name].data();
            let values = p.value.data_mut();
            for i in 0..values.len() {
                let m = self.beta1 * p.first_moment[i] + (1.0 - self.beta1) * g[i];
                let v = self.beta2 * p.second_moment[i] + (1.0 - self.beta2) * g[i] * g[i];
                p.first_moment[i] = m;
                p.second_moment[i] = v;
                values[i] -= lr * (m / c1) / (math::sqrt(v / c2) + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_tail_boundaries() {
        let s = LrSchedule { base_lr: 1e-3, total_steps: 1000, tail_fraction: 0.28 };
        assert_eq!(s.tail_start(), 720);
        assert_eq!(s.lr_at(0), 1e-3);
        assert_eq!(s.lr_at(720), 1e-3);
        assert!(s.lr_at(721) < 1e-3);
        assert!(s.lr_at(999).abs() < 1e-9 * 1e-3);
        assert!(s.lr_at(860) > 0.49e-3 && s.lr_at(860) < 0.51e-3);
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::row(vec![1.0, -2.0]));
        let before = store.get("w").unwrap().clone();
        let mut grads = BTreeMap::new();
        grads.insert(String::from("w"), Tensor::row(vec![0.0, 0.0]));
        Adam::default().step(&mut store, &grads, 0.1).unwrap();
        assert_eq!(store.get("w").unwrap(), &before);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::row(vec![1.0]));
        let mut grads = BTreeMap::new();
        grads.insert(String::from("w"), Tensor::row(vec![0.5]));
        Adam::default().step(&mut store, &grads, 0.1).unwrap();
        // First bias-corrected step moves by lr * sign(g).
        assert!((store.get("w").unwrap().item() - 0.9).abs() < 1e-6);
    }

    #[test]
    fn missing_gradient_is_rejected() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::row(vec![1.0]));
        assert!(Adam::default().step(&mut store, &BTreeMap::new(), 0.1).is_err());
    }
}
