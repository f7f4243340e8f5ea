use std::collections::BTreeMap;

use super::tensor::Tensor;

/// A named trainable (or frozen) tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
    pub frozen: bool,
}

/// Named parameters, their gradients and frozen flags.
///
/// Names are kept in sorted order so iteration, checkpoints and optimizer
/// state are independent of insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    entries: BTreeMap<String, Parameter>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.insert_with(name, value, false);
    }

    pub fn insert_frozen(&mut self, name: impl Into<String>, value: Tensor) {
        self.insert_with(name, value, true);
    }

    pub fn insert_with(&mut self, name: impl Into<String>, value: Tensor, frozen: bool) {
        let grad = Tensor::zeros(value.shape());
        self.entries.insert(name.into(), Parameter { value, grad, frozen });
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.entries.get(name)
    }

    pub fn value(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).map(|p| &p.value)
    }

    pub fn value_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name).map(|p| &mut p.value)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).map(|p| &p.grad)
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.entries.get(name).is_some_and(|p| p.frozen)
    }

    pub fn set_frozen(&mut self, name: &str, frozen: bool) {
        if let Some(p) = self.entries.get_mut(name) {
            p.frozen = frozen;
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Parameter)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of scalar coordinates across trainable parameters.
    pub fn trainable_size(&self) -> usize {
        self.entries.values().filter(|p| !p.frozen).map(|p| p.value.len()).sum()
    }

    /// `grad[name] += scale * g`. Frozen parameters are left at zero.
    pub fn accumulate_grad(&mut self, name: &str, g: &[f64], scale: f64) {
        if let Some(p) = self.entries.get_mut(name) {
            if p.frozen {
                return;
            }
            for (d, s) in p.grad.data_mut().iter_mut().zip(g) {
                *d += scale * s;
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in self.entries.values_mut() {
            if p.grad.data().iter().any(|v| *v != 0.0) {
                p.grad = Tensor::zeros(p.value.shape());
            }
        }
    }
}
