//! Named parameter arrays.
//!
//! Parameters and gradients share one container so that optimizer state,
//! checkpoints and gradient checks all enumerate arrays in the same sorted
//! name order.

use std::collections::BTreeMap;

use crate::tensor::Tensor;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    arrays: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.arrays.insert(name.into(), tensor);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.arrays.contains_key(name)
    }

    /// Panics when `name` is missing; parameter sets are validated against
    /// the model configuration on construction and load.
    pub fn get(&self, name: &str) -> &Tensor {
        self.arrays
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter array `{name}`"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.arrays
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter array `{name}`"))
    }

    pub fn try_get(&self, name: &str) -> Option<&Tensor> {
        self.arrays.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.arrays.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.arrays.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.arrays.values().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            arrays: self
                .arrays
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.arrays.values().all(Tensor::is_finite)
    }

    /// `self += other`, in sorted name order.
    pub fn accumulate(&mut self, other: &ParamStore) {
        for (name, t) in self.arrays.iter_mut() {
            t.add_assign(other.get(name));
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.arrays.values_mut() {
            t.scale(s);
        }
    }
}
