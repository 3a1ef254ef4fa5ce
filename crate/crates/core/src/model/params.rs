use std::collections::BTreeMap;

use super::tensor::Tensor;
use crate::Scalar;

/// Named parameter tensors in a fixed insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<S> {
    names: Vec<String>,
    tensors: Vec<Tensor<S>>,
    index: BTreeMap<String, usize>,
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self { names: Vec::new(), tensors: Vec::new(), index: BTreeMap::new() }
    }

    /// Inserts or replaces a tensor.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<S>) {
        let name = name.into();
        if let Some(&i) = self.index.get(&name) {
            self.tensors[i] = tensor;
            return;
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(tensor);
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.index_of(name).map(move |i| &mut self.tensors[i])
    }

    /// Panics if `name` is missing; for names the model layout guarantees.
    pub fn expect(&self, name: &str) -> &Tensor<S> {
        self.get(name).unwrap_or_else(|| panic!("missing parameter `{name}`"))
    }

    pub fn by_index(&self, i: usize) -> &Tensor<S> {
        &self.tensors[i]
    }

    pub fn by_index_mut(&mut self, i: usize) -> &mut Tensor<S> {
        &mut self.tensors[i]
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor<S>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.tensors
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// First parameter containing a NaN or infinity, if any.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.iter().find(|(_, t)| !t.is_finite()).map(|(n, _)| n)
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Zero tensors shaped like every parameter.
    pub fn zeros_like(&self) -> Vec<Tensor<S>> {
        self.tensors.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect()
    }
}

/// Gradient accumulator aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<S> {
    pub tensors: Vec<Tensor<S>>,
}

impl<S: Scalar> Grads<S> {
    pub fn zeros_like(params: &ParamStore<S>) -> Self {
        Self { tensors: params.zeros_like() }
    }

    pub fn add_assign(&mut self, other: &Grads<S>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: S) {
        for t in &mut self.tensors {
            t.scale_in_place(s);
        }
    }

    pub fn global_norm(&self) -> S {
        self.tensors.iter().flat_map(|t| t.data.iter()).map(|&v| v * v).sum::<S>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn is_zero(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|&v| v == S::zero()))
    }
}
