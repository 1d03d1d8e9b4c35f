use std::collections::BTreeMap;

use ndarray::Array2;

use super::tape::Tensor;
use crate::error::{bail, Result};
use crate::scalar::Scalar;

/// Named learnable tensors, iterated in lexicographic order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore<T> {
    tensors: BTreeMap<String, Array2<T>>,
}

/// Gradients share the parameter layout.
pub type Gradients<T> = ParameterStore<T>;

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array2<T>) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            bail!(Contract, "duplicate parameter {name}");
        }
        self.tensors.insert(name, value);
        Ok(())
    }

    /// Inserts or overwrites.
    pub fn set(&mut self, name: impl Into<String>, value: Array2<T>) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Array2<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<T>> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Array2<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar entries.
    pub fn n_scalars(&self) -> usize {
        self.tensors.values().map(|v| v.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Array2::zeros(v.dim())))
                .collect(),
        }
    }

    pub fn map(&self, mut f: impl FnMut(&Array2<T>) -> Array2<T>) -> Self {
        Self {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), f(v))).collect(),
        }
    }

    /// `self += factor · other`, requiring identical layouts.
    pub fn add_scaled(&mut self, other: &Self, factor: T) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            bail!(Structural, "parameter layouts differ");
        }
        for ((ka, a), (kb, b)) in self.tensors.iter_mut().zip(other.tensors.iter()) {
            if ka != kb || a.dim() != b.dim() {
                bail!(Structural, "parameter layouts differ at {ka} / {kb}");
            }
            a.scaled_add(factor, b);
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.tensors
            .iter()
            .zip(other.tensors.iter())
            .flat_map(|((_, a), (_, b))| a.iter().zip(b.iter()).map(|(x, y)| (*x - *y).abs()))
            .fold(T::zero(), T::max)
    }
}

/// Parameter handles on one tape.
#[derive(Debug, Clone, Default)]
pub struct BoundParams {
    handles: BTreeMap<String, Tensor>,
}

impl BoundParams {
    pub(crate) fn insert(&mut self, name: String, t: Tensor) {
        self.handles.insert(name, t);
    }

    pub fn get(&self, name: &str) -> Result<Tensor> {
        match self.handles.get(name) {
            Some(t) => Ok(*t),
            None => bail!(Contract, "unknown parameter {name}"),
        }
    }
}
