use alloc::string::String;
use alloc::vec::Vec;

use super::scalar::Scalar;
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable tensor with its Adam moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<S> {
    pub name: String,
    pub value: Tensor<S>,
    pub first_moment: Vec<S>,
    pub second_moment: Vec<S>,
}

impl<S: Scalar> Parameter<S> {
    pub fn new(name: String, value: Tensor<S>) -> Self {
        let n = value.len();
        Self {
            name,
            value,
            first_moment: alloc::vec![S::zero(); n],
            second_moment: alloc::vec![S::zero(); n],
        }
    }

    pub fn reset_moments(&mut self) {
        self.first_moment.iter_mut().for_each(|m| *m = S::zero());
        self.second_moment.iter_mut().for_each(|m| *m = S::zero());
    }
}

/// Ordered collection of named parameters; registration order is stable and
/// is the checkpoint order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<S> {
    params: Vec<Parameter<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<S>) -> ParamId {
        self.params.push(Parameter::new(name.into(), value));
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter<S> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<S> {
        &mut self.params[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<S>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<S>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Copies values (not moments) from another store with identical layout.
    pub fn copy_values_from(&mut self, other: &ParamStore<S>) -> Result<(), String> {
        if self.params.len() != other.params.len() {
            return Err(alloc::format!("{} vs {} parameters", self.params.len(), other.params.len()));
        }
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(alloc::format!("layout differs at {}", a.name));
            }
            a.value = b.value.clone();
        }
        Ok(())
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Parameter::new(p.name.clone(), p.value.cast()))
                .collect(),
        }
    }
}
