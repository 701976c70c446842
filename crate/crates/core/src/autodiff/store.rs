//! Named parameter collection shared by the optimizer and checkpoint I/O.

use std::collections::BTreeMap;

use super::{Result, Tensor, TensorError};

/// Ordered collection of named trainable tensors.
///
/// Insertion order is preserved (it fixes the optimizer's update order);
/// lookups go through a name index.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    /// Registers a tensor under `name` and returns its slot id.
    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<usize> {
        if self.index.contains_key(name) {
            return Err(TensorError::Invalid(format!("duplicate parameter name {name:?}")));
        }
        let id = self.tensors.len();
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn get(&self, id: usize) -> &Tensor {
        &self.tensors[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.tensors[id]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    /// Tensors in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|n| n.as_str()).zip(self.tensors.iter())
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            t.zero_grad();
        }
    }

    /// Total number of scalar parameters.
    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(|t| t.values().len()).sum()
    }
}
