use std::collections::BTreeMap;

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct ParamEntry {
    pub tensor: Tensor,
    pub trainable: bool,
    pub grad: Option<Vec<f64>>,
}

/// Named parameters, iterated in name order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Names must be unique.
    pub fn insert(&mut self, name: &str, tensor: Tensor, trainable: bool) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter `{name}`")));
        }
        let tensor = if trainable { tensor.into_var() } else { tensor.detach() };
        self.entries.insert(
            name.to_string(),
            ParamEntry {
                tensor,
                trainable,
                grad: None,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .map(|e| &e.tensor)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter `{name}`")))
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.get(name)
    }

    /// Replaces the values of an existing parameter, keeping its shape.
    pub fn set_values(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter `{name}`")))?;
        let t = Tensor::new(entry.tensor.shape(), values)?;
        entry.tensor = if entry.trainable { t.into_var() } else { t };
        entry.grad = None;
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Runs the backward pass of `loss` and stores the gradient of every
    /// trainable entry; entries the loss does not reach get zeros.
    pub fn backward(&mut self, loss: &Tensor) -> Result<()> {
        let grads = loss.backward()?;
        for entry in self.entries.values_mut() {
            entry.grad = entry.trainable.then(|| grads.wrt(&entry.tensor));
        }
        Ok(())
    }

    pub fn grad(&self, name: &str) -> Option<&[f64]> {
        self.entries.get(name).and_then(|e| e.grad.as_deref())
    }

    pub fn clear_grads(&mut self) {
        for entry in self.entries.values_mut() {
            entry.grad = None;
        }
    }

    /// Applies `update(name, values, grad)` to every trainable entry holding a
    /// gradient, installing the returned values as a fresh leaf.
    pub fn update_trainable(
        &mut self,
        mut update: impl FnMut(&str, &[f64], &[f64]) -> Result<Vec<f64>>,
    ) -> Result<()> {
        for (name, entry) in self.entries.iter_mut() {
            if !entry.trainable {
                continue;
            }
            let Some(grad) = entry.grad.take() else {
                continue;
            };
            let values = update(name, entry.tensor.data(), &grad)?;
            entry.tensor = Tensor::var(entry.tensor.shape(), values)?;
        }
        Ok(())
    }

    /// Number of scalar values across all entries.
    pub fn total_count(&self) -> usize {
        self.entries.values().map(|e| e.tensor.numel()).sum()
    }
}
