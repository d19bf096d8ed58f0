//! Row-major in-memory datasets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub input_dim: usize,
    pub label_dim: usize,
    /// `len × input_dim`.
    pub inputs: Vec<f64>,
    /// `len × label_dim`.
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn new(input_dim: usize, label_dim: usize, inputs: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if input_dim == 0 || label_dim == 0 {
            return Err(Error::InvalidArgument("dataset widths must be positive".into()));
        }
        if !inputs.len().is_multiple_of(input_dim)
            || !labels.len().is_multiple_of(label_dim)
            || inputs.len() / input_dim != labels.len() / label_dim
        {
            return Err(Error::InvalidShape {
                op: "dataset",
                msg: format!(
                    "{} input values (width {input_dim}) vs {} label values (width {label_dim})",
                    inputs.len(),
                    labels.len()
                ),
            });
        }
        Ok(Dataset {
            input_dim,
            label_dim,
            inputs,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len() / self.label_dim
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn label(&self, i: usize) -> &[f64] {
        &self.labels[i * self.label_dim..(i + 1) * self.label_dim]
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut inputs = Vec::with_capacity(indices.len() * self.input_dim);
        let mut labels = Vec::with_capacity(indices.len() * self.label_dim);
        for &i in indices {
            inputs.extend_from_slice(self.input(i));
            labels.extend_from_slice(self.label(i));
        }
        Dataset {
            input_dim: self.input_dim,
            label_dim: self.label_dim,
            inputs,
            labels,
        }
    }
}
