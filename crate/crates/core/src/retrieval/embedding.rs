use std::collections::HashSet;

use crate::diffcore::Tensor;
use crate::error::{dim_err, Error, Result};
use crate::scalar::Real;

/// N×E embeddings with one unique identifier per row. `N = 0` is allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix<T> {
    ids: Vec<String>,
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> EmbeddingMatrix<T> {
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<T>) -> Result<Self> {
        if ids.len() * dim != data.len() {
            return Err(dim_err!(
                "{} ids × dim {dim} needs {} values, got {}",
                ids.len(),
                ids.len() * dim,
                data.len()
            ));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::Data(format!("duplicate embedding id `{dup}`")));
        }
        Ok(Self { ids, dim, data })
    }

    pub fn from_tensor(ids: Vec<String>, t: &Tensor<T>) -> Result<Self> {
        if t.rank() != 2 {
            return Err(dim_err!("embeddings must be a matrix, got {:?}", t.shape()));
        }
        Self::new(ids, t.shape()[1], t.data().to_vec())
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// The rows as a tensor; `None` when empty.
    pub fn to_tensor(&self) -> Option<Tensor<T>> {
        Tensor::new(&[self.len(), self.dim], self.data.clone()).ok()
    }

    pub fn cast<U: Real>(&self) -> EmbeddingMatrix<U> {
        EmbeddingMatrix {
            ids: self.ids.clone(),
            dim: self.dim,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64_lossy()).unwrap_or_else(U::nan))
                .collect(),
        }
    }
}
