use crate::error::{Error, Result};

/// A dense row-major batch of `count x dim` f32 vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorBatch {
    dim: usize,
    values: Vec<f32>,
}

impl VectorBatch {
    pub fn new(dim: usize, values: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("batch dim must be positive".into()));
        }
        if values.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("batch contains non-finite values".into()));
        }
        Ok(Self { dim, values })
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, values: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn push_row(&mut self, row: &[f32]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: row.len(),
            });
        }
        self.values.extend_from_slice(row);
        Ok(())
    }

    /// Sub-batch of the given row indices, in order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        Self { dim: self.dim, values }
    }
}
