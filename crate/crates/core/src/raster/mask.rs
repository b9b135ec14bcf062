use super::Dims;
use crate::error::{ensure, Result};

/// Per-pixel validity flags (true = valid).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    dims: Dims,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(dims: Dims, data: Vec<bool>) -> Result<Self> {
        ensure!(
            data.len() == dims.len(),
            Argument,
            "mask {dims} needs {} flags, got {}",
            dims.len(),
            data.len()
        );
        Ok(Self { dims, data })
    }

    pub fn all_valid(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![true; dims.len()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.dims.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn invalid_fraction(&self) -> f64 {
        1.0 - self.valid_count() as f64 / self.data.len() as f64
    }

    /// Pixelwise AND.
    pub fn and(&self, other: &Mask) -> Result<Mask> {
        ensure!(
            self.dims == other.dims,
            Argument,
            "mask dims {} and {} differ",
            self.dims,
            other.dims
        );
        Ok(Mask {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect(),
        })
    }
}
