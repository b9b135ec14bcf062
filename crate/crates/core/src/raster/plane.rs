use rayon::prelude::*;

use crate::error::{ensure, Error, Result};
use crate::scalar::Scalar;

/// Image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
}

impl Dims {
    pub const fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub const fn len(&self) -> usize {
        self.width * self.height
    }

    pub const fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Single-channel raster of linear radiance values.
///
/// Data is row-major, every sample finite and non-negative. Sensor full
/// scale maps to 1.0 but larger values are legal (e.g. restored albedo
/// brighter than the reference color).
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane<T> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Scalar> ImagePlane<T> {
    /// Builds a plane, validating length and value range.
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        ensure!(
            width > 0 && height > 0,
            Argument,
            "plane dimensions must be positive, got {width}x{height}"
        );
        ensure!(
            data.len() == width * height,
            Argument,
            "plane {width}x{height} needs {} samples, got {}",
            width * height,
            data.len()
        );
        if let Some((i, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < T::zero())
        {
            return Err(Error::Data(format!(
                "sample {i} is {v}; planes hold finite non-negative radiance"
            )));
        }
        Ok(Self {
            dims: Dims::new(width, height),
            data,
        })
    }

    /// Skips validation. Callers guarantee the invariants.
    pub(crate) fn from_raw(dims: Dims, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), dims.len());
        Self { dims, data }
    }

    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Plane whose sample at `(x, y)` is `f(x, y)`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> T) -> Result<Self> {
        let data = (0..width * height)
            .map(|i| f(i % width, i / width))
            .collect();
        Self::new(width, height, data)
    }

    pub fn zeros(dims: Dims) -> Self {
        Self::from_raw(dims, vec![T::zero(); dims.len()])
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.dims.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.dims.height
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.dims.width + x]
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[T] {
        let w = self.dims.width;
        &self.data[y * w..(y + 1) * w]
    }

    pub fn min_max(&self) -> (T, T) {
        self.data.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    }

    /// Mean computed in f64 with a fixed summation order.
    pub fn mean(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum::<f64>() / self.data.len() as f64
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ImagePlane<U> {
        ImagePlane::from_raw(self.dims, self.data.iter().map(|v| U::of(v.as_f64())).collect())
    }
}

impl<T> AsRef<ImagePlane<T>> for ImagePlane<T> {
    fn as_ref(&self) -> &ImagePlane<T> {
        self
    }
}

/// Fills a fresh plane row by row in parallel; `fill(y, row)` writes one row.
pub(crate) fn par_build<T: Scalar>(dims: Dims, fill: impl Fn(usize, &mut [T]) + Sync) -> ImagePlane<T> {
    let mut data = vec![T::zero(); dims.len()];
    data.par_chunks_mut(dims.width)
        .enumerate()
        .for_each(|(y, row)| fill(y, row));
    ImagePlane::from_raw(dims, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_and_non_finite() {
        assert!(matches!(
            ImagePlane::new(2, 1, vec![0.5f32, -0.1]),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            ImagePlane::new(1, 1, vec![f64::NAN]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn rejects_length_mismatch() {
        assert!(matches!(
            ImagePlane::new(3, 2, vec![0.0f32; 5]),
            Err(Error::Argument(_))
        ));
        assert!(ImagePlane::<f32>::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn from_fn_is_row_major() {
        let p = ImagePlane::<f64>::from_fn(3, 2, |x, y| (x + 10 * y) as f64).unwrap();
        assert_eq!(p.data(), &[0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
        assert_eq!(p.get(2, 1), 12.0);
        assert_eq!(p.row(1), &[10.0, 11.0, 12.0]);
    }
}
