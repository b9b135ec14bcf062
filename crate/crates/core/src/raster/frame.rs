use super::{Dims, ImagePlane, Mask};
use crate::error::{ensure, Result};
use crate::scalar::Scalar;

/// One observation: a plane per color channel (1 or 3) plus its position
/// in the sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    planes: Vec<ImagePlane<T>>,
    pub index: u64,
    pub tag: Option<String>,
}

fn check_planes<T: Scalar>(planes: &[ImagePlane<T>]) -> Result<Dims> {
    ensure!(
        planes.len() == 1 || planes.len() == 3,
        Argument,
        "expected 1 or 3 channels, got {}",
        planes.len()
    );
    let dims = planes[0].dims();
    ensure!(
        planes.iter().all(|p| p.dims() == dims),
        Argument,
        "all channel planes must share dimensions"
    );
    Ok(dims)
}

impl<T: Scalar> Frame<T> {
    pub fn new(planes: Vec<ImagePlane<T>>, index: u64) -> Result<Self> {
        check_planes(&planes)?;
        Ok(Self {
            planes,
            index,
            tag: None,
        })
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }

    pub fn planes(&self) -> &[ImagePlane<T>] {
        &self.planes
    }

    pub fn into_planes(self) -> Vec<ImagePlane<T>> {
        self.planes
    }

    pub fn plane(&self, channel: usize) -> &ImagePlane<T> {
        &self.planes[channel]
    }

    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    pub fn dims(&self) -> Dims {
        self.planes[0].dims()
    }

    /// Same dims and channel count.
    pub fn same_shape(&self, other: &Frame<T>) -> bool {
        self.dims() == other.dims() && self.channels() == other.channels()
    }

    pub fn cast<U: Scalar>(&self) -> Frame<U> {
        Frame {
            planes: self.planes.iter().map(ImagePlane::cast).collect(),
            index: self.index,
            tag: self.tag.clone(),
        }
    }
}

/// Additive backscatter estimate, one plane per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterField<T> {
    planes: Vec<ImagePlane<T>>,
}

impl<T: Scalar> ScatterField<T> {
    pub fn new(planes: Vec<ImagePlane<T>>) -> Result<Self> {
        check_planes(&planes)?;
        Ok(Self { planes })
    }

    pub fn zeros(dims: Dims, channels: usize) -> Self {
        Self {
            planes: (0..channels).map(|_| ImagePlane::zeros(dims)).collect(),
        }
    }

    pub fn planes(&self) -> &[ImagePlane<T>] {
        &self.planes
    }

    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    pub fn dims(&self) -> Dims {
        self.planes[0].dims()
    }
}

impl<T: Scalar> From<Frame<T>> for ScatterField<T> {
    fn from(frame: Frame<T>) -> Self {
        Self {
            planes: frame.into_planes(),
        }
    }
}

/// Multiplicative illumination/attenuation estimate with its validity mask.
///
/// Pixels where too little light reaches the seafloor to divide by are
/// flagged invalid instead of being amplified.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorField<T> {
    planes: Vec<ImagePlane<T>>,
    valid: Mask,
}

impl<T: Scalar> FactorField<T> {
    pub fn new(planes: Vec<ImagePlane<T>>, valid: Mask) -> Result<Self> {
        let dims = check_planes(&planes)?;
        ensure!(
            valid.dims() == dims,
            Argument,
            "validity mask {} does not match factor planes {}",
            valid.dims(),
            dims
        );
        Ok(Self { planes, valid })
    }

    /// Factor field valid everywhere.
    pub fn from_planes(planes: Vec<ImagePlane<T>>) -> Result<Self> {
        let dims = check_planes(&planes)?;
        Ok(Self {
            planes,
            valid: Mask::all_valid(dims),
        })
    }

    pub fn planes(&self) -> &[ImagePlane<T>] {
        &self.planes
    }

    pub fn valid(&self) -> &Mask {
        &self.valid
    }

    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    pub fn dims(&self) -> Dims {
        self.planes[0].dims()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_rejects_two_channels_and_mismatched_planes() {
        let a = ImagePlane::<f32>::filled(2, 2, 0.1).unwrap();
        let b = ImagePlane::<f32>::filled(3, 2, 0.1).unwrap();
        assert!(Frame::new(vec![a.clone(), a.clone()], 0).is_err());
        assert!(Frame::new(vec![a.clone(), a.clone(), b], 0).is_err());
        assert!(Frame::new(vec![a], 0).is_ok());
    }
}
