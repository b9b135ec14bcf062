//! Scatter, all-seafloor and factor estimation, and frame normalization.
//!
//! The forward model per channel is `I(x) = A(x) * F(x) + S(x)`:
//!
//! * `S` is the per-pixel temporal median over water-column frames.
//! * The all-seafloor image is the temporal median over a window of
//!   spatially median-filtered, downsampled seafloor frames. Objects occupy
//!   each pixel in a minority of frames, so the median sees plain sediment.
//! * Assuming the sediment has the reference color, `F = (all - S) / A_ref`.
//! * The restored albedo is `(I - S) / F`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::raster::{
    downsample, par_build, upsample, upsample_mask, Dims, FactorField, Frame, ImagePlane, Mask,
    ScatterField,
};
use crate::robust::{spatial_median, temporal_median, WindowSpec};
use crate::scalar::Scalar;

/// Fewest samples a median may be taken over and still be called robust.
pub const MIN_ROBUST_SAMPLES: usize = 3;

/// Albedo assumed for the dominant seafloor, per channel. Acts as the
/// white-balance reference of the restored images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ReferenceColor(Vec<f64>);

impl ReferenceColor {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        ensure!(
            values.len() == 1 || values.len() == 3,
            Argument,
            "reference color needs 1 or 3 channels, got {}",
            values.len()
        );
        ensure!(
            values.iter().all(|v| *v > 0.0 && *v <= 1.0),
            Argument,
            "reference color channels must lie in (0, 1], got {values:?}"
        );
        Ok(Self(values))
    }

    /// Neutral grey, 0.5 in every channel.
    pub fn grey() -> Self {
        Self(vec![0.5; 3])
    }

    /// Reference for `channel`; a single value applies to all channels.
    /// Grayscale frames accept a three-channel reference whose channels
    /// are equal.
    pub fn channel(&self, channel: usize) -> f64 {
        if self.0.len() == 1 {
            self.0[0]
        } else {
            self.0[channel]
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    fn check_channels(&self, channels: usize) -> Result<()> {
        let uniform = self.0.iter().all(|v| *v == self.0[0]);
        ensure!(
            self.0.len() == 1 || self.0.len() == channels || (channels == 1 && uniform),
            Argument,
            "reference color has {} channels, frames have {channels}",
            self.0.len()
        );
        Ok(())
    }
}

impl Default for ReferenceColor {
    fn default() -> Self {
        Self::grey()
    }
}

impl TryFrom<Vec<f64>> for ReferenceColor {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ReferenceColor> for Vec<f64> {
    fn from(r: ReferenceColor) -> Self {
        r.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancementConfig {
    pub window: WindowSpec,
    pub reference: ReferenceColor,
    /// Division floor in [0, 1] radiance units.
    pub epsilon: f64,
    pub clamp_output: bool,
}

impl Default for EnhancementConfig {
    fn default() -> Self {
        Self {
            window: WindowSpec::default(),
            reference: ReferenceColor::grey(),
            epsilon: 1e-4,
            clamp_output: false,
        }
    }
}

impl EnhancementConfig {
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        ensure!(
            self.window.n >= MIN_ROBUST_SAMPLES,
            Argument,
            "window length must be >= {MIN_ROBUST_SAMPLES}, got {}",
            self.window.n
        );
        ensure!(
            self.epsilon > 0.0 && self.epsilon.is_finite(),
            Argument,
            "epsilon must be positive, got {}",
            self.epsilon
        );
        Ok(())
    }
}

/// Low-resolution all-seafloor image with the full-resolution dims it
/// stands for.
#[derive(Debug, Clone, PartialEq)]
pub struct AllSeafloor<T> {
    pub planes: Vec<ImagePlane<T>>,
    pub full_dims: Dims,
}

impl<T: Scalar> AllSeafloor<T> {
    pub fn dims(&self) -> Dims {
        self.planes[0].dims()
    }
}

/// Spatial median followed by box downsampling, per plane.
pub fn preprocess_planes<T: Scalar>(planes: &[ImagePlane<T>], spec: &WindowSpec) -> Result<Vec<ImagePlane<T>>> {
    planes
        .iter()
        .map(|p| downsample(&spatial_median(p, spec.spatial_radius), spec.downsample_factor))
        .collect()
}

/// The scatter field brought to all-seafloor resolution with the same
/// operators the frames go through.
pub fn preprocess_scatter<T: Scalar>(scatter: &ScatterField<T>, spec: &WindowSpec) -> Result<ScatterField<T>> {
    ScatterField::new(preprocess_planes(scatter.planes(), spec)?)
}

fn check_homogeneous<T: Scalar>(frames: &[Frame<T>]) -> Result<()> {
    let first = &frames[0];
    ensure!(
        frames.iter().all(|f| f.same_shape(first)),
        Argument,
        "frames differ in dimensions or channel count"
    );
    Ok(())
}

/// Robust backscatter estimate from frames that see only the water column.
pub fn estimate_scatter<T: Scalar>(water_frames: &[Frame<T>]) -> Result<ScatterField<T>> {
    ensure!(
        water_frames.len() >= MIN_ROBUST_SAMPLES,
        Argument,
        "scatter estimation needs at least {MIN_ROBUST_SAMPLES} water-column frames, got {}",
        water_frames.len()
    );
    check_homogeneous(water_frames)?;
    let planes = (0..water_frames[0].channels())
        .map(|c| {
            let stack: Vec<&ImagePlane<T>> = water_frames.iter().map(|f| f.plane(c)).collect();
            temporal_median(&stack)
        })
        .collect::<Result<Vec<_>>>()?;
    ScatterField::new(planes)
}

/// Temporal median over already preprocessed windows.
/// `window[i][c]` is channel `c` of the `i`-th frame.
pub fn allseafloor_from_preprocessed<T: Scalar, W: AsRef<[ImagePlane<T>]> + Sync>(
    window: &[W],
    full_dims: Dims,
) -> Result<AllSeafloor<T>> {
    ensure!(
        window.len() >= MIN_ROBUST_SAMPLES,
        Argument,
        "all-seafloor estimation needs at least {MIN_ROBUST_SAMPLES} frames, got {}",
        window.len()
    );
    let channels = window[0].as_ref().len();
    ensure!(
        window.iter().all(|w| w.as_ref().len() == channels),
        Argument,
        "window frames differ in channel count"
    );
    let planes = (0..channels)
        .map(|c| {
            let stack: Vec<&ImagePlane<T>> = window.iter().map(|w| &w.as_ref()[c]).collect();
            temporal_median(&stack)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AllSeafloor { planes, full_dims })
}

/// Virtual image of a uniformly colored seafloor under the window's
/// lighting: spatial median, downsample, then temporal median.
pub fn estimate_allseafloor<T: Scalar>(window_frames: &[Frame<T>], spec: &WindowSpec) -> Result<AllSeafloor<T>> {
    spec.validate()?;
    ensure!(
        window_frames.len() >= MIN_ROBUST_SAMPLES,
        Argument,
        "all-seafloor estimation needs at least {MIN_ROBUST_SAMPLES} frames, got {}",
        window_frames.len()
    );
    check_homogeneous(window_frames)?;
    let pre = window_frames
        .iter()
        .map(|f| preprocess_planes(f.planes(), spec))
        .collect::<Result<Vec<_>>>()?;
    allseafloor_from_preprocessed(&pre, window_frames[0].dims())
}

/// Solves `all = A_ref * F + S` for `F` at low resolution, then upsamples
/// `F` to the full frame size.
///
/// `scatter` must already be at all-seafloor resolution (see
/// [`preprocess_scatter`]). Low-resolution pixels where `all - S < epsilon`
/// receive no usable light and are flagged invalid.
pub fn compute_factor<T: Scalar>(
    allseafloor: &AllSeafloor<T>,
    scatter: &ScatterField<T>,
    reference: &ReferenceColor,
    epsilon: f64,
) -> Result<FactorField<T>> {
    let low = allseafloor.dims();
    let channels = allseafloor.planes.len();
    ensure!(
        scatter.dims() == low && scatter.channels() == channels,
        Argument,
        "scatter {}x{} ch does not match all-seafloor {}x{} ch",
        scatter.dims(),
        scatter.channels(),
        low,
        channels
    );
    reference.check_channels(channels)?;
    ensure!(epsilon > 0.0, Argument, "epsilon must be positive");
    let eps = T::of(epsilon);
    let mut valid = vec![true; low.len()];
    let mut factors = Vec::with_capacity(channels);
    for c in 0..channels {
        let inv_ref = T::of(1.0 / reference.channel(c));
        let all = allseafloor.planes[c].data();
        let sc = scatter.planes()[c].data();
        let mut data = Vec::with_capacity(low.len());
        for i in 0..low.len() {
            let signal = all[i] - sc[i];
            if signal < eps {
                valid[i] = false;
            }
            data.push(signal.max(T::zero()) * inv_ref);
        }
        let plane = ImagePlane::from_raw(low, data);
        factors.push(upsample(&plane, allseafloor.full_dims.width, allseafloor.full_dims.height)?);
    }
    let mask = upsample_mask(
        &Mask::new(low, valid)?,
        allseafloor.full_dims.width,
        allseafloor.full_dims.height,
    )?;
    FactorField::new(factors, mask)
}

/// An enhanced frame and the pixels where it is meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct Enhanced<T> {
    pub frame: Frame<T>,
    pub coverage: Mask,
}

/// Restores albedo: `max(I - S, 0) / max(F, epsilon)` at valid pixels,
/// zero elsewhere.
pub fn enhance<T: Scalar>(
    frame: &Frame<T>,
    scatter: &ScatterField<T>,
    factor: &FactorField<T>,
    config: &EnhancementConfig,
) -> Result<Enhanced<T>> {
    let dims = frame.dims();
    let ch = frame.channels();
    ensure!(
        scatter.dims() == dims && scatter.channels() == ch,
        Argument,
        "scatter field {} does not match frame {}",
        scatter.dims(),
        dims
    );
    ensure!(
        factor.dims() == dims && factor.channels() == ch,
        Argument,
        "factor field {} does not match frame {}",
        factor.dims(),
        dims
    );
    ensure!(config.epsilon > 0.0, Argument, "epsilon must be positive");
    let eps = T::of(config.epsilon);
    let clamp = config.clamp_output;
    let valid = factor.valid();
    let planes = (0..ch)
        .map(|c| {
            let (img, sc, fa) = (frame.plane(c), &scatter.planes()[c], &factor.planes()[c]);
            par_build(dims, |y, row| {
                let (ir, sr, fr) = (img.row(y), sc.row(y), fa.row(y));
                let w = dims.width;
                let vr = &valid.data()[y * w..(y + 1) * w];
                for x in 0..w {
                    row[x] = if vr[x] {
                        let v = (ir[x] - sr[x]).max(T::zero()) / fr[x].max(eps);
                        if clamp {
                            v.min(T::one())
                        } else {
                            v
                        }
                    } else {
                        T::zero()
                    };
                }
            })
        })
        .collect();
    let mut out = Frame::new(planes, frame.index)?;
    out.tag = frame.tag.clone();
    Ok(Enhanced {
        frame: out,
        coverage: valid.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(w: usize, h: usize, v: f64) -> Frame<f64> {
        Frame::new(vec![ImagePlane::filled(w, h, v).unwrap()], 0).unwrap()
    }

    fn spec_identity() -> WindowSpec {
        WindowSpec::new(3, 0, 1).unwrap()
    }

    #[test]
    fn scatter_needs_three_frames() {
        let f = flat(2, 2, 0.1);
        assert!(estimate_scatter(&[f.clone(), f.clone()]).is_err());
        let s = estimate_scatter(&[f.clone(), f.clone(), f]).unwrap();
        assert!(s.planes()[0].data().iter().all(|&v| v == 0.1));
    }

    #[test]
    fn scatter_of_zero_frames_is_zero() {
        let frames: Vec<_> = (0..7).map(|_| flat(3, 2, 0.0)).collect();
        let s = estimate_scatter(&frames).unwrap();
        assert!(s.planes()[0].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn factor_direct_arithmetic() {
        let all = AllSeafloor {
            planes: vec![ImagePlane::filled(2, 2, 0.5).unwrap()],
            full_dims: Dims::new(2, 2),
        };
        let scatter = ScatterField::new(vec![ImagePlane::filled(2, 2, 0.1).unwrap()]).unwrap();
        let f = compute_factor(&all, &scatter, &ReferenceColor::new(vec![0.5]).unwrap(), 1e-4).unwrap();
        assert!(f.planes()[0].data().iter().all(|&v| (v - 0.8f64).abs() < 1e-15));
        assert_eq!(f.valid().valid_count(), 4);
        let f2 = compute_factor(&all, &scatter, &ReferenceColor::new(vec![1.0]).unwrap(), 1e-4).unwrap();
        for (a, b) in f.planes()[0].data().iter().zip(f2.planes()[0].data()) {
            assert!((a - 2.0 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn no_light_flags_everything_invalid() {
        let all = AllSeafloor {
            planes: vec![ImagePlane::filled(2, 2, 0.3).unwrap()],
            full_dims: Dims::new(8, 8),
        };
        let scatter = ScatterField::new(vec![ImagePlane::filled(2, 2, 0.3).unwrap()]).unwrap();
        let f = compute_factor(&all, &scatter, &ReferenceColor::grey(), 1e-4).unwrap();
        assert_eq!(f.valid().valid_count(), 0);
        let e = enhance(&flat(8, 8, 0.9), &ScatterField::from(flat(8, 8, 0.3)), &f, &EnhancementConfig::default())
            .unwrap();
        assert!(e.frame.plane(0).data().iter().all(|&v| v == 0.0));
        assert_eq!(e.coverage.valid_count(), 0);
    }

    #[test]
    fn reference_validation() {
        assert!(ReferenceColor::new(vec![0.0, 0.5, 0.5]).is_err());
        assert!(ReferenceColor::new(vec![0.5, 0.5]).is_err());
        assert!(ReferenceColor::new(vec![1.0]).is_ok());
    }

    #[test]
    fn identity_configuration() {
        let planes = vec![ImagePlane::from_fn(4, 3, |x, y| 0.1 * (x + y) as f64).unwrap()];
        let frame = Frame::new(planes, 5).unwrap();
        let scatter = ScatterField::zeros(frame.dims(), 1);
        let factor = FactorField::from_planes(vec![ImagePlane::filled(4, 3, 1.0).unwrap()]).unwrap();
        let e = enhance(&frame, &scatter, &factor, &EnhancementConfig::default()).unwrap();
        assert_eq!(e.frame.planes(), frame.planes());
        assert_eq!(e.frame.index, 5);
    }

    #[test]
    fn clamp_output_clips() {
        let frame = flat(2, 2, 0.9);
        let factor = FactorField::from_planes(vec![ImagePlane::filled(2, 2, 0.3).unwrap()]).unwrap();
        let cfg = EnhancementConfig {
            clamp_output: true,
            ..Default::default()
        };
        let e = enhance(&frame, &ScatterField::zeros(frame.dims(), 1), &factor, &cfg).unwrap();
        assert!(e.frame.plane(0).data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn negative_signal_clamps_to_zero() {
        let frame = flat(2, 2, 0.1);
        let factor = FactorField::from_planes(vec![ImagePlane::filled(2, 2, 0.5).unwrap()]).unwrap();
        let e = enhance(&frame, &ScatterField::from(flat(2, 2, 0.2)), &factor, &EnhancementConfig::default())
            .unwrap();
        assert!(e.frame.plane(0).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_argument_error() {
        let frame = flat(2, 2, 0.1);
        let factor = FactorField::from_planes(vec![ImagePlane::filled(3, 2, 0.5).unwrap()]).unwrap();
        assert!(matches!(
            enhance(&frame, &ScatterField::zeros(frame.dims(), 1), &factor, &EnhancementConfig::default()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn allseafloor_ignores_single_black_frame() {
        let mut frames: Vec<_> = (0..7)
            .map(|_| {
                Frame::new(vec![ImagePlane::from_fn(16, 16, |x, y| 0.2 + 0.01 * (x * y % 5) as f64).unwrap()], 0)
                    .unwrap()
            })
            .collect();
        let spec = WindowSpec::default();
        let clean = estimate_allseafloor(&frames, &spec).unwrap();
        frames[2] = flat(16, 16, 0.0);
        let with_black = estimate_allseafloor(&frames, &spec).unwrap();
        assert_eq!(clean, with_black);
        assert_eq!(clean.dims(), Dims::new(2, 2));
        assert_eq!(clean.full_dims, Dims::new(16, 16));
    }

    #[test]
    fn allseafloor_window_too_short() {
        let f = flat(4, 4, 0.2);
        assert!(estimate_allseafloor(&[f.clone(), f], &spec_identity()).is_err());
    }

    #[test]
    fn config_rejects_short_window_and_bad_epsilon() {
        let mut cfg = EnhancementConfig::default();
        cfg.window.n = 1;
        assert!(cfg.validate().is_err());
        cfg.window.n = 4;
        assert!(cfg.validate().is_err());
        let cfg = EnhancementConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
