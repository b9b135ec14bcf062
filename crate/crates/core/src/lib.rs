//! Calibration-free compensation of co-moving artificial lighting and water
//! effects in deep-sea seafloor image sequences.
//!
//! Every observation is modelled as `I = A * F + S`: seafloor albedo `A`
//! times a multiplicative illumination/attenuation factor `F`, plus an
//! additive backscatter field `S`. `S` is estimated once from water-column
//! frames, `F` per frame from a sliding-window robust median, and the
//! albedo is recovered by `(I - S) / F`.
//!
//! The math is generic over [`Scalar`] (`f32` or `f64`); the crate root
//! exports `f32` aliases used by the CLI and `f64` aliases used by the
//! reference paths in tests.

pub mod error;
pub mod estimation;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod robust;
pub mod scalar;
pub mod simulator;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use estimation::{EnhancementConfig, ReferenceColor};
pub use raster::{Dims, Mask};
pub use robust::{ContaminationModel, WindowSpec};

pub type Plane = raster::ImagePlane<f32>;
pub type Frame = raster::Frame<f32>;
pub type Scatter = raster::ScatterField<f32>;
pub type Factor = raster::FactorField<f32>;
pub type Stream = pipeline::StreamState<f32>;

pub type Plane64 = raster::ImagePlane<f64>;
pub type Frame64 = raster::Frame<f64>;
pub type Scatter64 = raster::ScatterField<f64>;
pub type Factor64 = raster::FactorField<f64>;
pub type Stream64 = pipeline::StreamState<f64>;
