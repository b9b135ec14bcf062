//! Evaluation of restored sequences: registration-based consistency,
//! ground-truth error and a simple compositor.

mod composite;
mod consistency;
mod registration;
mod rmse;
mod sample;

pub use composite::{composite, gaussian_blur, Composite};
pub use consistency::{consistency_error, ConsistencyOptions, ConsistencyReport, FrameConsistency, REPORT_SCHEMA};
pub use registration::{
    CorrespondenceMap, Homography, MosaicExtent, Registration, MAX_MOSAIC_PIXELS, REGISTRATION_SCHEMA,
};
pub use rmse::{fit_scale, scale_invariant_rmse};
