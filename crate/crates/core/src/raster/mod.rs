//! Image containers, resampling and file I/O shared by every other module.

mod fields;
mod frame;
pub mod io;
mod mask;
mod plane;
mod resample;

pub use fields::{
    load_factor, load_scatter, mask_path, save_factor, save_scatter, sidecar_path, FieldKind,
    FieldSidecar, FIELD_SCHEMA,
};
pub use frame::{FactorField, Frame, ScatterField};
pub use io::{load_frame, load_mask, save_frame, save_mask, BitDepth, DecodeMode, EncodeMode};
pub use mask::Mask;
pub use plane::{Dims, ImagePlane};
pub(crate) use plane::par_build;
pub use resample::{downsample, downsampled_dims, upsample, upsample_mask};
