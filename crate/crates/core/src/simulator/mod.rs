//! Synthetic deep-sea sequences with known albedo, factor and backscatter.
//!
//! A pinhole camera with co-moving point lights looks at a flat seafloor
//! through single-scattering water. Every rendered pixel obeys
//! `I = A * F + S` exactly, so the ground-truth layers invert the
//! observation bit for bit up to rounding.

mod geometry;
mod render;
mod scene;

pub use geometry::{ground_homography, pixel_ray, world_from_camera, LocalPlane};
pub use render::{
    cumulative_backscatter, integrate_backscatter, render_frame, render_sequence, RenderGeometry, Rendered,
    SequenceRenderer, PARTICLE_GAIN,
};
pub use scene::{
    example_doc, AlbedoMap, AlbedoMapSpec, AlbedoSource, Camera, ContaminationSpec, LightSource, Pose, SceneDoc,
    SceneSpec, Trajectory, WaterProperties, MIN_STEPS, SCENE_SCHEMA,
};
