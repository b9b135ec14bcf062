//! Robust estimators: temporal/spatial medians and the breakdown-point
//! calculator that sizes the temporal window.

mod breakdown;
mod median;

use serde::{Deserialize, Serialize};

pub use breakdown::{p_half, required_window, ContaminationModel, MAX_WINDOW};
pub use median::{median_in_place, spatial_median, temporal_median};

use crate::error::{ensure, Result};

/// Temporal window length, spatial median radius and the downsampling
/// factor applied before the temporal median.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub n: usize,
    pub spatial_radius: usize,
    pub downsample_factor: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            n: 7,
            spatial_radius: 1,
            downsample_factor: 8,
        }
    }
}

impl WindowSpec {
    pub fn new(n: usize, spatial_radius: usize, downsample_factor: usize) -> Result<Self> {
        let spec = Self {
            n,
            spatial_radius,
            downsample_factor,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.n >= 1 && self.n % 2 == 1,
            Argument,
            "window length must be odd and >= 1, got {}",
            self.n
        );
        ensure!(
            self.downsample_factor >= 1,
            Argument,
            "downsample factor must be >= 1"
        );
        Ok(())
    }

    /// Frames on each side of the center.
    pub fn half(&self) -> usize {
        self.n / 2
    }
}
