//! Streaming orchestration: a ring buffer of incoming frames, sliding-window
//! all-seafloor estimation and enhanced-frame emission.
//!
//! Output frame `t` is normalized with the factor estimated from frames
//! `[t - n/2, t + n/2]`. Near the ends of the sequence the window shrinks to
//! the frames that exist (never below three), so every input yields exactly
//! one output, in input order.

mod batch;

use std::collections::VecDeque;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use batch::{read_manifest, run_batch, BatchOptions, OutputFormat, RunReport, REPORT_SCHEMA};

use crate::error::{ensure, Error, Result};
use crate::estimation::{
    allseafloor_from_preprocessed, compute_factor, enhance, preprocess_planes, preprocess_scatter,
    EnhancementConfig, Enhanced, MIN_ROBUST_SAMPLES,
};
use crate::raster::{Dims, FactorField, Frame, ImagePlane, ScatterField};
use crate::scalar::Scalar;

/// Whether the factor field follows the pose (re-estimated per frame) or is
/// fixed after the first full window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorMode {
    #[default]
    PerFrame,
    Static,
}

/// Frames used for output `t` of a `total`-frame sequence with nominal
/// window `n`: centered, clipped to the sequence, then widened to at least
/// three frames where the sequence allows.
pub fn window_bounds(t: usize, total: usize, n: usize) -> Range<usize> {
    let half = n / 2;
    let mut lo = t.saturating_sub(half);
    let mut hi = (t + half).min(total - 1);
    while hi - lo + 1 < MIN_ROBUST_SAMPLES.min(total) {
        if hi + 1 < total {
            hi += 1;
        } else {
            lo -= 1;
        }
    }
    lo..hi + 1
}

/// One enhanced output frame.
#[derive(Debug, Clone)]
pub struct Emission<T> {
    /// Position of the frame in the input sequence.
    pub position: usize,
    pub enhanced: Enhanced<T>,
    pub factor: Arc<FactorField<T>>,
    pub window: Range<usize>,
}

struct Slot<T> {
    position: usize,
    frame: Frame<T>,
    low: Vec<ImagePlane<T>>,
}

/// Streaming state. Holds at most `n` frames plus their preprocessed
/// low-resolution planes.
pub struct StreamState<T> {
    config: EnhancementConfig,
    mode: FactorMode,
    scatter: ScatterField<T>,
    scatter_low: ScatterField<T>,
    ring: VecDeque<Slot<T>>,
    shape: Option<(Dims, usize)>,
    pushed: usize,
    emitted: usize,
    static_factor: Option<Arc<FactorField<T>>>,
}

impl<T: Scalar> StreamState<T> {
    pub fn new(scatter: ScatterField<T>, config: EnhancementConfig, mode: FactorMode) -> Result<Self> {
        config.validate()?;
        let scatter_low = preprocess_scatter(&scatter, &config.window)?;
        Ok(Self {
            ring: VecDeque::with_capacity(config.window.n),
            config,
            mode,
            scatter,
            scatter_low,
            shape: None,
            pushed: 0,
            emitted: 0,
            static_factor: None,
        })
    }

    pub fn config(&self) -> &EnhancementConfig {
        &self.config
    }

    pub fn pushed(&self) -> usize {
        self.pushed
    }

    pub fn emitted(&self) -> usize {
        self.emitted
    }

    /// Frames currently held.
    pub fn buffered(&self) -> usize {
        self.ring.len()
    }

    /// Swaps the backscatter estimate for subsequent emissions.
    pub fn replace_scatter(&mut self, scatter: ScatterField<T>) -> Result<()> {
        if let Some((dims, ch)) = self.shape {
            ensure!(
                scatter.dims() == dims && scatter.channels() == ch,
                Argument,
                "replacement scatter {} does not match stream frames {dims}",
                scatter.dims()
            );
        }
        self.scatter_low = preprocess_scatter(&scatter, &self.config.window)?;
        self.scatter = scatter;
        Ok(())
    }

    fn check_shape(&mut self, frame: &Frame<T>) -> Result<()> {
        let shape = (frame.dims(), frame.channels());
        match self.shape {
            None => {
                ensure!(
                    self.scatter.dims() == shape.0 && self.scatter.channels() == shape.1,
                    Argument,
                    "scatter field {} ({} ch) does not match frames {} ({} ch)",
                    self.scatter.dims(),
                    self.scatter.channels(),
                    shape.0,
                    shape.1
                );
                self.shape = Some(shape);
                Ok(())
            }
            Some(expected) if expected == shape => Ok(()),
            Some((dims, ch)) => Err(Error::Stream(format!(
                "frame {} is {} ({} ch) but the stream is {dims} ({ch} ch)",
                self.pushed, shape.0, shape.1
            ))),
        }
    }

    /// Adds the next frame. Returns the outputs that became computable:
    /// nothing while the first window fills, the leading frames plus the
    /// first center once it is full, and one frame per push afterwards.
    pub fn push(&mut self, frame: Frame<T>) -> Result<Vec<Emission<T>>> {
        self.check_shape(&frame)?;
        let n = self.config.window.n;
        let low = preprocess_planes(frame.planes(), &self.config.window)?;
        if self.ring.len() == n {
            self.ring.pop_front();
        }
        self.ring.push_back(Slot {
            position: self.pushed,
            frame,
            low,
        });
        self.pushed += 1;
        if self.pushed < n {
            return Ok(Vec::new());
        }
        let center = self.pushed - 1 - n / 2;
        let mut out = Vec::new();
        while self.emitted <= center {
            // The sequence is at least `pushed` long, and windows up to the
            // center never reach past the newest frame.
            let window = window_bounds(self.emitted, self.pushed, n);
            out.push(self.emit(self.emitted, window)?);
            self.emitted += 1;
        }
        Ok(out)
    }

    /// Ends the stream, emitting every remaining frame with windows shrunk
    /// to the available frames.
    pub fn flush(&mut self) -> Result<Vec<Emission<T>>> {
        ensure!(
            self.pushed >= MIN_ROBUST_SAMPLES,
            Stream,
            "stream has {} frames, at least {MIN_ROBUST_SAMPLES} are required",
            self.pushed
        );
        let n = self.config.window.n;
        let mut out = Vec::new();
        while self.emitted < self.pushed {
            let window = window_bounds(self.emitted, self.pushed, n);
            out.push(self.emit(self.emitted, window)?);
            self.emitted += 1;
        }
        Ok(out)
    }

    fn slot(&self, position: usize) -> &Slot<T> {
        let first = self.ring.front().expect("non-empty ring").position;
        &self.ring[position - first]
    }

    fn factor_for(&self, window: &Range<usize>) -> Result<FactorField<T>> {
        let low: Vec<&[ImagePlane<T>]> = window.clone().map(|p| self.slot(p).low.as_slice()).collect();
        let dims = self.shape.expect("shape known once frames arrived").0;
        let all = allseafloor_from_preprocessed(&low, dims)?;
        compute_factor(&all, &self.scatter_low, &self.config.reference, self.config.epsilon)
    }

    fn emit(&mut self, position: usize, window: Range<usize>) -> Result<Emission<T>> {
        let factor = match self.mode {
            FactorMode::PerFrame => Arc::new(self.factor_for(&window)?),
            FactorMode::Static => {
                if self.static_factor.is_none() {
                    // First full window, or everything when the stream is short.
                    let first = 0..self.config.window.n.min(self.pushed);
                    self.static_factor = Some(Arc::new(self.factor_for(&first)?));
                }
                self.static_factor.clone().expect("just set")
            }
        };
        let enhanced = enhance(&self.slot(position).frame, &self.scatter, &factor, &self.config)?;
        Ok(Emission {
            position,
            enhanced,
            factor,
            window,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_bounds_interior_and_edges() {
        assert_eq!(window_bounds(10, 30, 7), 7..14);
        assert_eq!(window_bounds(0, 30, 7), 0..4);
        assert_eq!(window_bounds(29, 30, 7), 26..30);
        assert_eq!(window_bounds(1, 3, 7), 0..3);
        // n = 3 widens edge windows to three frames
        assert_eq!(window_bounds(0, 10, 3), 0..3);
        assert_eq!(window_bounds(9, 10, 3), 7..10);
    }

    fn frame(v: f32, index: u64) -> Frame<f32> {
        Frame::new(vec![ImagePlane::filled(16, 8, v).unwrap()], index).unwrap()
    }

    fn stream(n: usize) -> StreamState<f32> {
        let mut cfg = EnhancementConfig::default();
        cfg.window.n = n;
        StreamState::new(ScatterField::zeros(Dims::new(16, 8), 1), cfg, FactorMode::PerFrame).unwrap()
    }

    #[test]
    fn warm_up_then_center_alignment() {
        let mut s = stream(7);
        for i in 0..6 {
            assert!(s.push(frame(0.4, i)).unwrap().is_empty());
        }
        let out = s.push(frame(0.4, 6)).unwrap();
        let positions: Vec<_> = out.iter().map(|e| e.position).collect();
        assert_eq!(positions, vec![0, 1, 2, 3]);
        assert_eq!(out[3].window, 0..7);
        let rest = s.flush().unwrap();
        assert_eq!(rest.iter().map(|e| e.position).collect::<Vec<_>>(), vec![4, 5, 6]);
        assert!(s.buffered() <= 7);
    }

    #[test]
    fn short_streams() {
        let mut s = stream(7);
        for i in 0..3 {
            s.push(frame(0.4, i)).unwrap();
        }
        let out = s.flush().unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|e| e.window == (0..3)));

        let mut s = stream(7);
        s.push(frame(0.4, 0)).unwrap();
        s.push(frame(0.4, 1)).unwrap();
        assert!(matches!(s.flush(), Err(Error::Stream(_))));
    }

    #[test]
    fn heterogeneous_stream_rejected() {
        let mut s = stream(3);
        s.push(frame(0.4, 0)).unwrap();
        let other = Frame::new(vec![ImagePlane::filled(8, 8, 0.4f32).unwrap()], 1).unwrap();
        assert!(matches!(s.push(other), Err(Error::Stream(_))));
    }

    #[test]
    fn scatter_mismatch_is_argument_error() {
        let mut s = stream(3);
        let other = Frame::new(vec![ImagePlane::filled(8, 8, 0.4f32).unwrap()], 0).unwrap();
        assert!(matches!(s.push(other), Err(Error::Argument(_))));
    }

    #[test]
    fn static_mode_shares_one_factor() {
        let mut cfg = EnhancementConfig::default();
        cfg.window.n = 3;
        let mut s = StreamState::new(ScatterField::zeros(Dims::new(16, 8), 1), cfg, FactorMode::Static).unwrap();
        let mut out = Vec::new();
        for i in 0..6 {
            out.extend(s.push(frame(0.2 + 0.05 * i as f32, i)).unwrap());
        }
        out.extend(s.flush().unwrap());
        assert_eq!(out.len(), 6);
        assert!(out.iter().all(|e| Arc::ptr_eq(&e.factor, &out[0].factor)));
    }
}
