//! Offset- and scale-invariant agreement of overlapping registered frames.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::registration::Registration;
use super::sample::PyramidSampler;
use crate::error::{ensure, Error, Result};
use crate::raster::{Frame, Mask};
use crate::scalar::Scalar;

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameConsistency {
    pub frame: usize,
    /// Overlap pixels this frame contributed a sample to.
    pub samples: usize,
    /// Mean absolute deviation of this frame's samples from the mosaic
    /// color, over the overlap standard deviation, per channel.
    pub error: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub schema: u32,
    /// Normalized error per channel; lower is more consistent.
    pub error: Vec<f64>,
    pub mean_abs_deviation: Vec<f64>,
    pub std_dev: Vec<f64>,
    /// Mosaic pixels seen by two or more frames.
    pub overlap_pixel_count: usize,
    pub sample_count: usize,
    pub frames: Vec<FrameConsistency>,
}

/// Optional restrictions on which samples count.
#[derive(Debug, Clone, Default)]
pub struct ConsistencyOptions<'a> {
    /// Per-frame validity masks in frame pixels.
    pub frame_masks: Option<&'a [Mask]>,
    /// Mosaic-space mask selecting a region, sized as the mosaic extent.
    pub region: Option<&'a Mask>,
}

#[derive(Default)]
struct RowStats {
    deviation: Vec<f64>,
    samples: usize,
    per_frame: Vec<(usize, Vec<f64>)>,
    colors: Vec<f64>,
}

/// Scores how well overlapping frames agree after registration: for every
/// mosaic pixel seen by at least two frames, the mean absolute deviation of
/// the samples from their plain mean, divided by the standard deviation of
/// those mean colors over the overlap.
pub fn consistency_error<T: Scalar>(
    frames: &[Frame<T>],
    reg: &Registration,
    options: &ConsistencyOptions,
) -> Result<ConsistencyReport> {
    ensure!(frames.len() >= 2, Argument, "consistency needs 2 or more frames, got {}", frames.len());
    let channels = frames[0].channels();
    ensure!(
        frames.iter().all(|f| f.channels() == channels),
        Argument,
        "all frames must have the same channel count"
    );
    let dims: Vec<_> = frames.iter().map(Frame::dims).collect();
    let extent = reg.extent(&dims)?;
    if let Some(masks) = options.frame_masks {
        ensure!(masks.len() == frames.len(), Argument, "one mask per frame required");
        for (k, (m, d)) in masks.iter().zip(&dims).enumerate() {
            ensure!(m.dims() == *d, Argument, "mask {k} is {} but frame is {d}", m.dims());
        }
    }
    if let Some(region) = options.region {
        ensure!(
            region.dims() == extent.dims,
            Argument,
            "region mask is {} but the mosaic is {}",
            region.dims(),
            extent.dims
        );
    }
    let samplers = frames
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let mask = options.frame_masks.map(|m| &m[k]);
            PyramidSampler::new(f, mask, *reg.from_mosaic(k))
        })
        .collect::<Result<Vec<_>>>()?;
    let bounds = (0..frames.len())
        .map(|k| reg.frame_bounds(k, dims[k]))
        .collect::<Result<Vec<_>>>()?;

    let rows: Vec<RowStats> = (0..extent.dims.height)
        .into_par_iter()
        .map(|j| {
            let my = extent.origin[1] + j as f64;
            let mut stats = RowStats {
                deviation: vec![0.0; channels],
                per_frame: vec![(0, vec![0.0; channels]); frames.len()],
                ..Default::default()
            };
            let candidates: Vec<usize> = (0..frames.len())
                .filter(|&k| my >= bounds[k][1] && my <= bounds[k][3])
                .collect();
            let mut values = vec![0.0; frames.len() * channels];
            let mut seen = Vec::with_capacity(frames.len());
            let mut mean = vec![0.0; channels];
            for i in 0..extent.dims.width {
                if let Some(region) = options.region {
                    if !region.get(i, j) {
                        continue;
                    }
                }
                let mx = extent.origin[0] + i as f64;
                seen.clear();
                for &k in &candidates {
                    if mx < bounds[k][0] || mx > bounds[k][2] {
                        continue;
                    }
                    let slot = &mut values[seen.len() * channels..(seen.len() + 1) * channels];
                    if samplers[k].sample(mx, my, slot) {
                        seen.push(k);
                    }
                }
                if seen.len() < 2 {
                    continue;
                }
                let n = seen.len() as f64;
                for (c, m) in mean.iter_mut().enumerate() {
                    *m = (0..seen.len()).map(|s| values[s * channels + c]).sum::<f64>() / n;
                }
                for (s, &k) in seen.iter().enumerate() {
                    let frame_stats = &mut stats.per_frame[k];
                    frame_stats.0 += 1;
                    for c in 0..channels {
                        let d = (values[s * channels + c] - mean[c]).abs();
                        stats.deviation[c] += d;
                        frame_stats.1[c] += d;
                    }
                }
                stats.samples += seen.len();
                stats.colors.extend_from_slice(&mean);
            }
            stats
        })
        .collect();

    let overlap = rows.iter().map(|r| r.colors.len() / channels).sum::<usize>();
    ensure!(overlap > 0, Metric, "registered frames do not overlap");
    let samples = rows.iter().map(|r| r.samples).sum::<usize>();
    let mut deviation = vec![0.0; channels];
    let mut color_sum = vec![0.0; channels];
    let mut per_frame = vec![(0usize, vec![0.0; channels]); frames.len()];
    for r in &rows {
        for c in 0..channels {
            deviation[c] += r.deviation[c];
        }
        for (acc, (n, d)) in per_frame.iter_mut().zip(&r.per_frame) {
            acc.0 += n;
            acc.1.iter_mut().zip(d).for_each(|(a, b)| *a += b);
        }
        for color in r.colors.chunks_exact(channels) {
            color_sum.iter_mut().zip(color).for_each(|(a, b)| *a += b);
        }
    }
    let color_mean: Vec<f64> = color_sum.iter().map(|s| s / overlap as f64).collect();
    let mut var = vec![0.0; channels];
    for r in &rows {
        for color in r.colors.chunks_exact(channels) {
            for c in 0..channels {
                var[c] += (color[c] - color_mean[c]).powi(2);
            }
        }
    }
    let std_dev: Vec<f64> = var.iter().map(|v| (v / overlap as f64).sqrt()).collect();
    let mad: Vec<f64> = deviation.iter().map(|d| d / samples as f64).collect();
    let normalize = |num: f64, c: usize| -> Result<f64> {
        if num == 0.0 {
            Ok(0.0)
        } else if std_dev[c] > 0.0 {
            Ok(num / std_dev[c])
        } else {
            Err(Error::Metric(format!(
                "channel {c}: overlap has no color variation but samples disagree"
            )))
        }
    };
    let error = (0..channels).map(|c| normalize(mad[c], c)).collect::<Result<Vec<_>>>()?;
    let frames_out = per_frame
        .into_iter()
        .enumerate()
        .map(|(k, (n, d))| {
            let error = (0..channels)
                .map(|c| if n == 0 { Ok(0.0) } else { normalize(d[c] / n as f64, c) })
                .collect::<Result<Vec<_>>>()?;
            Ok(FrameConsistency {
                frame: k,
                samples: n,
                error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConsistencyReport {
        schema: REPORT_SCHEMA,
        error,
        mean_abs_deviation: mad,
        std_dev,
        overlap_pixel_count: overlap,
        sample_count: samples,
        frames: frames_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Homography;
    use crate::raster::ImagePlane;

    fn ramp(w: usize, h: usize, offset: f64) -> Frame<f64> {
        let p = ImagePlane::from_fn(w, h, |x, y| offset + 0.01 * x as f64 + 0.02 * y as f64).unwrap();
        Frame::new(vec![p], 0).unwrap()
    }

    #[test]
    fn duplicates_score_zero() {
        let f = ramp(16, 12, 0.1);
        let reg = Registration::from_homographies(vec![Homography::identity(); 2]).unwrap();
        let r = consistency_error(&[f.clone(), f], &reg, &Default::default()).unwrap();
        assert_eq!(r.error, vec![0.0]);
        assert_eq!(r.overlap_pixel_count, 16 * 12);
    }

    #[test]
    fn disjoint_frames_are_a_metric_error() {
        let f = ramp(8, 8, 0.1);
        let reg =
            Registration::from_homographies(vec![Homography::identity(), Homography::translation(100.0, 0.0)]).unwrap();
        assert!(matches!(
            consistency_error(&[f.clone(), f], &reg, &Default::default()),
            Err(Error::Metric(_))
        ));
    }

    #[test]
    fn hand_computed_two_frames() {
        // Frame b = a + 0.1 everywhere: every pixel deviates 0.05 from the
        // mean color, which is a + 0.05.
        let a = ramp(10, 4, 0.0);
        let b = ramp(10, 4, 0.1);
        let reg = Registration::from_homographies(vec![Homography::identity(); 2]).unwrap();
        let r = consistency_error(&[a.clone(), b], &reg, &Default::default()).unwrap();
        let vals: Vec<f64> = a.plane(0).data().to_vec();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        assert!((r.error[0] - 0.05 / std).abs() < 1e-12);
    }
}
