//! Two-band blending of registered frames into a mosaic.

use rayon::prelude::*;

use super::registration::Registration;
use crate::error::{ensure, Result};
use crate::raster::{par_build, Frame, ImagePlane, Mask};
use crate::scalar::Scalar;

/// Normalized separable Gaussian blur: near the border the kernel is
/// renormalized over the samples that exist, so constants stay constant.
pub fn gaussian_blur<T: Scalar>(plane: &ImagePlane<T>, sigma: f64) -> ImagePlane<T> {
    if !(sigma > 0.0) {
        return plane.clone();
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let kernel: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let (w, h) = (plane.width(), plane.height());
    let tap = |get: &dyn Fn(usize) -> f64, i: usize, n: usize| {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius).min(n - 1);
        let (mut acc, mut norm) = (0.0, 0.0);
        for j in lo..=hi {
            let k = kernel[j + radius - i];
            acc += k * get(j);
            norm += k;
        }
        acc / norm
    };
    let horizontal: ImagePlane<f64> = par_build(plane.dims(), |y, row| {
        let src = plane.row(y);
        for (x, o) in row.iter_mut().enumerate() {
            *o = tap(&|j| src[j].as_f64(), x, w);
        }
    });
    par_build(plane.dims(), |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            *o = T::of(tap(&|j| horizontal.get(x, j), y, h));
        }
    })
}

/// Blend weight falling linearly from 1 at the image center to 0 at the
/// image border, the smaller of the two axis tents.
fn tent(x: f64, y: f64, w: usize, h: usize) -> f64 {
    let wx = 1.0 - ((2.0 * (x + 0.5) / w as f64) - 1.0).abs();
    let wy = 1.0 - ((2.0 * (y + 0.5) / h as f64) - 1.0).abs();
    wx.min(wy).max(0.0)
}

fn bilinear(data: &[f64], w: usize, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (tx, ty) = (x - x0 as f64, y - y0 as f64);
    let x1 = if tx > 0.0 { x0 + 1 } else { x0 };
    let y1 = if ty > 0.0 { y0 + 1 } else { y0 };
    let at = |x: usize, y: usize| data[y * w + x];
    let top = at(x0, y0) + (at(x1, y0) - at(x0, y0)) * tx;
    let bottom = at(x0, y1) + (at(x1, y1) - at(x0, y1)) * tx;
    top + (bottom - top) * ty
}

/// Mosaic of registered frames with the frames' coverage.
#[derive(Debug, Clone)]
pub struct Composite<T> {
    pub mosaic: Frame<T>,
    pub coverage: Mask,
    /// Mosaic coordinate of pixel (0, 0).
    pub origin: [f64; 2],
}

/// Two-band blend: the low band (Gaussian blur, sigma = width / 16) is
/// averaged under the tent weights, the high band (frame minus low band) is
/// taken from the frame with the largest weight.
pub fn composite<T: Scalar>(frames: &[Frame<T>], reg: &Registration) -> Result<Composite<T>> {
    ensure!(!frames.is_empty(), Argument, "composite needs at least one frame");
    let channels = frames[0].channels();
    ensure!(
        frames.iter().all(|f| f.channels() == channels),
        Argument,
        "all frames must have the same channel count"
    );
    let dims: Vec<_> = frames.iter().map(Frame::dims).collect();
    let extent = reg.extent(&dims)?;
    let bands: Vec<Vec<(Vec<f64>, Vec<f64>)>> = frames
        .iter()
        .map(|f| {
            let sigma = f.dims().width as f64 / 16.0;
            f.planes()
                .iter()
                .map(|p| {
                    let low = gaussian_blur(&p.cast::<f64>(), sigma).into_data();
                    let high = p.data().iter().zip(&low).map(|(v, l)| v.as_f64() - l).collect();
                    (low, high)
                })
                .collect()
        })
        .collect();
    let bounds = (0..frames.len())
        .map(|k| reg.frame_bounds(k, dims[k]))
        .collect::<Result<Vec<_>>>()?;

    let ed = extent.dims;
    let rows: Vec<(Vec<f64>, Vec<bool>)> = (0..ed.height)
        .into_par_iter()
        .map(|j| {
            let my = extent.origin[1] + j as f64;
            let mut out = vec![0.0; ed.width * channels];
            let mut covered = vec![false; ed.width];
            for i in 0..ed.width {
                let mx = extent.origin[0] + i as f64;
                let mut low = vec![0.0; channels];
                let mut weight_sum = 0.0;
                let mut best: Option<(f64, usize, [f64; 2])> = None;
                for k in 0..frames.len() {
                    let b = bounds[k];
                    if mx < b[0] || mx > b[2] || my < b[1] || my > b[3] {
                        continue;
                    }
                    let Some(p) = reg.from_mosaic(k).apply(mx, my) else { continue };
                    let d = dims[k];
                    if !(p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= (d.width - 1) as f64 && p[1] <= (d.height - 1) as f64) {
                        continue;
                    }
                    let wgt = tent(p[0], p[1], d.width, d.height);
                    if wgt <= 0.0 {
                        continue;
                    }
                    for (c, l) in low.iter_mut().enumerate() {
                        *l += wgt * bilinear(&bands[k][c].0, d.width, p[0], p[1]);
                    }
                    weight_sum += wgt;
                    if best.is_none_or(|(bw, _, _)| wgt > bw) {
                        best = Some((wgt, k, p));
                    }
                }
                if let Some((_, k, p)) = best {
                    covered[i] = true;
                    for c in 0..channels {
                        let high = bilinear(&bands[k][c].1, dims[k].width, p[0], p[1]);
                        out[i * channels + c] = (low[c] / weight_sum + high).max(0.0);
                    }
                }
            }
            (out, covered)
        })
        .collect();
    let mut planes = vec![Vec::with_capacity(ed.len()); channels];
    let mut coverage = Vec::with_capacity(ed.len());
    for (out, covered) in rows {
        for px in out.chunks_exact(channels) {
            for c in 0..channels {
                planes[c].push(T::of(px[c]));
            }
        }
        coverage.extend(covered);
    }
    let planes = planes.into_iter().map(|d| ImagePlane::new(ed.width, ed.height, d)).collect::<Result<Vec<_>>>()?;
    Ok(Composite {
        mosaic: Frame::new(planes, 0)?,
        coverage: Mask::new(ed, coverage)?,
        origin: extent.origin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Homography;

    #[test]
    fn blur_keeps_constants() {
        let p = ImagePlane::filled(23, 9, 0.3f64).unwrap();
        let b = gaussian_blur(&p, 4.0);
        assert!(b.data().iter().all(|v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn blur_matches_direct_convolution() {
        let p = ImagePlane::from_fn(9, 7, |x, y| ((x * 7 + y * 3) % 5) as f64).unwrap();
        let sigma = 1.3;
        let b = gaussian_blur(&p, sigma);
        let r = (3.0 * sigma).ceil() as i64;
        for y in 0..7i64 {
            for x in 0..9i64 {
                let (mut acc, mut norm) = (0.0, 0.0);
                for v in (y - r).max(0)..=(y + r).min(6) {
                    for u in (x - r).max(0)..=(x + r).min(8) {
                        let k = (-(((u - x) * (u - x) + (v - y) * (v - y)) as f64) / (2.0 * sigma * sigma)).exp();
                        acc += k * p.get(u as usize, v as usize);
                        norm += k;
                    }
                }
                assert!((b.get(x as usize, y as usize) - acc / norm).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_frame_reproduced() {
        let p = ImagePlane::from_fn(32, 16, |x, y| 0.1 + 0.01 * ((x * y) % 7) as f64).unwrap();
        let f = Frame::new(vec![p.clone()], 0).unwrap();
        let reg = Registration::from_homographies(vec![Homography::identity()]).unwrap();
        let c = composite(&[f], &reg).unwrap();
        assert_eq!(c.mosaic.dims(), p.dims());
        for y in 1..15 {
            for x in 1..31 {
                assert!((c.mosaic.plane(0).get(x, y) - p.get(x, y)).abs() < 1e-12);
            }
        }
    }
}
