//! Backward sampling of registered frames.

use super::registration::Homography;
use crate::error::Result;
use crate::raster::{downsample, Frame, ImagePlane, Mask};
use crate::scalar::Scalar;

/// Bilinear lookup at continuous pixel-center coordinates. `None` outside
/// the sample grid or when a neighbor with non-zero weight is masked out.
fn bilinear<T: Scalar>(plane: &ImagePlane<T>, mask: Option<&[bool]>, x: f64, y: f64) -> Option<f64> {
    let (w, h) = (plane.width(), plane.height());
    if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
        return None;
    }
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (tx, ty) = (x - x0 as f64, y - y0 as f64);
    let x1 = if tx > 0.0 { x0 + 1 } else { x0 };
    let y1 = if ty > 0.0 { y0 + 1 } else { y0 };
    if let Some(m) = mask {
        if !(m[y0 * w + x0] && m[y0 * w + x1] && m[y1 * w + x0] && m[y1 * w + x1]) {
            return None;
        }
    }
    let at = |x: usize, y: usize| plane.get(x, y).as_f64();
    let top = at(x0, y0) + (at(x1, y0) - at(x0, y0)) * tx;
    let bottom = at(x0, y1) + (at(x1, y1) - at(x0, y1)) * tx;
    Some(top + (bottom - top) * ty)
}

struct Level<T> {
    planes: Vec<ImagePlane<T>>,
    mask: Option<Vec<bool>>,
}

/// A frame with a half-resolution copy for minified lookups, mapped from
/// mosaic coordinates.
pub(crate) struct PyramidSampler<T> {
    levels: [Level<T>; 2],
    from_mosaic: Homography,
}

impl<T: Scalar> PyramidSampler<T> {
    pub fn new(frame: &Frame<T>, mask: Option<&Mask>, from_mosaic: Homography) -> Result<Self> {
        let half: Vec<ImagePlane<T>> = frame.planes().iter().map(|p| downsample(p, 2)).collect::<Result<_>>()?;
        let half_mask = mask.map(|m| {
            let d = m.dims();
            let hd = half[0].dims();
            let mut out = vec![true; hd.len()];
            for y in 0..d.height {
                for x in 0..d.width {
                    if !m.get(x, y) {
                        out[(y / 2) * hd.width + x / 2] = false;
                    }
                }
            }
            out
        });
        Ok(Self {
            levels: [
                Level {
                    planes: frame.planes().to_vec(),
                    mask: mask.map(|m| m.data().to_vec()),
                },
                Level {
                    planes: half,
                    mask: half_mask,
                },
            ],
            from_mosaic,
        })
    }

    /// Samples every channel at mosaic point `(mx, my)` into `out`, blending
    /// the two levels by the local minification. Returns false if the point
    /// is not covered.
    pub fn sample(&self, mx: f64, my: f64, out: &mut [f64]) -> bool {
        let h = &self.from_mosaic;
        let (Some(p), Some(px), Some(py)) = (h.apply(mx, my), h.apply(mx + 1.0, my), h.apply(mx, my + 1.0)) else {
            return false;
        };
        let det = ((px[0] - p[0]) * (py[1] - p[1]) - (px[1] - p[1]) * (py[0] - p[0])).abs();
        // Frame pixels per mosaic pixel, as a level of detail in [0, 1].
        let lod = (0.5 * det.log2()).clamp(0.0, 1.0);
        let fine = &self.levels[0];
        let (hx, hy) = ((p[0] + 0.5) / 2.0 - 0.5, (p[1] + 0.5) / 2.0 - 0.5);
        for (c, o) in out.iter_mut().enumerate() {
            let Some(a) = bilinear(&fine.planes[c], fine.mask.as_deref(), p[0], p[1]) else {
                return false;
            };
            *o = if lod > 0.0 {
                let coarse = &self.levels[1];
                match bilinear(&coarse.planes[c], coarse.mask.as_deref(), hx, hy) {
                    Some(b) => a + (b - a) * lod,
                    None => a,
                }
            } else {
                a
            };
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_hits_samples_and_midpoints() {
        let p = ImagePlane::new(2, 2, vec![0.0f64, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(bilinear(&p, None, 0.0, 0.0), Some(0.0));
        assert_eq!(bilinear(&p, None, 1.0, 1.0), Some(3.0));
        assert_eq!(bilinear(&p, None, 0.5, 0.5), Some(1.5));
        assert_eq!(bilinear(&p, None, 1.01, 0.0), None);
        let m = [true, false, true, true];
        assert_eq!(bilinear(&p, Some(&m), 0.0, 0.5), Some(1.0));
        assert_eq!(bilinear(&p, Some(&m), 0.5, 0.0), None);
    }
}
