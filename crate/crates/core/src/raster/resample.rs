//! Box downsampling and align-centers bilinear upsampling.
//!
//! The pair is consistent: a low-resolution pixel produced by `downsample`
//! represents the center of its source box, and `upsample` samples the
//! low-resolution grid at exactly those centers.

use super::plane::par_build;
use super::{Dims, ImagePlane, Mask};
use crate::error::{ensure, Result};
use crate::scalar::Scalar;

/// Output dims of a `factor` box downsample (partial boxes kept).
pub fn downsampled_dims(dims: Dims, factor: usize) -> Dims {
    Dims::new(dims.width.div_ceil(factor), dims.height.div_ceil(factor))
}

/// Mean over `factor`×`factor` boxes. Boxes cut by the image border average
/// only the pixels they contain.
pub fn downsample<T: Scalar>(plane: &ImagePlane<T>, factor: usize) -> Result<ImagePlane<T>> {
    ensure!(factor >= 1, Argument, "downsample factor must be >= 1");
    if factor == 1 {
        return Ok(plane.clone());
    }
    let src = plane.dims();
    let out = downsampled_dims(src, factor);
    Ok(par_build(out, |oy, row| {
        let y0 = oy * factor;
        let y1 = (y0 + factor).min(src.height);
        for (ox, dst) in row.iter_mut().enumerate() {
            let x0 = ox * factor;
            let x1 = (x0 + factor).min(src.width);
            // Offsets from the first sample keep constant boxes exact.
            let pivot = plane.row(y0)[x0];
            let mut sum = T::zero();
            for y in y0..y1 {
                sum = plane.row(y)[x0..x1]
                    .iter()
                    .fold(sum, |acc, &v| acc + (v - pivot));
            }
            let mean = pivot + sum / T::of(((y1 - y0) * (x1 - x0)) as f64);
            *dst = mean.max(T::zero());
        }
    }))
}

/// Source sample position for target index `i` under align-centers:
/// pixel centers sit at `(i + 0.5) / n` in normalized coordinates.
/// Returns the lower neighbor and interpolation weight, edge-clamped.
#[inline]
fn source_coord(i: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let s = (i as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5;
    let s = s.clamp(0.0, (src_len - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(src_len - 1);
    (i0, i1, s - i0 as f64)
}

/// Bilinear resampling to `target_w`×`target_h` with edge clamping.
pub fn upsample<T: Scalar>(
    plane: &ImagePlane<T>,
    target_w: usize,
    target_h: usize,
) -> Result<ImagePlane<T>> {
    ensure!(
        target_w > 0 && target_h > 0,
        Argument,
        "upsample target must be non-empty, got {target_w}x{target_h}"
    );
    let src = plane.dims();
    ensure!(
        target_w >= src.width && target_h >= src.height,
        Argument,
        "upsample target {target_w}x{target_h} is smaller than source {src}"
    );
    let cols: Vec<(usize, usize, T)> = (0..target_w)
        .map(|x| {
            let (a, b, t) = source_coord(x, src.width, target_w);
            (a, b, T::of(t))
        })
        .collect();
    Ok(par_build(Dims::new(target_w, target_h), |y, row| {
        let (y0, y1, ty) = source_coord(y, src.height, target_h);
        let ty = T::of(ty);
        let r0 = plane.row(y0);
        let r1 = plane.row(y1);
        for (dst, &(x0, x1, tx)) in row.iter_mut().zip(&cols) {
            let top = lerp(r0[x0], r0[x1], tx);
            let bottom = lerp(r1[x0], r1[x1], tx);
            *dst = lerp(top, bottom, ty);
        }
    }))
}

/// Upsamples a validity mask with the same sampling as [`upsample`]: a
/// target pixel is valid only if every source pixel contributing to its
/// interpolation with non-zero weight is valid.
pub fn upsample_mask(mask: &Mask, target_w: usize, target_h: usize) -> Result<Mask> {
    ensure!(
        target_w > 0 && target_h > 0,
        Argument,
        "upsample target must be non-empty, got {target_w}x{target_h}"
    );
    let src = mask.dims();
    let cols: Vec<_> = (0..target_w)
        .map(|x| source_coord(x, src.width, target_w))
        .collect();
    let mut data = Vec::with_capacity(target_w * target_h);
    for y in 0..target_h {
        let (y0, y1, ty) = source_coord(y, src.height, target_h);
        for &(x0, x1, tx) in &cols {
            let mut ok = mask.get(x0, y0);
            if tx > 0.0 {
                ok &= mask.get(x1, y0);
            }
            if ty > 0.0 {
                ok &= mask.get(x0, y1);
                if tx > 0.0 {
                    ok &= mask.get(x1, y1);
                }
            }
            data.push(ok);
        }
    }
    Mask::new(Dims::new(target_w, target_h), data)
}

/// Exact at both ends and for equal endpoints, so constants survive.
#[inline]
fn lerp<T: Scalar>(a: T, b: T, t: T) -> T {
    if a == b {
        a
    } else {
        a * (T::one() - t) + b * t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(w: usize, h: usize, v: &[f64]) -> ImagePlane<f64> {
        ImagePlane::new(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn downsample_two_by_two_checkerboard() {
        let p = plane(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(downsample(&p, 2).unwrap().data(), &[0.5]);
    }

    #[test]
    fn downsample_averages_partial_edge_boxes() {
        // 0 1 2 / 3 4 5 / 6 7 8: boxes {0,1,3,4} {2,5} {6,7} {8}
        let p = plane(3, 3, &[0., 1., 2., 3., 4., 5., 6., 7., 8.]);
        let d = downsample(&p, 2).unwrap();
        assert_eq!(d.dims(), Dims::new(2, 2));
        assert_eq!(d.data(), &[2.0, 3.5, 6.5, 8.0]);
    }

    #[test]
    fn downsample_rejects_zero_factor() {
        let p = plane(1, 1, &[1.0]);
        assert!(downsample(&p, 0).is_err());
    }

    #[test]
    fn upsample_two_samples_to_four_align_centers() {
        // Centers of the 4 targets map to source coords -0.25, 0.25, 0.75, 1.25.
        let p = plane(2, 1, &[0.0, 1.0]);
        let u = upsample(&p, 4, 1).unwrap();
        assert_eq!(u.data(), &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn upsample_single_sample_and_constants() {
        let one = plane(1, 1, &[0.3]);
        assert!(upsample(&one, 5, 7).unwrap().data().iter().all(|&v| v == 0.3));
        let c = ImagePlane::filled(3, 2, 0.7f32).unwrap();
        assert!(upsample(&c, 17, 9).unwrap().data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn upsample_rejects_zero_or_shrinking_target() {
        let p = plane(2, 2, &[0.0; 4]);
        assert!(upsample(&p, 0, 2).is_err());
        assert!(upsample(&p, 1, 2).is_err());
    }

    #[test]
    fn mask_upsample_poisons_support() {
        let dims = Dims::new(4, 1);
        let m = Mask::new(dims, vec![true, true, false, true]).unwrap();
        let u = upsample_mask(&m, 8, 1).unwrap();
        // targets 3..=6 interpolate with source pixel 2
        assert_eq!(u.data(), &[true, true, true, false, false, false, false, true]);
    }

    #[test]
    fn down_then_up_of_constant_is_identity() {
        let c = ImagePlane::filled(37, 21, 0.42f32).unwrap();
        let d = downsample(&c, 8).unwrap();
        let u = upsample(&d, 37, 21).unwrap();
        assert_eq!(u, c);
    }
}
