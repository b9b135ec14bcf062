//! Exact temporal and spatial medians.

use std::cmp::Ordering;

use crate::error::{ensure, Result};
use crate::raster::{par_build, ImagePlane};
use crate::scalar::{midpoint, Scalar};

#[inline]
fn cmp<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// Exact median of `values`, reordering them. Even lengths return the
/// midpoint of the two central order statistics.
///
/// # Panics
/// On an empty slice.
pub fn median_in_place<T: Scalar>(values: &mut [T]) -> T {
    let n = values.len();
    assert!(n > 0, "median of an empty sample");
    let mid = n / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().fold(T::neg_infinity(), T::max);
        midpoint(below, upper)
    }
}

/// Per-pixel median across a stack of equally sized planes.
pub fn temporal_median<T: Scalar, P: AsRef<ImagePlane<T>> + Sync>(stack: &[P]) -> Result<ImagePlane<T>> {
    ensure!(!stack.is_empty(), Argument, "temporal median of an empty stack");
    let dims = stack[0].as_ref().dims();
    ensure!(
        stack.iter().all(|p| p.as_ref().dims() == dims),
        Argument,
        "temporal median needs equally sized planes"
    );
    if stack.len() == 1 {
        return Ok(stack[0].as_ref().clone());
    }
    let k = stack.len();
    Ok(par_build(dims, |y, row| {
        let rows: Vec<&[T]> = stack.iter().map(|p| p.as_ref().row(y)).collect();
        let mut buf = vec![T::zero(); k];
        for (x, dst) in row.iter_mut().enumerate() {
            for (b, r) in buf.iter_mut().zip(&rows) {
                *b = r[x];
            }
            *dst = median_in_place(&mut buf);
        }
    }))
}

#[inline(always)]
fn sort2<T: Scalar>(v: &mut [T; 9], a: usize, b: usize) {
    let (lo, hi) = (v[a].min(v[b]), v[a].max(v[b]));
    v[a] = lo;
    v[b] = hi;
}

/// Median of nine via a fixed exchange network (19 compare-exchanges).
#[inline]
fn median9<T: Scalar>(v: &mut [T; 9]) -> T {
    const NET: [(usize, usize); 19] = [
        (1, 2), (4, 5), (7, 8), (0, 1), (3, 4), (6, 7), (1, 2), (4, 5), (7, 8), (0, 3),
        (5, 8), (4, 7), (3, 6), (1, 4), (2, 5), (4, 7), (4, 2), (6, 4), (4, 2),
    ];
    for (a, b) in NET {
        sort2(v, a, b);
    }
    v[4]
}

/// Median over the `(2r+1)²` neighborhood of every pixel, clipped to the
/// image bounds. Radius 0 is the identity.
pub fn spatial_median<T: Scalar>(plane: &ImagePlane<T>, radius: usize) -> ImagePlane<T> {
    if radius == 0 {
        return plane.clone();
    }
    let dims = plane.dims();
    let (w, h) = (dims.width, dims.height);
    par_build(dims, |y, row| {
        let y0 = y.saturating_sub(radius);
        let y1 = (y + radius).min(h - 1);
        let full_rows = y1 - y0 == 2 * radius;
        let mut buf = Vec::with_capacity((2 * radius + 1).pow(2));
        for (x, dst) in row.iter_mut().enumerate() {
            let x0 = x.saturating_sub(radius);
            let x1 = (x + radius).min(w - 1);
            if radius == 1 && full_rows && x1 - x0 == 2 {
                let (a, b, c) = (plane.row(y0), plane.row(y0 + 1), plane.row(y0 + 2));
                let mut v = [
                    a[x0], a[x0 + 1], a[x0 + 2],
                    b[x0], b[x0 + 1], b[x0 + 2],
                    c[x0], c[x0 + 1], c[x0 + 2],
                ];
                *dst = median9(&mut v);
                continue;
            }
            buf.clear();
            for yy in y0..=y1 {
                buf.extend_from_slice(&plane.row(yy)[x0..=x1]);
            }
            *dst = median_in_place(&mut buf);
        }
    })
}
