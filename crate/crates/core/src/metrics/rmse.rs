//! Ground-truth error up to the unrecoverable per-channel scale.

use crate::error::{ensure, Result};
use crate::raster::{Frame, Mask};
use crate::scalar::Scalar;

fn check<T: Scalar>(restored: &Frame<T>, truth: &Frame<T>, mask: &Mask) -> Result<()> {
    ensure!(
        restored.dims() == truth.dims() && restored.channels() == truth.channels(),
        Argument,
        "restored {}x{} does not match truth {}x{}",
        restored.dims(),
        restored.channels(),
        truth.dims(),
        truth.channels()
    );
    ensure!(mask.dims() == truth.dims(), Argument, "mask is {} but frames are {}", mask.dims(), truth.dims());
    ensure!(mask.valid_count() > 0, Metric, "mask selects no pixels");
    Ok(())
}

/// Per-channel scale `s` minimizing `|s * restored - truth|` over the mask.
pub fn fit_scale<T: Scalar>(restored: &Frame<T>, truth: &Frame<T>, mask: &Mask) -> Result<Vec<f64>> {
    check(restored, truth, mask)?;
    restored
        .planes()
        .iter()
        .zip(truth.planes())
        .enumerate()
        .map(|(c, (r, t))| {
            let (mut rt, mut rr) = (0.0, 0.0);
            for ((r, t), m) in r.data().iter().zip(t.data()).zip(mask.data()) {
                if *m {
                    let (r, t) = (r.as_f64(), t.as_f64());
                    rt += r * t;
                    rr += r * r;
                }
            }
            ensure!(rr > 0.0, Metric, "restored channel {c} is zero over the mask");
            Ok(rt / rr)
        })
        .collect()
}

/// Per-channel RMSE of the best-scaled restoration, relative to the mean of
/// the truth over the mask.
pub fn scale_invariant_rmse<T: Scalar>(restored: &Frame<T>, truth: &Frame<T>, mask: &Mask) -> Result<Vec<f64>> {
    let scales = fit_scale(restored, truth, mask)?;
    let n = mask.valid_count() as f64;
    restored
        .planes()
        .iter()
        .zip(truth.planes())
        .zip(&scales)
        .enumerate()
        .map(|(c, ((r, t), s))| {
            let (mut sq, mut sum) = (0.0, 0.0);
            for ((r, t), m) in r.data().iter().zip(t.data()).zip(mask.data()) {
                if *m {
                    let t = t.as_f64();
                    sq += (s * r.as_f64() - t).powi(2);
                    sum += t;
                }
            }
            ensure!(sum > 0.0, Metric, "truth channel {c} is zero over the mask");
            Ok((sq / n).sqrt() / (sum / n))
        })
        .collect()
}
