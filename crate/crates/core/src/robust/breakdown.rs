//! Sizing the temporal window from the contamination rate.
//!
//! With `n` samples per pixel, each independently contaminated with
//! probability `c`, the median breaks as soon as at least `ceil(n/2)`
//! samples are contaminated. [`p_half`] is the probability of that event.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::scalar::Scalar;

/// Upper bound on windows searched by [`required_window`].
pub const MAX_WINDOW: usize = 1 << 22;

/// Fraction of samples showing something other than the dominant
/// seafloor, strictly inside (0, 0.5).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContaminationModel<T = f64> {
    c: T,
}

impl<T: Scalar> ContaminationModel<T> {
    pub fn new(c: T) -> Result<Self> {
        ensure!(
            c > T::zero() && c < T::half(),
            Argument,
            "contamination rate must lie in (0, 0.5), got {c}; breakdown point exceeded"
        );
        Ok(Self { c })
    }

    pub fn rate(&self) -> T {
        self.c
    }
}

/// Probability that a median over `n` samples breaks down:
/// `P[X >= ceil(n/2)]` for `X ~ Binomial(n, c)`.
///
/// Terms are accumulated in log space (log-sum-exp), so large `n` neither
/// overflows the binomial coefficients nor underflows the powers.
pub fn p_half<T: Scalar>(model: ContaminationModel<T>, n: usize) -> Result<T> {
    ensure!(n >= 1, Argument, "window length must be >= 1");
    let c = model.rate();
    let ln_c = c.ln();
    let ln_q = (T::one() - c).ln();
    let first = n.div_ceil(2);

    // ln C(n, first) built incrementally from ln C(n, 0) = 0.
    let mut ln_binom = T::zero();
    for k in 0..first {
        ln_binom = ln_binom + T::of((n - k) as f64).ln() - T::of((k + 1) as f64).ln();
    }
    let mut logs = Vec::with_capacity(n - first + 1);
    for k in first..=n {
        logs.push(ln_binom + T::of(k as f64) * ln_c + T::of((n - k) as f64) * ln_q);
        if k < n {
            ln_binom = ln_binom + T::of((n - k) as f64).ln() - T::of((k + 1) as f64).ln();
        }
    }
    let peak = logs.iter().copied().fold(T::neg_infinity(), T::max);
    let sum: T = logs.iter().map(|&l| (l - peak).exp()).sum();
    Ok((peak + sum.ln()).exp().min(T::one()))
}

/// Smallest odd window `n` with `p_half(c, n) <= target`.
///
/// For odd `n` the breakdown probability decreases monotonically when
/// `c < 0.5`, so the search doubles until the target is met and then
/// bisects.
pub fn required_window<T: Scalar>(model: ContaminationModel<T>, target: T) -> Result<usize> {
    ensure!(
        target > T::zero() && target < T::one(),
        Argument,
        "target probability must lie in (0, 1), got {target}"
    );
    let ok = |n: usize| p_half(model, n).map(|p| p <= target);
    // Odd windows are indexed as n = 2m + 1.
    if ok(1)? {
        return Ok(1);
    }
    let mut lo = 0usize; // known failing m
    let mut hi = 1usize;
    while !ok(2 * hi + 1)? {
        lo = hi;
        hi *= 2;
        ensure!(
            2 * hi < MAX_WINDOW,
            Argument,
            "required window exceeds {MAX_WINDOW} samples"
        );
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(2 * mid + 1)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(2 * hi + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain binomial sum with exact integer coefficients.
    fn brute(c: f64, n: u32) -> f64 {
        let choose = |n: u32, k: u32| -> f64 {
            (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
        };
        (n.div_ceil(2)..=n)
            .map(|k| choose(n, k) * c.powi(k as i32) * (1.0 - c).powi((n - k) as i32))
            .sum()
    }

    fn model(c: f64) -> ContaminationModel {
        ContaminationModel::new(c).unwrap()
    }

    #[test]
    fn matches_brute_force_sum() {
        for &c in &[0.01, 0.1, 0.2, 0.33, 0.49] {
            for n in 1..40 {
                let a = p_half(model(c), n as usize).unwrap();
                let b = brute(c, n);
                assert!((a - b).abs() <= 1e-12 * b.max(1e-300), "c={c} n={n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn worked_example_seven_frames() {
        let p = p_half(model(0.2), 7).unwrap();
        // 35*.2^4*.8^3 + 21*.2^5*.8^2 + 7*.2^6*.8 + .2^7
        assert!((p - 0.033_344).abs() < 1e-9);
    }

    #[test]
    fn single_draw_and_vanishing_contamination() {
        assert!((p_half(model(0.2), 1).unwrap() - 0.2).abs() < 1e-15);
        assert!(p_half(model(1e-9), 7).unwrap() < 1e-30);
    }

    #[test]
    fn rate_bounds() {
        assert!(ContaminationModel::new(0.0).is_err());
        assert!(ContaminationModel::new(0.5).is_err());
        assert!(ContaminationModel::new(0.6).is_err());
        assert!(p_half(model(0.2), 0).is_err());
    }

    #[test]
    fn required_window_examples() {
        assert_eq!(required_window(model(0.2), 0.035).unwrap(), 7);
        assert_eq!(required_window(model(0.2), 0.5).unwrap(), 1);
        assert!(required_window(model(0.2), 0.0).is_err());
    }

    #[test]
    fn required_window_is_minimal() {
        for &(c, t) in &[(0.1, 1e-3), (0.3, 0.01), (0.45, 0.05)] {
            let n = required_window(model(c), t).unwrap();
            assert!(brute(c, n as u32) <= t);
            if n > 1 {
                assert!(brute(c, n as u32 - 2) > t);
            }
        }
    }

    #[test]
    fn near_half_contamination_terminates() {
        let n = required_window(model(0.49), 1e-3).unwrap();
        assert!(n > 10_000 && n % 2 == 1);
        assert!(p_half(model(0.49), n).unwrap() <= 1e-3);
    }

    #[test]
    fn large_windows_stay_finite_in_f32() {
        let m = ContaminationModel::new(0.2f32).unwrap();
        let p = p_half(m, 2001).unwrap();
        assert!(p.is_finite() && (0.0..1e-30).contains(&p));
    }
}
