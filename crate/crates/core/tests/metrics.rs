use abyssal::metrics::{
    composite, consistency_error, scale_invariant_rmse, ConsistencyOptions, Homography, Registration,
};
use abyssal::raster::{Frame, ImagePlane};
use abyssal::{Error, Mask};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Texture sampled from one underlying image, so frames cut at different
/// offsets agree where they overlap.
fn scene_value(u: f64, v: f64, c: usize) -> f64 {
    0.3 + 0.1 * (0.37 * u + 0.11 * c as f64).sin() * (0.23 * v).cos() + 0.05 * (0.9 * u + 0.4 * v).sin()
}

fn cut(x0: usize, y0: usize, w: usize, h: usize, channels: usize) -> Frame<f64> {
    let planes = (0..channels)
        .map(|c| ImagePlane::from_fn(w, h, |x, y| scene_value((x + x0) as f64, (y + y0) as f64, c)).unwrap())
        .collect();
    Frame::new(planes, 0).unwrap()
}

fn map(frame: &Frame<f64>, mut f: impl FnMut(usize, f64) -> f64) -> Frame<f64> {
    let planes = frame
        .planes()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d = p.dims();
            ImagePlane::new(d.width, d.height, p.data().iter().map(|&v| f(i, v)).collect()).unwrap()
        })
        .collect();
    Frame::new(planes, 0).unwrap()
}

fn mosaic_of(offsets: &[(usize, usize)]) -> Registration {
    Registration::from_homographies(
        offsets
            .iter()
            .map(|&(x, y)| Homography::translation(x as f64, y as f64))
            .collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn consistency_ignores_global_offset_and_scale(a in 0.1f64..10.0, b in 0.0f64..2.0, dx in 5usize..20, dy in 0usize..10) {
        let offsets = [(0, 0), (dx, dy), (2 * dx, 0)];
        // frames disagree slightly, as restored frames do
        let frames: Vec<Frame<f64>> = offsets
            .iter()
            .enumerate()
            .map(|(k, &(x, y))| map(&cut(x, y, 40, 30, 3), |_, v| v * (1.0 + 0.03 * k as f64)))
            .collect();
        let reg = mosaic_of(&offsets);
        let base = consistency_error(&frames, &reg, &ConsistencyOptions::default()).unwrap();
        let moved: Vec<Frame<f64>> = frames.iter().map(|f| map(f, |_, v| a * v + b)).collect();
        let other = consistency_error(&moved, &reg, &ConsistencyOptions::default()).unwrap();
        prop_assert_eq!(base.sample_count, other.sample_count);
        for (x, y) in base.error.iter().zip(&other.error) {
            prop_assert!(*x > 0.0);
            prop_assert!((x - y).abs() <= 1e-9 * x, "{} vs {}", x, y);
        }
    }

    #[test]
    fn scale_invariant_rmse_vanishes_under_scaling(s in 0.01f64..100.0, seed in 0usize..50) {
        let truth = cut(seed, 2 * seed, 20, 10, 3);
        let mask = Mask::all_valid(truth.dims());
        for e in scale_invariant_rmse(&map(&truth, |_, v| s * v), &truth, &mask).unwrap() {
            prop_assert!(e < 1e-12);
        }
        for e in scale_invariant_rmse(&truth, &truth, &mask).unwrap() {
            prop_assert!(e < 1e-15);
        }
    }
}

#[test]
fn consistent_frames_score_zero() {
    let offsets = [(0, 0), (12, 3), (25, 1)];
    let frames: Vec<Frame<f64>> = offsets.iter().map(|&(x, y)| cut(x, y, 40, 30, 3)).collect();
    let report = consistency_error(&frames, &mosaic_of(&offsets), &ConsistencyOptions::default()).unwrap();
    assert!(report.error.iter().all(|&e| e < 1e-12), "{:?}", report.error);

    let dup = vec![frames[0].clone(), frames[0].clone()];
    let report = consistency_error(&dup, &mosaic_of(&[(0, 0), (0, 0)]), &ConsistencyOptions::default()).unwrap();
    assert!(report.error.iter().all(|&e| e == 0.0));
    assert_eq!(report.overlap_pixel_count, 40 * 30);
}

#[test]
fn disjoint_frames_are_a_metric_error() {
    let offsets = [(0, 0), (100, 0)];
    let frames: Vec<Frame<f64>> = offsets.iter().map(|&(x, y)| cut(x, y, 40, 30, 1)).collect();
    let err = consistency_error(&frames, &mosaic_of(&offsets), &ConsistencyOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Metric(_)), "{err}");
}

#[test]
fn rmse_of_noise_matches_relative_sigma() {
    let truth = Frame::new(vec![ImagePlane::from_fn(200, 200, |x, _| 0.4 + 0.2 * (x % 2) as f64).unwrap()], 0).unwrap();
    let sigma = 0.01;
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noisy = map(&truth, |_, v| v + noise.sample(&mut rng));
    let e = scale_invariant_rmse(&noisy, &truth, &Mask::all_valid(truth.dims())).unwrap()[0];
    let expected = sigma / 0.5;
    assert!((e - expected).abs() < 0.05 * expected, "{e} vs {expected}");
}

#[test]
fn composite_keeps_constant_frames_constant() {
    let offsets = [(0, 0), (30, 5), (55, 12)];
    let frames: Vec<Frame<f64>> = offsets
        .iter()
        .map(|_| Frame::new(vec![ImagePlane::filled(64, 48, 0.37).unwrap(); 3], 0).unwrap())
        .collect();
    let c = composite(&frames, &mosaic_of(&offsets)).unwrap();
    for p in c.mosaic.planes() {
        for (v, covered) in p.data().iter().zip(c.coverage.data()) {
            if *covered {
                assert!((v - 0.37).abs() < 1e-12, "{v}");
            }
        }
    }
}

#[test]
fn composite_equals_identical_frames_over_their_overlap() {
    let frame = cut(0, 0, 64, 48, 1);
    let c = composite(&[frame.clone(), frame.clone()], &mosaic_of(&[(0, 0), (0, 0)])).unwrap();
    for (a, b) in c.mosaic.plane(0).data().iter().zip(frame.plane(0).data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

/// Two flat frames that differ by `d` blend across the overlap instead of
/// jumping at a seam.
#[test]
fn offset_frames_blend_without_a_seam() {
    let (w, h, shift) = (64, 48, 32);
    let d: f64 = 0.2;
    let frames = vec![
        Frame::new(vec![ImagePlane::filled(w, h, 0.3f64).unwrap()], 0).unwrap(),
        Frame::new(vec![ImagePlane::filled(w, h, 0.3 + d).unwrap()], 0).unwrap(),
    ];
    let c = composite(&frames, &mosaic_of(&[(0, 0), (shift, 0)])).unwrap();
    let mosaic = c.mosaic.plane(0);
    let overlap = (w - shift) as f64;
    let mut steepest: f64 = 0.0;
    for y in h / 3..2 * h / 3 {
        let row = mosaic.row(y);
        for x in 1..row.len() {
            steepest = steepest.max((row[x] - row[x - 1]).abs());
        }
        assert!((row[0] - 0.3).abs() < 1e-12 && (row[row.len() - 1] - 0.3 - d).abs() < 1e-12);
    }
    assert!(steepest <= 4.0 * d / overlap, "steepest step {steepest}, bound {}", 4.0 * d / overlap);
}
