use std::fs;
use std::path::PathBuf;

use abyssal::estimation::{compute_factor, enhance, estimate_allseafloor, preprocess_scatter};
use abyssal::pipeline::{read_manifest, run_batch, window_bounds, BatchOptions, FactorMode, StreamState};
use abyssal::raster::{save_frame, BitDepth, EncodeMode, Frame, ImagePlane, ScatterField};
use abyssal::{EnhancementConfig, Error, WindowSpec};
use proptest::prelude::*;

fn frame(t: usize, w: usize, h: usize) -> Frame<f64> {
    let planes = (0..3)
        .map(|c| {
            ImagePlane::from_fn(w, h, |x, y| {
                let k = ((x + 3 * t) as u64 * 2_654_435_761 + y as u64 * 40_503 + c as u64) % 1000;
                0.05 + 0.5 * k as f64 / 1000.0 * (1.0 - x as f64 / (2 * w) as f64)
            })
            .unwrap()
        })
        .collect();
    Frame::new(planes, t as u64).unwrap()
}

fn scatter(w: usize, h: usize) -> ScatterField<f64> {
    ScatterField::new(vec![ImagePlane::filled(w, h, 0.01).unwrap(); 3]).unwrap()
}

fn config(n: usize) -> EnhancementConfig {
    let mut c = EnhancementConfig::default();
    c.window = WindowSpec::new(n, 1, 4).unwrap();
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Streaming output equals enhancing each frame with the factor of its
    /// materialized window, one output per input, in order.
    #[test]
    fn stream_matches_materialized_windows(half in 1usize..5, total in 3usize..16) {
        let n = 2 * half + 1;
        let (w, h) = (20, 12);
        let frames: Vec<Frame<f64>> = (0..total).map(|t| frame(t, w, h)).collect();
        let cfg = config(n);
        let mut stream = StreamState::new(scatter(w, h), cfg.clone(), FactorMode::PerFrame).unwrap();
        let mut out = Vec::new();
        for f in &frames {
            out.extend(stream.push(f.clone()).unwrap());
            prop_assert!(stream.buffered() <= n);
        }
        out.extend(stream.flush().unwrap());
        prop_assert_eq!(out.len(), total);
        let low = preprocess_scatter(&scatter(w, h), &cfg.window).unwrap();
        for (t, e) in out.iter().enumerate() {
            prop_assert_eq!(e.position, t);
            let range = window_bounds(t, total, n);
            prop_assert_eq!(&e.window, &range);
            let all = estimate_allseafloor(&frames[range], &cfg.window).unwrap();
            let f = compute_factor(&all, &low, &cfg.reference, cfg.epsilon).unwrap();
            let reference = enhance(&frames[t], &scatter(w, h), &f, &cfg).unwrap();
            prop_assert_eq!(&e.enhanced, &reference);
        }
    }
}

/// Interior outputs do not depend on how long the stream eventually is.
#[test]
fn interior_outputs_independent_of_stream_length() {
    let (w, h) = (20, 12);
    let run = |total: usize| {
        let mut s = StreamState::new(scatter(w, h), config(5), FactorMode::PerFrame).unwrap();
        let mut out = Vec::new();
        for t in 0..total {
            out.extend(s.push(frame(t, w, h)).unwrap());
        }
        out.extend(s.flush().unwrap());
        out
    };
    let (short, long) = (run(10), run(16));
    for t in 2..8 {
        assert_eq!(short[t].enhanced, long[t].enhanced, "frame {t}");
    }
}

fn write_sequence(dir: &std::path::Path, total: usize) -> Vec<PathBuf> {
    (0..total)
        .map(|t| {
            let p = dir.join(format!("f{t:02}.png"));
            save_frame(&frame(t, 24, 16), &p, BitDepth::Sixteen, EncodeMode::Linear, false).unwrap();
            p
        })
        .collect()
}

#[test]
fn batch_writes_one_output_per_frame_and_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_sequence(dir.path(), 9);
    let manifest = dir.path().join("frames.txt");
    let names: Vec<String> = paths.iter().map(|p| p.file_name().unwrap().to_string_lossy().into()).collect();
    fs::write(&manifest, names.join("\n")).unwrap();
    let listed = read_manifest(&manifest).unwrap();
    assert_eq!(listed, paths);
    let out = dir.path().join("out");
    let report = run_batch::<f32>(
        &listed,
        ScatterField::new(vec![ImagePlane::filled(24, 16, 0.01f32).unwrap(); 3]).unwrap(),
        &config(7),
        &out,
        &BatchOptions::default(),
    )
    .unwrap();
    assert_eq!(report.frames, 9);
    assert_eq!(report.window_sizes, vec![4, 5, 6, 7, 7, 7, 6, 5, 4]);
    for name in &report.outputs {
        assert!(out.join(name).exists(), "{name}");
    }
    assert!(out.join("run_report.json").exists());
    assert!(report.frames_per_second > 0.0);
}

#[test]
fn corrupt_frame_aborts_without_committing_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_sequence(dir.path(), 9);
    let bytes = fs::read(&paths[5]).unwrap();
    fs::write(&paths[5], &bytes[..bytes.len() / 2]).unwrap();
    let out = dir.path().join("out");
    let err = run_batch::<f32>(
        &paths,
        ScatterField::new(vec![ImagePlane::filled(24, 16, 0.01f32).unwrap(); 3]).unwrap(),
        &config(3),
        &out,
        &BatchOptions::default(),
    )
    .unwrap_err();
    assert!(err.is_input_output(), "{err}");
    assert!(err.to_string().contains("f05.png"), "{err}");
    let left: Vec<_> = fs::read_dir(&out).unwrap().collect();
    assert!(left.is_empty(), "{left:?}");
}

#[test]
fn mismatched_frame_size_is_a_stream_error() {
    let mut s = StreamState::new(scatter(20, 12), config(3), FactorMode::PerFrame).unwrap();
    s.push(frame(0, 20, 12)).unwrap();
    assert!(matches!(s.push(frame(1, 20, 10)), Err(Error::Stream(_))));
}
