use std::fs;
use std::path::{Path, PathBuf};

use abyssal::estimation::estimate_scatter as estimate;
use abyssal::metrics::{consistency_error, scale_invariant_rmse, ConsistencyOptions, Registration};
use abyssal::pipeline::{read_manifest, run_batch, BatchOptions, FactorMode, OutputFormat};
use abyssal::raster::{
    load_frame, load_mask, load_scatter, save_factor, save_frame, save_mask, save_scatter, BitDepth, DecodeMode,
    EncodeMode,
};
use abyssal::robust::{p_half, required_window};
use abyssal::simulator::{SceneSpec, SequenceRenderer, Trajectory, SCENE_SCHEMA};
use abyssal::{ContaminationModel, EnhancementConfig, Error, Frame, Mask, ReferenceColor, WindowSpec};
use anyhow::Context;
use log::info;

use super::{Bits, Decode, Encode, EnhanceArgs, EstimateScatterArgs, EvaluateArgs, Format, SampleSizeArgs, SimulateArgs};
use abyssal::estimation::MIN_ROBUST_SAMPLES;

fn decode_mode(d: Decode) -> DecodeMode {
    match d {
        Decode::Auto => DecodeMode::Auto,
        Decode::Linear => DecodeMode::Linear,
        Decode::Srgb => DecodeMode::Srgb,
    }
}

fn create_dir(dir: &Path) -> abyssal::Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> abyssal::Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_frames(paths: &[PathBuf], mode: DecodeMode) -> abyssal::Result<Vec<Frame>> {
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut f = load_frame::<f32>(p, mode)?;
            f.index = i as u64;
            Ok(f)
        })
        .collect()
}

pub fn estimate_scatter(args: &EstimateScatterArgs) -> anyhow::Result<()> {
    let paths = read_manifest(&args.water_manifest)?;
    if paths.len() < MIN_ROBUST_SAMPLES {
        return Err(Error::Argument(format!(
            "{} lists {} water-column images; at least {MIN_ROBUST_SAMPLES} are required",
            args.water_manifest.display(),
            paths.len()
        ))
        .into());
    }
    let frames = load_frames(&paths, decode_mode(args.decode))?;
    let scatter = estimate(&frames)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_scatter(&scatter, &args.out)?;
    info!("scatter field from {} frames written to {}", frames.len(), args.out.display());
    Ok(())
}

pub fn enhance(args: &EnhanceArgs) -> anyhow::Result<()> {
    let config = EnhancementConfig {
        window: WindowSpec::new(args.window, args.spatial_radius, args.downsample)?,
        reference: ReferenceColor::new(args.reference.clone())?,
        epsilon: args.epsilon,
        clamp_output: args.clamp,
    };
    config.validate()?;
    let options = BatchOptions {
        decode: decode_mode(args.decode),
        output_depth: match args.output_bits {
            Bits::Eight => BitDepth::Eight,
            Bits::Sixteen => BitDepth::Sixteen,
        },
        output_encode: match args.output_encoding {
            Encode::Linear => EncodeMode::Linear,
            Encode::Srgb => EncodeMode::Srgb,
        },
        output_format: match args.output_format {
            Format::Png => OutputFormat::Png,
            Format::Tiff => OutputFormat::Tiff,
        },
        factor_mode: if args.static_factor {
            FactorMode::Static
        } else {
            FactorMode::PerFrame
        },
        dump_factors: args.dump_factors,
    };
    let manifest = read_manifest(&args.manifest)?;
    let scatter = load_scatter::<f32>(&args.scatter)?;
    let report = run_batch(&manifest, scatter, &config, &args.out_dir, &options)?;
    println!(
        "enhanced {} frames into {} ({:.2} frames/s)",
        report.frames,
        args.out_dir.display(),
        report.frames_per_second
    );
    Ok(())
}

pub fn sample_size(args: &SampleSizeArgs) -> anyhow::Result<()> {
    let model = ContaminationModel::new(args.contamination)?;
    if !(args.target > 0.0 && args.target < 1.0) {
        return Err(Error::Argument(format!("target must lie in (0, 1), got {}", args.target)).into());
    }
    let n = required_window(model, args.target)?;
    println!("contamination {}  target p_half <= {}", args.contamination, args.target);
    println!("{:>9}  {:>12}", "n", "p_half");
    // Long tables only show the tail.
    let first = if n > 41 { n - 40 } else { 1 };
    if first > 1 {
        println!("{:>9}  {:>12}", "...", "");
    }
    for k in (first..=n).step_by(2) {
        println!("{k:>9}  {:>12.6}", p_half(model, k)?);
    }
    println!("required window: n = {n}");
    Ok(())
}

fn manifest_text(names: &[String]) -> String {
    let mut s = String::new();
    for n in names {
        s.push_str(n);
        s.push('\n');
    }
    s
}

pub fn simulate(args: &SimulateArgs, seed: Option<u64>) -> anyhow::Result<()> {
    let scene = SceneSpec::load(&args.scene)?;
    let trajectory = match &args.trajectory {
        Some(p) => Trajectory::load(p)?,
        None => Trajectory {
            schema: SCENE_SCHEMA,
            poses: vec![scene.pose],
            water_column: 0,
        },
    };
    let seed = seed.unwrap_or(scene.seed);
    let out = &args.out_dir;
    for sub in ["frames", "truth", "water"] {
        if sub != "water" || trajectory.water_column > 0 {
            create_dir(&out.join(sub))?;
        }
    }
    let mut renderer = SequenceRenderer::new(&scene, seed);
    let (mut frames, mut truth, mut clean, mut maps) = (vec![], vec![], vec![], vec![]);
    for (k, pose) in trajectory.poses.iter().enumerate() {
        let r = renderer.render::<f32>(pose, k as u64).with_context(|| format!("rendering pose {k}"))?;
        let name = format!("frame_{k:04}");
        let frame_path = format!("frames/{name}.png");
        save_frame(&r.observed, out.join(&frame_path), BitDepth::Sixteen, EncodeMode::Linear, false)?;
        frames.push(frame_path);
        let albedo = format!("truth/{name}_albedo.png");
        save_frame(&r.albedo, out.join(&albedo), BitDepth::Sixteen, EncodeMode::Linear, false)?;
        truth.push(albedo);
        let clean_path = format!("truth/{name}_clean.png");
        save_frame(&r.clean_albedo, out.join(&clean_path), BitDepth::Sixteen, EncodeMode::Linear, false)?;
        clean.push(clean_path);
        save_scatter(&r.scatter_field(), out.join(format!("truth/{name}_scatter.tif")))?;
        save_factor(&r.factor_field(1e-4), out.join(format!("truth/{name}_factor.tif")))?;
        save_mask(&r.seafloor, out.join(format!("truth/{name}_seafloor.png")))?;
        let uv = format!("truth/{name}_uv.tif");
        r.correspondence.save(out.join(&uv))?;
        maps.push(uv);
        info!("rendered {name}");
    }
    write_text(&out.join("manifest.txt"), &manifest_text(&frames))?;
    write_text(&out.join("truth_manifest.txt"), &manifest_text(&truth))?;
    write_text(&out.join("clean_manifest.txt"), &manifest_text(&clean))?;
    let registration = serde_json::json!({ "schema": 1, "correspondence_maps": maps });
    write_text(&out.join("registration.json"), &serde_json::to_string_pretty(&registration)?)?;
    if trajectory.water_column > 0 {
        let mut water = vec![];
        for k in 0..trajectory.water_column {
            let f = renderer.render_water::<f32>(k as u64)?;
            let path = format!("water/water_{k:04}.png");
            save_frame(&f, out.join(&path), BitDepth::Sixteen, EncodeMode::Linear, false)?;
            water.push(path);
        }
        write_text(&out.join("water_manifest.txt"), &manifest_text(&water))?;
    }
    println!(
        "rendered {} frames and {} water-column frames into {}",
        frames.len(),
        trajectory.water_column,
        out.display()
    );
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> anyhow::Result<()> {
    let mode = decode_mode(args.decode);
    let frames = load_frames(&read_manifest(&args.frames)?, mode)?;
    let reg = Registration::load(&args.registration)?;
    if reg.len() != frames.len() {
        return Err(Error::Argument(format!(
            "registration covers {} frames but the manifest lists {}",
            reg.len(),
            frames.len()
        ))
        .into());
    }
    let truth = match &args.truth {
        Some(m) => {
            let t = load_frames(&read_manifest(m)?, mode)?;
            if t.len() != frames.len() {
                return Err(Error::Argument(format!(
                    "truth manifest lists {} frames, expected {}",
                    t.len(),
                    frames.len()
                ))
                .into());
            }
            Some(t)
        }
        None => None,
    };
    let region = args.region.as_ref().map(load_mask).transpose()?;
    let report = consistency_error(
        &frames,
        &reg,
        &ConsistencyOptions {
            frame_masks: None,
            region: region.as_ref(),
        },
    )?;

    println!("{:>8}  {:>10}  {:>10}  {:>10}", "channel", "error", "mean|d|", "std");
    for c in 0..report.error.len() {
        println!(
            "{c:>8}  {:>10.5}  {:>10.5}  {:>10.5}",
            report.error[c], report.mean_abs_deviation[c], report.std_dev[c]
        );
    }
    println!("overlap pixels: {}", report.overlap_pixel_count);

    let mut json = serde_json::to_value(&report)?;
    if let Some(truth) = truth {
        let mut rmse = Vec::with_capacity(frames.len());
        for (k, (f, t)) in frames.iter().zip(&truth).enumerate() {
            // Background pixels carry zero albedo in simulated truth.
            let valid = (0..t.dims().len())
                .map(|i| t.planes().iter().any(|p| p.data()[i] > 0.0))
                .collect();
            let mask = Mask::new(t.dims(), valid)?;
            let e = scale_invariant_rmse(f, t, &mask).with_context(|| format!("frame {k}"))?;
            rmse.push(e);
        }
        let mean: Vec<f64> = (0..rmse[0].len())
            .map(|c| rmse.iter().map(|r| r[c]).sum::<f64>() / rmse.len() as f64)
            .collect();
        println!("scale-invariant rmse (mean over frames): {mean:.5?}");
        json["rmse"] = serde_json::json!({ "per_frame": rmse, "mean": mean });
    }
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_text(&args.out, &serde_json::to_string_pretty(&json)?)?;
    Ok(())
}
