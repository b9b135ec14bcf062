//! File-based batch runs over a manifest of frames.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Emission, FactorMode, StreamState};
use crate::error::{ensure, Error, Result};
use crate::estimation::EnhancementConfig;
use crate::raster::{
    load_frame, save_factor, save_frame, save_mask, BitDepth, DecodeMode, EncodeMode, ScatterField,
};
use crate::scalar::Scalar;

pub const REPORT_SCHEMA: u32 = 1;
pub const REPORT_FILE: &str = "run_report.json";

/// Reads a manifest: one image path per line, `#` starts a comment line,
/// blank lines are skipped. Relative paths resolve against the manifest's
/// directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let p = PathBuf::from(l);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Png,
    Tiff,
}

impl OutputFormat {
    fn extension(self) -> &'static str {
        match self {
            OutputFormat::Png => "png",
            OutputFormat::Tiff => "tif",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOptions {
    pub decode: DecodeMode,
    pub output_depth: BitDepth,
    pub output_encode: EncodeMode,
    pub output_format: OutputFormat,
    pub factor_mode: FactorMode,
    pub dump_factors: bool,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            decode: DecodeMode::Auto,
            output_depth: BitDepth::Sixteen,
            output_encode: EncodeMode::Linear,
            output_format: OutputFormat::Png,
            factor_mode: FactorMode::PerFrame,
            dump_factors: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub enhancement: EnhancementConfig,
    pub batch: BatchOptions,
}

/// Per-run summary written as `run_report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub frames: usize,
    pub outputs: Vec<String>,
    /// Frames in the median window used for each output.
    pub window_sizes: Vec<usize>,
    /// Fraction of pixels without a usable factor, per output.
    pub invalid_fraction: Vec<f64>,
    /// Wall time attributed to each frame: its load, preprocessing,
    /// estimation and save.
    pub ms_per_frame: Vec<f64>,
    pub frames_per_second: f64,
    pub config: ConfigEcho,
}

struct Staging {
    dir: PathBuf,
    committed: bool,
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "frame".into())
}

/// Enhances every frame of `manifest` into `out_dir`.
///
/// Outputs are staged in a hidden directory and only moved into `out_dir`
/// once every frame succeeded, so a failing input leaves no partial output
/// set behind. The error names the failing path.
pub fn run_batch<T: Scalar>(
    manifest: &[PathBuf],
    scatter: ScatterField<T>,
    config: &EnhancementConfig,
    out_dir: impl AsRef<Path>,
    options: &BatchOptions,
) -> Result<RunReport> {
    ensure!(!manifest.is_empty(), Argument, "manifest lists no frames");
    config.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let staging = Staging {
        dir: out_dir.join(format!(".staging-{}", std::process::id())),
        committed: false,
    };
    fs::create_dir_all(&staging.dir).map_err(|e| Error::io(&staging.dir, e))?;

    let started = Instant::now();
    let mut stream = StreamState::new(scatter, config.clone(), options.factor_mode)?;
    let frames = manifest.len();
    let mut ms = vec![0.0; frames];
    let mut window_sizes = vec![0; frames];
    let mut invalid = vec![0.0; frames];
    let mut written: Vec<PathBuf> = Vec::new();
    let mut outputs = vec![String::new(); frames];

    let mut write = |e: &Emission<T>, ms: &mut [f64]| -> Result<()> {
        let t0 = Instant::now();
        let base = stem(&manifest[e.position]);
        let name = format!("{base}_enhanced.{}", options.output_format.extension());
        let path = staging.dir.join(&name);
        save_frame(&e.enhanced.frame, &path, options.output_depth, options.output_encode, true)?;
        written.push(path);
        let mask = staging.dir.join(format!("{base}_coverage.png"));
        save_mask(&e.enhanced.coverage, &mask)?;
        written.push(mask);
        if options.dump_factors {
            let fp = staging.dir.join(format!("{base}_factor.tif"));
            save_factor(&e.factor, &fp)?;
            written.push(fp.clone());
            written.push(crate::raster::sidecar_path(&fp));
            written.push(crate::raster::mask_path(&fp));
        }
        window_sizes[e.position] = e.window.len();
        invalid[e.position] = e.enhanced.coverage.invalid_fraction();
        outputs[e.position] = name;
        ms[e.position] += t0.elapsed().as_secs_f64() * 1e3;
        Ok(())
    };

    for (i, path) in manifest.iter().enumerate() {
        let t0 = Instant::now();
        let mut frame = load_frame::<T>(path, options.decode)?;
        frame.index = i as u64;
        let emitted = stream.push(frame)?;
        ms[i] += t0.elapsed().as_secs_f64() * 1e3;
        log::debug!("{}: pushed, {} emitted", path.display(), emitted.len());
        for e in &emitted {
            write(e, &mut ms)?;
        }
    }
    let t0 = Instant::now();
    let rest = stream.flush()?;
    let share = t0.elapsed().as_secs_f64() * 1e3 / rest.len().max(1) as f64;
    for e in &rest {
        ms[e.position] += share;
        write(e, &mut ms)?;
    }
    drop(write);

    let mut staging = staging;
    for src in &written {
        let dst = out_dir.join(src.file_name().expect("staged files have names"));
        fs::rename(src, &dst).map_err(|e| Error::io(&dst, e))?;
    }
    staging.committed = true;
    let _ = fs::remove_dir_all(&staging.dir);

    let elapsed = started.elapsed().as_secs_f64();
    log::info!("enhanced {frames} frames in {elapsed:.2} s into {}", out_dir.display());
    let report = RunReport {
        schema: REPORT_SCHEMA,
        frames,
        outputs,
        window_sizes,
        invalid_fraction: invalid,
        ms_per_frame: ms,
        frames_per_second: frames as f64 / elapsed.max(1e-9),
        config: ConfigEcho {
            enhancement: config.clone(),
            batch: options.clone(),
        },
    };
    let rp = out_dir.join(REPORT_FILE);
    fs::write(&rp, serde_json::to_string_pretty(&report).expect("report serializes"))
        .map_err(|e| Error::io(&rp, e))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_skips_comments_and_resolves_relative() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("frames.txt");
        fs::write(&m, "# header\nframe_000.png\n\n  /abs/x.png  \n#frame_001.png\n").unwrap();
        let paths = read_manifest(&m).unwrap();
        assert_eq!(paths, vec![dir.path().join("frame_000.png"), PathBuf::from("/abs/x.png")]);
    }

    #[test]
    fn empty_manifest_is_argument_error() {
        let dir = tempfile::tempdir().unwrap();
        let scatter = ScatterField::<f32>::zeros(crate::Dims::new(4, 4), 1);
        let err = run_batch(&[], scatter, &EnhancementConfig::default(), dir.path(), &BatchOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }
}
