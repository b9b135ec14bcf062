//! Persistence of scatter and factor fields: a 16-bit TIFF holding the
//! scaled values, a JSON sidecar with the per-channel scale, and (for
//! factor fields) the validity mask as a 1-bit PNG.

use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};
use serde::{Deserialize, Serialize};

use super::io::{load_mask, save_mask};
use super::{Dims, FactorField, ImagePlane, Mask, ScatterField};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const FIELD_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Scatter,
    Factor,
}

/// JSON sidecar stored next to the field TIFF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub schema: u32,
    pub kind: FieldKind,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Value represented by code 65535, per channel.
    pub scale: Vec<f64>,
    /// File name of the validity mask, relative to the sidecar.
    pub mask: Option<String>,
}

pub fn sidecar_path(tiff: &Path) -> PathBuf {
    tiff.with_extension("json")
}

pub fn mask_path(tiff: &Path) -> PathBuf {
    let stem = tiff.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    tiff.with_file_name(format!("{stem}_mask.png"))
}

fn write_planes<T: Scalar>(
    planes: &[ImagePlane<T>],
    path: &Path,
    kind: FieldKind,
    mask: Option<&Mask>,
) -> Result<()> {
    let dims = planes[0].dims();
    let channels = planes.len();
    let scale: Vec<f64> = planes
        .iter()
        .map(|p| {
            let max = p.min_max().1.as_f64();
            if max > 0.0 {
                max
            } else {
                1.0
            }
        })
        .collect();
    let mut codes = vec![0u16; dims.len() * channels];
    for (c, p) in planes.iter().enumerate() {
        for (i, v) in p.data().iter().enumerate() {
            codes[i * channels + c] = (v.as_f64() / scale[c] * 65535.0).round().clamp(0.0, 65535.0) as u16;
        }
    }
    let (w, h) = (dims.width as u32, dims.height as u32);
    let img = if channels == 1 {
        DynamicImage::ImageLuma16(ImageBuffer::<Luma<u16>, _>::from_raw(w, h, codes).expect("sized"))
    } else {
        DynamicImage::ImageRgb16(ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, codes).expect("sized"))
    };
    img.save_with_format(path, ImageFormat::Tiff).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })?;
    let mask_name = match mask {
        Some(m) => {
            let mp = mask_path(path);
            save_mask(m, &mp)?;
            mp.file_name().map(|n| n.to_string_lossy().into_owned())
        }
        None => None,
    };
    let sidecar = FieldSidecar {
        schema: FIELD_SCHEMA,
        kind,
        width: dims.width,
        height: dims.height,
        channels,
        scale,
        mask: mask_name,
    };
    let sp = sidecar_path(path);
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    std::fs::write(&sp, json).map_err(|e| Error::io(&sp, e))
}

fn read_planes<T: Scalar>(path: &Path, kind: FieldKind) -> Result<(Vec<ImagePlane<T>>, Option<Mask>)> {
    let sp = sidecar_path(path);
    let text = std::fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let sidecar: FieldSidecar = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::schema(e.path().to_string(), e.inner().to_string()))?;
    if sidecar.schema != FIELD_SCHEMA {
        return Err(Error::schema("schema", format!("unsupported version {}", sidecar.schema)));
    }
    if sidecar.kind != kind {
        return Err(Error::schema("kind", format!("expected {kind:?}, found {:?}", sidecar.kind)));
    }
    if sidecar.scale.len() != sidecar.channels {
        return Err(Error::schema("scale", "needs one entry per channel"));
    }
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let dims = Dims::new(img.width() as usize, img.height() as usize);
    if dims != Dims::new(sidecar.width, sidecar.height) {
        return Err(Error::schema("width", "sidecar dims disagree with the TIFF"));
    }
    let (raw, channels): (Vec<u16>, usize) = match img {
        DynamicImage::ImageLuma16(b) => (b.into_raw(), 1),
        DynamicImage::ImageRgb16(b) => (b.into_raw(), 3),
        _ => return Err(Error::format(path, "field TIFF must be 16-bit gray or RGB")),
    };
    if channels != sidecar.channels {
        return Err(Error::schema("channels", "sidecar channel count disagrees with the TIFF"));
    }
    let planes = (0..channels)
        .map(|c| {
            let data = raw
                .iter()
                .skip(c)
                .step_by(channels)
                .map(|&v| T::of(v as f64 / 65535.0 * sidecar.scale[c]))
                .collect();
            ImagePlane::new(dims.width, dims.height, data)
        })
        .collect::<Result<Vec<_>>>()?;
    let mask = match &sidecar.mask {
        Some(name) => {
            let m = load_mask(path.with_file_name(name))?;
            if m.dims() != dims {
                return Err(Error::schema("mask", "mask dims disagree with the TIFF"));
            }
            Some(m)
        }
        None => None,
    };
    Ok((planes, mask))
}

pub fn save_scatter<T: Scalar>(field: &ScatterField<T>, path: impl AsRef<Path>) -> Result<()> {
    write_planes(field.planes(), path.as_ref(), FieldKind::Scatter, None)
}

pub fn load_scatter<T: Scalar>(path: impl AsRef<Path>) -> Result<ScatterField<T>> {
    let (planes, _) = read_planes(path.as_ref(), FieldKind::Scatter)?;
    ScatterField::new(planes)
}

pub fn save_factor<T: Scalar>(field: &FactorField<T>, path: impl AsRef<Path>) -> Result<()> {
    write_planes(field.planes(), path.as_ref(), FieldKind::Factor, Some(field.valid()))
}

pub fn load_factor<T: Scalar>(path: impl AsRef<Path>) -> Result<FactorField<T>> {
    let (planes, mask) = read_planes(path.as_ref(), FieldKind::Factor)?;
    match mask {
        Some(m) => FactorField::new(planes, m),
        None => FactorField::from_planes(planes),
    }
}
