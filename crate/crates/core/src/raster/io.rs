//! PNG/TIFF frame and mask I/O.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};
use serde::{Deserialize, Serialize};

use super::{Dims, Frame, ImagePlane, Mask};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How stored code values are mapped to linear radiance on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    /// sRGB transfer for 8-bit files, linear for 16-bit files.
    #[default]
    Auto,
    Linear,
    Srgb,
}

/// How linear radiance is mapped to code values on save.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodeMode {
    #[default]
    Linear,
    Srgb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BitDepth {
    #[serde(rename = "8")]
    Eight,
    #[default]
    #[serde(rename = "16")]
    Sixteen,
}

impl BitDepth {
    pub fn max_code(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }

    pub fn from_bits(bits: u32) -> Option<Self> {
        match bits {
            8 => Some(BitDepth::Eight),
            16 => Some(BitDepth::Sixteen),
            _ => None,
        }
    }
}

pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_srgb(v: f64) -> f64 {
    if v <= 0.003_130_8 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

fn image_format(path: &Path) -> Result<ImageFormat> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => Ok(ImageFormat::Png),
        Some("tif") | Some("tiff") => Ok(ImageFormat::Tiff),
        _ => Err(Error::format(path, "expected a .png, .tif or .tiff extension")),
    }
}

fn decode_image(path: &Path) -> Result<DynamicImage> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Tiff) => {}
        Some(other) => return Err(Error::format(path, format!("{other:?} is not PNG or TIFF"))),
        None => return Err(Error::format(path, "unrecognized file signature")),
    }
    reader.decode().map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })
}

fn planes_from_samples<T: Scalar, S: Copy>(
    dims: Dims,
    channels: usize,
    samples: &[S],
    to_linear: impl Fn(S) -> f64,
) -> Vec<ImagePlane<T>> {
    (0..channels)
        .map(|c| {
            let data = samples
                .iter()
                .skip(c)
                .step_by(channels)
                .map(|&s| T::of(to_linear(s)))
                .collect();
            ImagePlane::from_raw(dims, data)
        })
        .collect()
}

/// Loads an 8/16-bit grayscale or RGB PNG/TIFF as linear radiance in [0, 1].
pub fn load_frame<T: Scalar>(path: impl AsRef<Path>, mode: DecodeMode) -> Result<Frame<T>> {
    let path = path.as_ref();
    let img = decode_image(path)?;
    let dims = Dims::new(img.width() as usize, img.height() as usize);
    let srgb8 = matches!(mode, DecodeMode::Auto | DecodeMode::Srgb);
    let srgb16 = matches!(mode, DecodeMode::Srgb);
    let lut8: Vec<f64> = (0..=255u32)
        .map(|v| {
            let x = v as f64 / 255.0;
            if srgb8 {
                srgb_to_linear(x)
            } else {
                x
            }
        })
        .collect();
    let map16 = |v: u16| {
        let x = v as f64 / 65535.0;
        if srgb16 {
            srgb_to_linear(x)
        } else {
            x
        }
    };
    let planes = match &img {
        DynamicImage::ImageLuma8(b) => planes_from_samples(dims, 1, b.as_raw(), |v: u8| lut8[v as usize]),
        DynamicImage::ImageRgb8(b) => planes_from_samples(dims, 3, b.as_raw(), |v: u8| lut8[v as usize]),
        DynamicImage::ImageLuma16(b) => planes_from_samples(dims, 1, b.as_raw(), map16),
        DynamicImage::ImageRgb16(b) => planes_from_samples(dims, 3, b.as_raw(), map16),
        DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgba8(_)
        | DynamicImage::ImageRgba16(_)
        | DynamicImage::ImageRgba32F(_) => {
            return Err(Error::format(path, "alpha channels are not supported"))
        }
        other => {
            return Err(Error::format(
                path,
                format!("unsupported pixel layout {:?}", other.color()),
            ))
        }
    };
    let tag = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Frame::new(planes, 0)?.with_tag(tag))
}

/// Converts a frame to interleaved code values, validating range first.
fn quantize<T: Scalar>(
    frame: &Frame<T>,
    depth: BitDepth,
    mode: EncodeMode,
    clamp: bool,
) -> Result<Vec<u16>> {
    let channels = frame.channels();
    let n = frame.dims().len();
    let max = depth.max_code();
    let mut out = vec![0u16; n * channels];
    for (c, plane) in frame.planes().iter().enumerate() {
        for (i, &v) in plane.data().iter().enumerate() {
            let mut v = v.as_f64();
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "channel {c} sample {i} is not finite"
                )));
            }
            if !(0.0..=1.0).contains(&v) {
                if !clamp {
                    return Err(Error::Range(format!(
                        "channel {c} sample {i} = {v} lies outside [0, 1]"
                    )));
                }
                v = v.clamp(0.0, 1.0);
            }
            let encoded = match mode {
                EncodeMode::Linear => v,
                EncodeMode::Srgb => linear_to_srgb(v),
            };
            out[i * channels + c] = (encoded * max).round() as u16;
        }
    }
    Ok(out)
}

/// Saves a frame as PNG or TIFF (chosen by extension).
///
/// Values outside [0, 1] are clamped when `clamp` is set and rejected
/// otherwise.
pub fn save_frame<T: Scalar>(
    frame: &Frame<T>,
    path: impl AsRef<Path>,
    depth: BitDepth,
    mode: EncodeMode,
    clamp: bool,
) -> Result<()> {
    let path = path.as_ref();
    let format = image_format(path)?;
    let codes = quantize(frame, depth, mode, clamp)?;
    let (w, h) = (frame.dims().width as u32, frame.dims().height as u32);
    let img = match (depth, frame.channels()) {
        (BitDepth::Eight, 1) => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, codes.iter().map(|&v| v as u8).collect())
                .expect("buffer sized from frame"),
        ),
        (BitDepth::Eight, _) => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, codes.iter().map(|&v| v as u8).collect())
                .expect("buffer sized from frame"),
        ),
        (BitDepth::Sixteen, 1) => DynamicImage::ImageLuma16(
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, codes).expect("buffer sized from frame"),
        ),
        (BitDepth::Sixteen, _) => DynamicImage::ImageRgb16(
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, codes).expect("buffer sized from frame"),
        ),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    let written = match format {
        // Fast deflate: outputs are intermediate products, and encoding
        // dominates the per-frame cost at default compression.
        ImageFormat::Png => img.write_with_encoder(PngEncoder::new_with_quality(
            &mut writer,
            CompressionType::Fast,
            FilterType::Adaptive,
        )),
        _ => img.write_to(&mut writer, format),
    };
    written.map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })?;
    use std::io::Write;
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Writes a mask as a 1-bit grayscale PNG (white = valid).
pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dims = mask.dims();
    let stride = dims.width.div_ceil(8);
    let mut packed = vec![0u8; stride * dims.height];
    for y in 0..dims.height {
        for x in 0..dims.width {
            if mask.get(x, y) {
                packed[y * stride + x / 8] |= 0x80 >> (x % 8);
            }
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), dims.width as u32, dims.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::One);
    let to_err = |e: png::EncodingError| match e {
        png::EncodingError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    };
    let mut writer = enc.write_header().map_err(to_err)?;
    writer.write_image_data(&packed).map_err(to_err)?;
    writer.finish().map_err(to_err)
}

/// Reads a mask written by [`save_mask`] (any grayscale PNG works;
/// non-zero = valid).
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = png::Decoder::new(BufReader::new(file));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let to_err = |e: png::DecodingError| match e {
        png::DecodingError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    };
    let mut reader = dec.read_info().map_err(to_err)?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(to_err)?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::format(path, "mask must be a grayscale PNG"));
    }
    let dims = Dims::new(info.width as usize, info.height as usize);
    let data = buf[..dims.len()].iter().map(|&v| v != 0).collect();
    Mask::new(dims, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(v: f32, w: usize, h: usize) -> Frame<f32> {
        Frame::new(vec![ImagePlane::filled(w, h, v).unwrap()], 0).unwrap()
    }

    #[test]
    fn full_scale_and_zero_8bit() {
        let dir = tempfile::tempdir().unwrap();
        for (v, expect) in [(1.0f32, 1.0f32), (0.0, 0.0)] {
            let p = dir.path().join("g.png");
            save_frame(&gray(v, 4, 3), &p, BitDepth::Eight, EncodeMode::Linear, false).unwrap();
            let f: Frame<f32> = load_frame(&p, DecodeMode::Linear).unwrap();
            assert!(f.plane(0).data().iter().all(|&x| x == expect));
        }
    }

    #[test]
    fn sixteen_bit_midscale_value() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mid.tif");
        let buf = ImageBuffer::<Luma<u16>, _>::from_raw(1, 1, vec![32768u16]).unwrap();
        DynamicImage::ImageLuma16(buf).save(&p).unwrap();
        let f: Frame<f64> = load_frame(&p, DecodeMode::Linear).unwrap();
        assert_eq!(f.plane(0).get(0, 0), 32768.0 / 65535.0);
        // auto mode keeps 16-bit data linear
        let g: Frame<f64> = load_frame(&p, DecodeMode::Auto).unwrap();
        assert_eq!(g.plane(0).get(0, 0), 32768.0 / 65535.0);
    }

    #[test]
    fn clamp_and_range_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        let bright = Frame::new(vec![ImagePlane::filled(2, 2, 1.7f32).unwrap()], 0).unwrap();
        save_frame(&bright, &p, BitDepth::Sixteen, EncodeMode::Linear, true).unwrap();
        let back: Frame<f32> = load_frame(&p, DecodeMode::Linear).unwrap();
        assert!(back.plane(0).data().iter().all(|&x| x == 1.0));
        assert!(matches!(
            save_frame(&bright, &p, BitDepth::Sixteen, EncodeMode::Linear, false),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn negative_value_rejected_without_clamp() {
        // Planes cannot hold negatives; exercise the quantizer directly.
        let plane = ImagePlane::from_raw(Dims::new(1, 1), vec![-0.1f32]);
        let frame = Frame::new(vec![plane], 0).unwrap();
        assert!(matches!(
            quantize(&frame, BitDepth::Eight, EncodeMode::Linear, false),
            Err(Error::Range(_))
        ));
        let nan = Frame::new(vec![ImagePlane::from_raw(Dims::new(1, 1), vec![f32::NAN])], 0).unwrap();
        assert!(matches!(
            quantize(&nan, BitDepth::Eight, EncodeMode::Linear, true),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn alpha_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let buf = ImageBuffer::<image::Rgba<u8>, _>::from_raw(1, 1, vec![1, 2, 3, 255]).unwrap();
        DynamicImage::ImageRgba8(buf).save(&p).unwrap();
        assert!(matches!(load_frame::<f32>(&p, DecodeMode::Auto), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_frame::<f32>("/nonexistent/frame.png", DecodeMode::Auto).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn srgb_transfer_round_trips() {
        for i in 0..=100 {
            let v = i as f64 / 100.0;
            assert!((srgb_to_linear(linear_to_srgb(v)) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let dims = Dims::new(13, 5);
        let mask = Mask::new(dims, (0..dims.len()).map(|i| i % 3 != 0).collect()).unwrap();
        save_mask(&mask, &p).unwrap();
        assert_eq!(load_mask(&p).unwrap(), mask);
    }
}
