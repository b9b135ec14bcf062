//! Frame-to-mosaic registration: homographies and dense correspondence maps.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::colortype::ColorType;
use tiff::encoder::TiffEncoder;
use tiff::tags::{PhotometricInterpretation, SampleFormat};

use crate::error::{ensure, Error, Result};
use crate::raster::Dims;

pub const REGISTRATION_SCHEMA: u32 = 1;

/// Two 32-bit float samples per pixel: seafloor `u`, `v`.
struct SeafloorUv;

impl ColorType for SeafloorUv {
    type Inner = f32;
    const TIFF_VALUE: PhotometricInterpretation = PhotometricInterpretation::BlackIsZero;
    const BITS_PER_SAMPLE: &'static [u16] = &[32, 32];
    const SAMPLE_FORMAT: &'static [SampleFormat] = &[SampleFormat::IEEEFP, SampleFormat::IEEEFP];

    fn horizontal_predict(_: &[f32], _: &mut Vec<f32>) {
        unreachable!("correspondence maps are written without a predictor")
    }
}

/// Seafloor coordinate (meters) seen by every pixel; NaN where the pixel
/// sees no seafloor.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceMap {
    dims: Dims,
    uv: Vec<[f32; 2]>,
}

impl CorrespondenceMap {
    pub fn new(dims: Dims, uv: Vec<[f32; 2]>) -> Result<Self> {
        ensure!(!dims.is_empty(), Argument, "correspondence map needs positive dimensions");
        ensure!(
            uv.len() == dims.len(),
            Argument,
            "correspondence map {dims} needs {} entries, got {}",
            dims.len(),
            uv.len()
        );
        Ok(Self { dims, uv })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[[f32; 2]] {
        &self.uv
    }

    pub fn get(&self, x: usize, y: usize) -> Option<[f64; 2]> {
        let [u, v] = self.uv[y * self.dims.width + x];
        (u.is_finite() && v.is_finite()).then_some([u as f64, v as f64])
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let flat: Vec<f32> = self.uv.iter().flatten().copied().collect();
        let mut enc = TiffEncoder::new(BufWriter::new(file)).map_err(|e| Error::format(path, e.to_string()))?;
        enc.write_image::<SeafloorUv>(self.dims.width as u32, self.dims.height as u32, &flat)
            .map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let bad = |e: tiff::TiffError| Error::format(path, e.to_string());
        let mut dec = Decoder::new(std::io::BufReader::new(file)).map_err(bad)?;
        let (w, h) = dec.dimensions().map_err(bad)?;
        let color = dec.colortype().map_err(bad)?;
        ensure!(
            matches!(color, tiff::ColorType::Multiband { bit_depth: 32, num_samples: 2 }),
            Data,
            "{}: expected a 2-channel 32-bit float map, found {color:?}",
            path.display()
        );
        let flat = match dec.read_image().map_err(bad)? {
            DecodingResult::F32(v) => v,
            _ => return Err(Error::format(path, "correspondence samples are not 32-bit float")),
        };
        let dims = Dims::new(w as usize, h as usize);
        ensure!(flat.len() == 2 * dims.len(), Data, "{}: truncated correspondence map", path.display());
        let uv = flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        Self::new(dims, uv)
    }
}

/// Plane projective transform acting on `(x, y, 1)`. Pixel centers sit at
/// integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub Matrix3<f64>);

impl Homography {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn from_row_major(m: [f64; 9]) -> Self {
        Self(Matrix3::from_row_slice(&m))
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 0)], m[(1, 1)], m[(1, 2)], m[(2, 0)], m[(2, 1)], m[(2, 2)]]
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self(Matrix3::new(1.0, 0.0, dx, 0.0, 1.0, dy, 0.0, 0.0, 1.0))
    }

    pub fn scaling(s: f64) -> Self {
        Self(Matrix3::new(s, 0.0, 0.0, 0.0, s, 0.0, 0.0, 0.0, 1.0))
    }

    /// Maps a point; `None` at or behind the line at infinity.
    pub fn apply(&self, x: f64, y: f64) -> Option<[f64; 2]> {
        let p = self.0 * Vector3::new(x, y, 1.0);
        (p.z.abs() > 1e-300).then(|| [p.x / p.z, p.y / p.z])
    }

    pub fn inverse(&self) -> Result<Self> {
        self.0
            .try_inverse()
            .map(Self)
            .ok_or_else(|| Error::Argument("homography is singular".into()))
    }

    pub fn then(&self, next: &Homography) -> Self {
        Self(next.0 * self.0)
    }

    /// Least-squares fit to point pairs `src -> dst` by the normalized
    /// direct linear transform.
    pub fn fit(pairs: &[([f64; 2], [f64; 2])]) -> Result<Self> {
        ensure!(pairs.len() >= 4, Argument, "homography fit needs 4 or more point pairs, got {}", pairs.len());
        let t_src = normalizer(pairs.iter().map(|p| p.0));
        let t_dst = normalizer(pairs.iter().map(|p| p.1));
        let mut a = DMatrix::<f64>::zeros(2 * pairs.len(), 9);
        for (i, (s, d)) in pairs.iter().enumerate() {
            let s = t_src * Vector3::new(s[0], s[1], 1.0);
            let d = t_dst * Vector3::new(d[0], d[1], 1.0);
            let (x, y, u, v) = (s.x, s.y, d.x, d.y);
            a.row_mut(2 * i).copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
            a.row_mut(2 * i + 1).copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
        }
        // The null vector of A is the eigenvector of AᵀA with the smallest
        // eigenvalue.
        let ata = a.transpose() * &a;
        let eig = ata.symmetric_eigen();
        let k = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|p, q| p.1.total_cmp(q.1))
            .map(|(k, _)| k)
            .unwrap_or(0);
        let h = eig.eigenvectors.column(k);
        let hn = Matrix3::from_row_slice(h.as_slice());
        let t_dst_inv = t_dst.try_inverse().ok_or_else(|| Error::Argument("degenerate point set".into()))?;
        let mut m = t_dst_inv * hn * t_src;
        ensure!(m[(2, 2)].abs() > 1e-300, Argument, "degenerate homography fit");
        m /= m[(2, 2)];
        ensure!(m.iter().all(|v| v.is_finite()), Argument, "degenerate homography fit");
        Ok(Self(m))
    }
}

/// Similarity moving the centroid to the origin with mean distance √2.
fn normalizer(points: impl Iterator<Item = [f64; 2]> + Clone) -> Matrix3<f64> {
    let n = points.clone().count() as f64;
    let (mx, my) = points.clone().fold((0.0, 0.0), |a, p| (a.0 + p[0], a.1 + p[1]));
    let (mx, my) = (mx / n, my / n);
    let mean_dist = points.map(|p| ((p[0] - mx).powi(2) + (p[1] - my).powi(2)).sqrt()).sum::<f64>() / n;
    let s = if mean_dist > 0.0 { std::f64::consts::SQRT_2 / mean_dist } else { 1.0 };
    Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0)
}

/// Where each frame lands in a common mosaic pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    to_mosaic: Vec<Homography>,
    from_mosaic: Vec<Homography>,
}

/// Integer mosaic raster covering a set of registered frames. Mosaic pixel
/// `(i, j)` sits at mosaic coordinate `origin + (i, j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MosaicExtent {
    pub origin: [f64; 2],
    pub dims: Dims,
}

/// Largest mosaic the metrics will allocate, in pixels.
pub const MAX_MOSAIC_PIXELS: usize = 1 << 28;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistrationDoc {
    schema: u32,
    #[serde(default)]
    homographies: Option<Vec<[f64; 9]>>,
    #[serde(default)]
    correspondence_maps: Option<Vec<PathBuf>>,
    #[serde(default)]
    meters_per_pixel: Option<f64>,
}

impl Registration {
    /// Frame-to-mosaic homographies, one per frame.
    pub fn from_homographies(to_mosaic: Vec<Homography>) -> Result<Self> {
        ensure!(!to_mosaic.is_empty(), Argument, "registration lists no frames");
        let from_mosaic = to_mosaic.iter().map(Homography::inverse).collect::<Result<_>>()?;
        Ok(Self { to_mosaic, from_mosaic })
    }

    /// Fits a homography to each correspondence map and places seafloor
    /// meters on a grid of `meters_per_pixel`; by default the median
    /// ground sample distance at the frame centers.
    pub fn from_correspondence(maps: &[CorrespondenceMap], meters_per_pixel: Option<f64>) -> Result<Self> {
        ensure!(!maps.is_empty(), Argument, "registration lists no frames");
        let ground = maps.iter().map(fit_correspondence).collect::<Result<Vec<_>>>()?;
        let mpp = match meters_per_pixel {
            Some(m) => {
                ensure!(m > 0.0 && m.is_finite(), Argument, "meters_per_pixel must be > 0, got {m}");
                m
            }
            None => {
                let mut gsd: Vec<f64> = ground
                    .iter()
                    .zip(maps)
                    .map(|(h, m)| local_scale(h, m.dims.width as f64 / 2.0, m.dims.height as f64 / 2.0))
                    .collect::<Result<_>>()?;
                gsd.sort_by(f64::total_cmp);
                gsd[gsd.len() / 2]
            }
        };
        let to_grid = Homography::scaling(1.0 / mpp);
        Self::from_homographies(ground.iter().map(|h| h.then(&to_grid)).collect())
    }

    /// Reads a registration document. Relative map paths resolve against
    /// the document's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let doc: RegistrationDoc = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            Error::schema(field, e.into_inner().to_string())
        })?;
        ensure!(
            doc.schema == REGISTRATION_SCHEMA,
            Argument,
            "{}: unsupported registration schema {}",
            path.display(),
            doc.schema
        );
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        match (doc.homographies, doc.correspondence_maps) {
            (Some(h), None) => Self::from_homographies(h.into_iter().map(Homography::from_row_major).collect()),
            (None, Some(maps)) => {
                let maps = maps
                    .iter()
                    .map(|p| CorrespondenceMap::load(base.join(p)))
                    .collect::<Result<Vec<_>>>()?;
                Self::from_correspondence(&maps, doc.meters_per_pixel)
            }
            _ => Err(Error::schema(
                "homographies",
                "exactly one of `homographies` and `correspondence_maps` is required",
            )),
        }
    }

    /// Writes the registration as a homography document.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let doc = RegistrationDoc {
            schema: REGISTRATION_SCHEMA,
            homographies: Some(self.to_mosaic.iter().map(Homography::to_row_major).collect()),
            correspondence_maps: None,
            meters_per_pixel: None,
        };
        let text = serde_json::to_string_pretty(&doc).expect("registration serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.to_mosaic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_mosaic.is_empty()
    }

    pub fn to_mosaic(&self, frame: usize) -> &Homography {
        &self.to_mosaic[frame]
    }

    pub fn from_mosaic(&self, frame: usize) -> &Homography {
        &self.from_mosaic[frame]
    }

    /// Mosaic-space bounding box `[x0, y0, x1, y1]` of a frame of `dims`.
    pub fn frame_bounds(&self, frame: usize, dims: Dims) -> Result<[f64; 4]> {
        let (w, h) = (dims.width as f64, dims.height as f64);
        let h_m = &self.to_mosaic[frame];
        let corners = [(-0.5, -0.5), (w - 0.5, -0.5), (-0.5, h - 0.5), (w - 0.5, h - 0.5)];
        let sign = |x: f64, y: f64| (h_m.0 * Vector3::new(x, y, 1.0)).z.signum();
        let s0 = sign(corners[0].0, corners[0].1);
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for &(x, y) in &corners {
            ensure!(
                sign(x, y) == s0,
                Argument,
                "frame {frame}: homography is not invertible over the image (horizon inside the frame)"
            );
            let p = h_m
                .apply(x, y)
                .ok_or_else(|| Error::Argument(format!("frame {frame}: corner maps to infinity")))?;
            b = [b[0].min(p[0]), b[1].min(p[1]), b[2].max(p[0]), b[3].max(p[1])];
        }
        Ok(b)
    }

    /// Smallest mosaic raster holding every frame.
    pub fn extent(&self, dims: &[Dims]) -> Result<MosaicExtent> {
        ensure!(
            dims.len() == self.len(),
            Argument,
            "registration covers {} frames, got {}",
            self.len(),
            dims.len()
        );
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for (k, d) in dims.iter().enumerate() {
            let f = self.frame_bounds(k, *d)?;
            b = [b[0].min(f[0]), b[1].min(f[1]), b[2].max(f[2]), b[3].max(f[3])];
        }
        let origin = [b[0].ceil(), b[1].ceil()];
        let w = (b[2].floor() - origin[0] + 1.0).max(0.0);
        let h = (b[3].floor() - origin[1] + 1.0).max(0.0);
        ensure!(
            w * h <= MAX_MOSAIC_PIXELS as f64,
            Argument,
            "mosaic of {w}x{h} pixels is too large; check the registration scale"
        );
        ensure!(w >= 1.0 && h >= 1.0, Argument, "registered frames cover no mosaic pixel");
        Ok(MosaicExtent {
            origin,
            dims: Dims::new(w as usize, h as usize),
        })
    }
}

/// Mean seafloor length of one pixel step near `(x, y)`.
fn local_scale(h: &Homography, x: f64, y: f64) -> Result<f64> {
    let p = h.apply(x, y);
    let px = h.apply(x + 1.0, y);
    let py = h.apply(x, y + 1.0);
    match (p, px, py) {
        (Some(p), Some(px), Some(py)) => {
            let jx = [px[0] - p[0], px[1] - p[1]];
            let jy = [py[0] - p[0], py[1] - p[1]];
            let det = (jx[0] * jy[1] - jx[1] * jy[0]).abs();
            ensure!(det > 0.0, Argument, "degenerate correspondence scale");
            Ok(det.sqrt())
        }
        _ => Err(Error::Argument("correspondence center maps to infinity".into())),
    }
}

/// Pixel-to-seafloor homography from the finite entries of a map, sampled
/// on a grid of at most ~32 x 32 points.
fn fit_correspondence(map: &CorrespondenceMap) -> Result<Homography> {
    let d = map.dims;
    let sx = (d.width / 32).max(1);
    let sy = (d.height / 32).max(1);
    let mut pairs = Vec::new();
    for y in (0..d.height).step_by(sy) {
        for x in (0..d.width).step_by(sx) {
            if let Some(uv) = map.get(x, y) {
                pairs.push(([x as f64, y as f64], uv));
            }
        }
    }
    ensure!(pairs.len() >= 4, Metric, "correspondence map has too few seafloor pixels to register");
    Homography::fit(&pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_known_homography() {
        let truth = Homography::from_row_major([1.1, 0.05, 3.0, -0.02, 0.95, -2.0, 1e-4, -2e-4, 1.0]);
        let pairs: Vec<_> = (0..6)
            .flat_map(|i| (0..5).map(move |j| [i as f64 * 20.0, j as f64 * 15.0]))
            .map(|p| (p, truth.apply(p[0], p[1]).unwrap()))
            .collect();
        let fit = Homography::fit(&pairs).unwrap();
        for (a, b) in fit.to_row_major().iter().zip(truth.to_row_major()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn correspondence_map_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("uv.tif");
        let uv = vec![[0.5, -1.25], [f32::NAN, f32::NAN], [3.0, 4.0], [1e-3, 7.5]];
        let map = CorrespondenceMap::new(Dims::new(2, 2), uv).unwrap();
        map.save(&path).unwrap();
        let back = CorrespondenceMap::load(&path).unwrap();
        assert_eq!(back.get(0, 0), map.get(0, 0));
        assert_eq!(back.get(1, 0), None);
        assert_eq!(back.data()[3], map.data()[3]);
    }

    #[test]
    fn extent_of_translated_frames() {
        let reg = Registration::from_homographies(vec![
            Homography::identity(),
            Homography::translation(10.0, 0.0),
        ])
        .unwrap();
        let d = Dims::new(20, 10);
        let e = reg.extent(&[d, d]).unwrap();
        assert_eq!(e.origin, [0.0, 0.0]);
        assert_eq!(e.dims, Dims::new(30, 10));
    }
}
