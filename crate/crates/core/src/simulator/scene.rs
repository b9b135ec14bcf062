//! Scene description and its JSON form.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{load_frame, DecodeMode, ImagePlane};

pub const SCENE_SCHEMA: u32 = 1;

/// Fewest quadrature steps a scene may configure for backscatter.
pub const MIN_STEPS: usize = 50;

/// Pinhole camera. The principal point defaults to the image center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub focal_px: f64,
    #[serde(default)]
    pub cx: Option<f64>,
    #[serde(default)]
    pub cy: Option<f64>,
}

impl Camera {
    pub fn principal_point(&self) -> (f64, f64) {
        (
            self.cx.unwrap_or(self.width as f64 / 2.0),
            self.cy.unwrap_or(self.height as f64 / 2.0),
        )
    }
}

/// Camera pose over the seafloor plane `z = 0`.
///
/// `x`/`y` locate the camera over the seafloor (meters); with zero
/// attitude the camera looks straight down, image x along world +x and
/// image y along world -y. Roll rotates about world x, pitch about world
/// y, yaw about world z (applied roll, pitch, yaw).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub y: f64,
    pub altitude: f64,
    #[serde(default)]
    pub pitch: f64,
    #[serde(default)]
    pub roll: f64,
    #[serde(default)]
    pub yaw: f64,
}

impl Pose {
    pub fn nadir(x: f64, y: f64, altitude: f64) -> Self {
        Self {
            x,
            y,
            altitude,
            pitch: 0.0,
            roll: 0.0,
            yaw: 0.0,
        }
    }
}

/// Point light with a Gaussian angular fall-off around its axis, fixed in
/// the camera frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightSource {
    /// Meters, camera frame (x right, y down, z along the optical axis).
    pub position: [f64; 3],
    /// Cone axis, camera frame. Normalized on load.
    pub direction: [f64; 3],
    /// Radiant intensity on the axis, per channel.
    pub intensity: Vec<f64>,
    /// Standard deviation of the angular fall-off, radians.
    pub cone_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterProperties {
    /// Attenuation coefficient per channel, 1/m.
    pub eta: Vec<f64>,
    /// Scattering coefficient per channel, 1/m.
    pub beta_scale: Vec<f64>,
    /// Henyey-Greenstein asymmetry in (-1, 1).
    #[serde(default = "default_hg_g")]
    pub hg_g: f64,
    /// Farthest distance along a viewing ray that is simulated. Seafloor
    /// hits beyond it are invisible and backscatter is integrated up to it.
    #[serde(default = "default_max_distance")]
    pub max_distance: f64,
    /// Midpoint-rule steps per backscatter integral.
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_hg_g() -> f64 {
    0.8
}
fn default_max_distance() -> f64 {
    20.0
}
fn default_steps() -> usize {
    64
}
fn default_true() -> bool {
    true
}

impl Default for WaterProperties {
    /// Simulator defaults, attenuating red strongest. Not a measured
    /// water type; scattering stays below attenuation in every channel.
    fn default() -> Self {
        Self {
            eta: vec![0.65, 0.35, 0.30],
            beta_scale: vec![0.3, 0.2, 0.2],
            hg_g: default_hg_g(),
            max_distance: default_max_distance(),
            steps: default_steps(),
        }
    }
}

/// Where the seafloor albedo comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlbedoSource {
    Constant {
        value: Vec<f64>,
    },
    /// Smooth value noise around `base`: each channel is
    /// `base * (1 + amplitude * n(u, v))` with `n` in [-1, 1] varying over
    /// `feature_size_m`.
    Procedural {
        base: Vec<f64>,
        amplitude: f64,
        feature_size_m: f64,
        #[serde(default)]
        seed: u64,
    },
    /// An image file, decoded as linear values.
    Image {
        path: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlbedoMapSpec {
    /// Seafloor coordinate of the map's top-left corner (meters).
    pub origin: [f64; 2],
    /// Extent in meters; ignored for image sources (taken from the image).
    #[serde(default)]
    pub size_m: [f64; 2],
    pub meters_per_texel: f64,
    #[serde(flatten)]
    pub source: AlbedoSource,
}

/// Transient objects (fauna, stones, particles) stamped into each frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSpec {
    /// Fraction of each frame's footprint covered, in [0, 0.5).
    pub rate: f64,
    #[serde(default = "default_size_min")]
    pub size_min_m: f64,
    #[serde(default = "default_size_max")]
    pub size_max_m: f64,
    /// Probability that an object is bright rather than dark.
    #[serde(default = "default_bright_fraction")]
    pub bright_fraction: f64,
    #[serde(default = "default_bright")]
    pub bright: [f64; 2],
    #[serde(default = "default_dark")]
    pub dark: [f64; 2],
}

fn default_size_min() -> f64 {
    0.08
}
fn default_size_max() -> f64 {
    0.25
}
fn default_bright_fraction() -> f64 {
    0.5
}
fn default_bright() -> [f64; 2] {
    [0.7, 1.0]
}
fn default_dark() -> [f64; 2] {
    [0.02, 0.12]
}

impl ContaminationSpec {
    pub fn none() -> Self {
        Self::with_rate(0.0)
    }

    pub fn with_rate(rate: f64) -> Self {
        Self {
            rate,
            size_min_m: default_size_min(),
            size_max_m: default_size_max(),
            bright_fraction: default_bright_fraction(),
            bright: default_bright(),
            dark: default_dark(),
        }
    }
}

/// JSON document for a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDoc {
    pub schema: u32,
    pub camera: Camera,
    pub pose: Pose,
    pub lights: Vec<LightSource>,
    #[serde(default)]
    pub water: WaterProperties,
    pub albedo: AlbedoMapSpec,
    #[serde(default = "ContaminationSpec::none")]
    pub contamination: ContaminationSpec,
    #[serde(default)]
    pub seed: u64,
    /// Weight the direct term by the cosine of the incidence angle.
    #[serde(default = "default_true")]
    pub cosine_weighting: bool,
}

/// Per-channel seafloor reflectance over a rectangular patch.
#[derive(Debug, Clone, PartialEq)]
pub struct AlbedoMap {
    pub planes: Vec<ImagePlane<f64>>,
    pub origin: [f64; 2],
    pub meters_per_texel: f64,
}

impl AlbedoMap {
    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    /// Seafloor extent `[u_min, v_min, u_max, v_max]` in meters.
    pub fn bounds(&self) -> [f64; 4] {
        let d = self.planes[0].dims();
        [
            self.origin[0],
            self.origin[1],
            self.origin[0] + d.width as f64 * self.meters_per_texel,
            self.origin[1] + d.height as f64 * self.meters_per_texel,
        ]
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        let b = self.bounds();
        u >= b[0] && u <= b[2] && v >= b[1] && v <= b[3]
    }

    /// Bilinear sample at seafloor coordinate `(u, v)`, texel centers at
    /// `origin + (i + 0.5) * meters_per_texel`, clamped at the border.
    pub fn sample(&self, u: f64, v: f64, out: &mut [f64]) {
        let d = self.planes[0].dims();
        let fx = ((u - self.origin[0]) / self.meters_per_texel - 0.5).clamp(0.0, (d.width - 1) as f64);
        let fy = ((v - self.origin[1]) / self.meters_per_texel - 0.5).clamp(0.0, (d.height - 1) as f64);
        let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(d.width - 1), (y0 + 1).min(d.height - 1));
        let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
        for (o, p) in out.iter_mut().zip(&self.planes) {
            let top = p.get(x0, y0) * (1.0 - tx) + p.get(x1, y0) * tx;
            let bottom = p.get(x0, y1) * (1.0 - tx) + p.get(x1, y1) * tx;
            *o = top * (1.0 - ty) + bottom * ty;
        }
    }

    fn from_spec(spec: &AlbedoMapSpec, channels: usize, base_dir: &Path) -> Result<Self> {
        let mpt = spec.meters_per_texel;
        if !(mpt > 0.0) {
            return Err(Error::schema("albedo.meters_per_texel", "must be > 0"));
        }
        let texels = |i: usize| -> Result<usize> {
            let n = (spec.size_m[i] / mpt).ceil();
            if !(n >= 2.0 && n <= 1e5) {
                return Err(Error::schema(
                    "albedo.size_m",
                    "must span between 2 and 1e5 texels per axis",
                ));
            }
            Ok(n as usize)
        };
        let check_values = |field: &str, v: &[f64]| -> Result<()> {
            if v.len() != channels {
                return Err(Error::schema(field, format!("needs {channels} channel values")));
            }
            if v.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::schema(field, "albedo values must lie in [0, 1]"));
            }
            Ok(())
        };
        let planes = match &spec.source {
            AlbedoSource::Constant { value } => {
                check_values("albedo.value", value)?;
                let (w, h) = (texels(0)?, texels(1)?);
                value.iter().map(|&v| ImagePlane::filled(w, h, v)).collect::<Result<Vec<_>>>()?
            }
            AlbedoSource::Procedural {
                base,
                amplitude,
                feature_size_m,
                seed,
            } => {
                check_values("albedo.base", base)?;
                if !(0.0..1.0).contains(amplitude) {
                    return Err(Error::schema("albedo.amplitude", "must lie in [0, 1)"));
                }
                if !(*feature_size_m > 0.0) {
                    return Err(Error::schema("albedo.feature_size_m", "must be > 0"));
                }
                let (w, h) = (texels(0)?, texels(1)?);
                let noise = value_noise(w, h, feature_size_m / mpt, *seed);
                base.iter()
                    .map(|&b| {
                        let data = noise.iter().map(|n| (b * (1.0 + amplitude * n)).clamp(0.0, 1.0)).collect();
                        ImagePlane::new(w, h, data)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            AlbedoSource::Image { path } => {
                let p = base_dir.join(path);
                let frame = load_frame::<f64>(&p, DecodeMode::Linear)?;
                if frame.channels() != channels {
                    return Err(Error::schema(
                        "albedo.path",
                        format!("image has {} channels, scene needs {channels}", frame.channels()),
                    ));
                }
                frame.into_planes()
            }
        };
        Ok(Self {
            planes,
            origin: spec.origin,
            meters_per_texel: mpt,
        })
    }
}

/// Smooth noise in [-1, 1]: random lattice values every `cell` texels,
/// interpolated with a smoothstep.
fn value_noise(w: usize, h: usize, cell: f64, seed: u64) -> Vec<f64> {
    let cell = cell.max(1.0);
    let gw = (w as f64 / cell).ceil() as usize + 2;
    let gh = (h as f64 / cell).ceil() as usize + 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let fy = y as f64 / cell;
        let (gy, ty) = (fy.floor() as usize, smooth(fy.fract()));
        for x in 0..w {
            let fx = x as f64 / cell;
            let (gx, tx) = (fx.floor() as usize, smooth(fx.fract()));
            let at = |i: usize, j: usize| lattice[j * gw + i];
            let top = at(gx, gy) * (1.0 - tx) + at(gx + 1, gy) * tx;
            let bottom = at(gx, gy + 1) * (1.0 - tx) + at(gx + 1, gy + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// Validated scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub camera: Camera,
    pub pose: Pose,
    pub lights: Vec<LightSource>,
    pub water: WaterProperties,
    pub albedo: AlbedoMap,
    pub contamination: ContaminationSpec,
    pub seed: u64,
    pub cosine_weighting: bool,
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::schema(path, e.into_inner().to_string())
    })
}

pub(crate) fn validate_pose(field: &str, pose: &Pose) -> Result<()> {
    if !(pose.altitude > 0.0 && pose.altitude.is_finite()) {
        return Err(Error::schema(format!("{field}.altitude"), "must be > 0"));
    }
    for (name, v) in [("x", pose.x), ("y", pose.y), ("pitch", pose.pitch), ("roll", pose.roll), ("yaw", pose.yaw)] {
        if !v.is_finite() {
            return Err(Error::schema(format!("{field}.{name}"), "must be finite"));
        }
    }
    Ok(())
}

impl SceneSpec {
    /// Parses and validates a scene document. Relative image paths resolve
    /// against `base_dir`.
    pub fn from_json(text: &str, base_dir: impl AsRef<Path>) -> Result<Self> {
        let doc: SceneDoc = parse_json(text)?;
        Self::from_doc(doc, base_dir.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path.parent().unwrap_or_else(|| Path::new("")))
    }

    pub fn from_doc(doc: SceneDoc, base_dir: &Path) -> Result<Self> {
        if doc.schema != SCENE_SCHEMA {
            return Err(Error::schema("schema", format!("unsupported version {}", doc.schema)));
        }
        let cam = &doc.camera;
        if cam.width == 0 || cam.height == 0 {
            return Err(Error::schema("camera.width", "image dims must be positive"));
        }
        if !(cam.focal_px > 0.0) {
            return Err(Error::schema("camera.focal_px", "must be > 0"));
        }
        validate_pose("pose", &doc.pose)?;
        let water = &doc.water;
        let channels = water.eta.len();
        if channels != 1 && channels != 3 {
            return Err(Error::schema("water.eta", "needs 1 or 3 channel values"));
        }
        if water.eta.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::schema("water.eta", "attenuation must be > 0"));
        }
        if water.beta_scale.len() != channels || water.beta_scale.iter().any(|b| !(*b >= 0.0)) {
            return Err(Error::schema("water.beta_scale", format!("needs {channels} values >= 0")));
        }
        if !(water.hg_g > -1.0 && water.hg_g < 1.0) {
            return Err(Error::schema("water.hg_g", "must lie in (-1, 1)"));
        }
        if !(water.max_distance > 0.0) {
            return Err(Error::schema("water.max_distance", "must be > 0"));
        }
        if water.steps < MIN_STEPS {
            return Err(Error::schema("water.steps", format!("must be at least {MIN_STEPS}")));
        }
        let mut lights = doc.lights;
        for (i, l) in lights.iter_mut().enumerate() {
            let norm = l.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0) {
                return Err(Error::schema(format!("lights[{i}].direction"), "must be non-zero"));
            }
            l.direction.iter_mut().for_each(|v| *v /= norm);
            if !(l.cone_sigma > 0.0) {
                return Err(Error::schema(format!("lights[{i}].cone_sigma"), "must be > 0"));
            }
            if l.intensity.len() != channels || l.intensity.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::schema(
                    format!("lights[{i}].intensity"),
                    format!("needs {channels} values >= 0"),
                ));
            }
        }
        let c = &doc.contamination;
        if !(0.0..0.5).contains(&c.rate) {
            return Err(Error::schema("contamination.rate", "must lie in [0, 0.5)"));
        }
        if !(c.size_min_m > 0.0 && c.size_max_m >= c.size_min_m) {
            return Err(Error::schema("contamination.size_min_m", "need 0 < size_min_m <= size_max_m"));
        }
        let albedo = AlbedoMap::from_spec(&doc.albedo, channels, base_dir)?;
        Ok(Self {
            camera: doc.camera,
            pose: doc.pose,
            lights,
            water: doc.water,
            albedo,
            contamination: doc.contamination,
            seed: doc.seed,
            cosine_weighting: doc.cosine_weighting,
        })
    }

    pub fn channels(&self) -> usize {
        self.water.eta.len()
    }

    /// A ready-made three-channel scene: 256x192 camera at 3 m altitude, two
    /// lights 1.5 m to either side (red-heavy so that the channels come out
/// of the water at similar levels), grey-brown textured sediment over a
    /// 12 m x 8 m patch centered on the origin.
    pub fn example() -> Self {
        let doc = example_doc();
        Self::from_doc(doc, Path::new("")).expect("example scene is valid")
    }
}

/// The document behind [`SceneSpec::example`].
pub fn example_doc() -> SceneDoc {
    SceneDoc {
        schema: SCENE_SCHEMA,
        camera: Camera {
            width: 256,
            height: 192,
            focal_px: 200.0,
            cx: None,
            cy: None,
        },
        pose: Pose::nadir(0.0, 0.0, 3.0),
        lights: vec![
            LightSource {
                position: [1.5, 0.0, 0.0],
                direction: [-0.25, 0.0, 1.0],
                intensity: vec![24.0, 4.0, 3.0],
                cone_sigma: 0.45,
            },
            LightSource {
                position: [-1.5, 0.0, 0.0],
                direction: [0.25, 0.0, 1.0],
                intensity: vec![24.0, 4.0, 3.0],
                cone_sigma: 0.45,
            },
        ],
        water: WaterProperties::default(),
        albedo: AlbedoMapSpec {
            origin: [-6.0, -4.0],
            size_m: [12.0, 8.0],
            meters_per_texel: 0.01,
            source: AlbedoSource::Procedural {
                base: vec![0.45, 0.4, 0.35],
                amplitude: 0.15,
                feature_size_m: 0.3,
                seed: 1,
            },
        },
        contamination: ContaminationSpec::with_rate(0.1),
        seed: 7,
        cosine_weighting: true,
    }
}

/// Camera poses for a sequence, plus how many water-column frames to
/// render for backscatter estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub schema: u32,
    pub poses: Vec<Pose>,
    #[serde(default)]
    pub water_column: usize,
}

impl Trajectory {
    /// `count` nadir poses at constant altitude, `step` meters apart along
    /// `heading` (radians from world +x).
    pub fn transect(start: [f64; 2], heading: f64, step: f64, count: usize, altitude: f64) -> Self {
        let (sin, cos) = heading.sin_cos();
        let poses = (0..count)
            .map(|k| {
                let d = k as f64 * step;
                Pose::nadir(start[0] + d * cos, start[1] + d * sin, altitude)
            })
            .collect();
        Self {
            schema: SCENE_SCHEMA,
            poses,
            water_column: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Trajectory = parse_json(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCENE_SCHEMA {
            return Err(Error::schema("schema", format!("unsupported version {}", self.schema)));
        }
        if self.poses.is_empty() {
            return Err(Error::schema("poses", "needs at least one pose"));
        }
        for (i, pose) in self.poses.iter().enumerate() {
            validate_pose(&format!("poses[{i}]"), pose)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_round_trips_through_json() {
        let doc = example_doc();
        let json = serde_json::to_string(&doc).unwrap();
        let scene = SceneSpec::from_json(&json, ".").unwrap();
        assert_eq!(scene, SceneSpec::example());
    }

    #[test]
    fn zero_altitude_reports_field_path() {
        let mut doc = example_doc();
        doc.pose.altitude = 0.0;
        let json = serde_json::to_string(&doc).unwrap();
        match SceneSpec::from_json(&json, ".") {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "pose.altitude"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn type_errors_report_field_path() {
        let mut v = serde_json::to_value(example_doc()).unwrap();
        v["lights"][1]["cone_sigma"] = serde_json::json!("wide");
        match SceneSpec::from_json(&v.to_string(), ".") {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "lights[1].cone_sigma"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn albedo_values_checked() {
        let mut doc = example_doc();
        doc.albedo.source = AlbedoSource::Constant { value: vec![0.5, 1.2, 0.5] };
        assert!(SceneSpec::from_doc(doc, Path::new("")).is_err());
    }

    #[test]
    fn trajectory_pose_errors_name_the_pose() {
        let mut t = Trajectory::transect([0.0, 0.0], 0.0, 0.5, 4, 3.0);
        t.poses[2].altitude = -1.0;
        let json = serde_json::to_string(&t).unwrap();
        match Trajectory::from_json(&json) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "poses[2].altitude"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn noise_is_bounded_and_deterministic() {
        let a = value_noise(50, 40, 7.0, 3);
        assert_eq!(a, value_noise(50, 40, 7.0, 3));
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
