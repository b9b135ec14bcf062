//! Forward rendering of `I = A * F + S` over a planar seafloor.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::geometry::{pixel_ray, world_from_camera, LocalPlane};
use super::scene::{AlbedoMap, ContaminationSpec, LightSource, Pose, SceneSpec};
use crate::error::{ensure, Result};
use crate::metrics::CorrespondenceMap;
use crate::raster::{Dims, FactorField, Frame, ImagePlane, Mask, ScatterField};
use crate::scalar::Scalar;

/// Lit particles in water-column frames add this much per unit of their
/// reflectance on top of the water glow.
pub const PARTICLE_GAIN: f64 = 0.25;

fn henyey_greenstein(g: f64, cos_theta: f64) -> f64 {
    let denom = 1.0 + g * g - 2.0 * g * cos_theta;
    (1.0 - g * g) / (4.0 * PI * denom * denom.sqrt())
}

fn cone_falloff(light: &LightSource, toward: &Vector3<f64>) -> f64 {
    let axis = Vector3::from(light.direction);
    let theta = toward.dot(&axis).clamp(-1.0, 1.0).acos();
    (-theta * theta / (2.0 * light.cone_sigma * light.cone_sigma)).exp()
}

/// Adds one midpoint step of single-scattered light: the slab of length
/// `ds` centered `s` meters along the unit camera-frame `ray`.
fn scatter_step(scene: &SceneSpec, ray: &Vector3<f64>, s: f64, ds: f64, out: &mut [f64]) {
    let water = &scene.water;
    let point = ray * s;
    for light in &scene.lights {
        let v = point - Vector3::from(light.position);
        let d_l = v.norm();
        if d_l == 0.0 {
            continue;
        }
        let w = v / d_l;
        let weight = cone_falloff(light, &w) * henyey_greenstein(water.hg_g, -w.dot(ray)) * ds;
        for (c, o) in out.iter_mut().enumerate() {
            *o += light.intensity[c] * weight * (-water.eta[c] * (d_l + s)).exp() * water.beta_scale[c];
        }
    }
}

fn accumulate_backscatter(scene: &SceneSpec, ray: &Vector3<f64>, distance: f64, steps: usize, out: &mut [f64]) {
    if scene.water.beta_scale.iter().all(|b| *b == 0.0) || distance <= 0.0 {
        return;
    }
    let ds = distance / steps as f64;
    for i in 0..steps {
        scatter_step(scene, ray, (i as f64 + 0.5) * ds, ds, out);
    }
}

/// Per-channel backscatter collected along the unit camera-frame `ray` over
/// `[0, distance]` meters.
pub fn integrate_backscatter(scene: &SceneSpec, ray: &Vector3<f64>, distance: f64, steps: usize) -> Result<Vec<f64>> {
    ensure!(steps > 0, Argument, "backscatter integration needs a positive step count");
    ensure!(distance >= 0.0, Argument, "integration distance must be >= 0, got {distance}");
    let mut out = vec![0.0; scene.channels()];
    accumulate_backscatter(scene, &ray.normalize(), distance, steps, &mut out);
    Ok(out)
}

/// Cumulative backscatter along `ray`: entry `i` holds the integral over
/// `[0, (i + 1) * distance / steps]`, per channel.
pub fn cumulative_backscatter(
    scene: &SceneSpec,
    ray: &Vector3<f64>,
    distance: f64,
    steps: usize,
) -> Result<Vec<Vec<f64>>> {
    ensure!(steps > 0, Argument, "backscatter integration needs a positive step count");
    let ray = ray.normalize();
    let ds = distance / steps as f64;
    let mut total = vec![0.0; scene.channels()];
    let mut curve = Vec::with_capacity(steps);
    for i in 0..steps {
        let mut slab = vec![0.0; total.len()];
        scatter_step(scene, &ray, (i as f64 + 0.5) * ds, ds, &mut slab);
        total.iter_mut().zip(&slab).for_each(|(t, s)| *t += s);
        curve.push(total.clone());
    }
    Ok(curve)
}

/// Illumination and attenuation factor at a seafloor point `t` meters along
/// the unit camera-frame `ray`.
fn direct_factor(scene: &SceneSpec, plane: &LocalPlane, ray: &Vector3<f64>, t: f64, out: &mut [f64]) {
    let point = ray * t;
    let water = &scene.water;
    for light in &scene.lights {
        let v = point - Vector3::from(light.position);
        let d_l = v.norm();
        let w = v / d_l;
        // Light must arrive from above the plane.
        let cos_inc = -w.dot(&plane.normal);
        if !(cos_inc > 0.0) || plane.elevation(&Vector3::from(light.position)) <= 0.0 {
            continue;
        }
        let shade = if scene.cosine_weighting { cos_inc } else { 1.0 };
        let base = cone_falloff(light, &w) * shade;
        for (c, o) in out.iter_mut().enumerate() {
            *o += light.intensity[c] * base * (-water.eta[c] * (d_l + t)).exp();
        }
    }
}

/// Everything about a view that does not depend on where the camera is
/// over the seafloor: factor and scatter fields and the ground offset of
/// every pixel.
#[derive(Debug, Clone)]
pub struct RenderGeometry {
    dims: Dims,
    factor: Vec<ImagePlane<f64>>,
    scatter: Vec<ImagePlane<f64>>,
    /// World-frame `(dx, dy)` from the camera to the seafloor hit, NaN for
    /// background pixels.
    offsets: Vec<[f64; 2]>,
}

struct RowSample {
    factor: Vec<f64>,
    scatter: Vec<f64>,
    offsets: Vec<[f64; 2]>,
}

impl RenderGeometry {
    /// Geometry for `pose` (translation ignored). With `seafloor` false
    /// every ray runs into open water up to the maximum distance.
    pub fn new(scene: &SceneSpec, pose: &Pose, seafloor: bool) -> Self {
        let cam = &scene.camera;
        let dims = Dims::new(cam.width, cam.height);
        let channels = scene.channels();
        let plane = LocalPlane::new(pose);
        let rot = world_from_camera(pose);
        let max_distance = scene.water.max_distance;
        let steps = scene.water.steps;
        let rows: Vec<RowSample> = (0..dims.height)
            .into_par_iter()
            .map(|y| {
                let mut row = RowSample {
                    factor: vec![0.0; dims.width * channels],
                    scatter: vec![0.0; dims.width * channels],
                    offsets: vec![[f64::NAN; 2]; dims.width],
                };
                for x in 0..dims.width {
                    let ray = pixel_ray(cam, x, y);
                    let hit = if seafloor {
                        plane.hit(&ray).filter(|t| *t <= max_distance)
                    } else {
                        None
                    };
                    let span = x * channels..(x + 1) * channels;
                    let reach = hit.unwrap_or(max_distance);
                    accumulate_backscatter(scene, &ray, reach, steps, &mut row.scatter[span.clone()]);
                    if let Some(t) = hit {
                        direct_factor(scene, &plane, &ray, t, &mut row.factor[span]);
                        let w = rot * (ray * t);
                        row.offsets[x] = [w.x, w.y];
                    }
                }
                row
            })
            .collect();
        let mut factor = vec![Vec::with_capacity(dims.len()); channels];
        let mut scatter = vec![Vec::with_capacity(dims.len()); channels];
        let mut offsets = Vec::with_capacity(dims.len());
        for row in rows {
            for x in 0..dims.width {
                for c in 0..channels {
                    factor[c].push(row.factor[x * channels + c]);
                    scatter[c].push(row.scatter[x * channels + c]);
                }
            }
            offsets.extend(row.offsets);
        }
        let planes = |v: Vec<Vec<f64>>| v.into_iter().map(|d| ImagePlane::from_raw(dims, d)).collect();
        Self {
            dims,
            factor: planes(factor),
            scatter: planes(scatter),
            offsets,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn factor(&self) -> &[ImagePlane<f64>] {
        &self.factor
    }

    pub fn scatter(&self) -> &[ImagePlane<f64>] {
        &self.scatter
    }

    pub fn offsets(&self) -> &[[f64; 2]] {
        &self.offsets
    }
}

/// Transient objects of one frame, rasterized over its footprint.
struct Overlay {
    origin: [f64; 2],
    texel: f64,
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Overlay {
    fn build(spec: &ContaminationSpec, bounds: [f64; 4], texel: f64, rng: &mut ChaCha8Rng) -> Option<Self> {
        if spec.rate <= 0.0 || !(bounds[2] > bounds[0] && bounds[3] > bounds[1]) {
            return None;
        }
        let width = ((bounds[2] - bounds[0]) / texel).ceil().max(1.0) as usize;
        let height = ((bounds[3] - bounds[1]) / texel).ceil().max(1.0) as usize;
        let mut values = vec![f64::NAN; width * height];
        let goal = (spec.rate * (width * height) as f64).ceil() as usize;
        let mut covered = 0;
        // Generous cap; objects always cover at least one texel.
        for _ in 0..goal.max(1) * 4 {
            if covered >= goal {
                break;
            }
            let cu = rng.random_range(bounds[0]..bounds[2]);
            let cv = rng.random_range(bounds[1]..bounds[3]);
            let a = 0.5 * rng.random_range(spec.size_min_m..=spec.size_max_m);
            let b = 0.5 * rng.random_range(spec.size_min_m..=spec.size_max_m);
            let angle = rng.random_range(0.0..PI);
            let range = if rng.random_bool(spec.bright_fraction.clamp(0.0, 1.0)) {
                spec.bright
            } else {
                spec.dark
            };
            let value = rng.random_range(range[0].min(range[1])..=range[0].max(range[1]));
            let (sin, cos) = angle.sin_cos();
            let reach = a.max(b);
            let to_texel = |m: f64, o: f64, n: usize| (((m - o) / texel).floor().max(0.0) as usize).min(n - 1);
            let (x0, x1) = (to_texel(cu - reach, bounds[0], width), to_texel(cu + reach, bounds[0], width));
            let (y0, y1) = (to_texel(cv - reach, bounds[1], height), to_texel(cv + reach, bounds[1], height));
            let mut stamped = false;
            for ty in y0..=y1 {
                for tx in x0..=x1 {
                    let du = bounds[0] + (tx as f64 + 0.5) * texel - cu;
                    let dv = bounds[1] + (ty as f64 + 0.5) * texel - cv;
                    let (p, q) = (du * cos + dv * sin, -du * sin + dv * cos);
                    if (p / a).powi(2) + (q / b).powi(2) <= 1.0 {
                        let slot = &mut values[ty * width + tx];
                        if slot.is_nan() {
                            covered += 1;
                        }
                        *slot = value;
                        stamped = true;
                    }
                }
            }
            if !stamped {
                let tx = to_texel(cu, bounds[0], width);
                let ty = to_texel(cv, bounds[1], height);
                let slot = &mut values[ty * width + tx];
                if slot.is_nan() {
                    covered += 1;
                }
                *slot = value;
            }
        }
        Some(Self {
            origin: [bounds[0], bounds[1]],
            texel,
            width,
            height,
            values,
        })
    }

    fn at(&self, u: f64, v: f64) -> Option<f64> {
        let fx = ((u - self.origin[0]) / self.texel).floor();
        let fy = ((v - self.origin[1]) / self.texel).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return None;
        }
        let value = self.values[fy as usize * self.width + fx as usize];
        (!value.is_nan()).then_some(value)
    }
}

/// One rendered frame with its ground-truth layers. Background pixels
/// (no visible seafloor) carry zero albedo and factor.
#[derive(Debug, Clone)]
pub struct Rendered<T> {
    /// What the camera records.
    pub observed: Frame<T>,
    /// Albedo actually imaged, including transient objects.
    pub albedo: Frame<T>,
    /// Albedo of the seafloor map alone.
    pub clean_albedo: Frame<T>,
    pub scatter: Frame<T>,
    pub factor: Frame<T>,
    /// Pixels that see the seafloor.
    pub seafloor: Mask,
    /// Pixels covered by a transient object.
    pub contaminated: Mask,
    pub correspondence: CorrespondenceMap,
    pub pose: Pose,
}

impl<T: Scalar> Rendered<T> {
    pub fn scatter_field(&self) -> ScatterField<T> {
        ScatterField::from(self.scatter.clone())
    }

    /// Ground-truth factor as a field, valid where the seafloor is visible
    /// and every channel reaches `epsilon`.
    pub fn factor_field(&self, epsilon: f64) -> FactorField<T> {
        let dims = self.factor.dims();
        let valid = (0..dims.len())
            .map(|i| {
                self.seafloor.data()[i] && self.factor.planes().iter().all(|p| p.data()[i].as_f64() >= epsilon)
            })
            .collect();
        let mask = Mask::new(dims, valid).expect("mask matches frame dims");
        FactorField::new(self.factor.planes().to_vec(), mask).expect("planes share dims")
    }
}

fn to_frame<T: Scalar>(planes: Vec<Vec<f64>>, dims: Dims, index: u64) -> Frame<T> {
    let planes = planes
        .into_iter()
        .map(|d| ImagePlane::from_raw(dims, d.into_iter().map(T::of).collect()))
        .collect();
    Frame::new(planes, index).expect("channel count fixed by the scene")
}

fn plane_frame<T: Scalar>(planes: &[ImagePlane<f64>], index: u64) -> Frame<T> {
    Frame::new(planes.iter().map(|p| p.cast()).collect(), index).expect("channel count fixed by the scene")
}

/// Key for the geometry cache: everything but the translation.
fn attitude_key(pose: &Pose, seafloor: bool) -> [u64; 5] {
    [
        pose.altitude.to_bits(),
        pose.pitch.to_bits(),
        pose.roll.to_bits(),
        pose.yaw.to_bits(),
        seafloor as u64,
    ]
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Renders frames of one scene, reusing geometry between poses that differ
/// only by translation.
pub struct SequenceRenderer<'a> {
    scene: &'a SceneSpec,
    seed: u64,
    cache: HashMap<[u64; 5], RenderGeometry>,
}

impl<'a> SequenceRenderer<'a> {
    /// `seed` drives the transient objects; frame `k` uses its own stream so
    /// frames can be rendered in any order.
    pub fn new(scene: &'a SceneSpec, seed: u64) -> Self {
        Self {
            scene,
            seed,
            cache: HashMap::new(),
        }
    }

    pub fn geometry(&mut self, pose: &Pose, seafloor: bool) -> &RenderGeometry {
        let scene = self.scene;
        self.cache
            .entry(attitude_key(pose, seafloor))
            .or_insert_with(|| RenderGeometry::new(scene, pose, seafloor))
    }

    /// Switches the transient-object seed; cached geometry is kept.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    /// Renders frame `index` seen from `pose`.
    pub fn render<T: Scalar>(&mut self, pose: &Pose, index: u64) -> Result<Rendered<T>> {
        self.render_over(&self.scene.albedo, pose, index)
    }

    /// Like [`render`](Self::render) but over another albedo map. Lights,
    /// water and camera still come from the scene, so cached geometry is
    /// shared between maps.
    pub fn render_over<T: Scalar>(&mut self, map: &AlbedoMap, pose: &Pose, index: u64) -> Result<Rendered<T>> {
        super::scene::validate_pose("pose", pose).map_err(|e| crate::Error::Argument(e.to_string()))?;
        ensure!(
            map.channels() == self.scene.channels(),
            Argument,
            "albedo map has {} channels, scene needs {}",
            map.channels(),
            self.scene.channels()
        );
        let scene = self.scene;
        let mut rng = stream_rng(self.seed, index);
        let geometry = self.geometry(pose, true);
        let dims = geometry.dims;
        let channels = scene.channels();

        let mut bounds = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for o in geometry.offsets.iter().filter(|o| !o[0].is_nan()) {
            let (u, v) = (pose.x + o[0], pose.y + o[1]);
            ensure!(
                map.contains(u, v),
                Argument,
                "frame {index} footprint reaches ({u:.3}, {v:.3}) m, outside the albedo map {:?}",
                map.bounds()
            );
            bounds = [bounds[0].min(u), bounds[1].min(v), bounds[2].max(u), bounds[3].max(v)];
        }
        let overlay = Overlay::build(&scene.contamination, bounds, map.meters_per_texel, &mut rng);

        let mut albedo = vec![vec![0.0; dims.len()]; channels];
        let mut clean = vec![vec![0.0; dims.len()]; channels];
        let mut observed = vec![vec![0.0; dims.len()]; channels];
        let mut seafloor = vec![false; dims.len()];
        let mut contaminated = vec![false; dims.len()];
        let mut uv = vec![[f32::NAN; 2]; dims.len()];
        let mut sample = vec![0.0; channels];
        for (i, o) in geometry.offsets.iter().enumerate() {
            for c in 0..channels {
                observed[c][i] = geometry.scatter[c].data()[i];
            }
            if o[0].is_nan() {
                continue;
            }
            let (u, v) = (pose.x + o[0], pose.y + o[1]);
            seafloor[i] = true;
            uv[i] = [u as f32, v as f32];
            map.sample(u, v, &mut sample);
            let object = overlay.as_ref().and_then(|ov| ov.at(u, v));
            contaminated[i] = object.is_some();
            for c in 0..channels {
                let a = object.unwrap_or(sample[c]);
                clean[c][i] = sample[c];
                albedo[c][i] = a;
                observed[c][i] += a * geometry.factor[c].data()[i];
            }
        }
        let tag = format!("frame_{index:04}");
        Ok(Rendered {
            observed: to_frame::<T>(observed, dims, index).with_tag(tag),
            albedo: to_frame(albedo, dims, index),
            clean_albedo: to_frame(clean, dims, index),
            scatter: plane_frame(&geometry.scatter, index),
            factor: plane_frame(&geometry.factor, index),
            seafloor: Mask::new(dims, seafloor)?,
            contaminated: Mask::new(dims, contaminated)?,
            correspondence: CorrespondenceMap::new(dims, uv)?,
            pose: *pose,
        })
    }

    /// Renders a frame looking into open water (no seafloor in range), with
    /// transient particles stamped in image space at the contamination rate.
    pub fn render_water<T: Scalar>(&mut self, index: u64) -> Result<Frame<T>> {
        let scene = self.scene;
        let pose = scene.pose;
        let mut rng = stream_rng(self.seed, index | 1 << 63);
        let geometry = self.geometry(&pose, false);
        let dims = geometry.dims;
        let mut planes: Vec<Vec<f64>> = geometry.scatter.iter().map(|p| p.data().to_vec()).collect();
        let spec = &scene.contamination;
        if spec.rate > 0.0 {
            let mut hit = vec![false; dims.len()];
            let goal = (spec.rate * dims.len() as f64).ceil() as usize;
            let mut covered = 0;
            let focal = scene.camera.focal_px;
            for _ in 0..goal.max(1) * 4 {
                if covered >= goal {
                    break;
                }
                let depth = rng.random_range(1.0..3.0);
                let radius = (0.5 * rng.random_range(spec.size_min_m..=spec.size_max_m) * focal / depth).max(0.5);
                let cx = rng.random_range(0.0..dims.width as f64);
                let cy = rng.random_range(0.0..dims.height as f64);
                let range = if rng.random_bool(spec.bright_fraction.clamp(0.0, 1.0)) {
                    spec.bright
                } else {
                    spec.dark
                };
                let value = rng.random_range(range[0].min(range[1])..=range[0].max(range[1]));
                let x0 = (cx - radius).floor().max(0.0) as usize;
                let y0 = (cy - radius).floor().max(0.0) as usize;
                let x1 = ((cx + radius).ceil() as usize).min(dims.width - 1);
                let y1 = ((cy + radius).ceil() as usize).min(dims.height - 1);
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                        if dx * dx + dy * dy > radius * radius {
                            continue;
                        }
                        let i = y * dims.width + x;
                        if !hit[i] {
                            hit[i] = true;
                            covered += 1;
                        }
                        for (p, s) in planes.iter_mut().zip(&geometry.scatter) {
                            p[i] = s.data()[i] + PARTICLE_GAIN * value;
                        }
                    }
                }
            }
        }
        Ok(to_frame::<T>(planes, dims, index).with_tag(format!("water_{index:04}")))
    }
}

/// Renders the scene from its own pose with its own seed.
pub fn render_frame<T: Scalar>(scene: &SceneSpec) -> Result<Rendered<T>> {
    SequenceRenderer::new(scene, scene.seed).render(&scene.pose, 0)
}

/// Renders every pose of a trajectory over the scene's albedo map; frame `k`
/// gets index `k`.
pub fn render_sequence<T: Scalar>(scene: &SceneSpec, poses: &[Pose], seed: u64) -> Result<Vec<Rendered<T>>> {
    let mut renderer = SequenceRenderer::new(scene, seed);
    poses
        .iter()
        .enumerate()
        .map(|(k, pose)| renderer.render(pose, k as u64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_scene() -> SceneSpec {
        let mut scene = SceneSpec::example();
        scene.camera.width = 64;
        scene.camera.height = 48;
        scene.camera.focal_px = 50.0;
        scene
    }

    #[test]
    fn hg_is_normalized() {
        let g = 0.8;
        let n = 200_000;
        let sum: f64 = (0..n)
            .map(|i| {
                let mu = -1.0 + (i as f64 + 0.5) * 2.0 / n as f64;
                henyey_greenstein(g, mu) * 2.0 * PI * 2.0 / n as f64
            })
            .sum();
        assert!((sum - 1.0).abs() < 1e-4, "{sum}");
    }

    #[test]
    fn cumulative_matches_direct_integral() {
        let scene = small_scene();
        let ray = Vector3::new(0.1, -0.05, 1.0);
        let curve = cumulative_backscatter(&scene, &ray, 6.0, 96).unwrap();
        let direct = integrate_backscatter(&scene, &ray, 6.0, 96).unwrap();
        for (a, b) in curve.last().unwrap().iter().zip(&direct) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn zero_steps_rejected() {
        let scene = small_scene();
        assert!(integrate_backscatter(&scene, &Vector3::z(), 3.0, 0).is_err());
    }

    #[test]
    fn observed_is_albedo_times_factor_plus_scatter() {
        let scene = small_scene();
        let r = render_frame::<f64>(&scene).unwrap();
        for c in 0..3 {
            for i in 0..r.observed.dims().len() {
                let expect = r.albedo.plane(c).data()[i] * r.factor.plane(c).data()[i] + r.scatter.plane(c).data()[i];
                assert_eq!(r.observed.plane(c).data()[i], expect);
            }
        }
    }

    #[test]
    fn footprint_outside_map_rejected() {
        let scene = small_scene();
        let mut renderer = SequenceRenderer::new(&scene, 0);
        let far = Pose::nadir(100.0, 0.0, 3.0);
        assert!(matches!(renderer.render::<f32>(&far, 0), Err(crate::Error::Argument(_))));
    }

    #[test]
    fn contamination_reaches_rate() {
        let mut scene = small_scene();
        scene.contamination.rate = 0.2;
        let r = render_frame::<f32>(&scene).unwrap();
        let frac = r.contaminated.valid_count() as f64 / r.seafloor.valid_count() as f64;
        assert!((0.17..0.3).contains(&frac), "{frac}");
    }
}
