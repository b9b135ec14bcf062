//! Camera and seafloor-plane geometry.

use nalgebra::{Matrix3, Rotation3, Vector3};

use super::scene::{Camera, Pose};

/// Rotation taking camera-frame vectors (x right, y down, z forward) to the
/// world frame (z up, seafloor at `z = 0`).
pub fn world_from_camera(pose: &Pose) -> Matrix3<f64> {
    let looking_down = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    let attitude = Rotation3::from_axis_angle(&Vector3::z_axis(), pose.yaw)
        * Rotation3::from_axis_angle(&Vector3::y_axis(), pose.pitch)
        * Rotation3::from_axis_angle(&Vector3::x_axis(), pose.roll);
    attitude.matrix() * looking_down
}

/// Unit viewing ray through the center of pixel `(x, y)`, camera frame.
pub fn pixel_ray(camera: &Camera, x: usize, y: usize) -> Vector3<f64> {
    let (cx, cy) = camera.principal_point();
    Vector3::new(
        (x as f64 + 0.5 - cx) / camera.focal_px,
        (y as f64 + 0.5 - cy) / camera.focal_px,
        1.0,
    )
    .normalize()
}

/// The seafloor plane seen from the camera: unit normal (pointing up, toward
/// the camera) expressed in the camera frame, and the camera's height.
#[derive(Debug, Clone, Copy)]
pub struct LocalPlane {
    pub normal: Vector3<f64>,
    pub height: f64,
}

impl LocalPlane {
    pub fn new(pose: &Pose) -> Self {
        let r = world_from_camera(pose);
        Self {
            normal: r.transpose() * Vector3::z(),
            height: pose.altitude,
        }
    }

    /// Distance along the unit ray `dir` to the plane, if the ray points
    /// down toward it.
    pub fn hit(&self, dir: &Vector3<f64>) -> Option<f64> {
        let down = -self.normal.dot(dir);
        (down > 1e-12).then(|| self.height / down)
    }

    /// Height of a camera-frame point above the plane.
    pub fn elevation(&self, p: &Vector3<f64>) -> f64 {
        self.height + self.normal.dot(p)
    }
}

/// Homography from image pixel coordinates (pixel centers at integer
/// positions) to seafloor coordinates `(u, v)` in meters.
pub fn ground_homography(camera: &Camera, pose: &Pose) -> Matrix3<f64> {
    let (cx, cy) = camera.principal_point();
    let f = camera.focal_px;
    // Pixel center (x + 0.5) maps to the normalized ray ((x + 0.5 - cx) / f, ...).
    let k_inv = Matrix3::new(
        1.0 / f,
        0.0,
        (0.5 - cx) / f,
        0.0,
        1.0 / f,
        (0.5 - cy) / f,
        0.0,
        0.0,
        1.0,
    );
    let r = world_from_camera(pose);
    // With w = R d, the hit is C + t w where t = -h / w.z, so
    // (u, v, 1) ~ (h w.x - x w.z, h w.y - y w.z, -w.z).
    let h = pose.altitude;
    let project = Matrix3::new(
        h,
        0.0,
        -pose.x,
        0.0,
        h,
        -pose.y,
        0.0,
        0.0,
        -1.0,
    );
    project * r * k_inv
}
