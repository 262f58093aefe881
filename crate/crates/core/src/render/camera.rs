//! Pinhole camera: world-from-camera rigid pose plus intrinsics.
//!
//! Camera frame: x right, y up, z forward (right-handed). Pixel (ix, iy)
//! has its center at image-plane coordinate (ix+0.5, iy+0.5) with row 0 at
//! the top, so world y decreases as iy grows.

use crate::error::{Error, Result};
use crate::math::{Matrix3, Vec3};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    /// Rotation part of world-from-camera (columns = camera axes in world).
    pub rotation: Matrix3<f64>,
    /// Camera origin in world coordinates.
    pub translation: Vec3,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Config(format!("focal lengths must be positive: {} {}", self.fx, self.fy)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("camera image size must be nonzero".into()));
        }
        let rtr = self.rotation.transpose() * self.rotation;
        if (rtr - Matrix3::identity()).norm() > 1e-6 {
            return Err(Error::Config("camera rotation must be orthonormal".into()));
        }
        if (self.rotation.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::Config("camera rotation must have determinant +1".into()));
        }
        Ok(())
    }

    /// World-space ray through an image-plane point (pixel units).
    /// For the pixel grid use `ray_through_pixel`.
    pub fn ray(&self, u: f64, v: f64) -> (Vec3, Vec3) {
        let dir_cam = Vec3::new((u - self.cx) / self.fx, (self.cy - v) / self.fy, 1.0);
        let dir = (self.rotation * dir_cam).normalize();
        (self.translation, dir)
    }

    /// Ray through the center of pixel (ix, iy).
    pub fn ray_through_pixel(&self, ix: usize, iy: usize) -> (Vec3, Vec3) {
        self.ray(ix as f64 + 0.5, iy as f64 + 0.5)
    }

    /// World point at ray-parameter `t` along the pixel-center ray.
    pub fn unproject(&self, ix: usize, iy: usize, t: f64) -> Vec3 {
        let (o, d) = self.ray_through_pixel(ix, iy);
        o + d * t
    }

    /// Per-pixel (origin, direction), row-major.
    pub fn generate_rays(&self) -> Result<Vec<(Vec3, Vec3)>> {
        self.validate()?;
        let mut rays = Vec::with_capacity(self.width * self.height);
        for iy in 0..self.height {
            for ix in 0..self.width {
                rays.push(self.ray_through_pixel(ix, iy));
            }
        }
        Ok(rays)
    }

    /// Camera at `eye` looking at `target`, square pixels, vertical fov.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up_hint: Vec3,
        fov_y_deg: f64,
        width: usize,
        height: usize,
    ) -> Camera {
        let forward = (target - eye).normalize();
        let right = up_hint.cross(&forward).normalize();
        let up = forward.cross(&right);
        let rotation = Matrix3::from_columns(&[right, up, forward]);
        let fy = height as f64 / (2.0 * (fov_y_deg.to_radians() / 2.0).tan());
        Camera {
            rotation,
            translation: eye,
            fx: fy,
            fy,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }
}

/// Serialized camera: 3x4 world-from-camera [R|t] plus intrinsics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraJson {
    pub world_from_camera: [[f64; 4]; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl From<&Camera> for CameraJson {
    fn from(c: &Camera) -> Self {
        let mut m = [[0.0; 4]; 3];
        for r in 0..3 {
            for col in 0..3 {
                m[r][col] = c.rotation[(r, col)];
            }
            m[r][3] = c.translation[r];
        }
        CameraJson {
            world_from_camera: m,
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
        }
    }
}

impl TryFrom<&CameraJson> for Camera {
    type Error = Error;
    fn try_from(j: &CameraJson) -> Result<Camera> {
        let m = &j.world_from_camera;
        let rotation = Matrix3::new(
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        );
        let cam = Camera {
            rotation,
            translation: Vec3::new(m[0][3], m[1][3], m[2][3]),
            fx: j.fx,
            fy: j.fy,
            cx: j.cx,
            cy: j.cy,
            width: j.width,
            height: j.height,
        };
        cam.validate()?;
        Ok(cam)
    }
}

pub fn write_cameras_json(cams: &[Camera], path: &Path) -> Result<()> {
    let views: Vec<CameraJson> = cams.iter().map(CameraJson::from).collect();
    let body = serde_json::json!({ "views": views });
    std::fs::write(path, serde_json::to_string_pretty(&body).unwrap())
        .map_err(|e| Error::io(path, e))
}

pub fn read_cameras_json(path: &Path) -> Result<Vec<Camera>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    #[derive(Deserialize)]
    struct Body {
        views: Vec<CameraJson>,
    }
    let body: Body =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    body.views.iter().map(Camera::try_from).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn identity_cam(w: usize, h: usize) -> Camera {
        Camera {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
            fx: 50.0,
            fy: 50.0,
            cx: w as f64 / 2.0,
            cy: h as f64 / 2.0,
            width: w,
            height: h,
        }
    }

    #[test]
    fn center_pixel_points_forward() {
        let cam = identity_cam(5, 5);
        let (o, d) = cam.ray_through_pixel(2, 2);
        assert_eq!(o, Vec3::zeros());
        assert_relative_eq!(d.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(d.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(d.z, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn translation_shifts_origins_not_directions() {
        let mut cam = identity_cam(8, 6);
        let (_, d0) = cam.ray_through_pixel(1, 4);
        cam.translation = Vec3::new(3.0, -1.0, 2.0);
        let (o1, d1) = cam.ray_through_pixel(1, 4);
        assert_eq!(o1, Vec3::new(3.0, -1.0, 2.0));
        assert_relative_eq!((d0 - d1).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn corner_pixel_matches_pinhole_unprojection() {
        let cam = identity_cam(8, 6);
        let (_, d) = cam.ray_through_pixel(0, 0);
        // closed-form unprojection of the corner pixel center (0.5, 0.5)
        let expect = Vec3::new(
            (0.5 - 4.0) / 50.0,
            (3.0 - 0.5) / 50.0,
            1.0,
        )
        .normalize();
        assert_relative_eq!((d - expect).norm(), 0.0, epsilon = 1e-12);
        // top row looks upward in world (+y)
        assert!(d.y > 0.0);
    }

    #[test]
    fn degenerate_intrinsics_rejected() {
        let mut cam = identity_cam(4, 4);
        cam.fx = 0.0;
        assert!(cam.generate_rays().is_err());
    }

    #[test]
    fn look_at_faces_the_target() {
        let eye = Vec3::new(0.0, 1.0, -3.0);
        let cam = Camera::look_at(eye, Vec3::zeros(), Vec3::new(0.0, 1.0, 0.0), 45.0, 9, 9);
        cam.validate().unwrap();
        let (o, d) = cam.ray_through_pixel(4, 4);
        let to_target = (Vec3::zeros() - o).normalize();
        assert_relative_eq!((d - to_target).norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn cameras_json_round_trip() {
        let cams = vec![
            Camera::look_at(
                Vec3::new(2.0, 1.0, -2.0),
                Vec3::zeros(),
                Vec3::new(0.0, 1.0, 0.0),
                50.0,
                64,
                48,
            ),
            Camera::look_at(
                Vec3::new(-1.0, 2.5, 2.0),
                Vec3::new(0.1, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                40.0,
                32,
                32,
            ),
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cameras.json");
        write_cameras_json(&cams, &p).unwrap();
        let back = read_cameras_json(&p).unwrap();
        assert_eq!(cams.len(), back.len());
        for (a, b) in cams.iter().zip(&back) {
            assert!((a.rotation - b.rotation).norm() < 1e-7);
            assert!((a.translation - b.translation).norm() < 1e-7);
            assert_eq!(a.width, b.width);
        }
    }
}
