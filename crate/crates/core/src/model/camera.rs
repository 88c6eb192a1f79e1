use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, Mat3, Mat4, Vec3};

pub const DEFAULT_NEAR: f32 = 0.01;
pub const DEFAULT_FAR: f32 = 100.0;

/// Minimum image side in pixels.
const MIN_SIDE: u32 = 16;
/// Tolerance for accepting a world→camera rotation from a file.
const LOAD_ORTHONORMAL_TOL: f32 = 1e-3;

/// Pinhole camera with OpenCV axes: x right, y down, z forward.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub world_to_camera: Mat4,
    pub full_projection: Mat4,
    pub tan_fovx: f32,
    pub tan_fovy: f32,
    pub focal_x: f32,
    pub focal_y: f32,
    pub position: Vec3,
    pub near: f32,
    pub far: f32,
}

/// One entry of the camera JSON array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub id: serde_json::Value,
    pub width: u32,
    pub height: u32,
    pub position: [f32; 3],
    /// Row-major world→camera rotation.
    pub rotation: [f32; 9],
    pub fx: f32,
    pub fy: f32,
}

fn perspective(near: f32, far: f32, tan_fovx: f32, tan_fovy: f32) -> Mat4 {
    let top = tan_fovy * near;
    let right = tan_fovx * near;
    let (bottom, left) = (-top, -right);
    let mut p = [[0.0f32; 4]; 4];
    p[0][0] = 2.0 * near / (right - left);
    p[1][1] = 2.0 * near / (top - bottom);
    p[0][2] = (right + left) / (right - left);
    p[1][2] = (top + bottom) / (top - bottom);
    p[3][2] = 1.0;
    p[2][2] = far / (far - near);
    p[2][3] = -(far * near) / (far - near);
    p
}

impl Camera {
    /// Builds a camera from a world→camera rotation, center and focal lengths.
    pub fn new(
        id: impl Into<String>,
        width: u32,
        height: u32,
        rotation: Mat3,
        position: Vec3,
        focal_x: f32,
        focal_y: f32,
    ) -> Result<Self> {
        Self::with_planes(id, width, height, rotation, position, focal_x, focal_y, DEFAULT_NEAR, DEFAULT_FAR)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_planes(
        id: impl Into<String>,
        width: u32,
        height: u32,
        rotation: Mat3,
        position: Vec3,
        focal_x: f32,
        focal_y: f32,
        near: f32,
        far: f32,
    ) -> Result<Self> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(Error::CameraValidation(format!(
                "image size {width}x{height} is below the {MIN_SIDE}x{MIN_SIDE} minimum"
            )));
        }
        if !(focal_x > 0.0 && focal_y > 0.0 && focal_x.is_finite() && focal_y.is_finite()) {
            return Err(Error::CameraValidation(format!(
                "focal lengths must be positive, got ({focal_x}, {focal_y})"
            )));
        }
        if !(near > 0.0 && far > near) {
            return Err(Error::CameraValidation(format!(
                "invalid clip planes near={near} far={far}"
            )));
        }
        if rotation.iter().flatten().chain(&position).any(|v| !v.is_finite()) {
            return Err(Error::CameraValidation("non-finite pose".into()));
        }
        let t = math::mat3_vec(&rotation, position).map(|v| -v);
        let mut view = [[0.0f32; 4]; 4];
        for i in 0..3 {
            view[i][..3].copy_from_slice(&rotation[i]);
            view[i][3] = t[i];
        }
        view[3][3] = 1.0;

        let tan_fovx = width as f32 / (2.0 * focal_x);
        let tan_fovy = height as f32 / (2.0 * focal_y);
        let proj = perspective(near, far, tan_fovx, tan_fovy);
        Ok(Self {
            id: id.into(),
            width,
            height,
            world_to_camera: view,
            full_projection: math::mat4_mul(&proj, &view),
            tan_fovx,
            tan_fovy,
            focal_x,
            focal_y,
            position,
            near,
            far,
        })
    }

    /// Camera at `position` looking at `target`, square pixels, vertical field of view in degrees.
    pub fn look_at(
        id: impl Into<String>,
        width: u32,
        height: u32,
        position: Vec3,
        target: Vec3,
        fov_y_deg: f32,
    ) -> Result<Self> {
        let forward = math::normalize(math::sub(target, position));
        let mut right = math::cross([0.0, 1.0, 0.0], forward);
        if math::norm(right) < 1e-6 {
            right = [1.0, 0.0, 0.0];
        }
        let right = math::normalize(right);
        let down = math::cross(forward, right);
        let focal = height as f32 / (2.0 * (fov_y_deg.to_radians() * 0.5).tan());
        Self::new(id, width, height, [right, down, forward], position, focal, focal)
    }

    pub fn rotation(&self) -> Mat3 {
        math::rotation_block(&self.world_to_camera)
    }

    /// Same pose at a new resolution; focal lengths scale linearly with the image size.
    pub fn with_resolution(&self, width: u32, height: u32) -> Result<Self> {
        let fx = self.focal_x * width as f32 / self.width as f32;
        let fy = self.focal_y * height as f32 / self.height as f32;
        Self::with_planes(
            self.id.clone(),
            width,
            height,
            self.rotation(),
            self.position,
            fx,
            fy,
            self.near,
            self.far,
        )
    }

    pub fn with_clip_planes(&self, near: f32, far: f32) -> Result<Self> {
        Self::with_planes(
            self.id.clone(),
            self.width,
            self.height,
            self.rotation(),
            self.position,
            self.focal_x,
            self.focal_y,
            near,
            far,
        )
    }

    pub fn tile_grid(&self) -> crate::extent::TileGrid {
        crate::extent::TileGrid::new(self.width, self.height)
    }

    pub fn from_record(rec: &CameraRecord) -> Result<Self> {
        let r = &rec.rotation;
        let rotation = [[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]];
        let err = math::orthonormality_error(&rotation);
        if err.is_nan() || err > LOAD_ORTHONORMAL_TOL {
            return Err(Error::CameraValidation(format!(
                "camera {}: rotation deviates from orthonormal by {err:.3e}",
                rec.id
            )));
        }
        let id = match &rec.id {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        Self::new(id, rec.width, rec.height, rotation, rec.position, rec.fx, rec.fy)
    }

    pub fn to_record(&self) -> CameraRecord {
        let r = self.rotation();
        let id = match self.id.parse::<i64>() {
            Ok(n) => serde_json::Value::from(n),
            Err(_) => serde_json::Value::from(self.id.clone()),
        };
        CameraRecord {
            id,
            width: self.width,
            height: self.height,
            position: self.position,
            rotation: [
                r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
            ],
            fx: self.focal_x,
            fy: self.focal_y,
        }
    }
}

pub fn parse_cameras(json: &str) -> Result<Vec<Camera>> {
    let value: serde_json::Value =
        serde_json::from_str(json).map_err(|e| Error::CameraSchema(e.to_string()))?;
    let serde_json::Value::Array(entries) = value else {
        return Err(Error::CameraSchema("top-level value must be an array".into()));
    };
    entries
        .into_iter()
        .enumerate()
        .map(|(i, entry)| {
            let rec: CameraRecord = serde_json::from_value(entry)
                .map_err(|e| Error::CameraSchema(format!("entry {i}: {e}")))?;
            Camera::from_record(&rec)
        })
        .collect()
}

pub fn load_cameras(path: impl AsRef<Path>) -> Result<Vec<Camera>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cameras(&text)
}

pub fn save_cameras(cameras: &[Camera], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let records: Vec<CameraRecord> = cameras.iter().map(Camera::to_record).collect();
    let text = serde_json::to_string_pretty(&records).expect("camera records serialize");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
