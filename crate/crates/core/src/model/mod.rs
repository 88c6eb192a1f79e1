//! Trained-model inputs: Gaussians, scenes, cameras and their file formats.

mod camera;
mod ply;
mod synthetic;

pub use camera::{load_cameras, save_cameras, Camera, CameraRecord, DEFAULT_FAR, DEFAULT_NEAR};
pub use ply::{load_ply, read_ply, save_ply, write_ply, PLY_PROPERTY_COUNT, PLY_PROPERTY_NAMES};
pub use synthetic::{gen_synthetic, orbit_cameras, Preset};

use crate::math::Vec3;
use crate::projection::compute_cov3d;

/// Number of spherical-harmonic scalars per Gaussian (16 basis functions × RGB).
pub const SH_COEFFS: usize = 48;

/// One trained splat with raw, pre-activation parameters as stored on disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian3D {
    pub mean: Vec3,
    /// Carried through for lossless round trips; unused by rendering.
    pub normal: Vec3,
    pub log_scale: Vec3,
    /// Quaternion `(w, x, y, z)`, not necessarily normalized.
    pub rotation: [f32; 4],
    pub logit_opacity: f32,
    /// `f_dc_0..2` followed by `f_rest_0..44` (channel-major per the PLY layout).
    pub sh: [f32; SH_COEFFS],
}

impl Default for Gaussian3D {
    fn default() -> Self {
        Self {
            mean: [0.0; 3],
            normal: [0.0; 3],
            log_scale: [0.0; 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            logit_opacity: 0.0,
            sh: [0.0; SH_COEFFS],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivatedGaussian {
    pub mean: Vec3,
    pub opacity: f32,
    pub scales: Vec3,
    pub rotation: [f32; 4],
    pub sh: [f32; SH_COEFFS],
}

/// Applies the sigmoid / exp / normalize activations.
pub fn activate(g: &Gaussian3D) -> ActivatedGaussian {
    let opacity = 1.0 / (1.0 + (-g.logit_opacity).exp());
    let scales = g.log_scale.map(f32::exp);
    let q = g.rotation;
    let len = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let rotation = if len > 0.0 && len.is_finite() {
        q.map(|c| c / len)
    } else {
        [1.0, 0.0, 0.0, 0.0]
    };
    ActivatedGaussian {
        mean: g.mean,
        opacity,
        scales,
        rotation,
        sh: g.sh,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scene {
    pub gaussians: Vec<Gaussian3D>,
}

impl Scene {
    pub fn new(gaussians: Vec<Gaussian3D>) -> Self {
        Self { gaussians }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }
}

/// View-independent per-Gaussian data, computed once per scene.
///
/// Activation and the 3D covariance do not depend on the camera, so they are
/// hoisted out of the per-frame preprocessing pass.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub means: Vec<Vec3>,
    pub opacities: Vec<f32>,
    /// Upper triangle of Σ: `[xx, xy, xz, yy, yz, zz]`.
    pub cov3d: Vec<[f32; 6]>,
    pub sh: Vec<[f32; SH_COEFFS]>,
    pub sh_degree: u8,
}

impl PreparedScene {
    pub fn new(scene: &Scene, sh_degree: u8) -> Self {
        let n = scene.len();
        let mut out = Self {
            means: Vec::with_capacity(n),
            opacities: Vec::with_capacity(n),
            cov3d: Vec::with_capacity(n),
            sh: Vec::with_capacity(n),
            sh_degree: sh_degree.min(3),
        };
        for g in &scene.gaussians {
            let a = activate(g);
            let s = compute_cov3d(a.scales, a.rotation);
            out.means.push(a.mean);
            out.opacities.push(a.opacity);
            out.cov3d
                .push([s[0][0], s[0][1], s[0][2], s[1][1], s[1][2], s[2][2]]);
            out.sh.push(a.sh);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
}
