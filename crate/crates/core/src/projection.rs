//! Culling and EWA projection of 3D Gaussians onto the image plane.

use crate::math::{self, Mat3, Vec3};
use crate::model::Camera;

/// Gaussians closer than this (camera-space z) are culled.
pub const NEAR_CULL: f32 = 0.2;
/// Minimum activated opacity to survive culling.
pub const MIN_OPACITY: f32 = 1.0 / 255.0;
/// Low-pass filter added to the diagonal of every projected covariance.
pub const COV2D_DILATION: f32 = 0.3;
/// Screen-space tangent clamp, as a multiple of the half field of view.
const FOV_CLAMP: f32 = 1.3;

/// Symmetric 2×2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2 {
    pub xx: f32,
    pub xy: f32,
    pub yy: f32,
}

impl Sym2 {
    pub fn det(&self) -> f32 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn trace(&self) -> f32 {
        self.xx + self.yy
    }

    /// Adjugate divided by the determinant; `None` when singular.
    pub fn inverse(&self) -> Option<Sym2> {
        let det = self.det();
        if det <= 0.0 || !det.is_finite() {
            return None;
        }
        let inv = 1.0 / det;
        Some(Sym2 {
            xx: self.yy * inv,
            xy: -self.xy * inv,
            yy: self.xx * inv,
        })
    }
}

/// Screen-space projection of one Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedGaussian {
    pub pixel_center: [f32; 2],
    pub depth: f32,
    pub cov2d: Sym2,
    pub conic: Sym2,
    /// `λ1 ≥ λ2`.
    pub eigenvalues: (f32, f32),
}

/// Returns the camera-space position when the Gaussian is in front of the near
/// cull plane and visible enough to matter.
pub fn frustum_cull(mean: Vec3, opacity: f32, cam: &Camera) -> Option<Vec3> {
    let p_view = math::transform_point(&cam.world_to_camera, mean);
    (p_view[2] > NEAR_CULL && opacity > MIN_OPACITY).then_some(p_view)
}

/// Σ = R·S·Sᵀ·Rᵀ.
pub fn compute_cov3d(scales: Vec3, rotation: [f32; 4]) -> Mat3 {
    let r = math::quat_to_mat3(rotation);
    let mut m = r;
    for row in m.iter_mut() {
        for (v, s) in row.iter_mut().zip(scales) {
            *v *= s;
        }
    }
    math::mat3_mul(&m, &math::transpose3(&m))
}

pub fn cov3d_from_upper(u: &[f32; 6]) -> Mat3 {
    [[u[0], u[1], u[2]], [u[1], u[3], u[4]], [u[2], u[4], u[5]]]
}

/// Projects a 3D covariance through the local affine approximation of the
/// perspective map, then adds the low-pass dilation.
pub fn compute_cov2d(p_view: Vec3, cov3d: &Mat3, cam: &Camera) -> Sym2 {
    let limx = FOV_CLAMP * cam.tan_fovx;
    let limy = FOV_CLAMP * cam.tan_fovy;
    let tz = p_view[2];
    let tx = (p_view[0] / tz).clamp(-limx, limx) * tz;
    let ty = (p_view[1] / tz).clamp(-limy, limy) * tz;

    let j = [
        [cam.focal_x / tz, 0.0, -(cam.focal_x * tx) / (tz * tz)],
        [0.0, cam.focal_y / tz, -(cam.focal_y * ty) / (tz * tz)],
        [0.0, 0.0, 0.0],
    ];
    let w = cam.rotation();
    let t = math::mat3_mul(&j, &w);
    let cov = math::mat3_mul(&math::mat3_mul(&t, cov3d), &math::transpose3(&t));
    Sym2 {
        xx: cov[0][0] + COV2D_DILATION,
        xy: cov[0][1],
        yy: cov[1][1] + COV2D_DILATION,
    }
}

/// Eigenvalues of a symmetric 2×2 matrix, larger first.
///
/// Evaluated in `f64`; the smaller root is recovered as `det / λ1` so that it
/// keeps full relative precision for strongly elongated covariances.
pub fn eigenvalues_2x2(m: &Sym2) -> (f32, f32) {
    let (xx, xy, yy) = (m.xx as f64, m.xy as f64, m.yy as f64);
    let mid = 0.5 * (xx + yy);
    let det = xx * yy - xy * xy;
    let disc = (mid * mid - det).max(0.0).sqrt();
    let l1 = mid + disc;
    let l2 = if l1 > 0.0 { det / l1 } else { mid - disc };
    (l1 as f32, l2 as f32)
}

/// Homogeneous clip coordinates to pixel coordinates.
pub fn ndc2pix(p_hom: [f32; 4], cam: &Camera) -> [f32; 2] {
    let w = p_hom[3];
    let inv_w = if w.abs() > 1e-7 { 1.0 / w } else { 1e7f32.copysign(w) };
    let ndc = [p_hom[0] * inv_w, p_hom[1] * inv_w];
    [
        ((ndc[0] + 1.0) * cam.width as f32 - 1.0) * 0.5,
        ((ndc[1] + 1.0) * cam.height as f32 - 1.0) * 0.5,
    ]
}

/// Full projection of a Gaussian that already passed [`frustum_cull`].
///
/// Returns `None` for a degenerate (non positive-definite) screen covariance.
pub fn project(mean: Vec3, p_view: Vec3, cov3d: &Mat3, cam: &Camera) -> Option<ProjectedGaussian> {
    let cov2d = compute_cov2d(p_view, cov3d, cam);
    let conic = cov2d.inverse()?;
    let p_hom = math::transform_homogeneous(&cam.full_projection, mean);
    Some(ProjectedGaussian {
        pixel_center: ndc2pix(p_hom, cam),
        depth: p_view[2],
        cov2d,
        conic,
        eigenvalues: eigenvalues_2x2(&cov2d),
    })
}
