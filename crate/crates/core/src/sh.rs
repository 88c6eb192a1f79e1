//! View-dependent color from real spherical harmonics, up to degree 3.
//!
//! Coefficients are stored channel-major after the three DC terms: the
//! coefficient of basis function `j ≥ 1` for channel `c` is `sh[3 + 15·c + j − 1]`.

use crate::math::{self, Vec3};
use crate::model::SH_COEFFS;

pub const MAX_SH_DEGREE: u8 = 3;
pub const BASIS_COUNT: usize = 16;

const C0: f32 = 0.282_094_8;
const C1: f32 = 0.488_602_5;
const C2: [f32; 5] = [1.092_548_4, -1.092_548_4, 0.315_391_57, -1.092_548_4, 0.546_274_2];
const C3: [f32; 7] = [
    -0.590_043_6,
    2.890_611_4,
    -0.457_045_8,
    0.373_176_33,
    -0.457_045_8,
    1.445_305_7,
    -0.590_043_6,
];

/// Number of basis functions used by a given degree.
pub fn basis_len(degree: u8) -> usize {
    let d = degree.min(MAX_SH_DEGREE) as usize + 1;
    d * d
}

/// Basis values for a unit direction, entries past `basis_len(degree)` are zero.
pub fn sh_basis(dir: Vec3, degree: u8) -> [f32; BASIS_COUNT] {
    let mut b = [0.0f32; BASIS_COUNT];
    b[0] = C0;
    if degree == 0 {
        return b;
    }
    let [x, y, z] = dir;
    b[1] = -C1 * y;
    b[2] = C1 * z;
    b[3] = -C1 * x;
    if degree == 1 {
        return b;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    b[4] = C2[0] * xy;
    b[5] = C2[1] * yz;
    b[6] = C2[2] * (2.0 * zz - xx - yy);
    b[7] = C2[3] * xz;
    b[8] = C2[4] * (xx - yy);
    if degree == 2 {
        return b;
    }
    b[9] = C3[0] * y * (3.0 * xx - yy);
    b[10] = C3[1] * xy * z;
    b[11] = C3[2] * y * (4.0 * zz - xx - yy);
    b[12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    b[13] = C3[4] * x * (4.0 * zz - xx - yy);
    b[14] = C3[5] * z * (xx - yy);
    b[15] = C3[6] * x * (xx - 3.0 * yy);
    b
}

/// RGB seen from `camera_position`, offset by 0.5 and clamped below at zero.
pub fn eval_sh_color(sh: &[f32; SH_COEFFS], degree: u8, mean: Vec3, camera_position: Vec3) -> [f32; 3] {
    let dir = math::normalize(math::sub(mean, camera_position));
    let basis = sh_basis(dir, degree);
    let n = basis_len(degree);
    let mut rgb = [0.0f32; 3];
    for (c, out) in rgb.iter_mut().enumerate() {
        let mut acc = basis[0] * sh[c];
        for (j, b) in basis.iter().enumerate().take(n).skip(1) {
            acc += b * sh[3 + 15 * c + j - 1];
        }
        *out = (acc + 0.5).max(0.0);
    }
    rgb
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dc_only() {
        let mut sh = [0.0; SH_COEFFS];
        sh[0] = 1.0;
        sh[1] = -0.5;
        sh[2] = -10.0;
        let c = eval_sh_color(&sh, 3, [0.0, 0.0, 1.0], [0.0; 3]);
        assert!((c[0] - (C0 + 0.5)).abs() < 1e-6);
        assert!((c[1] - (0.5 - 0.5 * C0)).abs() < 1e-6);
        assert_eq!(c[2], 0.0);
    }

    #[test]
    fn degree_limits_basis() {
        let mut sh = [0.0; SH_COEFFS];
        // Green channel, basis 2 (the z-aligned linear term).
        sh[3 + 15 + 1] = 1.0;
        let along_z = eval_sh_color(&sh, 1, [0.0, 0.0, 2.0], [0.0; 3]);
        assert!((along_z[1] - (0.5 + C1)).abs() < 1e-6);
        assert_eq!(along_z[0], 0.5);
        assert_eq!(eval_sh_color(&sh, 0, [0.0, 0.0, 2.0], [0.0; 3])[1], 0.5);
        assert_eq!(basis_len(0), 1);
        assert_eq!(basis_len(3), 16);
        assert_eq!(basis_len(9), 16);
    }

    /// Monte Carlo check that the 16 functions are orthonormal on the unit sphere.
    #[test]
    fn basis_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let mut gram = [[0.0f64; BASIS_COUNT]; BASIS_COUNT];
        for _ in 0..n {
            let z: f64 = rng.random_range(-1.0..1.0);
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let r = (1.0 - z * z).sqrt();
            let dir = [(r * phi.cos()) as f32, (r * phi.sin()) as f32, z as f32];
            let b = sh_basis(dir, 3);
            for i in 0..BASIS_COUNT {
                for j in 0..BASIS_COUNT {
                    gram[i][j] += b[i] as f64 * b[j] as f64;
                }
            }
        }
        let area = 4.0 * std::f64::consts::PI / n as f64;
        for (i, row) in gram.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((v * area - expected).abs() < 0.03, "({i},{j}) = {}", v * area);
            }
        }
    }
}
