//! Deterministic synthetic scenes for tests and benchmarks.
//!
//! Gaussian means are uniform in the cube `[-1, 1]³`; [`orbit_cameras`] produces
//! views that frame that cube. Activated opacities are drawn so that about 70%
//! fall in `[0.02, 0.35]`, the low-opacity regime where the opacity-aware
//! extent is smaller than the three-sigma box.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Camera, Gaussian3D, Scene, SH_COEFFS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Needle-shaped Gaussians, axis ratio between 10:1 and 25:1.
    Elongated,
    Isotropic,
    /// Each Gaussian picks elongated or isotropic with equal probability.
    Mixed,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Elongated, Preset::Isotropic, Preset::Mixed];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Elongated => "elongated",
            Preset::Isotropic => "isotropic",
            Preset::Mixed => "mixed",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown preset {s:?}")))
    }
}

const LOW_OPACITY_FRACTION: f64 = 0.7;
const LOW_OPACITY: (f32, f32) = (0.02, 0.35);
const HIGH_OPACITY: (f32, f32) = (0.35, 0.99);
const ISO_SCALE: (f32, f32) = (0.01, 0.06);
const ELONGATED_MAJOR: (f32, f32) = (0.04, 0.2);
const ELONGATED_RATIO: (f32, f32) = (10.0, 25.0);

fn log_uniform(rng: &mut impl Rng, (lo, hi): (f32, f32)) -> f32 {
    rng.random_range(lo.ln()..hi.ln())
}

/// Uniformly distributed unit quaternion (Shoemake's method).
fn random_rotation(rng: &mut impl Rng) -> [f32; 4] {
    let u1: f32 = rng.random();
    let u2: f32 = rng.random_range(0.0..std::f32::consts::TAU);
    let u3: f32 = rng.random_range(0.0..std::f32::consts::TAU);
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    [a * u2.sin(), a * u2.cos(), b * u3.sin(), b * u3.cos()]
}

fn random_gaussian(rng: &mut impl Rng, elongated: bool) -> Gaussian3D {
    let mean = [
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    ];
    let log_scale = if elongated {
        let major = log_uniform(rng, ELONGATED_MAJOR);
        let r1 = rng.random_range(ELONGATED_RATIO.0..ELONGATED_RATIO.1).ln();
        let r2 = rng.random_range(ELONGATED_RATIO.0..ELONGATED_RATIO.1).ln();
        [major, major - r1, major - r2]
    } else {
        let s = log_uniform(rng, ISO_SCALE);
        [s, s, s]
    };
    let opacity = if rng.random_bool(LOW_OPACITY_FRACTION) {
        rng.random_range(LOW_OPACITY.0..LOW_OPACITY.1)
    } else {
        rng.random_range(HIGH_OPACITY.0..HIGH_OPACITY.1)
    };
    let mut sh = [0.0f32; SH_COEFFS];
    for (i, c) in sh.iter_mut().enumerate() {
        *c = if i < 3 {
            rng.random_range(-1.5..1.5)
        } else {
            rng.random_range(-0.15..0.15)
        };
    }
    Gaussian3D {
        mean,
        normal: [0.0; 3],
        log_scale,
        rotation: random_rotation(rng),
        logit_opacity: (opacity / (1.0 - opacity)).ln(),
        sh,
    }
}

pub fn gen_synthetic(preset: Preset, count: usize, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussians = (0..count)
        .map(|_| {
            let elongated = match preset {
                Preset::Elongated => true,
                Preset::Isotropic => false,
                Preset::Mixed => rng.random_bool(0.5),
            };
            random_gaussian(&mut rng, elongated)
        })
        .collect();
    Scene::new(gaussians)
}

/// `count` cameras on a circle of `radius` around the origin, slightly above the
/// equator, each looking at the origin with a 60° vertical field of view.
pub fn orbit_cameras(count: usize, width: u32, height: u32, radius: f32) -> Result<Vec<Camera>> {
    (0..count)
        .map(|i| {
            let theta = std::f32::consts::TAU * i as f32 / count.max(1) as f32 + 0.3;
            let elevation = -0.25 * radius;
            let position = [radius * theta.sin(), elevation, -radius * theta.cos()];
            Camera::look_at(i.to_string(), width, height, position, [0.0; 3], 60.0)
        })
        .collect()
}
