//! Exact ellipse–tile intersection.
//!
//! An ellipse meets a rectangle iff its center lies inside, or one of the
//! rectangle's edges overlaps the chord the ellipse cuts from that edge's
//! line. The chord endpoints are the roots of a quadratic; comparing them
//! against the edge endpoints is rearranged so that no square root or division
//! is evaluated.

use crate::extent::{ExtentCutoff, PixelRect};
use crate::projection::Sym2;

/// Inverse screen covariance `[[a, b], [b, c]]`; the squared Mahalanobis
/// distance of an offset `d` is `a·dx² + 2b·dx·dy + c·dy²`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Conic2D {
    pub a: f32,
    pub b: f32,
    pub c: f32,
}

impl Conic2D {
    pub fn is_positive_definite(&self) -> bool {
        self.a > 0.0 && self.c > 0.0 && self.a * self.c - self.b * self.b > 0.0
    }

    #[inline]
    pub fn mahalanobis_sq(&self, dx: f32, dy: f32) -> f32 {
        self.a * dx * dx + 2.0 * self.b * dx * dy + self.c * dy * dy
    }
}

impl From<Sym2> for Conic2D {
    fn from(m: Sym2) -> Self {
        Conic2D {
            a: m.xx,
            b: m.xy,
            c: m.yy,
        }
    }
}

/// Whether the root interval of `A·X² + B·X + C = 0` (with `A > 0`) overlaps
/// `[lo, hi]`. Tangency counts as overlap.
#[inline]
pub fn chord_overlaps_segment(a: f64, b: f64, c: f64, lo: f64, hi: f64) -> bool {
    let delta = b * b - 4.0 * a * c;
    if delta < 0.0 {
        return false;
    }
    let e1 = 2.0 * a * lo + b;
    let e2 = 2.0 * a * hi + b;
    (e1 <= 0.0 || e1 * e1 <= delta) && (e2 >= 0.0 || e2 * e2 <= delta)
}

/// Whether the footprint ellipse `Δxᵀ·conic·Δx ≤ k` around `center` touches `tile`.
pub fn tile_intersects_ellipse(
    tile: &PixelRect,
    center: [f32; 2],
    conic: &Conic2D,
    cutoff: ExtentCutoff,
) -> bool {
    if tile.contains(center) {
        return true;
    }
    // Evaluated in f64: the discriminant of f32 inputs is then exact, so
    // near-tangent edges cannot flip sign.
    let k = cutoff.k() as f64;
    let (ca, cb, cc) = (conic.a as f64, conic.b as f64, conic.c as f64);
    let (cx, cy) = (center[0] as f64, center[1] as f64);
    let x0 = tile.min[0] as f64 - cx;
    let x1 = tile.max[0] as f64 - cx;
    let y0 = tile.min[1] as f64 - cy;
    let y1 = tile.max[1] as f64 - cy;

    // Horizontal edges y = const: quadratic in dx.
    for dy in [y0, y1] {
        if chord_overlaps_segment(ca, 2.0 * cb * dy, cc * dy * dy - k, x0, x1) {
            return true;
        }
    }
    // Vertical edges x = const: quadratic in dy.
    for dx in [x0, x1] {
        if chord_overlaps_segment(cc, 2.0 * cb * dx, ca * dx * dx - k, y0, y1) {
            return true;
        }
    }
    false
}

/// Brute-force references for testing the predicates above.
///
/// Nothing in the rendering pipeline calls into this module.
pub mod oracle {
    use super::Conic2D;
    use crate::extent::{ExtentCutoff, PixelRect};

    /// Root-interval overlap evaluated with explicit square root and division, in `f64`.
    pub fn chord_overlaps_segment_direct(a: f64, b: f64, c: f64, lo: f64, hi: f64) -> bool {
        let delta = b * b - 4.0 * a * c;
        if delta < 0.0 {
            return false;
        }
        let s = delta.sqrt();
        let r_lo = (-b - s) / (2.0 * a);
        let r_hi = (-b + s) / (2.0 * a);
        lo <= r_hi && hi >= r_lo
    }

    /// Dense sampling of the tile (edges and corners included) at
    /// `resolution × resolution` points.
    pub fn oracle_intersects(
        tile: &PixelRect,
        center: [f32; 2],
        conic: &Conic2D,
        cutoff: ExtentCutoff,
        resolution: usize,
    ) -> bool {
        assert!(resolution >= 64, "oracle resolution must be at least 64");
        let (cx, cy) = (center[0] as f64, center[1] as f64);
        let (a, b, c) = (conic.a as f64, conic.b as f64, conic.c as f64);
        let k = cutoff.k() as f64;
        if tile.contains(center) {
            return true;
        }
        let step = |lo: f32, hi: f32, i: usize| {
            lo as f64 + (hi as f64 - lo as f64) * i as f64 / (resolution - 1) as f64
        };
        for j in 0..resolution {
            let dy = step(tile.min[1], tile.max[1], j) - cy;
            for i in 0..resolution {
                let dx = step(tile.min[0], tile.max[0], i) - cx;
                if a * dx * dx + 2.0 * b * dx * dy + c * dy * dy <= k {
                    return true;
                }
            }
        }
        false
    }

    /// Exact minimum of the quadratic form over the closed rectangle, in `f64`.
    pub fn min_mahalanobis_sq(tile: &PixelRect, center: [f32; 2], conic: &Conic2D) -> f64 {
        if tile.contains(center) {
            return 0.0;
        }
        let (a, b, c) = (conic.a as f64, conic.b as f64, conic.c as f64);
        let x0 = tile.min[0] as f64 - center[0] as f64;
        let x1 = tile.max[0] as f64 - center[0] as f64;
        let y0 = tile.min[1] as f64 - center[1] as f64;
        let y1 = tile.max[1] as f64 - center[1] as f64;
        let q = |dx: f64, dy: f64| a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
        let mut best = f64::INFINITY;
        // Center outside a convex set: the minimum of a convex form lies on the boundary.
        for dy in [y0, y1] {
            let t = (-b * dy / a).clamp(x0, x1);
            best = best.min(q(t, dy));
        }
        for dx in [x0, x1] {
            let t = (-b * dx / c).clamp(y0, y1);
            best = best.min(q(dx, t));
        }
        best
    }
}
