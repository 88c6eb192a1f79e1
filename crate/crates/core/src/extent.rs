//! Screen-space extents of projected Gaussians and their tile footprints.
//!
//! A splat's footprint is the ellipse `Δxᵀ·conic·Δx ≤ k`. The cutoff `k` is
//! the squared Mahalanobis radius at which the splat's opacity decays to the
//! visibility threshold `τ`, capped at the three-sigma value 9.

use crate::projection::Sym2;

pub const TILE_SIZE: u32 = 16;
/// Default visibility threshold: one 8-bit quantization step.
pub const DEFAULT_TAU: f32 = 1.0 / 255.0;
/// Three-sigma cutoff in squared Mahalanobis units.
pub const THREE_SIGMA_CUTOFF: f32 = 9.0;

/// Squared Mahalanobis cutoff `k`; the footprint boundary is `Δxᵀ·conic·Δx = k`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ExtentCutoff(pub f32);

impl ExtentCutoff {
    pub const THREE_SIGMA: ExtentCutoff = ExtentCutoff(THREE_SIGMA_CUTOFF);

    pub fn k(self) -> f32 {
        self.0
    }

    /// Radius along a principal axis with variance `lambda`.
    pub fn radius(self, lambda: f32) -> f32 {
        (self.0 * lambda).sqrt()
    }
}

/// Opacity-aware cutoff: `None` when the splat can never reach `tau`.
pub fn power_cutoff(opacity: f32, tau: f32) -> Option<ExtentCutoff> {
    if opacity <= tau {
        return None;
    }
    let k = 2.0 * (opacity as f64 / tau as f64).ln();
    if k >= THREE_SIGMA_CUTOFF as f64 {
        return Some(ExtentCutoff::THREE_SIGMA);
    }
    // Below the crossover the cutoff stays strictly under the three-sigma cap
    // even where rounding to f32 would reach it.
    Some(ExtentCutoff((k as f32).min(THREE_SIGMA_CUTOFF.next_down())))
}

/// Axis-aligned rectangle in pixel coordinates, closed on both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelRect {
    pub min: [f32; 2],
    pub max: [f32; 2],
}

impl PixelRect {
    pub fn around(center: [f32; 2], half: [f32; 2]) -> Self {
        Self {
            min: [center[0] - half[0], center[1] - half[1]],
            max: [center[0] + half[0], center[1] + half[1]],
        }
    }

    pub fn contains(&self, p: [f32; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

/// Exact bounding box of the ellipse `Δxᵀ·cov2d⁻¹·Δx = k`.
pub fn tight_aabb(center: [f32; 2], cov2d: &Sym2, cutoff: ExtentCutoff) -> PixelRect {
    let k = cutoff.k();
    PixelRect::around(center, [(k * cov2d.xx).sqrt(), (k * cov2d.yy).sqrt()])
}

/// Integer three-sigma radius of the circle enclosing the ellipse.
pub fn baseline_radius(lambda_max: f32) -> f32 {
    (3.0 * lambda_max.max(0.0).sqrt()).ceil()
}

/// Square box of the enclosing circle used by the reference rasterizer.
pub fn baseline_aabb(center: [f32; 2], lambda_max: f32) -> PixelRect {
    let r = baseline_radius(lambda_max);
    PixelRect::around(center, [r, r])
}

/// Tile grid covering a `width × height` image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileGrid {
    pub width: u32,
    pub height: u32,
    pub tiles_x: u32,
    pub tiles_y: u32,
}

impl TileGrid {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            tiles_x: width.div_ceil(TILE_SIZE),
            tiles_y: height.div_ceil(TILE_SIZE),
        }
    }

    pub fn tile_count(&self) -> u32 {
        self.tiles_x * self.tiles_y
    }

    pub fn tile_index(&self, tx: u32, ty: u32) -> u32 {
        ty * self.tiles_x + tx
    }

    pub fn tile_coords(&self, index: u32) -> (u32, u32) {
        (index % self.tiles_x, index / self.tiles_x)
    }

    /// Closed pixel-space square covered by a tile.
    pub fn tile_rect(&self, tx: u32, ty: u32) -> PixelRect {
        let x0 = (tx * TILE_SIZE) as f32;
        let y0 = (ty * TILE_SIZE) as f32;
        PixelRect {
            min: [x0, y0],
            max: [x0 + TILE_SIZE as f32, y0 + TILE_SIZE as f32],
        }
    }
}

/// Inclusive range of tile coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileRect {
    pub min: [u32; 2],
    pub max: [u32; 2],
}

impl TileRect {
    pub fn width(&self) -> u32 {
        self.max[0] - self.min[0] + 1
    }

    pub fn height(&self) -> u32 {
        self.max[1] - self.min[1] + 1
    }

    pub fn count(&self) -> u32 {
        self.width() * self.height()
    }

    pub fn is_single(&self) -> bool {
        self.min == self.max
    }

    /// Tile coordinates of the `i`-th tile in row-major order.
    pub fn nth(&self, i: u32) -> (u32, u32) {
        let w = self.width();
        (self.min[0] + i % w, self.min[1] + i / w)
    }

    pub fn intersect(&self, other: &TileRect) -> Option<TileRect> {
        let min = [self.min[0].max(other.min[0]), self.min[1].max(other.min[1])];
        let max = [self.max[0].min(other.max[0]), self.max[1].min(other.max[1])];
        (min[0] <= max[0] && min[1] <= max[1]).then_some(TileRect { min, max })
    }

    pub fn contains(&self, tx: u32, ty: u32) -> bool {
        tx >= self.min[0] && tx <= self.max[0] && ty >= self.min[1] && ty <= self.max[1]
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (self.min[1]..=self.max[1]).flat_map(move |y| (self.min[0]..=self.max[0]).map(move |x| (x, y)))
    }
}

/// Tiles overlapped by a pixel rectangle, clamped to the grid.
pub fn tile_range(rect: &PixelRect, grid: &TileGrid) -> Option<TileRect> {
    let ts = TILE_SIZE as f32;
    let lo = [(rect.min[0] / ts).floor(), (rect.min[1] / ts).floor()];
    let hi = [(rect.max[0] / ts).floor(), (rect.max[1] / ts).floor()];
    let limit = [grid.tiles_x as f32 - 1.0, grid.tiles_y as f32 - 1.0];
    // NaN extents fail every comparison below and yield an empty range.
    for axis in 0..2 {
        if !(hi[axis] >= 0.0 && lo[axis] <= limit[axis] && lo[axis] <= hi[axis]) {
            return None;
        }
    }
    let clamp = |v: f32, axis: usize| v.clamp(0.0, limit[axis]) as u32;
    Some(TileRect {
        min: [clamp(lo[0], 0), clamp(lo[1], 1)],
        max: [clamp(hi[0], 0), clamp(hi[1], 1)],
    })
}
