//! Front-to-back alpha compositing of depth-sorted splats, one tile at a time.

use std::ops::Range;

use rayon::prelude::*;

use crate::binning::Splat2D;
use crate::extent::{TileGrid, TILE_SIZE};

pub const TILE_PIXELS: usize = (TILE_SIZE * TILE_SIZE) as usize;
pub const MAX_ALPHA: f32 = 0.99;
/// A pixel stops compositing once its transmittance falls below this.
pub const MIN_TRANSMITTANCE: f32 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderParams {
    pub tau: f32,
    pub background: [f32; 3],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Framebuffer {
    pub width: u32,
    pub height: u32,
    /// Row-major linear RGB.
    pub pixels: Vec<[f32; 3]>,
}

impl Framebuffer {
    pub fn new(width: u32, height: u32) -> Self {
        Framebuffer {
            width,
            height,
            pixels: vec![[0.0; 3]; width as usize * height as usize],
        }
    }

    pub fn resize(&mut self, width: u32, height: u32) {
        self.width = width;
        self.height = height;
        self.pixels.clear();
        self.pixels.resize(width as usize * height as usize, [0.0; 3]);
    }

    pub fn get(&self, x: u32, y: u32) -> [f32; 3] {
        self.pixels[(y * self.width + x) as usize]
    }

    /// 8-bit RGB, each channel clamped to `[0, 1]` and rounded half away from zero.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .flat_map(|p| p.map(quantize))
            .collect()
    }
}

#[inline]
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Blend weight of `splat` at the center of pixel `(px, py)`, or `None` when
/// the pixel lies outside the splat's footprint or the weight is below `tau`.
#[inline]
pub fn blend_alpha(splat: &Splat2D, px: u32, py: u32, tau: f32) -> Option<f32> {
    let dx = px as f32 + 0.5 - splat.center[0];
    let dy = py as f32 + 0.5 - splat.center[1];
    let d2 = splat.conic.mahalanobis_sq(dx, dy);
    if d2 > splat.cutoff {
        return None;
    }
    let alpha = (splat.opacity * (-0.5 * d2).exp()).min(MAX_ALPHA);
    (alpha >= tau).then_some(alpha)
}

/// Pixel rectangle of a tile clipped to the image: origin and extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileFootprint {
    pub x0: u32,
    pub y0: u32,
    pub w: u32,
    pub h: u32,
}

impl TileFootprint {
    pub fn new(grid: &TileGrid, tx: u32, ty: u32) -> Self {
        let x0 = tx * TILE_SIZE;
        let y0 = ty * TILE_SIZE;
        TileFootprint {
            x0,
            y0,
            w: TILE_SIZE.min(grid.width - x0),
            h: TILE_SIZE.min(grid.height - y0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileOutput {
    /// Indexed `ly * TILE_SIZE + lx`; entries outside the footprint are unspecified.
    pub colors: [[f32; 3]; TILE_PIXELS],
    /// Pairs that changed at least one pixel.
    pub contributing: usize,
}

/// Pair-major compositing: each pair is applied to all live pixels of the tile
/// before the next is read. The index two pairs ahead and the payload one pair
/// ahead are loaded while the current one is blended.
pub fn render_tile(
    splats: &[Splat2D],
    order: &[u32],
    fp: TileFootprint,
    params: &RenderParams,
) -> TileOutput {
    let mut color = [[0.0f32; 3]; TILE_PIXELS];
    let mut trans = [1.0f32; TILE_PIXELS];
    let mut live = [false; TILE_PIXELS];
    for ly in 0..fp.h {
        for lx in 0..fp.w {
            live[(ly * TILE_SIZE + lx) as usize] = true;
        }
    }
    let mut remaining = (fp.w * fp.h) as usize;
    let mut contributing = 0;

    let n = order.len();
    let mut next_index = order.get(1).copied();
    let mut next_splat = order.first().map(|&g| splats[g as usize]);
    let mut i = 0;
    while let Some(splat) = next_splat {
        if remaining == 0 {
            break;
        }
        let after = if i + 2 < n { Some(order[i + 2]) } else { None };
        next_splat = next_index.map(|g| splats[g as usize]);
        next_index = after;

        let mut used = false;
        for ly in 0..fp.h {
            for lx in 0..fp.w {
                let p = (ly * TILE_SIZE + lx) as usize;
                if !live[p] {
                    continue;
                }
                let Some(alpha) = blend_alpha(&splat, fp.x0 + lx, fp.y0 + ly, params.tau) else {
                    continue;
                };
                let t = trans[p];
                for (c, s) in color[p].iter_mut().zip(splat.color) {
                    *c += s * alpha * t;
                }
                trans[p] = t * (1.0 - alpha);
                used = true;
                if trans[p] < MIN_TRANSMITTANCE {
                    live[p] = false;
                    remaining -= 1;
                }
            }
        }
        contributing += used as usize;
        i += 1;
    }
    finish(&mut color, &trans, params.background);
    TileOutput { colors: color, contributing }
}

/// Pixel-major reference: every pixel walks the whole list independently.
pub fn render_tile_naive(
    splats: &[Splat2D],
    order: &[u32],
    fp: TileFootprint,
    params: &RenderParams,
) -> TileOutput {
    let mut color = [[0.0f32; 3]; TILE_PIXELS];
    let mut trans = [1.0f32; TILE_PIXELS];
    let mut used = vec![false; order.len()];
    for ly in 0..fp.h {
        for lx in 0..fp.w {
            let p = (ly * TILE_SIZE + lx) as usize;
            for (j, &g) in order.iter().enumerate() {
                let splat = &splats[g as usize];
                let Some(alpha) = blend_alpha(splat, fp.x0 + lx, fp.y0 + ly, params.tau) else {
                    continue;
                };
                let t = trans[p];
                for (c, s) in color[p].iter_mut().zip(splat.color) {
                    *c += s * alpha * t;
                }
                trans[p] = t * (1.0 - alpha);
                used[j] = true;
                if trans[p] < MIN_TRANSMITTANCE {
                    break;
                }
            }
        }
    }
    finish(&mut color, &trans, params.background);
    TileOutput {
        colors: color,
        contributing: used.iter().filter(|&&u| u).count(),
    }
}

fn finish(color: &mut [[f32; 3]; TILE_PIXELS], trans: &[f32; TILE_PIXELS], bg: [f32; 3]) {
    for (c, t) in color.iter_mut().zip(trans) {
        for (v, b) in c.iter_mut().zip(bg) {
            *v += t * b;
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RenderStats {
    pub pairs_contributing: usize,
    pub tiles_nonempty: usize,
}

/// Composites every tile into `fb`, one rayon task per row of tiles.
pub fn render_frame(
    splats: &[Splat2D],
    values: &[u32],
    ranges: &[Range<usize>],
    grid: &TileGrid,
    params: &RenderParams,
    fb: &mut Framebuffer,
) -> RenderStats {
    assert_eq!(ranges.len(), grid.tile_count() as usize);
    fb.resize(grid.width, grid.height);
    let band = (TILE_SIZE * grid.width) as usize;
    fb.pixels
        .par_chunks_mut(band)
        .enumerate()
        .map(|(ty, rows)| {
            let ty = ty as u32;
            let mut stats = RenderStats::default();
            for tx in 0..grid.tiles_x {
                let range = ranges[grid.tile_index(tx, ty) as usize].clone();
                let fp = TileFootprint::new(grid, tx, ty);
                stats.tiles_nonempty += !range.is_empty() as usize;
                let out = render_tile(splats, &values[range], fp, params);
                stats.pairs_contributing += out.contributing;
                for ly in 0..fp.h {
                    let row = (ly * grid.width + fp.x0) as usize;
                    let src = (ly * TILE_SIZE) as usize;
                    rows[row..row + fp.w as usize].copy_from_slice(&out.colors[src..src + fp.w as usize]);
                }
            }
            stats
        })
        .reduce(RenderStats::default, |a, b| RenderStats {
            pairs_contributing: a.pairs_contributing + b.pairs_contributing,
            tiles_nonempty: a.tiles_nonempty + b.tiles_nonempty,
        })
}
