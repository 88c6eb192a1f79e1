//! Preprocessing: projection, culling and assignment of splats to screen tiles.
//!
//! Each emitted pair is a 64-bit key `(tile << 32) | depth_bits` plus the
//! 32-bit index of the Gaussian. Depths are positive, so their IEEE bit
//! patterns order the same way as the values.
//!
//! The baseline strategy counts its tiles first and scatters through a prefix
//! sum. The two opacity-aware strategies cannot know their pair count without
//! running the intersection test, so they reserve output slots with an atomic
//! cursor instead; if the arena was too small the cursor still advances, the
//! arena grows to its final value and emission runs again.

use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extent::{
    baseline_aabb, power_cutoff, tight_aabb, tile_range, ExtentCutoff, TileGrid, TileRect,
};
use crate::intersect::{tile_intersects_ellipse, Conic2D};
use crate::model::{Camera, PreparedScene};
use crate::projection::{cov3d_from_upper, frustum_cull, project};
use crate::sh::eval_sh_color;
use crate::shared::SharedSlice;

/// Multi-tile Gaussians are split into work items of at most this many candidate tiles.
pub const CHUNK_TILES: u32 = 32;

/// Bytes per emitted pair: one `u64` key and one `u32` value.
pub const PAIR_BYTES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntersectionStrategy {
    /// Square of radius ⌈3√λmax⌉ around the center, every covered tile.
    BaselineCircleAabb,
    /// Axis-aligned bounds of the opacity-aware ellipse, every covered tile.
    TightAabb,
    /// Candidates from the tight bounds, kept only if the ellipse meets the tile.
    Precise,
}

impl IntersectionStrategy {
    pub const ALL: [IntersectionStrategy; 3] = [
        IntersectionStrategy::BaselineCircleAabb,
        IntersectionStrategy::TightAabb,
        IntersectionStrategy::Precise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IntersectionStrategy::BaselineCircleAabb => "baseline-circle-aabb",
            IntersectionStrategy::TightAabb => "tight-aabb",
            IntersectionStrategy::Precise => "precise",
        }
    }
}

impl std::fmt::Display for IntersectionStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IntersectionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy {s:?}")))
    }
}

/// Screen-space splat consumed by the renderer.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Splat2D {
    pub center: [f32; 2],
    pub conic: Conic2D,
    pub opacity: f32,
    /// Pixels with squared Mahalanobis distance above this are not blended.
    pub cutoff: f32,
    pub color: [f32; 3],
    pub depth: f32,
}

#[inline]
pub fn encode_key(tile: u32, depth: f32) -> u64 {
    ((tile as u64) << 32) | depth.to_bits() as u64
}

#[inline]
pub fn decode_key(key: u64) -> (u32, f32) {
    ((key >> 32) as u32, f32::from_bits(key as u32))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinParams {
    pub strategy: IntersectionStrategy,
    pub tau: f32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BinStats {
    pub gaussians_retained: usize,
    pub degenerate_dropped: usize,
    pub pairs_emitted: usize,
    pub buffer_reallocations: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
enum Status {
    #[default]
    Culled,
    Degenerate,
    Visible(TileRect),
}

/// One unit of phase-two work: a run of candidate tiles of a single Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkItem {
    pub gaussian: u32,
    /// Row-major ordinal of the first tile within the candidate rectangle.
    pub first: u32,
    pub len: u32,
}

/// Splits each candidate rectangle into work items of at most [`CHUNK_TILES`] tiles.
pub fn partition_work(ranges: impl IntoIterator<Item = (u32, TileRect)>, out: &mut Vec<WorkItem>) {
    out.clear();
    for (gaussian, rect) in ranges {
        let total = rect.count();
        let mut first = 0;
        while first < total {
            let len = CHUNK_TILES.min(total - first);
            out.push(WorkItem { gaussian, first, len });
            first += len;
        }
    }
}

/// Reusable buffers for [`bin_gaussians`].
#[derive(Debug, Default)]
pub struct BinBuffers {
    pub splats: Vec<Splat2D>,
    /// The first `pair_count` entries are valid after binning.
    pub keys: Vec<u64>,
    pub values: Vec<u32>,
    pub pair_count: usize,
    status: Vec<Status>,
    work: Vec<WorkItem>,
    offsets: Vec<usize>,
}

impl BinBuffers {
    pub fn pair_capacity(&self) -> usize {
        self.keys.len()
    }

    fn ensure_capacity(&mut self, n: usize) -> bool {
        if self.keys.len() >= n {
            return false;
        }
        self.keys.resize(n, 0);
        self.values.resize(n, 0);
        true
    }
}

struct PairSink<'a> {
    keys: SharedSlice<'a, u64>,
    values: SharedSlice<'a, u32>,
    cursor: AtomicUsize,
}

impl PairSink<'_> {
    fn emit(&self, pairs: &[(u64, u32)]) {
        let start = self.cursor.fetch_add(pairs.len(), Ordering::Relaxed);
        for (i, &(k, v)) in pairs.iter().enumerate() {
            let slot = start + i;
            if slot < self.keys.len() {
                // SAFETY: the fetch_add above hands out each slot once.
                unsafe {
                    self.keys.write(slot, k);
                    self.values.write(slot, v);
                }
            }
        }
    }
}

/// Projects one Gaussian; fills `splat` when it survives culling.
fn prepare(
    scene: &PreparedScene,
    cam: &Camera,
    grid: &TileGrid,
    params: &BinParams,
    i: usize,
    splat: &mut Splat2D,
) -> Result<Status> {
    let opacity = scene.opacities[i];
    let mean = scene.means[i];
    let Some(p_view) = frustum_cull(mean, opacity, cam) else {
        return Ok(Status::Culled);
    };
    let Some(cutoff) = power_cutoff(opacity, params.tau) else {
        return Ok(Status::Culled);
    };
    let Some(proj) = project(mean, p_view, &cov3d_from_upper(&scene.cov3d[i]), cam) else {
        return Ok(Status::Degenerate);
    };
    if !proj.depth.is_finite() {
        return Err(Error::NonFiniteDepth(proj.depth));
    }
    let conic = Conic2D::from(proj.conic);
    if !conic.is_positive_definite() || !proj.eigenvalues.0.is_finite() {
        return Ok(Status::Degenerate);
    }
    let Some(baseline) = tile_range(&baseline_aabb(proj.pixel_center, proj.eigenvalues.0), grid) else {
        return Ok(Status::Culled);
    };
    let range = match params.strategy {
        IntersectionStrategy::BaselineCircleAabb => Some(baseline),
        IntersectionStrategy::TightAabb | IntersectionStrategy::Precise => {
            tile_range(&tight_aabb(proj.pixel_center, &proj.cov2d, cutoff), grid)
                .and_then(|r| r.intersect(&baseline))
        }
    };
    let Some(range) = range else {
        return Ok(Status::Culled);
    };
    *splat = Splat2D {
        center: proj.pixel_center,
        conic,
        opacity,
        cutoff: cutoff.k(),
        color: eval_sh_color(&scene.sh[i], scene.sh_degree, mean, cam.position),
        depth: proj.depth,
    };
    Ok(Status::Visible(range))
}

#[inline]
fn keep_tile(strategy: IntersectionStrategy, grid: &TileGrid, splat: &Splat2D, tx: u32, ty: u32) -> bool {
    strategy != IntersectionStrategy::Precise
        || tile_intersects_ellipse(&grid.tile_rect(tx, ty), splat.center, &splat.conic, ExtentCutoff(splat.cutoff))
}

/// Single-tile Gaussian emission, shared by the fused first pass and the retry.
#[inline]
fn emit_single(sink: &PairSink, strategy: IntersectionStrategy, grid: &TileGrid, splat: &Splat2D, i: usize, r: &TileRect) {
    let (tx, ty) = (r.min[0], r.min[1]);
    if keep_tile(strategy, grid, splat, tx, ty) {
        sink.emit(&[(encode_key(grid.tile_index(tx, ty), splat.depth), i as u32)]);
    }
}

fn emit_chunk(sink: &PairSink, strategy: IntersectionStrategy, grid: &TileGrid, splat: &Splat2D, item: &WorkItem, r: &TileRect) {
    let mut local = [(0u64, 0u32); CHUNK_TILES as usize];
    let mut n = 0;
    for ord in item.first..item.first + item.len {
        let (tx, ty) = r.nth(ord);
        if keep_tile(strategy, grid, splat, tx, ty) {
            local[n] = (encode_key(grid.tile_index(tx, ty), splat.depth), item.gaussian);
            n += 1;
        }
    }
    if n > 0 {
        sink.emit(&local[..n]);
    }
}

/// Runs preprocessing for one frame, leaving splats and unsorted pairs in `buf`.
pub fn bin_gaussians(
    scene: &PreparedScene,
    cam: &Camera,
    params: &BinParams,
    buf: &mut BinBuffers,
) -> Result<BinStats> {
    let grid = cam.tile_grid();
    let n = scene.len();
    if n > u32::MAX as usize {
        return Err(Error::InvalidArgument(format!("{n} Gaussians exceed the 32-bit index space")));
    }
    buf.splats.clear();
    buf.splats.resize(n, Splat2D::default());
    buf.status.clear();
    buf.status.resize(n, Status::Culled);
    let mut stats = BinStats::default();

    if params.strategy == IntersectionStrategy::BaselineCircleAabb {
        buf.splats
            .par_iter_mut()
            .zip(buf.status.par_iter_mut())
            .enumerate()
            .try_for_each(|(i, (splat, status))| {
                *status = prepare(scene, cam, &grid, params, i, splat)?;
                Ok::<_, Error>(())
            })?;
        tally(&buf.status, &mut stats);
        emit_prefix_sum(buf, &grid, &mut stats);
        return Ok(stats);
    }

    // Phase one: project everything, emit single-tile Gaussians on the spot.
    let guess = if buf.pair_capacity() > 0 {
        buf.pair_capacity()
    } else {
        n.saturating_mul(2).max(1024)
    };
    if buf.ensure_capacity(guess) {
        stats.buffer_reallocations += 1;
    }
    let first_total = {
        let BinBuffers { splats, keys, values, status, .. } = buf;
        let sink = PairSink {
            keys: SharedSlice::new(keys),
            values: SharedSlice::new(values),
            cursor: AtomicUsize::new(0),
        };
        splats
            .par_iter_mut()
            .zip(status.par_iter_mut())
            .enumerate()
            .try_for_each(|(i, (splat, status))| {
                *status = prepare(scene, cam, &grid, params, i, splat)?;
                if let Status::Visible(r) = status {
                    if r.is_single() {
                        emit_single(&sink, params.strategy, &grid, splat, i, r);
                    }
                }
                Ok::<_, Error>(())
            })?;
        // Phase two: chunked multi-tile work.
        partition_work(multi_tile(status), &mut buf.work);
        emit_multi(&sink, params.strategy, &grid, splats, status, &buf.work);
        sink.cursor.into_inner()
    };
    tally(&buf.status, &mut stats);

    let mut total = first_total;
    if total > buf.pair_capacity() {
        buf.ensure_capacity(total);
        stats.buffer_reallocations += 1;
        let BinBuffers { splats, keys, values, status, work, .. } = buf;
        let sink = PairSink {
            keys: SharedSlice::new(keys),
            values: SharedSlice::new(values),
            cursor: AtomicUsize::new(0),
        };
        splats.par_iter().zip(status.par_iter()).enumerate().for_each(|(i, (splat, status))| {
            if let Status::Visible(r) = status {
                if r.is_single() {
                    emit_single(&sink, params.strategy, &grid, splat, i, r);
                }
            }
        });
        emit_multi(&sink, params.strategy, &grid, splats, status, work);
        total = sink.cursor.into_inner();
        debug_assert_eq!(total, first_total);
    }
    buf.pair_count = total;
    stats.pairs_emitted = total;
    Ok(stats)
}

fn multi_tile(status: &[Status]) -> impl Iterator<Item = (u32, TileRect)> + '_ {
    status.iter().enumerate().filter_map(|(i, s)| match s {
        Status::Visible(r) if !r.is_single() => Some((i as u32, *r)),
        _ => None,
    })
}

fn emit_multi(
    sink: &PairSink,
    strategy: IntersectionStrategy,
    grid: &TileGrid,
    splats: &[Splat2D],
    status: &[Status],
    work: &[WorkItem],
) {
    work.par_iter().for_each(|item| {
        let g = item.gaussian as usize;
        if let Status::Visible(r) = &status[g] {
            emit_chunk(sink, strategy, grid, &splats[g], item, r);
        }
    });
}

fn tally(status: &[Status], stats: &mut BinStats) {
    for s in status {
        match s {
            Status::Visible(_) => stats.gaussians_retained += 1,
            Status::Degenerate => stats.degenerate_dropped += 1,
            Status::Culled => {}
        }
    }
}

fn emit_prefix_sum(buf: &mut BinBuffers, grid: &TileGrid, stats: &mut BinStats) {
    buf.offsets.clear();
    let mut total = 0usize;
    for s in &buf.status {
        buf.offsets.push(total);
        if let Status::Visible(r) = s {
            total += r.count() as usize;
        }
    }
    if buf.ensure_capacity(total) {
        stats.buffer_reallocations += 1;
    }
    let BinBuffers { splats, keys, values, status, offsets, .. } = buf;
    let keys = SharedSlice::new(&mut keys[..total]);
    let values = SharedSlice::new(&mut values[..total]);
    status
        .par_iter()
        .zip(offsets.par_iter())
        .zip(splats.par_iter())
        .enumerate()
        .for_each(|(i, ((s, &start), splat))| {
            if let Status::Visible(r) = s {
                for (j, (tx, ty)) in r.iter().enumerate() {
                    // SAFETY: [start, start + count) is owned by Gaussian i.
                    unsafe {
                        keys.write(start + j, encode_key(grid.tile_index(tx, ty), splat.depth));
                        values.write(start + j, i as u32);
                    }
                }
            }
        });
    buf.pair_count = total;
    stats.pairs_emitted = total;
}
