//! Frame driver: preprocessing, sort and render with per-stage timing.

use std::ops::Range;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::binning::{bin_gaussians, BinBuffers, BinParams, IntersectionStrategy, PAIR_BYTES};
use crate::error::{Error, Result};
use crate::extent::DEFAULT_TAU;
use crate::model::{Camera, PreparedScene};
use crate::render::{render_frame, Framebuffer, RenderParams};
use crate::sort::{sort_pairs, tile_ranges, SortScratch};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameOptions {
    pub strategy: IntersectionStrategy,
    pub tau: f32,
    pub background: [f32; 3],
}

impl Default for FrameOptions {
    fn default() -> Self {
        FrameOptions {
            strategy: IntersectionStrategy::Precise,
            tau: DEFAULT_TAU,
            background: [0.0; 3],
        }
    }
}

impl FrameOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidArgument(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if self.background.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("background must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameStats {
    pub preprocess_ns: u64,
    pub sort_ns: u64,
    pub render_ns: u64,
    pub total_ns: u64,
    pub pairs_emitted: usize,
    pub pairs_contributing: usize,
    pub gaussians_retained: usize,
    pub tiles_nonempty: usize,
    pub pair_buffer_bytes: usize,
    pub degenerate_dropped: usize,
    pub buffer_reallocations: usize,
}

impl FrameStats {
    pub fn total_ms(&self) -> f64 {
        self.total_ns as f64 * 1e-6
    }
}

/// Per-frame mutable state, reused across frames to avoid reallocation.
#[derive(Debug, Default)]
pub struct FrameArena {
    pub bins: BinBuffers,
    pub sort: SortScratch,
    pub ranges: Vec<Range<usize>>,
    pub framebuffer: Framebuffer,
}

impl FrameArena {
    /// Sorted pairs of the last frame as `(key, gaussian)`.
    pub fn pairs(&self) -> impl Iterator<Item = (u64, u32)> + '_ {
        let n = self.bins.pair_count;
        self.bins.keys[..n].iter().copied().zip(self.bins.values[..n].iter().copied())
    }
}

/// Immutable scene plus a dedicated worker pool; safe to share between threads.
pub struct Rasterizer {
    scene: PreparedScene,
    pool: rayon::ThreadPool,
}

impl std::fmt::Debug for Rasterizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Rasterizer")
            .field("gaussians", &self.scene.len())
            .field("workers", &self.pool.current_num_threads())
            .finish()
    }
}

impl Rasterizer {
    /// `workers == 0` uses one worker per available core.
    pub fn new(scene: PreparedScene, workers: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .thread_name(|i| format!("raster-{i}"))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
        Ok(Rasterizer { scene, pool })
    }

    pub fn scene(&self) -> &PreparedScene {
        &self.scene
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn run_frame(&self, cam: &Camera, opts: &FrameOptions, arena: &mut FrameArena) -> Result<FrameStats> {
        opts.validate()?;
        self.pool.install(|| self.run_frame_inner(cam, opts, arena))
    }

    fn run_frame_inner(&self, cam: &Camera, opts: &FrameOptions, arena: &mut FrameArena) -> Result<FrameStats> {
        let grid = cam.tile_grid();
        let start = Instant::now();
        let params = BinParams { strategy: opts.strategy, tau: opts.tau };
        let bin = bin_gaussians(&self.scene, cam, &params, &mut arena.bins)?;
        let t_pre = Instant::now();

        let n = arena.bins.pair_count;
        sort_pairs(&mut arena.bins.keys[..n], &mut arena.bins.values[..n], grid.tile_count(), &mut arena.sort);
        tile_ranges(&arena.bins.keys[..n], grid.tile_count(), &mut arena.ranges)?;
        let t_sort = Instant::now();

        let render = render_frame(
            &arena.bins.splats,
            &arena.bins.values[..n],
            &arena.ranges,
            &grid,
            &RenderParams { tau: opts.tau, background: opts.background },
            &mut arena.framebuffer,
        );
        let t_render = Instant::now();

        let ns = |a: Instant, b: Instant| (b - a).as_nanos() as u64;
        Ok(FrameStats {
            preprocess_ns: ns(start, t_pre),
            sort_ns: ns(t_pre, t_sort),
            render_ns: ns(t_sort, t_render),
            total_ns: ns(start, t_render),
            pairs_emitted: bin.pairs_emitted,
            pairs_contributing: render.pairs_contributing,
            gaussians_retained: bin.gaussians_retained,
            tiles_nonempty: render.tiles_nonempty,
            pair_buffer_bytes: PAIR_BYTES * bin.pairs_emitted,
            degenerate_dropped: bin.degenerate_dropped,
            buffer_reallocations: bin.buffer_reallocations,
        })
    }

    /// Renders into a fresh arena and returns the image.
    pub fn render(&self, cam: &Camera, opts: &FrameOptions) -> Result<(Framebuffer, FrameStats)> {
        let mut arena = FrameArena::default();
        let stats = self.run_frame(cam, opts, &mut arena)?;
        Ok((arena.framebuffer, stats))
    }
}
