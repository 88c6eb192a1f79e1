//! Image comparison, cross-strategy reports and frame-time benchmarks.

use serde::{Deserialize, Serialize};

use crate::binning::IntersectionStrategy;
use crate::error::{Error, Result};
use crate::model::Camera;
use crate::pipeline::{FrameArena, FrameOptions, FrameStats, Rasterizer};
use crate::render::Framebuffer;

pub const REPORT_VERSION: u32 = 1;

/// Serialized as the string `"identical"` or a finite number of decibels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Identical,
    Finite(f64),
}

impl Serialize for Psnr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Psnr::Identical => s.serialize_str("identical"),
            Psnr::Finite(db) => s.serialize_f64(*db),
        }
    }
}

impl<'de> Deserialize<'de> for Psnr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(s) if s == "identical" => Ok(Psnr::Identical),
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(Psnr::Finite)
                .ok_or_else(|| serde::de::Error::custom("PSNR out of range")),
            other => Err(serde::de::Error::custom(format!("invalid PSNR value {other}"))),
        }
    }
}

impl std::fmt::Display for Psnr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Psnr::Identical => f.write_str("identical"),
            Psnr::Finite(db) => write!(f, "{db:.2} dB"),
        }
    }
}

/// Peak signal-to-noise ratio with channels clamped to `[0, 1]` and peak 1.
pub fn psnr(a: &Framebuffer, b: &Framebuffer) -> Result<Psnr> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::DimensionMismatch {
            left: (a.width, a.height),
            right: (b.width, b.height),
        });
    }
    let mut sum = 0.0f64;
    for (p, q) in a.pixels.iter().zip(&b.pixels) {
        for (x, y) in p.iter().zip(q) {
            let d = x.clamp(0.0, 1.0) as f64 - y.clamp(0.0, 1.0) as f64;
            sum += d * d;
        }
    }
    if sum == 0.0 {
        return Ok(Psnr::Identical);
    }
    let mse = sum / (3 * a.pixels.len()) as f64;
    Ok(Psnr::Finite(-10.0 * mse.log10()))
}

/// Whether two framebuffers hold exactly the same bits.
pub fn bit_identical(a: &Framebuffer, b: &Framebuffer) -> bool {
    (a.width, a.height) == (b.width, b.height)
        && a.pixels
            .iter()
            .zip(&b.pixels)
            .all(|(p, q)| p.map(f32::to_bits) == q.map(f32::to_bits))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsnrEntry {
    /// Strategy whose image served as the reference.
    pub reference: IntersectionStrategy,
    pub value: Psnr,
    pub bit_identical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame_id: String,
    pub width: u32,
    pub height: u32,
    pub strategy: IntersectionStrategy,
    pub stats: FrameStats,
    pub psnr: PsnrEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub version: u32,
    pub gaussians: usize,
    pub tau: f32,
    pub background: [f32; 3],
    pub strategies: Vec<IntersectionStrategy>,
    pub frames: Vec<FrameReport>,
    /// True when every image matched its reference bit for bit.
    pub all_identical: bool,
}

/// Renders every camera with each strategy and compares against the reference,
/// which is the baseline strategy when listed and otherwise the first one.
pub fn compare_strategies(
    rast: &Rasterizer,
    cameras: &[Camera],
    base: &FrameOptions,
    strategies: &[IntersectionStrategy],
) -> Result<CompareReport> {
    let Some(&first) = strategies.first() else {
        return Err(Error::InvalidArgument("no strategies to compare".into()));
    };
    let reference = if strategies.contains(&IntersectionStrategy::BaselineCircleAabb) {
        IntersectionStrategy::BaselineCircleAabb
    } else {
        first
    };
    let mut order = vec![reference];
    order.extend(strategies.iter().copied().filter(|&s| s != reference));
    order.dedup();

    let mut arena = FrameArena::default();
    let mut frames = Vec::with_capacity(cameras.len() * order.len());
    for cam in cameras {
        let mut ref_image: Option<Framebuffer> = None;
        for &strategy in &order {
            let opts = FrameOptions { strategy, ..*base };
            let stats = rast.run_frame(cam, &opts, &mut arena)?;
            let fb = &arena.framebuffer;
            let ref_image = ref_image.get_or_insert_with(|| fb.clone());
            frames.push(FrameReport {
                frame_id: cam.id.clone(),
                width: cam.width,
                height: cam.height,
                strategy,
                stats,
                psnr: PsnrEntry {
                    reference,
                    value: psnr(ref_image, fb)?,
                    bit_identical: bit_identical(ref_image, fb),
                },
            });
        }
    }
    let all_identical = frames.iter().all(|f| f.psnr.bit_identical);
    Ok(CompareReport {
        version: REPORT_VERSION,
        gaussians: rast.scene().len(),
        tau: base.tau,
        background: base.background,
        strategies: order,
        frames,
        all_identical,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageShare {
    pub preprocess_pct: f64,
    pub sort_pct: f64,
    pub render_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub strategy: IntersectionStrategy,
    /// Timed frames; the warm-up frame is not included.
    pub frames: usize,
    pub avg_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub stages: StageShare,
    pub avg_pairs_emitted: f64,
    pub avg_pairs_contributing: f64,
}

/// Summarizes timed frames.
pub fn summarize(strategy: IntersectionStrategy, frames: &[FrameStats]) -> BenchReport {
    let n = frames.len().max(1) as f64;
    let ms: Vec<f64> = frames.iter().map(FrameStats::total_ms).collect();
    let sum = |f: fn(&FrameStats) -> u64| frames.iter().map(|s| f(s) as f64).sum::<f64>();
    let total = sum(|s| s.total_ns).max(1.0);
    BenchReport {
        strategy,
        frames: frames.len(),
        avg_ms: ms.iter().sum::<f64>() / n,
        min_ms: ms.iter().cloned().reduce(f64::min).unwrap_or(0.0),
        max_ms: ms.iter().cloned().fold(0.0, f64::max),
        stages: StageShare {
            preprocess_pct: 100.0 * sum(|s| s.preprocess_ns) / total,
            sort_pct: 100.0 * sum(|s| s.sort_ns) / total,
            render_pct: 100.0 * sum(|s| s.render_ns) / total,
        },
        avg_pairs_emitted: frames.iter().map(|s| s.pairs_emitted as f64).sum::<f64>() / n,
        avg_pairs_contributing: frames.iter().map(|s| s.pairs_contributing as f64).sum::<f64>() / n,
    }
}

/// Renders one untimed warm-up frame, then `rounds` passes over `cameras`.
pub fn bench(rast: &Rasterizer, cameras: &[Camera], opts: &FrameOptions, rounds: usize) -> Result<BenchReport> {
    let Some(first) = cameras.first() else {
        return Err(Error::InvalidArgument("no cameras to benchmark".into()));
    };
    let mut arena = FrameArena::default();
    rast.run_frame(first, opts, &mut arena)?;
    let mut frames = Vec::with_capacity(rounds * cameras.len());
    for _ in 0..rounds {
        for cam in cameras {
            frames.push(rast.run_frame(cam, opts, &mut arena)?);
        }
    }
    Ok(summarize(opts.strategy, &frames))
}
