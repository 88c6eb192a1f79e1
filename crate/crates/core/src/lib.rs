//! Tile-based CPU rasterizer for 3D Gaussian splats.
//!
//! A frame runs through three stages: preprocessing (projection, culling and
//! binning of each splat into the 16×16 screen tiles it overlaps), a radix sort
//! of `(tile, depth)` keys, and per-tile front-to-back alpha compositing.
//! Binning supports three [`IntersectionStrategy`] variants of decreasing
//! conservativeness that all produce identical images.

pub mod binning;
pub mod error;
pub mod export;
pub mod extent;
pub mod intersect;
pub mod math;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod projection;
pub mod render;
pub mod sh;
mod shared;
pub mod sort;

pub use binning::IntersectionStrategy;
pub use error::{Error, Result};
pub use metrics::{psnr, CompareReport, Psnr};
pub use model::{Camera, PreparedScene, Scene};
pub use pipeline::{FrameArena, FrameOptions, FrameStats, Rasterizer};
pub use render::Framebuffer;
