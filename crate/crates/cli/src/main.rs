use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tilesplat_core::export::{save_image, ImageFormat};
use tilesplat_core::extent::TILE_SIZE;
use tilesplat_core::metrics::{bench, compare_strategies, BenchReport, REPORT_VERSION};
use tilesplat_core::model::{gen_synthetic, load_cameras, load_ply, orbit_cameras, save_cameras, save_ply, Preset};
use tilesplat_core::{Camera, FrameArena, FrameOptions, FrameStats, IntersectionStrategy, PreparedScene, Rasterizer};
use tilesplat_service::{AppState, ServiceConfig};

/// Tile-based CPU rasterizer for 3D Gaussian splats (16x16 pixel tiles).
#[derive(Parser)]
#[command(name = "tilesplat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render every camera to <out>/<id>.<format> and write <out>/stats.json.
    Render(RenderArgs),
    /// Time repeated renders and print an aggregate report.
    Bench(BenchArgs),
    /// Render with several strategies and report PSNR against the baseline.
    Compare(CompareArgs),
    /// Write a deterministic synthetic scene as PLY.
    GenSynthetic(GenArgs),
    /// Serve frames over HTTP.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    #[value(name = "baseline-circle-aabb")]
    Baseline,
    #[value(name = "tight-aabb")]
    Tight,
    Precise,
}

impl From<Mode> for IntersectionStrategy {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Baseline => IntersectionStrategy::BaselineCircleAabb,
            Mode::Tight => IntersectionStrategy::TightAabb,
            Mode::Precise => IntersectionStrategy::Precise,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Ppm,
    Png,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PresetArg {
    Elongated,
    Isotropic,
    Mixed,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Elongated => Preset::Elongated,
            PresetArg::Isotropic => Preset::Isotropic,
            PresetArg::Mixed => Preset::Mixed,
        }
    }
}

#[derive(Args)]
struct SceneArgs {
    /// Binary little-endian PLY of Gaussians.
    #[arg(long)]
    model: PathBuf,
    /// Spherical-harmonic degree used for color (0 to 3).
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(0..=3))]
    sh_degree: u8,
    /// Worker threads per frame [default: all cores].
    #[arg(long, env = "TILESPLAT_WORKERS", value_parser = clap::value_parser!(u16).range(1..))]
    workers: Option<u16>,
}

impl SceneArgs {
    fn workers(&self) -> usize {
        self.workers.map_or(0, usize::from)
    }

    fn rasterizer(&self) -> Result<Rasterizer> {
        let scene = load_ply(&self.model)?;
        Ok(Rasterizer::new(PreparedScene::new(&scene, self.sh_degree), self.workers())?)
    }
}

#[derive(Args)]
struct ViewArgs {
    /// JSON array of cameras.
    #[arg(long)]
    cameras: PathBuf,
    /// Opacity threshold below which a splat does not affect a pixel.
    #[arg(long, default_value = "1/255", value_parser = parse_tau)]
    tau: f32,
    /// Override image width; focal lengths scale with it.
    #[arg(long, requires = "height")]
    width: Option<u32>,
    #[arg(long, requires = "width")]
    height: Option<u32>,
    /// Background color as r,g,b in [0, 1].
    #[arg(long, default_value = "0,0,0", value_parser = parse_rgb)]
    background: [f32; 3],
    #[arg(long, default_value_t = tilesplat_core::model::DEFAULT_NEAR)]
    near: f32,
    #[arg(long, default_value_t = tilesplat_core::model::DEFAULT_FAR)]
    far: f32,
}

impl ViewArgs {
    fn cameras(&self) -> Result<Vec<Camera>> {
        let mut cams = load_cameras(&self.cameras)?;
        if cams.is_empty() {
            bail!("{} contains no cameras", self.cameras.display());
        }
        for cam in &mut cams {
            if let (Some(w), Some(h)) = (self.width, self.height) {
                *cam = cam.with_resolution(w, h)?;
            }
            *cam = cam.with_clip_planes(self.near, self.far)?;
        }
        Ok(cams)
    }

    fn options(&self, strategy: IntersectionStrategy) -> FrameOptions {
        FrameOptions { strategy, tau: self.tau, background: self.background }
    }
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    view: ViewArgs,
    #[arg(long, value_enum, default_value = "precise")]
    mode: Mode,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "ppm")]
    format: Format,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    view: ViewArgs,
    #[arg(long, value_enum, default_value = "precise")]
    mode: Mode,
    /// Timed passes over all cameras, after one warm-up frame.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    repeat: u32,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    view: ViewArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "baseline-circle-aabb,tight-aabb,precise")]
    modes: Vec<Mode>,
    /// Report JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    preset: PresetArg,
    count: usize,
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write this many orbit cameras framing the scene.
    #[arg(long)]
    cameras_out: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    camera_count: usize,
    #[arg(long, default_value_t = 640)]
    width: u32,
    #[arg(long, default_value_t = 480)]
    height: u32,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: std::net::IpAddr,
    #[arg(long, default_value_t = ServiceConfig::default().max_in_flight)]
    max_in_flight: usize,
    #[arg(long, default_value_t = ServiceConfig::default().max_pixels)]
    max_pixels: u64,
}

fn parse_tau(s: &str) -> Result<f32, String> {
    let v = match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|e| format!("{e}"))?;
            let d: f64 = d.trim().parse().map_err(|e| format!("{e}"))?;
            n / d
        }
        None => s.parse().map_err(|e| format!("{e}"))?,
    } as f32;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("tau must lie in (0, 1), got {v}"))
    }
}

fn parse_rgb(s: &str) -> Result<[f32; 3], String> {
    let parts: Vec<f32> = s
        .split(',')
        .map(|p| p.trim().parse::<f32>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [r, g, b] if parts.iter().all(|c| c.is_finite()) => Ok([*r, *g, *b]),
        _ => Err(format!("expected three finite numbers r,g,b, got {s:?}")),
    }
}

#[derive(Serialize)]
struct RunConfig<'a> {
    model: &'a Path,
    cameras: &'a Path,
    strategy: IntersectionStrategy,
    tau: f32,
    background: [f32; 3],
    tile_size: u32,
    workers: usize,
    sh_degree: u8,
    near: f32,
    far: f32,
    width: Option<u32>,
    height: Option<u32>,
}

impl<'a> RunConfig<'a> {
    fn new(scene: &'a SceneArgs, view: &'a ViewArgs, rast: &Rasterizer, strategy: IntersectionStrategy) -> Self {
        RunConfig {
            model: &scene.model,
            cameras: &view.cameras,
            strategy,
            tau: view.tau,
            background: view.background,
            tile_size: TILE_SIZE,
            workers: rast.workers(),
            sh_degree: scene.sh_degree,
            near: view.near,
            far: view.far,
            width: view.width,
            height: view.height,
        }
    }
}

#[derive(Serialize)]
struct FrameEntry {
    frame_id: String,
    strategy: IntersectionStrategy,
    stats: FrameStats,
}

#[derive(Serialize)]
struct StatsFile<'a> {
    version: u32,
    config: RunConfig<'a>,
    frames: Vec<FrameEntry>,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn cmd_render(args: &RenderArgs) -> Result<()> {
    let rast = args.scene.rasterizer()?;
    let cams = args.view.cameras()?;
    let strategy = args.mode.into();
    let opts = args.view.options(strategy);
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let (format, ext) = match args.format {
        Format::Ppm => (ImageFormat::Ppm, "ppm"),
        Format::Png => (ImageFormat::Png, "png"),
    };
    let mut arena = FrameArena::default();
    let mut frames = Vec::with_capacity(cams.len());
    for cam in &cams {
        let stats = rast.run_frame(cam, &opts, &mut arena)?;
        save_image(&arena.framebuffer, args.out.join(format!("{}.{ext}", cam.id)), format)?;
        frames.push(FrameEntry { frame_id: cam.id.clone(), strategy, stats });
    }
    let file = StatsFile {
        version: REPORT_VERSION,
        config: RunConfig::new(&args.scene, &args.view, &rast, strategy),
        frames,
    };
    write_json(&args.out.join("stats.json"), &file)?;
    eprintln!("rendered {} frame(s) into {}", cams.len(), args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct BenchFile<'a> {
    version: u32,
    config: RunConfig<'a>,
    repeat: u32,
    report: BenchReport,
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let rast = args.scene.rasterizer()?;
    let cams = args.view.cameras()?;
    let strategy = args.mode.into();
    let report = bench(&rast, &cams, &args.view.options(strategy), args.repeat as usize)?;
    let file = BenchFile {
        version: REPORT_VERSION,
        config: RunConfig::new(&args.scene, &args.view, &rast, strategy),
        repeat: args.repeat,
        report,
    };
    println!("{}", serde_json::to_string_pretty(&file)?);
    if let Some(out) = &args.out {
        write_json(out, &file)?;
    }
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let rast = args.scene.rasterizer()?;
    let cams = args.view.cameras()?;
    let strategies: Vec<IntersectionStrategy> = args.modes.iter().map(|&m| m.into()).collect();
    let report = compare_strategies(&rast, &cams, &args.view.options(strategies[0]), &strategies)?;
    for f in &report.frames {
        println!(
            "{}\t{}\tpairs {}\tpsnr {}",
            f.frame_id, f.strategy, f.stats.pairs_emitted, f.psnr.value
        );
    }
    write_json(&args.out, &report)?;
    Ok(())
}

fn cmd_gen_synthetic(args: &GenArgs) -> Result<()> {
    let scene = gen_synthetic(args.preset.into(), args.count, args.seed);
    save_ply(&scene, &args.out)?;
    if let Some(path) = &args.cameras_out {
        let cams = orbit_cameras(args.camera_count, args.width, args.height, 3.0)?;
        save_cameras(&cams, path)?;
    }
    Ok(())
}

fn cmd_serve(args: &ServeArgs) -> Result<()> {
    let scene = load_ply(&args.scene.model)?;
    let config = ServiceConfig {
        max_in_flight: args.max_in_flight,
        max_pixels: args.max_pixels,
        ..ServiceConfig::default()
    };
    let state = Arc::new(AppState::new(&scene, args.scene.sh_degree, args.scene.workers(), config)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let addr = SocketAddr::new(args.bind, args.port);
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("cannot bind {addr}"))?;
        eprintln!("serving {} Gaussians on http://{}", scene.len(), listener.local_addr()?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        tilesplat_service::serve(listener, state, shutdown).await?;
        Ok(())
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Render(a) => cmd_render(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Compare(a) => cmd_compare(a),
        Command::GenSynthetic(a) => cmd_gen_synthetic(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
