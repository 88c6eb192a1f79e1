//! HTTP front end that renders frames on request.
//!
//! `POST /frame` takes a JSON pose and answers with a PNG plus `X-Flash-*`
//! stats headers; `GET /meta` describes the loaded scene. The scene is loaded
//! once and shared read-only by every request.

use std::future::Future;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::Semaphore;

use tilesplat_core::export::encode_png;
use tilesplat_core::math::{self, Mat3, Vec3};
use tilesplat_core::model::CameraRecord;
use tilesplat_core::{Camera, FrameArena, FrameOptions, IntersectionStrategy, PreparedScene, Rasterizer, Scene};

pub const HEADER_FRAME_MS: &str = "x-flash-frame-ms";
pub const HEADER_PAIRS_EMITTED: &str = "x-flash-pairs-emitted";
pub const HEADER_PAIRS_CONTRIBUTING: &str = "x-flash-pairs-contributing";
pub const HEADER_STRATEGY: &str = "x-flash-strategy";

pub const DEFAULT_FOV_Y: f32 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServiceConfig {
    /// Requests with `width · height` above this are rejected with 413.
    pub max_pixels: u64,
    /// Concurrent renders; further requests get 429.
    pub max_in_flight: usize,
    pub max_body_bytes: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            max_pixels: 3840 * 2160,
            max_in_flight: 4,
            max_body_bytes: 16 * 1024,
        }
    }
}

/// Camera pose in JSON. Orientation is either a row-major world-to-camera
/// `rotation` or `yaw`/`pitch` in degrees; with neither, the camera looks down +z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRequest {
    pub position: [f32; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<[f32; 9]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yaw: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pitch: Option<f32>,
    pub width: u32,
    pub height: u32,
    #[serde(default = "default_strategy")]
    pub strategy: IntersectionStrategy,
    #[serde(default = "default_fov")]
    pub fov_y: f32,
}

fn default_strategy() -> IntersectionStrategy {
    IntersectionStrategy::Precise
}

fn default_fov() -> f32 {
    DEFAULT_FOV_Y
}

/// World-to-camera rotation for a yaw about the vertical axis followed by a
/// pitch; positive pitch looks up (towards −y, since +y points down).
pub fn yaw_pitch_rotation(yaw_deg: f32, pitch_deg: f32) -> Mat3 {
    let (sy, cy) = yaw_deg.to_radians().sin_cos();
    let (sp, cp) = pitch_deg.to_radians().sin_cos();
    let forward = [sy * cp, -sp, cy * cp];
    let right = [cy, 0.0, -sy];
    let down = math::cross(forward, right);
    [right, down, forward]
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

impl PoseRequest {
    pub fn to_camera(&self, config: &ServiceConfig) -> Result<Camera, ApiError> {
        let pixels = self.width as u64 * self.height as u64;
        if pixels > config.max_pixels {
            return Err(ApiError::new(
                StatusCode::PAYLOAD_TOO_LARGE,
                format!("{}x{} exceeds the {} pixel limit", self.width, self.height, config.max_pixels),
            ));
        }
        if !(self.fov_y > 0.0 && self.fov_y < 180.0) {
            return Err(ApiError::bad_request(format!("fov_y must lie in (0, 180), got {}", self.fov_y)));
        }
        let rotation = match (self.rotation, self.yaw, self.pitch) {
            (Some(r), None, None) => r,
            (None, yaw, pitch) => {
                let (yaw, pitch) = (yaw.unwrap_or(0.0), pitch.unwrap_or(0.0));
                if !(yaw.is_finite() && pitch.is_finite()) {
                    return Err(ApiError::bad_request("yaw and pitch must be finite"));
                }
                let m = yaw_pitch_rotation(yaw, pitch);
                [m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2]]
            }
            _ => return Err(ApiError::bad_request("give either rotation or yaw/pitch, not both")),
        };
        let focal = self.height as f32 / (2.0 * (self.fov_y.to_radians() * 0.5).tan());
        let record = CameraRecord {
            id: serde_json::Value::from("frame"),
            width: self.width,
            height: self.height,
            position: self.position,
            rotation,
            fx: focal,
            fy: focal,
        };
        Camera::from_record(&record).map_err(|e| ApiError::bad_request(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: Vec3,
    pub max: Vec3,
    /// Set when the scene is empty or the box has zero extent on some axis.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestedPose {
    pub position: Vec3,
    pub yaw: f32,
    pub pitch: f32,
    pub fov_y: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub count: usize,
    pub bbox: BoundingBox,
    pub suggested_pose: SuggestedPose,
    pub strategies: Vec<IntersectionStrategy>,
}

impl SceneMeta {
    /// Box around the means padded by three times each Gaussian's largest scale.
    pub fn from_scene(scene: &Scene) -> Self {
        let mut min = [f32::INFINITY; 3];
        let mut max = [f32::NEG_INFINITY; 3];
        for g in &scene.gaussians {
            let pad = 3.0 * g.log_scale.iter().cloned().fold(f32::NEG_INFINITY, f32::max).exp();
            if !pad.is_finite() || g.mean.iter().any(|v| !v.is_finite()) {
                continue;
            }
            for i in 0..3 {
                min[i] = min[i].min(g.mean[i] - pad);
                max[i] = max[i].max(g.mean[i] + pad);
            }
        }
        let degenerate = (0..3).any(|i| max[i].partial_cmp(&min[i]) != Some(std::cmp::Ordering::Greater));
        if degenerate && min[0] > max[0] {
            min = [0.0; 3];
            max = [0.0; 3];
        }
        let center: Vec3 = std::array::from_fn(|i| 0.5 * (min[i] + max[i]));
        let half_diag = 0.5 * math::norm(math::sub(max, min));
        let radius = if degenerate || half_diag <= 0.0 { 1.0 } else { half_diag };
        let distance = 1.1 * radius / (DEFAULT_FOV_Y.to_radians() * 0.5).tan();
        SceneMeta {
            count: scene.len(),
            bbox: BoundingBox { min, max, degenerate },
            // yaw = pitch = 0 faces +z, so back off along −z.
            suggested_pose: SuggestedPose {
                position: [center[0], center[1], center[2] - distance],
                yaw: 0.0,
                pitch: 0.0,
                fov_y: DEFAULT_FOV_Y,
            },
            strategies: IntersectionStrategy::ALL.to_vec(),
        }
    }
}

pub struct AppState {
    rasterizer: Rasterizer,
    meta: SceneMeta,
    config: ServiceConfig,
    permits: Arc<Semaphore>,
    arenas: Mutex<Vec<FrameArena>>,
}

impl AppState {
    /// `workers == 0` uses every core for intra-frame parallelism.
    pub fn new(scene: &Scene, sh_degree: u8, workers: usize, config: ServiceConfig) -> tilesplat_core::Result<Self> {
        Ok(AppState {
            rasterizer: Rasterizer::new(PreparedScene::new(scene, sh_degree), workers)?,
            meta: SceneMeta::from_scene(scene),
            permits: Arc::new(Semaphore::new(config.max_in_flight)),
            config,
            arenas: Mutex::new(Vec::new()),
        })
    }

    pub fn meta(&self) -> &SceneMeta {
        &self.meta
    }

    fn take_arena(&self) -> FrameArena {
        self.arenas.lock().unwrap_or_else(|e| e.into_inner()).pop().unwrap_or_default()
    }

    fn return_arena(&self, arena: FrameArena) {
        self.arenas.lock().unwrap_or_else(|e| e.into_inner()).push(arena);
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.config.max_body_bytes;
    Router::new()
        .route("/frame", post(frame))
        .route("/meta", get(meta))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

async fn meta(State(state): State<Arc<AppState>>) -> Json<SceneMeta> {
    Json(state.meta.clone())
}

async fn frame(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: PoseRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid pose: {e}")))?;
    let cam = req.to_camera(&state.config)?;
    let permit = state
        .permits
        .clone()
        .try_acquire_owned()
        .map_err(|_| ApiError::new(StatusCode::TOO_MANY_REQUESTS, "too many frames in flight"))?;
    let opts = FrameOptions { strategy: req.strategy, ..FrameOptions::default() };
    let worker = state.clone();
    let rendered = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        let mut arena = worker.take_arena();
        let out = worker
            .rasterizer
            .run_frame(&cam, &opts, &mut arena)
            .and_then(|stats| Ok((stats, encode_png(&arena.framebuffer)?)));
        worker.return_arena(arena);
        out
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let (stats, png) = rendered.map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;

    let mut response = png.into_response();
    let headers = response.headers_mut();
    let mut set = |name: &'static str, value: String| {
        headers.insert(name, HeaderValue::from_str(&value).expect("ASCII header value"));
    };
    set(HEADER_FRAME_MS, format!("{:.3}", stats.total_ms()));
    set(HEADER_PAIRS_EMITTED, stats.pairs_emitted.to_string());
    set(HEADER_PAIRS_CONTRIBUTING, stats.pairs_contributing.to_string());
    set(HEADER_STRATEGY, req.strategy.name().to_string());
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("image/png"));
    Ok(response)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn yaw_pitch_axes() {
        let r = yaw_pitch_rotation(0.0, 0.0);
        assert_eq!(r, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        // Yaw 90°: looking down +x, right is −z.
        let r = yaw_pitch_rotation(90.0, 0.0);
        assert!((r[2][0] - 1.0).abs() < 1e-6 && (r[0][2] + 1.0).abs() < 1e-6);
        // Pitch up looks towards −y.
        let r = yaw_pitch_rotation(0.0, 30.0);
        assert!(r[2][1] < 0.0);
        for (yaw, pitch) in [(13.0, -70.0), (200.0, 45.0)] {
            assert!(math::orthonormality_error(&yaw_pitch_rotation(yaw, pitch)) < 1e-5);
        }
    }

    #[test]
    fn pose_defaults() {
        let req: PoseRequest = serde_json::from_str(r#"{"position":[0,0,0],"width":32,"height":16}"#).unwrap();
        assert_eq!(req.strategy, IntersectionStrategy::Precise);
        assert_eq!(req.fov_y, DEFAULT_FOV_Y);
        let cam = req.to_camera(&ServiceConfig::default()).unwrap();
        assert!((cam.tan_fovy - (30.0f32).to_radians().tan()).abs() < 1e-6);
    }

    #[test]
    fn pose_rejections() {
        let cfg = ServiceConfig { max_pixels: 1000, ..Default::default() };
        let base = PoseRequest {
            position: [0.0; 3],
            rotation: None,
            yaw: None,
            pitch: None,
            width: 16,
            height: 16,
            strategy: IntersectionStrategy::Precise,
            fov_y: 60.0,
        };
        assert!(base.to_camera(&cfg).is_ok());
        let status = |r: PoseRequest| r.to_camera(&cfg).unwrap_err().status;
        assert_eq!(status(PoseRequest { width: 64, height: 64, ..base.clone() }), StatusCode::PAYLOAD_TOO_LARGE);
        assert_eq!(status(PoseRequest { width: 8, ..base.clone() }), StatusCode::BAD_REQUEST);
        assert_eq!(status(PoseRequest { fov_y: 180.0, ..base.clone() }), StatusCode::BAD_REQUEST);
        let both = PoseRequest { rotation: Some([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]), yaw: Some(1.0), ..base.clone() };
        assert_eq!(status(both), StatusCode::BAD_REQUEST);
    }

    #[test]
    fn meta_of_empty_scene_is_degenerate() {
        let m = SceneMeta::from_scene(&Scene::default());
        assert_eq!(m.count, 0);
        assert!(m.bbox.degenerate);
        assert_eq!(m.strategies.len(), 3);
    }
}
