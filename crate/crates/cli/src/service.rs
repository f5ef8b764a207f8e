//! Local HTTP service behind the calibration UI. One working profile per
//! process; writes are serialized through a lock, renders run off the lock.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use image::RgbImage;
use roadplane_core::calibration::{
    build_profile, grid_geometry, reprojection_report, sensitivity_field, CalibrationError, CalibrationProfile,
    GridAxis, PointError, PointRecord, ProfileDocument,
};
use roadplane_core::render::bev::DEFAULT_RESOLUTION_PPM;
use roadplane_core::render::raster::encode_png;
use roadplane_core::render::{warp_to_bev, WarpOptions};
use serde::{Deserialize, Serialize};
use tokio::sync::RwLock;

use crate::error::{PipelineError, Stage};

pub struct AppState {
    profile: RwLock<ProfileDocument>,
    frame: Option<Arc<RgbImage>>,
}

pub type SharedState = Arc<AppState>;

impl AppState {
    pub fn new(profile: ProfileDocument, frame: Option<RgbImage>) -> SharedState {
        Arc::new(Self {
            profile: RwLock::new(profile),
            frame: frame.map(Arc::new),
        })
    }
}

/// Error response: status plus `{stage, code, message}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: PipelineError,
}

impl ApiError {
    fn new(status: StatusCode, stage: Stage, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: PipelineError::new(stage, code, message),
        }
    }

    fn calibration(e: CalibrationError) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, Stage::Calibration, e.code(), e.to_string())
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, Stage::Config, "bad_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("request body: {e}")))
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

/// Fitted profile from the stored document, without touching it.
async fn current_profile(state: &AppState) -> ApiResult<CalibrationProfile> {
    let doc = state.profile.read().await.clone();
    doc.validate().map_err(ApiError::calibration)?;
    build_profile(doc.correspondences(), doc.extent, doc.reference_frame).map_err(ApiError::calibration)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, Stage::Render, "internal", e.to_string())
    })?
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn get_frame(State(state): State<SharedState>) -> ApiResult<Response> {
    let frame = state
        .frame
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, Stage::Render, "missing_frame", "no reference frame loaded"))?;
    let bytes = blocking(move || Ok(encode_png(&frame))).await?;
    Ok(png(bytes))
}

async fn get_calibration(State(state): State<SharedState>) -> Json<ProfileDocument> {
    Json(state.profile.read().await.clone())
}

async fn put_calibration(State(state): State<SharedState>, body: Bytes) -> ApiResult<Json<ProfileDocument>> {
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let doc = ProfileDocument::from_json(text).map_err(|e| match e {
        CalibrationError::Malformed(m) => ApiError::bad_request(m),
        other => ApiError::calibration(other),
    })?;
    doc.validate().map_err(ApiError::calibration)?;
    *state.profile.write().await = doc.clone();
    Ok(Json(doc))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRequest {
    /// Replaces the stored points when present.
    pub points: Option<Vec<PointRecord>>,
}

#[derive(Debug, Serialize)]
pub struct FitResponse {
    pub homography: [f64; 9],
    pub points: Vec<PointError>,
    pub rms_active_m: f64,
    pub rms_active_px: f64,
}

async fn fit(State(state): State<SharedState>, body: Bytes) -> ApiResult<Json<FitResponse>> {
    let req: FitRequest = parse_body(&body)?;
    // The write lock is held across the fit so concurrent fits apply in
    // arrival order; a failed fit leaves the document untouched.
    let mut guard = state.profile.write().await;
    let mut doc = guard.clone();
    if let Some(points) = req.points {
        doc.points = points;
    }
    doc.validate().map_err(ApiError::calibration)?;
    let profile =
        build_profile(doc.correspondences(), doc.extent, doc.reference_frame.clone()).map_err(ApiError::calibration)?;
    let report = reprojection_report(&profile);
    let homography = profile.homography().to_row_array();
    doc.homography = Some(homography);
    *guard = doc;
    Ok(Json(FitResponse {
        homography,
        points: report.points,
        rms_active_m: report.rms_active_m,
        rms_active_px: report.rms_active_px,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRequest {
    pub spacing: f64,
}

impl Default for GridRequest {
    fn default() -> Self {
        Self { spacing: 5.0 }
    }
}

#[derive(Debug, Serialize)]
pub struct GridLineResponse {
    pub axis: GridAxis,
    pub value: f64,
    /// Pixel polylines; a line splits where samples are unreachable.
    pub polylines: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Serialize)]
pub struct GridResponse {
    pub spacing: f64,
    pub lines: Vec<GridLineResponse>,
    pub dropped_samples: usize,
}

async fn grid(State(state): State<SharedState>, body: Bytes) -> ApiResult<Json<GridResponse>> {
    let req: GridRequest = parse_body(&body)?;
    let profile = current_profile(&state).await?;
    let g = grid_geometry(&profile, req.spacing).map_err(ApiError::calibration)?;
    let lines = g
        .lines
        .iter()
        .map(|l| GridLineResponse {
            axis: l.axis,
            value: l.value,
            polylines: l
                .image
                .split(Option::is_none)
                .filter(|run| !run.is_empty())
                .map(|run| run.iter().flatten().map(|p| [p.u, p.v]).collect())
                .collect(),
        })
        .collect();
    Ok(Json(GridResponse {
        spacing: g.spacing,
        lines,
        dropped_samples: g.dropped_samples,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreviewRequest {
    pub resolution_ppm: f64,
}

impl Default for PreviewRequest {
    fn default() -> Self {
        Self {
            resolution_ppm: DEFAULT_RESOLUTION_PPM,
        }
    }
}

async fn bev_preview(State(state): State<SharedState>, body: Bytes) -> ApiResult<Response> {
    let req: PreviewRequest = parse_body(&body)?;
    let frame = state
        .frame
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, Stage::Render, "missing_frame", "no reference frame loaded"))?;
    let profile = current_profile(&state).await?;
    let bytes = blocking(move || {
        let bev = warp_to_bev(&frame, &profile, req.resolution_ppm, &WarpOptions::default()).map_err(|e| {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, Stage::Render, e.code(), e.to_string())
        })?;
        Ok(encode_png(&bev.image))
    })
    .await?;
    Ok(png(bytes))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityRequest {
    pub perturb_px: f64,
    pub spacing_m: f64,
}

impl Default for SensitivityRequest {
    fn default() -> Self {
        Self {
            perturb_px: 2.0,
            spacing_m: 5.0,
        }
    }
}

async fn sensitivity(
    State(state): State<SharedState>,
    body: Bytes,
) -> ApiResult<Json<roadplane_core::calibration::SensitivityField>> {
    let req: SensitivityRequest = parse_body(&body)?;
    let profile = current_profile(&state).await?;
    let field = blocking(move || sensitivity_field(&profile, req.perturb_px, req.spacing_m).map_err(ApiError::calibration))
        .await?;
    Ok(Json(field))
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/frame", get(get_frame))
        .route("/calibration", get(get_calibration).put(put_calibration))
        .route("/fit", post(fit))
        .route("/grid", post(grid))
        .route("/bev-preview", post(bev_preview))
        .route("/sensitivity", post(sensitivity))
        .with_state(state)
}

/// Serves on `127.0.0.1:port` until the process is stopped.
pub async fn serve(state: SharedState, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
