//! HTTP API.
//!
//! | method | path | result |
//! |---|---|---|
//! | POST | `/api/jobs` | multipart `image` plus parameter fields, `202 {id, state}` |
//! | GET | `/api/jobs` | job listing, oldest first |
//! | GET | `/api/jobs/{id}` | status; when done also summary, detections and measurements |
//! | GET | `/api/jobs/{id}/results.csv` | measurement table |
//! | GET | `/api/jobs/{id}/masks.zip` | per-object full-frame mask PNGs |
//! | GET | `/api/jobs/{id}/overlay.png?conf=c` | input with detections `>= c` drawn |
//!
//! Errors are `{"code": ..., "message": ...}` with a matching status.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::multipart::MultipartRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use fiberscope_core::geometry::{BoundingBox, Polygon};
use fiberscope_core::morphometry::MorphometryRecord;
use fiberscope_core::CellClass;
use serde::{Deserialize, Serialize};
use tokio::io::AsyncWriteExt;

use crate::analysis::{AnalysisOutput, ClassSummary};
use crate::job::{is_valid_id, JobParams, JobRecord, JobState};
use crate::service::{Service, ServiceError};
use crate::store::StoreError;

/// Maximum outline deviation of contours sent to clients, in pixels.
pub const CONTOUR_TOLERANCE_PX: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            log::error!("{}: {}", self.code, self.message);
        }
        let body = ErrorBody {
            code: self.code.into(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::EmptyUpload => Self::bad_request("empty_upload", "the uploaded file is empty"),
            ServiceError::Undecodable(m) => Self::bad_request("invalid_image", m),
            ServiceError::InvalidParameter(m) => Self::bad_request("invalid_parameter", m),
            ServiceError::Store(StoreError::NotFound(id)) => {
                Self::new(StatusCode::NOT_FOUND, "not_found", format!("no job with id {id}"))
            }
            ServiceError::Store(StoreError::WrongState { id, state }) => Self::new(
                StatusCode::CONFLICT,
                if state == JobState::Failed { "job_failed" } else { "not_ready" },
                format!("job {id} is {state}; results exist only for done jobs"),
            ),
            other => Self::internal(other.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(service: Arc<Service>) -> Router {
    let limit = service.config().max_upload_bytes;
    Router::new()
        .route("/api/jobs", get(list_jobs).post(submit_job))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/jobs/{id}/results.csv", get(get_csv))
        .route("/api/jobs/{id}/masks.zip", get(get_masks))
        .route("/api/jobs/{id}/overlay.png", get(get_overlay))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .layer(DefaultBodyLimit::max(limit))
        .with_state(service)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(ApiError::from)
}

fn known_id(service: &Service, id: &str) -> ApiResult<()> {
    if is_valid_id(id) && service.store().contains(id) {
        Ok(())
    } else {
        Err(ServiceError::Store(StoreError::NotFound(id.to_string())).into())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub id: String,
    pub state: JobState,
}

const IMAGE_FIELDS: [&str; 2] = ["image", "file"];

async fn submit_job(
    State(service): State<Arc<Service>>,
    multipart: Result<Multipart, MultipartRejection>,
) -> ApiResult<Response> {
    let mut multipart = multipart.map_err(|e| ApiError::new(e.status(), "bad_request", e.body_text()))?;
    let staged = {
        let s = service.clone();
        blocking(move || s.stage_upload()).await?
    };
    let mut params = service.config().defaults;
    let mut original_name = None;
    let mut have_image = false;
    let multipart_err = |e: axum::extract::multipart::MultipartError| {
        let status = e.status();
        let code = if status == StatusCode::PAYLOAD_TOO_LARGE {
            "payload_too_large"
        } else {
            "bad_request"
        };
        ApiError::new(status, code, e.body_text())
    };
    while let Some(mut field) = multipart.next_field().await.map_err(multipart_err)? {
        let name = field.name().unwrap_or_default().to_string();
        if IMAGE_FIELDS.contains(&name.as_str()) {
            if have_image {
                return Err(ApiError::bad_request("bad_request", "more than one image in the upload"));
            }
            have_image = true;
            original_name = field.file_name().map(str::to_string);
            let mut file = tokio::fs::File::create(staged.file())
                .await
                .map_err(|e| ApiError::internal(e.to_string()))?;
            while let Some(chunk) = field.chunk().await.map_err(multipart_err)? {
                file.write_all(&chunk).await.map_err(|e| ApiError::internal(e.to_string()))?;
            }
            file.flush().await.map_err(|e| ApiError::internal(e.to_string()))?;
        } else {
            let value = field.text().await.map_err(multipart_err)?;
            params
                .set(&name, &value)
                .map_err(|m| ApiError::bad_request("invalid_parameter", m))?;
        }
    }
    if !have_image {
        return Err(ApiError::bad_request("missing_image", "multipart field `image` is required"));
    }
    let s = service.clone();
    let record = blocking(move || s.commit_upload(staged, original_name, params)).await?;
    Ok((
        StatusCode::ACCEPTED,
        Json(SubmitResponse {
            id: record.id,
            state: record.state,
        }),
    )
        .into_response())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobListing {
    pub jobs: Vec<JobSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobSummary {
    pub id: String,
    pub state: JobState,
    pub original_name: Option<String>,
    pub created_ms: u64,
    pub finished_ms: Option<u64>,
    pub error: Option<String>,
}

impl From<&JobRecord> for JobSummary {
    fn from(r: &JobRecord) -> Self {
        Self {
            id: r.id.clone(),
            state: r.state,
            original_name: r.original_name.clone(),
            created_ms: r.created_ms,
            finished_ms: r.finished_ms,
            error: r.error.clone(),
        }
    }
}

async fn list_jobs(State(service): State<Arc<Service>>) -> Json<JobListing> {
    Json(JobListing {
        jobs: service.jobs().iter().map(JobSummary::from).collect(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobView {
    pub id: String,
    pub state: JobState,
    pub original_name: Option<String>,
    pub params: JobParams,
    pub created_ms: u64,
    pub started_ms: Option<u64>,
    pub finished_ms: Option<u64>,
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results: Option<ResultsView>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultsView {
    pub image_width: usize,
    pub image_height: usize,
    pub tiles: usize,
    pub duplicates_removed: usize,
    pub border_excluded: usize,
    pub warnings: Vec<String>,
    pub summary: BTreeMap<CellClass, ClassSummary>,
    pub detections: Vec<DetectionView>,
    pub measurements: Vec<MorphometryRecord>,
    pub links: Links,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionView {
    pub object_id: u64,
    pub class: CellClass,
    pub confidence: f64,
    pub bbox: BoundingBox,
    /// Outer outline in image pixels, decimated to at most one pixel of error.
    pub contour: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Links {
    pub csv: String,
    pub masks: String,
    pub overlay: String,
}

fn contour_points(p: &Polygon) -> Vec<[f64; 2]> {
    p.simplify(CONTOUR_TOLERANCE_PX).vertices().iter().map(|v| [v.x, v.y]).collect()
}

pub fn results_view(id: &str, out: &AnalysisOutput) -> ResultsView {
    let (image_width, image_height) = out.merged.image_size;
    ResultsView {
        image_width,
        image_height,
        tiles: out.merged.tiles,
        duplicates_removed: out.merged.duplicates_removed,
        border_excluded: out.merged.border_excluded,
        warnings: out.warnings.clone(),
        summary: out.class_summaries().into_iter().collect(),
        detections: out
            .records
            .iter()
            .zip(&out.merged.detections)
            .map(|(r, d)| DetectionView {
                object_id: r.object_id,
                class: d.class,
                confidence: d.confidence,
                bbox: d.bbox,
                contour: contour_points(&d.contour),
            })
            .collect(),
        measurements: out.records.clone(),
        links: Links {
            csv: format!("/api/jobs/{id}/results.csv"),
            masks: format!("/api/jobs/{id}/masks.zip"),
            overlay: format!("/api/jobs/{id}/overlay.png"),
        },
    }
}

async fn get_job(State(service): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Json<JobView>> {
    known_id(&service, &id)?;
    let view = blocking(move || {
        let r = service.job(&id)?;
        let results = match r.state {
            JobState::Done => Some(results_view(&id, service.results(&id)?.as_ref())),
            _ => None,
        };
        Ok(JobView {
            id: r.id,
            state: r.state,
            original_name: r.original_name,
            params: r.params,
            created_ms: r.created_ms,
            started_ms: r.started_ms,
            finished_ms: r.finished_ms,
            error: r.error,
            results,
        })
    })
    .await?;
    Ok(Json(view))
}

async fn file_response(path: PathBuf, content_type: &'static str, download: String) -> ApiResult<Response> {
    let file = tokio::fs::File::open(&path)
        .await
        .map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
    let len = file.metadata().await.map(|m| m.len()).ok();
    let body = Body::from_stream(tokio_util::io::ReaderStream::new(file));
    let mut resp = Response::new(body);
    let h = resp.headers_mut();
    h.insert(header::CONTENT_TYPE, header::HeaderValue::from_static(content_type));
    if let Ok(v) = header::HeaderValue::from_str(&format!("attachment; filename=\"{download}\"")) {
        h.insert(header::CONTENT_DISPOSITION, v);
    }
    if let Some(len) = len {
        h.insert(header::CONTENT_LENGTH, len.into());
    }
    Ok(resp)
}

async fn get_csv(State(service): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Response> {
    known_id(&service, &id)?;
    let name = format!("{id}_results.csv");
    let path = blocking(move || service.csv_path(&id)).await?;
    file_response(path, "text/csv; charset=utf-8", name).await
}

async fn get_masks(State(service): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Response> {
    known_id(&service, &id)?;
    let name = format!("{id}_masks.zip");
    let path = blocking(move || service.masks_path(&id)).await?;
    file_response(path, "application/zip", name).await
}

#[derive(Debug, Deserialize)]
struct OverlayQuery {
    conf: Option<String>,
}

async fn get_overlay(
    State(service): State<Arc<Service>>,
    Path(id): Path<String>,
    Query(q): Query<OverlayQuery>,
) -> ApiResult<Response> {
    known_id(&service, &id)?;
    let cutoff = match q.conf.as_deref() {
        None => 0.0,
        Some(s) => s
            .trim()
            .parse::<f64>()
            .map_err(|_| ApiError::bad_request("invalid_parameter", format!("conf: cannot parse `{s}`")))?,
    };
    let png = blocking(move || service.overlay_png(&id, cutoff)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}
