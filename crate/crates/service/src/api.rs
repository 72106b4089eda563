//! HTTP routes.

use std::collections::HashMap;
use std::io::Cursor;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::multipart::MultipartRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hieroscribe_core::raster;
use log::info;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::backend::{BackendKind, Backends};
use crate::config::ServiceConfig;
use crate::error::ApiError;
use crate::session::{Correction, Metadata, Session};

type SessionMap = HashMap<String, Arc<Mutex<Session>>>;

#[derive(Clone)]
pub struct AppState {
    pub config: Arc<ServiceConfig>,
    pub backends: Arc<Backends>,
    sessions: Arc<Mutex<SessionMap>>,
}

impl AppState {
    pub fn new(config: ServiceConfig, backends: Backends) -> Self {
        Self::with_backends(config, Arc::new(backends))
    }

    /// State over backends shared with other states.
    pub fn with_backends(config: ServiceConfig, backends: Arc<Backends>) -> Self {
        Self {
            config: Arc::new(config),
            backends,
            sessions: Arc::default(),
        }
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session map poisoned").len()
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .lock()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id:?}")))
    }

    fn snapshot(&self, session: &Session) {
        let Some(dir) = &self.config.snapshot_dir else {
            return;
        };
        let path = dir.join(format!("{}.json", session.id));
        let res = std::fs::create_dir_all(dir)
            .and_then(|_| std::fs::write(&path, serde_json::to_vec_pretty(session).unwrap_or_default()));
        if let Err(e) = res {
            log::warn!("cannot write snapshot {}: {e}", path.display());
        }
    }
}

/// Runs `f` on the locked session off the async runtime; requests on the
/// same session queue on its lock.
async fn with_session<T, F>(state: &AppState, id: &str, mutates: bool, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&mut Session, &AppState) -> Result<T, ApiError> + Send + 'static,
{
    let handle = state.session(id)?;
    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        let mut s = handle.lock().map_err(|_| ApiError::internal("session lock poisoned"))?;
        let out = f(&mut s, &state)?;
        if mutates {
            state.snapshot(&s);
        }
        Ok(out)
    })
    .await
    .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        let mut err = ApiError::bad_request(format!("invalid JSON body: {e}"));
        err.kind = "invalid_json";
        err
    })
}

pub fn router(state: AppState) -> Router {
    let limit = state.config.max_upload_bytes.saturating_add(64 * 1024);
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/segment", post(segment))
        .route("/sessions/{id}/classify", post(classify))
        .route("/sessions/{id}/corrections", post(corrections))
        .route("/sessions/{id}/export.csv", get(export))
        .route("/sessions/{id}/glyphs/{glyph}/crop.png", get(glyph_crop))
        .fallback(|| async { ApiError::not_found("no such route") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed on this route")
        })
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

async fn health(State(state): State<AppState>) -> Json<Value> {
    let backends: serde_json::Map<String, Value> = BackendKind::ALL
        .into_iter()
        .map(|b| {
            let v = match state.backends.status(b) {
                Ok(()) => json!({ "ready": true }),
                Err(u) => json!({ "ready": false, "model_file": u.model_file, "reason": u.reason }),
            };
            (b.to_string(), v)
        })
        .collect();
    Json(json!({
        "status": "ok",
        "sessions": state.session_count(),
        "default_backend": BackendKind::default(),
        "backends": backends,
    }))
}

fn multipart_error(status: StatusCode, detail: String) -> ApiError {
    if status == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(status, "payload_too_large", detail)
    } else {
        ApiError::bad_request(detail)
    }
}

async fn create_session(
    State(state): State<AppState>,
    multipart: Result<Multipart, MultipartRejection>,
) -> Result<Response, ApiError> {
    let mut multipart = multipart.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let max = state.config.max_upload_bytes;
    let (mut image, mut metadata) = (None, None);
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| multipart_error(e.status(), e.body_text()))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| multipart_error(e.status(), e.body_text()))?;
        match name.as_str() {
            "image" => image = Some(bytes),
            "metadata" => metadata = Some(bytes),
            other => return Err(ApiError::bad_request(format!("unexpected multipart field {other:?}"))),
        }
    }
    let image = image.ok_or_else(|| ApiError::bad_request("missing multipart field \"image\""))?;
    if image.len() > max {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "payload_too_large",
            format!("image is {} bytes; the limit is {max}", image.len()),
        ));
    }
    let metadata: Metadata = parse_json(&metadata.ok_or_else(|| ApiError::bad_request("missing multipart field \"metadata\""))?)?;
    metadata.validate()?;
    let decoded = tokio::task::spawn_blocking(move || raster::decode_gray(&image))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(|e| {
            let mut err = ApiError::bad_request(format!("cannot decode image: {e}"));
            err.kind = "decode_error";
            err
        })?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let session = Session::new(id.clone(), decoded, metadata);
    let body = json!({ "session_id": id, "width": session.width, "height": session.height });
    state.snapshot(&session);
    state
        .sessions
        .lock()
        .expect("session map poisoned")
        .insert(id.clone(), Arc::new(Mutex::new(session)));
    info!("created session {id}");
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    with_session(&state, &id, false, |s, _| {
        serde_json::to_value(&*s).map_err(|e| ApiError::internal(e.to_string()))
    })
    .await
    .map(Json)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentRequest {
    roi: [i64; 4],
    column_labels: Option<Vec<String>>,
}

async fn segment(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: SegmentRequest = parse_json(&body)?;
    with_session(&state, &id, true, move |s, st| {
        let ids = s.segment(req.roi, req.column_labels.as_deref(), &st.config.segmentation)?;
        let glyphs: Vec<&_> = ids.iter().map(|&i| &s.glyphs[i]).collect();
        Ok(json!({ "glyphs": glyphs }))
    })
    .await
    .map(Json)
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ClassifyRequest {
    backend: Option<BackendKind>,
}

async fn classify(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: ClassifyRequest = if body.iter().all(u8::is_ascii_whitespace) {
        ClassifyRequest::default()
    } else {
        parse_json(&body)?
    };
    with_session(&state, &id, true, move |s, st| {
        let backend = req.backend.unwrap_or(s.backend);
        let out = s.classify(backend, &st.backends)?;
        if let Some(m) = out.median_latency_ms {
            info!("session {}: {} glyphs with {backend}, median {m:.2} ms", s.id, out.predictions.len());
        }
        serde_json::to_value(out).map_err(|e| ApiError::internal(e.to_string()))
    })
    .await
    .map(Json)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CorrectionsRequest {
    corrections: Vec<Correction>,
}

async fn corrections(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: CorrectionsRequest = parse_json(&body)?;
    with_session(&state, &id, true, move |s, _| {
        let touched = s.apply_corrections(&req.corrections)?;
        let glyphs: Vec<&_> = touched.iter().map(|&i| &s.glyphs[i]).collect();
        Ok(json!({ "glyphs": glyphs }))
    })
    .await
    .map(Json)
}

async fn export(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let bytes = with_session(&state, &id, false, |s, st| {
        let bytes = s.export(&st.config.geometry)?;
        info!("session {}: exported {} CSV bytes", s.id, bytes.len());
        if let Some(dir) = &st.config.snapshot_dir {
            let path = dir.join(format!("{}.csv", s.id));
            if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, &bytes)) {
                log::warn!("cannot write {}: {e}", path.display());
            }
        }
        Ok(bytes)
    })
    .await?;
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8"),
            (header::CONTENT_DISPOSITION, "attachment; filename=\"transcription.csv\""),
        ],
        bytes,
    )
        .into_response())
}

async fn glyph_crop(
    State(state): State<AppState>,
    Path((id, glyph)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let gid: usize = glyph
        .parse()
        .map_err(|_| ApiError::bad_request(format!("glyph id {glyph:?} is not a number")))?;
    let png = with_session(&state, &id, false, move |s, _| {
        let g = s
            .glyphs
            .get(gid)
            .ok_or_else(|| ApiError::not_found(format!("no glyph {gid}")))?;
        let mut out = Vec::new();
        g.crop
            .write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(out)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}
