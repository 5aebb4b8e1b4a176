//! HTTP session API: upload a first frame, author tracks, preview the
//! replicated condition and run toy generations.

mod config;
mod error;
mod session;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use latentmove_core::condition::{quantized_tracks, replicate_features};
use latentmove_core::metrics::epe;
use latentmove_core::model::{Checkpoint, DEFAULT_GUIDANCE, DEFAULT_SAMPLING_STEPS};
use latentmove_core::pipeline::{generate, SamplingConfig};
use latentmove_core::retrack::{retrack, PatchTrackerConfig};
use latentmove_core::trajectory::{validate_set, TrajectoryFile};
use latentmove_core::{io, ConditionMode, LatentGeometry, MockCodec, TrajectorySet, VideoTensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::Semaphore;

pub use config::{ConfigError, ServerConfig};
pub use error::{ApiError, ApiResult};
pub use session::{GenerationKey, GenerationResult, ResultReport, Session, SessionStore, TrackEpe};

/// Largest accepted sampling step count.
pub const MAX_STEPS: usize = 1000;
const PREVIEW_FPS: u16 = 4;

type SessionRef = Arc<Mutex<Session>>;

struct Inner {
    checkpoint: Option<Arc<Checkpoint>>,
    checkpoint_id: Option<String>,
    sessions: RwLock<HashMap<String, SessionRef>>,
    workers: Semaphore,
    store: Option<SessionStore>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(checkpoint: Option<Checkpoint>, cfg: &ServerConfig) -> Self {
        let store = cfg.session_dir.as_ref().map(SessionStore::new);
        let sessions = store
            .as_ref()
            .map(|s| s.load_all())
            .unwrap_or_default()
            .into_iter()
            .map(|s| (s.id.clone(), Arc::new(Mutex::new(s))))
            .collect();
        Self {
            inner: Arc::new(Inner {
                checkpoint_id: checkpoint.as_ref().map(Checkpoint::id),
                checkpoint: checkpoint.map(Arc::new),
                sessions: RwLock::new(sessions),
                workers: Semaphore::new(cfg.workers.max(1)),
                store,
            }),
        }
    }

    fn session(&self, id: &str) -> ApiResult<SessionRef> {
        self.inner
            .sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))
    }

    /// Direct access to a session, for embedding tools and tests.
    pub fn session_handle(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.session(id).ok()
    }

    fn persist(&self, s: &Session) {
        if let Some(store) = &self.inner.store {
            if let Err(e) = store.save(s) {
                log::warn!("persisting session {}: {e}", s.id);
            }
        }
    }

    fn default_geometry(&self) -> LatentGeometry {
        self.inner
            .checkpoint
            .as_ref()
            .map(|c| c.header.geometry)
            .unwrap_or_else(LatentGeometry::toy)
    }
}

pub fn router(state: AppState, cfg: &ServerConfig) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/frame", post(upload_frame))
        .route("/sessions/{id}/tracks", put(put_tracks))
        .route("/sessions/{id}/preview", get(preview))
        .route("/sessions/{id}/generate", post(generate_result))
        .route("/sessions/{id}/results/{rid}", get(get_result))
        .layer(DefaultBodyLimit::max(cfg.max_body_bytes))
        .with_state(state)
}

fn lock(s: &SessionRef) -> std::sync::MutexGuard<'_, Session> {
    s.lock().expect("session poisoned")
}

async fn health(State(state): State<AppState>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "model_loaded": state.inner.checkpoint.is_some(),
        "checkpoint_id": state.inner.checkpoint_id,
        "geometry": state.default_geometry(),
        "defaults": { "w": DEFAULT_GUIDANCE, "steps": DEFAULT_SAMPLING_STEPS, "max_steps": MAX_STEPS },
    }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    geometry: Option<LatentGeometry>,
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: CreateSession = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?
    };
    let geometry = req.geometry.unwrap_or_else(|| state.default_geometry());
    geometry
        .validate()
        .map_err(|e| ApiError::unprocessable("invalid_geometry", e.to_string()))?;
    MockCodec::new(geometry).map_err(|e| ApiError::unprocessable("invalid_geometry", e.to_string()))?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let session = Session::new(id.clone(), geometry, created);
    state.persist(&session);
    state
        .inner
        .sessions
        .write()
        .expect("session map poisoned")
        .insert(id.clone(), Arc::new(Mutex::new(session)));
    Ok((
        StatusCode::CREATED,
        Json(json!({ "id": id, "geometry": geometry })),
    )
        .into_response())
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let s = state.session(&id)?;
    let s = lock(&s);
    let mut results: Vec<&String> = s.results.keys().collect();
    results.sort();
    Ok(Json(json!({
        "id": s.id,
        "geometry": s.geometry,
        "created_unix": s.created_unix,
        "has_frame": s.frame.is_some(),
        "tracks": s.tracks.as_ref().map(|t| t.tracks.len()),
        "version": s.version,
        "results": results,
    })))
}

async fn upload_frame(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let s = state.session(&id)?;
    let frame = io::decode_frame(&body).map_err(|e| ApiError::unprocessable("bad_image", e.to_string()))?;
    let mut s = lock(&s);
    let g = s.geometry;
    let (h, w, _) = frame.dim();
    if (h, w) != (g.height, g.width) {
        return Err(ApiError::unprocessable(
            "size_mismatch",
            format!("frame is {h}x{w}, session expects {}x{}", g.height, g.width),
        )
        .with_detail(json!({ "expected": [g.height, g.width], "actual": [h, w] })));
    }
    let codec = MockCodec::new(g)?;
    s.uncond = Some(codec.encode_condition(frame.view())?);
    s.frame = Some(frame);
    s.invalidate();
    state.persist(&s);
    Ok(Json(
        json!({ "ok": true, "height": h, "width": w, "version": s.version }),
    ))
}

async fn put_tracks(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let s = state.session(&id)?;
    let file: TrajectoryFile =
        serde_json::from_slice(&body).map_err(|e| ApiError::unprocessable("bad_tracks", e.to_string()))?;
    let mut set = file.to_raw_set()?;
    let mut s = lock(&s);
    let g = s.geometry;
    if (set.frames, set.height, set.width) != (g.frames, g.height, g.width) {
        return Err(ApiError::unprocessable(
            "geometry_mismatch",
            format!(
                "tracks are {} frames of {}x{}, session expects {} frames of {}x{}",
                set.frames, set.height, set.width, g.frames, g.height, g.width
            ),
        )
        .with_detail(json!({
            "expected": [g.frames, g.height, g.width],
            "actual": [set.frames, set.height, set.width],
        })));
    }
    let report = validate_set(&set);
    let stored = !report.has_structural();
    let mut clamped = 0;
    if stored {
        clamped = set.clamp_to_bounds();
        s.tracks = Some(set);
        s.invalidate();
        state.persist(&s);
    }
    Ok(Json(json!({
        "stored": stored,
        "violations": report.violations,
        "clamped": clamped,
        "version": s.version,
    })))
}

#[derive(Debug, Default, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum VideoFormat {
    #[default]
    Apng,
    Wmt1,
    Json,
}

#[derive(Debug, Default, Deserialize)]
struct PreviewQuery {
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    format: VideoFormat,
}

fn video_response(video: &VideoTensor, format: VideoFormat) -> ApiResult<Response> {
    match format {
        VideoFormat::Apng => {
            let bytes = io::encode_apng(video, PREVIEW_FPS)?;
            Ok(([(header::CONTENT_TYPE, "image/apng")], bytes).into_response())
        }
        VideoFormat::Wmt1 => Ok((
            [(header::CONTENT_TYPE, "application/octet-stream")],
            video.to_raw().to_bytes(),
        )
            .into_response()),
        VideoFormat::Json => Err(ApiError::bad_request("format must be apng or wmt1")),
    }
}

async fn preview(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<PreviewQuery>,
) -> ApiResult<Response> {
    let s = state.session(&id)?;
    let (geometry, uncond, tracks) = {
        let s = lock(&s);
        let uncond = s
            .uncond
            .clone()
            .ok_or_else(|| ApiError::unprocessable("missing_frame", "upload a frame first"))?;
        let tracks = s
            .tracks
            .clone()
            .ok_or_else(|| ApiError::unprocessable("missing_tracks", "put tracks first"))?;
        (s.geometry, uncond, tracks)
    };
    let codec = MockCodec::new(geometry)?;
    let q_tracks = quantized_tracks(&tracks, &codec)?;
    let cond = replicate_features(&uncond, &q_tracks, &mut ChaCha8Rng::seed_from_u64(q.seed))?;
    let video = codec.decode(&cond)?.clamp_unit();
    video_response(&video, q.format)
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenerateRequest {
    w: f64,
    steps: usize,
    seed: u64,
    mode: ConditionMode,
}

impl Default for GenerateRequest {
    fn default() -> Self {
        Self {
            w: DEFAULT_GUIDANCE,
            steps: DEFAULT_SAMPLING_STEPS,
            seed: 0,
            mode: ConditionMode::LatentReplication,
        }
    }
}

/// Clears the in-flight flag however the generation ends.
struct InFlight(SessionRef);

impl Drop for InFlight {
    fn drop(&mut self) {
        if let Ok(mut s) = self.0.lock() {
            s.in_flight = false;
        }
    }
}

fn score(requested: &TrajectorySet, video: &VideoTensor) -> (Option<f64>, Vec<TrackEpe>, Vec<Vec<[f64; 2]>>) {
    if requested.tracks.is_empty() {
        return (None, Vec::new(), Vec::new());
    }
    let found = retrack(video, requested, PatchTrackerConfig::default());
    let per_track = requested
        .tracks
        .iter()
        .zip(&found.tracks)
        .map(|(r, f)| {
            let one =
                |t| TrajectorySet::unchecked(requested.frames, requested.height, requested.width, vec![t]);
            TrackEpe {
                id: r.id,
                epe: epe(&one(r.clone()), &one(f.clone())).ok(),
            }
        })
        .collect();
    let paths = found
        .tracks
        .iter()
        .map(|t| t.positions.iter().map(|p| [p.col, p.row]).collect())
        .collect();
    (epe(requested, &found).ok(), per_track, paths)
}

async fn generate_result(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let req: GenerateRequest = if body.iter().all(u8::is_ascii_whitespace) {
        GenerateRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?
    };
    if !req.w.is_finite() || req.steps == 0 || req.steps > MAX_STEPS {
        return Err(ApiError::unprocessable(
            "bad_parameters",
            format!("w must be finite and steps in 1..={MAX_STEPS}"),
        ));
    }
    let ckpt = state.inner.checkpoint.clone().ok_or_else(|| {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "model_unavailable",
            "no checkpoint loaded",
        )
    })?;
    let session = state.session(&id)?;
    let (key, frame, tracks, geometry) = {
        let mut s = lock(&session);
        let frame = s
            .frame
            .clone()
            .ok_or_else(|| ApiError::unprocessable("missing_frame", "upload a frame first"))?;
        if s.geometry != ckpt.header.geometry {
            return Err(ApiError::unprocessable(
                "geometry_mismatch",
                "session geometry differs from the loaded checkpoint",
            )
            .with_detail(json!({ "session": s.geometry, "checkpoint": ckpt.header.geometry })));
        }
        let key = GenerationKey {
            version: s.version,
            w_bits: req.w.to_bits(),
            steps: req.steps,
            seed: req.seed,
            mode: req.mode,
        };
        if let Some(rid) = s.cache.get(&key) {
            return Ok(Json(json!({ "result_id": rid, "cached": true })).into_response());
        }
        if s.in_flight {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "generation_in_flight",
                "a generation is already running for this session",
            ));
        }
        s.in_flight = true;
        let tracks = s
            .tracks
            .clone()
            .unwrap_or_else(|| TrajectorySet::empty_for(&s.geometry));
        (key, frame, tracks, s.geometry)
    };
    let guard = InFlight(session.clone());

    let _permit = state
        .inner
        .workers
        .acquire()
        .await
        .expect("semaphore never closed");
    let cfg = SamplingConfig {
        guidance: req.w,
        steps: req.steps,
        mode: req.mode,
    };
    let model = ckpt.clone();
    let run_tracks = tracks.clone();
    let video = tokio::task::spawn_blocking(move || {
        let codec = MockCodec::new(geometry)?;
        generate(&model.model, &codec, frame.view(), &run_tracks, &cfg, req.seed).map(|g| g.video)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let (mean, per_track, retracked) = score(&tracks, &video);

    let mut s = lock(&session);
    let rid = s.next_result_id();
    let report = ResultReport {
        result_id: rid.clone(),
        w: req.w,
        steps: req.steps,
        seed: req.seed,
        mode: req.mode,
        tracks_used: tracks.tracks.len(),
        epe: mean,
        per_track,
        retracked,
        checkpoint_id: state.inner.checkpoint_id.clone(),
    };
    s.results.insert(rid.clone(), GenerationResult { report, video });
    if s.version == key.version {
        s.cache.insert(key, rid.clone());
    }
    drop(s);
    drop(guard);
    Ok((
        StatusCode::CREATED,
        Json(json!({ "result_id": rid, "cached": false })),
    )
        .into_response())
}

#[derive(Debug, Deserialize)]
struct ResultQuery {
    #[serde(default = "json_format")]
    format: VideoFormat,
}

fn json_format() -> VideoFormat {
    VideoFormat::Json
}

async fn get_result(
    State(state): State<AppState>,
    Path((id, rid)): Path<(String, String)>,
    Query(q): Query<ResultQuery>,
) -> ApiResult<Response> {
    let s = state.session(&id)?;
    let result = lock(&s)
        .results
        .get(&rid)
        .cloned()
        .ok_or_else(|| ApiError::not_found("result", &rid))?;
    match q.format {
        VideoFormat::Json => Ok(Json(result.report).into_response()),
        f => video_response(&result.video, f),
    }
}

/// Binds and serves until ctrl-c.
pub async fn serve(cfg: ServerConfig, checkpoint: Option<Checkpoint>) -> std::io::Result<()> {
    let state = AppState::new(checkpoint, &cfg);
    let app = router(state, &cfg);
    let listener = tokio::net::TcpListener::bind((cfg.bind.as_str(), cfg.port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
