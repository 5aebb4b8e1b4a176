use axum::body::{to_bytes, Body};
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use latentmove_core::model::{Checkpoint, DenoiserDims, ToyDenoiser, TrainConfig};
use latentmove_core::{
    io, LatentGeometry, MockCodec, PixelTrajectory, Point, RawTensor, TrajectorySet, VideoTensor,
};
use latentmove_server::{router, AppState, ServerConfig};
use ndarray::Array3;
use serde_json::{json, Value};
use tower::ServiceExt;

fn checkpoint() -> Checkpoint {
    let geom = LatentGeometry::toy();
    let model = ToyDenoiser::new(DenoiserDims::for_geometry(&geom, 8), 1);
    Checkpoint::new(&model, geom, TrainConfig::default()).unwrap()
}

fn app_with(ckpt: Option<Checkpoint>, cfg: &ServerConfig) -> (AppState, Router) {
    let state = AppState::new(ckpt, cfg);
    (state.clone(), router(state, cfg))
}

fn app() -> (AppState, Router) {
    app_with(Some(checkpoint()), &ServerConfig::default())
}

async fn call(app: &Router, method: Method, uri: &str, body: impl Into<Body>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .body(body.into())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, bytes.to_vec())
}

async fn call_json(app: &Router, method: Method, uri: &str, body: impl Into<Body>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

/// Gray texture with a red 4x4 square whose top-left corner is (8, 8).
fn test_frame() -> Array3<f32> {
    Array3::from_shape_fn((32, 32, 3), |(r, c, ch)| {
        if (8..12).contains(&r) && (8..12).contains(&c) {
            [1.0, 0.0, 0.0][ch]
        } else {
            0.3 + 0.2 * (((r / 4 + c / 4) % 2) as f32)
        }
    })
}

async fn session_with_frame(app: &Router) -> String {
    let (status, v) = call_json(app, Method::POST, "/sessions", Body::empty()).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = v["id"].as_str().unwrap().to_string();
    let png = io::encode_png(test_frame().view()).unwrap();
    let (status, _) = call(app, Method::POST, &format!("/sessions/{id}/frame"), png).await;
    assert_eq!(status, StatusCode::OK);
    id
}

fn tracks_json(tracks: Vec<PixelTrajectory>) -> String {
    TrajectorySet::unchecked(9, 32, 32, tracks).to_json()
}

/// One track from the square's cell (9.5, 9.5) moving right by 2 px per frame.
fn moving_track() -> PixelTrajectory {
    PixelTrajectory::visible_path(0, (0..9).map(|n| Point::new(9.5, 9.5 + 2.0 * n as f64)).collect())
}

#[tokio::test]
async fn health_reports_the_model() {
    let (_, app) = app();
    let (status, v) = call_json(&app, Method::GET, "/health", Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["model_loaded"], true);
    assert_eq!(v["geometry"]["height"], 32);
    assert_eq!(v["defaults"]["w"], 5.0);
    assert_eq!(v["defaults"]["steps"], 50);
}

#[tokio::test]
async fn sessions_get_distinct_ids_and_geometry_is_checked() {
    let (_, app) = app();
    let (_, a) = call_json(&app, Method::POST, "/sessions", Body::empty()).await;
    let (_, b) = call_json(&app, Method::POST, "/sessions", Body::empty()).await;
    assert_ne!(a["id"], b["id"]);

    let bad = json!({"geometry": {"temporal_factor": 4, "spatial_factor": 4, "channels": 3,
        "frames": 9, "height": 30, "width": 32}});
    let (status, v) = call_json(&app, Method::POST, "/sessions", bad.to_string()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "invalid_geometry");
    assert!(v["message"].is_string());
    assert!(v.get("detail").is_some());

    let (status, v) = call_json(&app, Method::GET, "/sessions/nope", Body::empty()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "not_found");
}

#[tokio::test]
async fn frame_upload_checks_dimensions() {
    let (_, app) = app();
    let id = session_with_frame(&app).await;
    let small = io::encode_png(Array3::<f32>::zeros((16, 32, 3)).view()).unwrap();
    let (status, v) = call_json(&app, Method::POST, &format!("/sessions/{id}/frame"), small).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "size_mismatch");
    assert_eq!(v["detail"]["expected"], json!([32, 32]));
    assert_eq!(v["detail"]["actual"], json!([16, 32]));

    let raw = RawTensor::new(vec![32, 32, 3], test_frame().iter().copied().collect()).unwrap();
    let (status, v) = call_json(
        &app,
        Method::POST,
        &format!("/sessions/{id}/frame"),
        raw.to_bytes(),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["version"], 2);

    let (status, v) = call_json(
        &app,
        Method::POST,
        &format!("/sessions/{id}/frame"),
        "not an image",
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "bad_image");
}

#[tokio::test]
async fn track_upload_reports_violations() {
    let (_, app) = app();
    let id = session_with_frame(&app).await;
    let uri = format!("/sessions/{id}/tracks");

    let (status, v) = call_json(&app, Method::PUT, &uri, tracks_json(vec![moving_track()])).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["stored"], true);
    assert_eq!(v["violations"], json!([]));

    let mut nan = moving_track();
    nan.positions[3].col = f64::NAN;
    let (status, v) = call_json(&app, Method::PUT, &uri, tracks_json(vec![nan])).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["stored"], false);
    assert_eq!(v["violations"][0]["frame"], 3);
    assert_eq!(v["violations"][0]["kind"], "non_finite");

    let mut wide = moving_track();
    wide.positions[8].col = 40.0;
    let (_, v) = call_json(&app, Method::PUT, &uri, tracks_json(vec![wide])).await;
    assert_eq!(v["stored"], true);
    assert_eq!(v["clamped"], 1);

    let short = TrajectorySet::unchecked(5, 32, 32, Vec::new()).to_json();
    let (status, v) = call_json(&app, Method::PUT, &uri, short).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "geometry_mismatch");
}

#[tokio::test]
async fn preview_replicates_the_source_patch() {
    let (_, app) = app();
    let id = session_with_frame(&app).await;
    let preview = format!("/sessions/{id}/preview?seed=3&format=wmt1");
    let (status, v) = call_json(&app, Method::GET, &preview, Body::empty()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "missing_tracks");

    // Empty tracks: frame 0 block-averaged, every later frame zero.
    call(
        &app,
        Method::PUT,
        &format!("/sessions/{id}/tracks"),
        tracks_json(vec![]),
    )
    .await;
    let (status, bytes) = call(&app, Method::GET, &preview, Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    let video = VideoTensor::from_raw(RawTensor::from_bytes(&bytes).unwrap()).unwrap();
    let codec = MockCodec::new(LatentGeometry::toy()).unwrap();
    // The frame went through 8-bit PNG on upload.
    let uploaded = io::decode_png(&io::encode_png(test_frame().view()).unwrap()).unwrap();
    let expect0 = codec
        .decode(&codec.encode_condition(uploaded.view()).unwrap())
        .unwrap();
    assert_eq!(video.frame(0), expect0.frame(0));
    assert!(video
        .array()
        .slice(ndarray::s![1.., .., .., ..])
        .iter()
        .all(|&v| v == 0.0));

    // One moving track: the red cell (rows 8..12, cols 8..12) lands where the
    // last latent frame's mean position quantizes to: pixel frames 5..=8 average
    // col 22.5, which is latent col 5.625, rounded to cell 6 = cols 24..28.
    call(
        &app,
        Method::PUT,
        &format!("/sessions/{id}/tracks"),
        tracks_json(vec![moving_track()]),
    )
    .await;
    let (_, bytes) = call(&app, Method::GET, &preview, Body::empty()).await;
    let video = VideoTensor::from_raw(RawTensor::from_bytes(&bytes).unwrap()).unwrap();
    let last = video.frame(8);
    for r in 8..12 {
        for c in 24..28 {
            assert_eq!(
                [last[[r, c, 0]], last[[r, c, 1]], last[[r, c, 2]]],
                [1.0, 0.0, 0.0]
            );
        }
    }
    let (_, again) = call(&app, Method::GET, &preview, Body::empty()).await;
    assert_eq!(bytes, again);

    let (status, apng) = call(
        &app,
        Method::GET,
        &format!("/sessions/{id}/preview"),
        Body::empty(),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(&apng[1..4], b"PNG");
}

#[tokio::test]
async fn generation_is_cached_and_scored() {
    let (_, app) = app();
    let id = session_with_frame(&app).await;
    let gen = format!("/sessions/{id}/generate");
    let body = json!({"w": 5.0, "steps": 3, "seed": 7}).to_string();

    // No tracks: plain image-to-video, EPE omitted.
    let (status, v) = call_json(&app, Method::POST, &gen, body.clone()).await;
    assert_eq!(status, StatusCode::CREATED);
    let rid = v["result_id"].as_str().unwrap().to_string();
    let (status, r) = call_json(
        &app,
        Method::GET,
        &format!("/sessions/{id}/results/{rid}"),
        Body::empty(),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(r["epe"], Value::Null);
    assert_eq!(r["tracks_used"], 0);

    let (status, v) = call_json(&app, Method::POST, &gen, body.clone()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["cached"], true);
    assert_eq!(v["result_id"], rid.as_str());

    call(
        &app,
        Method::PUT,
        &format!("/sessions/{id}/tracks"),
        tracks_json(vec![moving_track()]),
    )
    .await;
    let (status, v) = call_json(&app, Method::POST, &gen, body).await;
    assert_eq!(status, StatusCode::CREATED);
    let rid2 = v["result_id"].as_str().unwrap();
    assert_ne!(rid2, rid);
    let (_, r) = call_json(
        &app,
        Method::GET,
        &format!("/sessions/{id}/results/{rid2}"),
        Body::empty(),
    )
    .await;
    assert!(r["epe"].as_f64().unwrap() >= 0.0);
    assert_eq!(r["per_track"][0]["id"], 0);
    assert_eq!(r["retracked"][0].as_array().unwrap().len(), 9);
    assert_eq!(r["w"], 5.0);

    let (status, bytes) = call(
        &app,
        Method::GET,
        &format!("/sessions/{id}/results/{rid2}?format=wmt1"),
        Body::empty(),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let video = VideoTensor::from_raw(RawTensor::from_bytes(&bytes).unwrap()).unwrap();
    assert_eq!(video.frames(), 9);

    let (status, _) = call(
        &app,
        Method::GET,
        &format!("/sessions/{id}/results/r99"),
        Body::empty(),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn concurrent_generation_is_refused() {
    let (state, app) = app();
    let id = session_with_frame(&app).await;
    state.session_handle(&id).unwrap().lock().unwrap().in_flight = true;
    let (status, v) = call_json(
        &app,
        Method::POST,
        &format!("/sessions/{id}/generate"),
        Body::empty(),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["code"], "generation_in_flight");
}

#[tokio::test]
async fn generation_needs_a_model_and_sane_parameters() {
    let (_, bare) = app_with(None, &ServerConfig::default());
    let id = session_with_frame(&bare).await;
    let (status, v) = call_json(
        &bare,
        Method::POST,
        &format!("/sessions/{id}/generate"),
        Body::empty(),
    )
    .await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(v["code"], "model_unavailable");

    let (_, app) = app();
    let id = session_with_frame(&app).await;
    let body = json!({"steps": 0}).to_string();
    let (status, _) = call_json(&app, Method::POST, &format!("/sessions/{id}/generate"), body).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn sessions_survive_a_restart_with_persistence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServerConfig {
        session_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let (_, app) = app_with(Some(checkpoint()), &cfg);
    let id = session_with_frame(&app).await;
    call(
        &app,
        Method::PUT,
        &format!("/sessions/{id}/tracks"),
        tracks_json(vec![moving_track()]),
    )
    .await;

    let (_, app) = app_with(Some(checkpoint()), &cfg);
    let (status, v) = call_json(&app, Method::GET, &format!("/sessions/{id}"), Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["has_frame"], true);
    assert_eq!(v["tracks"], 1);
}
