use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use steerbench_service::session::{Engine, EngineConfig, Position, StudySession};
use steerbench_service::{router, AppState, ServiceConfig};
use tower::ServiceExt;

fn engine() -> Arc<Engine> {
    static ENGINE: OnceLock<Arc<Engine>> = OnceLock::new();
    ENGINE
        .get_or_init(|| Arc::new(Engine::new(EngineConfig::default()).unwrap()))
        .clone()
}

fn config(dir: &std::path::Path) -> ServiceConfig {
    ServiceConfig {
        data_dir: dir.to_owned(),
        ..ServiceConfig::default()
    }
}

fn app(cfg: &ServiceConfig) -> Router {
    router(AppState::with_engine(cfg, engine()).unwrap(), cfg.static_dir.clone())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    call_auth(app, method, uri, body, None).await
}

async fn call_auth(app: &Router, method: &str, uri: &str, body: Option<Value>, token: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

async fn create(app: &Router, body: Value) -> String {
    let (status, v) = call(app, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_owned()
}

/// Harsh but consistent ratings: every spoken response is rejected.
fn harsh(index: usize) -> Value {
    json!({
        "interaction_index": index,
        "aspects": [1, 2, 4, 3, 4],
        "action": "reject",
        "texts": {"communication_style": "shorter please"}
    })
}

async fn run_all(app: &Router, id: &str) -> Vec<Value> {
    let mut out = Vec::new();
    for i in 0..10 {
        let (status, v) = call(app, "POST", &format!("/sessions/{id}/feedback"), Some(harsh(i))).await;
        assert_eq!(status, StatusCode::OK, "{v}");
        out.push(v);
    }
    out
}

#[tokio::test]
async fn replay_restores_identical_state() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path());
    let a = app(&cfg);
    let id = create(&a, json!({"condition": "A", "seed": 11})).await;
    for i in 0..7 {
        let (s, v) = call(&a, "POST", &format!("/sessions/{id}/feedback"), Some(harsh(i))).await;
        assert_eq!(s, StatusCode::OK, "{v}");
    }
    let (_, report) = call(&a, "GET", &format!("/sessions/{id}/report"), None).await;
    let (_, next) = call(&a, "GET", &format!("/sessions/{id}/next"), None).await;

    let b = app(&cfg);
    let (_, report2) = call(&b, "GET", &format!("/sessions/{id}/report"), None).await;
    let (_, next2) = call(&b, "GET", &format!("/sessions/{id}/next"), None).await;
    assert_eq!(report, report2);
    assert_eq!(next, next2);

    // Replay from the log alone matches replay through a snapshot.
    std::fs::remove_file(tmp.path().join("sessions").join(&id).join("snapshot.json")).unwrap();
    let c = app(&cfg);
    let (_, report3) = call(&c, "GET", &format!("/sessions/{id}/report"), None).await;
    assert_eq!(report, report3);
}

#[tokio::test]
async fn static_condition_never_moves_strengths() {
    let tmp = tempfile::tempdir().unwrap();
    let a = app(&config(tmp.path()));
    let id = create(&a, json!({"condition": "V", "seed": 3})).await;
    for out in run_all(&a, &id).await {
        assert_eq!(out["applied"], json!(false));
        assert_eq!(out["alpha_snapshot"], json!([0.0, 0.0, 0.0, 0.0, 0.0]));
    }
    let (_, report) = call(&a, "GET", &format!("/sessions/{id}/report"), None).await;
    assert_eq!(report["final_alphas"], json!([0.0, 0.0, 0.0, 0.0, 0.0]));
    assert_eq!(report["metrics"]["overall"]["n"], json!(10));
}

#[tokio::test]
async fn adaptive_condition_moves_strengths() {
    let tmp = tempfile::tempdir().unwrap();
    let a = app(&config(tmp.path()));
    let id = create(&a, json!({"condition": "A", "seed": 3})).await;
    let outs = run_all(&a, &id).await;
    assert!(outs.iter().all(|o| o["applied"] == json!(true)));
    let last: Vec<f64> = serde_json::from_value(outs[9]["alpha_snapshot"].clone()).unwrap();
    assert!(last.iter().any(|a| *a > 0.0), "{last:?}");
    assert!(last.iter().all(|a| (0.0..=1.0).contains(a)));
}

#[tokio::test]
async fn alternating_condition_adapts_on_odd_interactions_only() {
    let tmp = tempfile::tempdir().unwrap();
    let a = app(&config(tmp.path()));
    let id = create(&a, json!({"condition": "C", "seed": 5})).await;
    let outs = run_all(&a, &id).await;
    let mut prev = json!([0.0, 0.0, 0.0, 0.0, 0.0]);
    for (i, o) in outs.iter().enumerate() {
        let odd_numbered = (i + 1) % 2 == 1;
        assert_eq!(o["applied"], json!(odd_numbered), "interaction {}", i + 1);
        if !odd_numbered {
            assert_eq!(o["alpha_snapshot"], prev, "even interaction {} changed strengths", i + 1);
        }
        prev = o["alpha_snapshot"].clone();
    }
}

#[test]
fn detection_positions_are_balanced() {
    let e = engine();
    let mut first = 0;
    let mut total = 0;
    for seed in 0..100u64 {
        let ev = StudySession::creation(format!("s{seed}"), steerbench_service::session::Condition::V,
            steerbench_service::session::Mode::Detection, seed, false);
        let s = StudySession::create(&e, &ev).unwrap();
        for i in 0..10 {
            total += 1;
            first += usize::from(s.adapted_position(i) == Position::A);
        }
    }
    // 1000 fair coin flips: 4 standard deviations is about 63.
    assert!((437..=563).contains(&first), "{first} of {total}");
}

#[tokio::test]
async fn detection_sessions_record_choices() {
    let tmp = tempfile::tempdir().unwrap();
    let a = app(&config(tmp.path()));
    let id = create(&a, json!({"mode": "detection", "seed": 9})).await;
    let (_, offer) = call(&a, "GET", &format!("/sessions/{id}/next"), None).await;
    assert_eq!(offer["kind"], json!("pair"));
    assert!(offer["a"]["decision"].is_string() && offer["b"]["decision"].is_string());
    let (s, v) = call(&a, "POST", &format!("/sessions/{id}/feedback"), Some(json!({"interaction_index": 0, "choice": "a"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], json!("explanation"));
    for i in 0..10 {
        let body = json!({"interaction_index": i, "choice": "a", "explanation": "felt better timed"});
        let (s, v) = call(&a, "POST", &format!("/sessions/{id}/feedback"), Some(body)).await;
        assert_eq!(s, StatusCode::OK, "{v}");
        assert_eq!(v["applied"], json!(false));
    }
    let (_, report) = call(&a, "GET", &format!("/sessions/{id}/report"), None).await;
    assert_eq!(report["detection"]["n"], json!(10));
    assert!(report["metrics"].is_null());
}

#[tokio::test]
async fn conditions_are_assigned_round_robin() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path());
    let a = app(&cfg);
    let mut seen = Vec::new();
    for _ in 0..4 {
        let (_, v) = call(&a, "POST", "/sessions", None).await;
        seen.push(v["condition"].as_str().unwrap().to_owned());
    }
    assert_eq!(seen, ["V", "A", "C", "V"]);
    // The rotation survives a restart.
    let b = app(&cfg);
    let (_, v) = call(&b, "POST", "/sessions", Some(json!({}))).await;
    assert_eq!(v["condition"], json!("A"));
}

#[tokio::test]
async fn request_errors_map_to_statuses() {
    let tmp = tempfile::tempdir().unwrap();
    let a = app(&config(tmp.path()));

    let (s, v) = call(&a, "POST", "/sessions", Some(json!({"condition": "X"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], json!("condition"));

    let (s, _) = call(&a, "GET", "/sessions/nope/next", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let id = create(&a, json!({"condition": "A", "seed": 1})).await;
    let fb = format!("/sessions/{id}/feedback");
    let (s, _) = call(&a, "GET", &format!("/sessions/{id}/report"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let (s, _) = call(&a, "POST", &fb, Some(harsh(1))).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let mut bad = harsh(0);
    bad["aspects"] = json!([1, 2, 9, 3, 4]);
    let (s, v) = call(&a, "POST", &fb, Some(bad)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], json!("aspects[2]"));

    let (s, v) = call(&a, "POST", &fb, Some(json!({"interaction_index": 0, "aspects": "high"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], json!("aspects"));

    let q = format!("/sessions/{id}/questionnaire");
    let (s, _) = call(&a, "POST", &q, Some(json!({"ratings": [4, 4, 4, 4, 4]}))).await;
    assert_eq!(s, StatusCode::CONFLICT);

    run_all(&a, &id).await;
    let (s, _) = call(&a, "GET", &format!("/sessions/{id}/next"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = call(&a, "POST", &fb, Some(harsh(10))).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let (s, v) = call(&a, "POST", &q, Some(json!({"ratings": [4, 0, 4, 4, 4]}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], json!("ratings[1]"));
    let (s, _) = call(&a, "POST", &q, Some(json!({"ratings": [4, 4, 4, 4, 4]}))).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (s, _) = call(&a, "POST", &q, Some(json!({"ratings": [4, 4, 4, 4, 4]}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (_, report) = call(&a, "GET", &format!("/sessions/{id}/report"), None).await;
    assert_eq!(report["questionnaire"], json!([4, 4, 4, 4, 4]));
    assert_eq!(report["log_sha256"].as_str().unwrap().len(), 64);
}

#[tokio::test]
async fn rejected_requests_leave_no_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let a = app(&config(tmp.path()));
    let id = create(&a, json!({"condition": "A", "seed": 1})).await;
    let log = tmp.path().join("sessions").join(&id).join("events.jsonl");
    let before = std::fs::read(&log).unwrap();
    let (s, _) = call(&a, "POST", &format!("/sessions/{id}/feedback"), Some(harsh(4))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(std::fs::read(&log).unwrap(), before);
    let (_, v) = call(&a, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(v["cursor"], json!(0));
}

#[tokio::test]
async fn torn_log_tail_is_dropped_on_restart() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path());
    let a = app(&cfg);
    let id = create(&a, json!({"condition": "A", "seed": 2})).await;
    call(&a, "POST", &format!("/sessions/{id}/feedback"), Some(harsh(0))).await;
    let log = tmp.path().join("sessions").join(&id).join("events.jsonl");
    let intact = std::fs::read(&log).unwrap();
    let mut torn = intact.clone();
    torn.extend_from_slice(b"{\"body\":{\"interaction_in");
    std::fs::write(&log, &torn).unwrap();

    let b = app(&cfg);
    let (_, v) = call(&b, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(v["cursor"], json!(1));
    assert_eq!(std::fs::read(&log).unwrap(), intact);
}

#[tokio::test]
async fn bearer_token_guards_the_api() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path());
    cfg.token = Some("s3cret".into());
    let a = app(&cfg);
    let (s, _) = call(&a, "POST", "/sessions", None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = call_auth(&a, "POST", "/sessions", None, Some("wrong")).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = call_auth(&a, "POST", "/sessions", None, Some("s3cret")).await;
    assert_eq!(s, StatusCode::CREATED);
    let (s, _) = call(&a, "GET", "/health", None).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn app_assets_are_served() {
    let tmp = tempfile::tempdir().unwrap();
    let assets = tmp.path().join("assets");
    std::fs::create_dir_all(&assets).unwrap();
    std::fs::write(assets.join("index.html"), "<h1>study</h1>").unwrap();
    let mut cfg = config(&tmp.path().join("data"));
    cfg.static_dir = Some(assets);
    let a = app(&cfg);
    let resp = a
        .clone()
        .oneshot(Request::get("/app/index.html").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&bytes[..], b"<h1>study</h1>");
}
