mod common;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use common::*;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use wordspot::formats::IndexFile;
use wordspot::pipeline::{search_example, search_text};
use wordspot::server::{router, AppState, HitList};
use wordspot_core::index::QueryConfig;

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post(uri: &str, body: Value) -> Request<Body> {
    Request::post(uri).header("content-type", "application/json").body(Body::from(body.to_string())).unwrap()
}

fn fixture() -> (tempfile::TempDir, IndexFile) {
    let dir = tempfile::tempdir().unwrap();
    let pages = synth_dir(dir.path(), 2, 21);
    let index = fixture_index(&pages, &model(9));
    (dir, index)
}

#[tokio::test]
async fn health_on_empty_index() {
    let app = router(AppState { index: IndexFile { query: QueryConfig::default(), model: model(0), pages: vec![] }, pages_dir: None });
    let (s, body) = call(&app, get("/api/health")).await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v, json!({"status": "ok", "index_version": 1, "pages": 0, "proposals": 0}));
    let (s, body) = call(&app, get("/api/pages")).await;
    assert_eq!((s, body.as_slice()), (StatusCode::OK, b"[]".as_slice()));
}

#[tokio::test]
async fn pages_and_images() {
    let (_dir, index) = fixture();
    let app = router(AppState { index: index.clone(), pages_dir: None });
    let (s, body) = call(&app, get("/api/pages")).await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v, json!([{"page_id": "p0", "width": 500, "height": 300}, {"page_id": "p1", "width": 500, "height": 300}]));
    let (s, png) = call(&app, get("/api/pages/p1/image")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(&png[1..4], b"PNG");
    let (s, _) = call(&app, get("/api/pages/nope/image")).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let health: Value = serde_json::from_slice(&call(&app, get("/api/health")).await.1).unwrap();
    assert_eq!(health["proposals"], json!(index.proposal_count()));
}

#[tokio::test]
async fn search_contract() {
    let (_dir, index) = fixture();
    let app = router(AppState { index: index.clone(), pages_dir: None });
    let (s, body) = call(&app, get("/api/search?q=gamma&k=25")).await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    let hits = v["hits"].as_array().unwrap();
    assert!(!hits.is_empty() && hits.len() <= 25);
    for (i, h) in hits.iter().enumerate() {
        let keys: Vec<&str> = h.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        assert_eq!(keys.len(), 4);
        for k in ["page_id", "box", "similarity", "rank"] {
            assert!(keys.contains(&k));
        }
        assert_eq!(h["rank"], json!(i + 1));
        assert_eq!(h["box"].as_array().unwrap().len(), 4);
    }
    let sims: Vec<f64> = hits.iter().map(|h| h["similarity"].as_f64().unwrap()).collect();
    assert!(sims.windows(2).all(|w| w[0] >= w[1]));
    let list: HitList = serde_json::from_slice(&body).unwrap();
    assert_eq!(list.hits, search_text(&index, "gamma", 25).unwrap());

    for bad in ["/api/search", "/api/search?q=gamma&k=abc", "/api/search?q=gamma&k=0", "/api/search?q=", "/api/search?q=%21%21"] {
        let (s, body) = call(&app, get(bad)).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{bad}");
        let v: Value = serde_json::from_slice(&body).unwrap();
        assert!(v["error"].is_string() && v["message"].is_string());
    }
}

#[tokio::test]
async fn qbe_matches_cli_path() {
    let (_dir, index) = fixture();
    let app = router(AppState { index: index.clone(), pages_dir: None });
    let first = &search_text(&index, "delta", 5).unwrap()[0];
    let (s, body) = call(&app, post("/api/search/qbe", json!({"page_id": first.page_id, "box": first.bbox}))).await;
    assert_eq!(s, StatusCode::OK);
    let list: HitList = serde_json::from_slice(&body).unwrap();
    assert_eq!(list.hits, search_example(&index, &first.page_id, first.bbox, index.query.k, None).unwrap());

    let cases = [
        (json!({"page_id": "nope", "box": [1, 1, 10, 10]}), StatusCode::NOT_FOUND),
        (json!({"page_id": "p0", "box": [0, 0, 5000, 5000]}), StatusCode::PAYLOAD_TOO_LARGE),
        (json!({"page_id": "p0", "box": [10, 10, 0, 5]}), StatusCode::BAD_REQUEST),
        (json!({"page_id": "p0"}), StatusCode::BAD_REQUEST),
        (json!({"page_id": "p0", "box": [1, 2, 3]}), StatusCode::BAD_REQUEST),
    ];
    for (body, want) in cases {
        let (s, _) = call(&app, post("/api/search/qbe", body.clone())).await;
        assert_eq!(s, want, "{body}");
    }
}

#[tokio::test]
async fn console_served() {
    let (_dir, index) = fixture();
    let app = router(AppState { index, pages_dir: None });
    let (s, body) = call(&app, get("/")).await;
    assert_eq!(s, StatusCode::OK);
    assert!(String::from_utf8(body).unwrap().contains("/api/search"));
}
