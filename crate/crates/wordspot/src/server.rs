//! Read-only HTTP API over a loaded index.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use wordspot_core::Error as CoreError;

use crate::error::{Error, Result};
use crate::formats::{IndexFile, INDEX_VERSION};
use crate::io::{encode_png, load_gray};
use crate::pipeline::{page_image_path, search_example, search_text, WireHit};

pub struct AppState {
    pub index: IndexFile,
    pub pages_dir: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct PageInfo<'a> {
    page_id: &'a str,
    width: u32,
    height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitList {
    pub hits: Vec<WireHit>,
}

#[derive(Debug, Deserialize)]
struct SearchParams {
    q: String,
    k: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QbeBody {
    page_id: String,
    #[serde(rename = "box")]
    bbox: [i64; 4],
    k: Option<usize>,
}

struct ApiError(StatusCode, serde_json::Value);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Core(CoreError::UnknownPage(_)) => StatusCode::NOT_FOUND,
            Error::Core(CoreError::OversizedBox) => StatusCode::PAYLOAD_TOO_LARGE,
            Error::Core(_) | Error::Usage(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_json())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

fn bad_request(message: String) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, json!({ "error": "bad_request", "message": message }))
}

fn resolve_k(k: Option<usize>, state: &AppState) -> std::result::Result<usize, ApiError> {
    match k {
        Some(0) => Err(bad_request("k must be positive".into())),
        Some(k) => Ok(k),
        None => Ok(state.index.query.k),
    }
}

async fn pages(State(s): State<Arc<AppState>>) -> impl IntoResponse {
    let list: Vec<PageInfo<'_>> =
        s.index.pages.iter().map(|p| PageInfo { page_id: &p.page_id, width: p.width, height: p.height }).collect();
    Json(serde_json::to_value(list).expect("page list serializes"))
}

async fn page_image(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> std::result::Result<Response, ApiError> {
    let state = s.clone();
    let png = tokio::task::spawn_blocking(move || -> Result<Vec<u8>> {
        let path = page_image_path(&state.index, &id, state.pages_dir.as_deref())?;
        Ok(encode_png(&load_gray(&path)?))
    })
    .await
    .map_err(|e| Error::Internal(e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn search(
    State(s): State<Arc<AppState>>,
    params: std::result::Result<Query<SearchParams>, QueryRejection>,
) -> std::result::Result<Json<HitList>, ApiError> {
    let Query(p) = params.map_err(|e| bad_request(e.body_text()))?;
    let k = resolve_k(p.k, &s)?;
    Ok(Json(HitList { hits: search_text(&s.index, &p.q, k)? }))
}

async fn search_qbe(
    State(s): State<Arc<AppState>>,
    body: std::result::Result<Json<QbeBody>, JsonRejection>,
) -> std::result::Result<Json<HitList>, ApiError> {
    let Json(b) = body.map_err(|e| bad_request(e.body_text()))?;
    let k = resolve_k(b.k, &s)?;
    let state = s.clone();
    let hits = tokio::task::spawn_blocking(move || search_example(&state.index, &b.page_id, b.bbox, k, state.pages_dir.as_deref()))
        .await
        .map_err(|e| Error::Internal(e.to_string()))??;
    Ok(Json(HitList { hits }))
}

async fn health(State(s): State<Arc<AppState>>) -> impl IntoResponse {
    Json(json!({
        "status": "ok",
        "index_version": INDEX_VERSION,
        "pages": s.index.pages.len(),
        "proposals": s.index.proposal_count(),
    }))
}

const CONSOLE: &str = r#"<!doctype html>
<html><head><meta charset="utf-8"><title>wordspot</title></head>
<body>
<h1>wordspot</h1>
<p>Search API: <code>GET /api/search?q=word&amp;k=25</code>, <code>POST /api/search/qbe</code>,
<code>GET /api/pages</code>, <code>GET /api/pages/{id}/image</code>, <code>GET /api/health</code>.</p>
</body></html>
"#;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/", get(|| async { Html(CONSOLE) }))
        .route("/api/pages", get(pages))
        .route("/api/pages/{id}/image", get(page_image))
        .route("/api/search", get(search))
        .route("/api/search/qbe", post(search_qbe))
        .route("/api/health", get(health))
        .with_state(Arc::new(state))
}

/// Blocks serving `index` on `addr`.
pub fn serve(index: IndexFile, pages_dir: Option<PathBuf>, addr: &str) -> Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| Error::Internal(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| Error::io(addr, e))?;
        eprintln!("listening on http://{}", listener.local_addr().map_err(|e| Error::io(addr, e))?);
        axum::serve(listener, router(AppState { index, pages_dir })).await.map_err(|e| Error::Internal(e.to_string()))
    })
}
