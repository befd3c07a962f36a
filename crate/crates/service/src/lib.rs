//! HTTP API over the fairness library: upload datasets, evaluate what-if adjustments,
//! sweep threshold frontiers and browse the worked-example catalog.
//!
//! Datasets are immutable once uploaded and keyed by the SHA-256 of their CSV bytes.
//! Every evaluation is computed from the stored dataset and the request alone.

mod error;
mod store;
mod whatif;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

use fairlens::data::to_canonical_json;
use fairlens::feasibility::{catalog, scenario};
use fairlens::frontier::{frontier, FrontierRow, DEFAULT_OTHER_THRESHOLD};
use fairlens::Execution;

pub use error::ApiError;
pub use store::{Dataset, DatasetStore};
pub use whatif::{evaluate_whatif, WhatIfRequest};

/// Largest accepted request body.
pub const MAX_BODY_BYTES: usize = 256 * 1024 * 1024;
pub const DEFAULT_FRONTIER_GRID: usize = 101;

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Directory where uploaded CSVs are kept and reloaded from on start.
    pub data_dir: Option<PathBuf>,
    /// Allow cross-origin requests from any origin.
    pub permissive_cors: bool,
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<DatasetStore>,
}

impl AppState {
    pub fn new(config: &ServiceConfig) -> Result<Self, ApiError> {
        Ok(Self {
            store: Arc::new(DatasetStore::open(config.data_dir.clone())?),
        })
    }

    pub fn store(&self) -> &DatasetStore {
        &self.store
    }
}

pub fn router(state: AppState, config: &ServiceConfig) -> Router {
    let app = Router::new()
        .route("/health", get(health))
        .route("/datasets", post(upload))
        .route("/datasets/{id}/whatif", post(whatif))
        .route("/datasets/{id}/frontier", get(frontier_rows))
        .route("/scenarios", get(scenarios))
        .route("/scenarios/{name}", get(scenario_detail))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state);
    if config.permissive_cors {
        app.layer(CorsLayer::permissive())
    } else {
        app
    }
}

/// Router with a fresh state built from `config`.
pub fn app(config: &ServiceConfig) -> Result<Router, ApiError> {
    Ok(router(AppState::new(config)?, config))
}

/// Bind `addr` and serve until the process receives Ctrl-C.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let app = app(&config).map_err(|e| std::io::Error::other(e.to_string()))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("fairlens service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn json_bytes(status: StatusCode, body: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub datasets: Vec<String>,
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        datasets: state.store.ids(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Uploaded {
    pub dataset_id: String,
    pub records: usize,
    pub groups: Vec<String>,
}

async fn upload(State(state): State<AppState>, body: Bytes) -> Result<Json<Uploaded>, ApiError> {
    let ds = state.store.insert(&body)?;
    Ok(Json(Uploaded {
        dataset_id: ds.id.clone(),
        records: ds.data.len(),
        groups: ds.data.groups(),
    }))
}

async fn whatif(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let ds = state.store.get(&id)?;
    let request: WhatIfRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::unprocessable(format!("invalid what-if body: {e}")))?;
    let report = evaluate_whatif(&ds, &request)?;
    Ok(json_bytes(StatusCode::OK, to_canonical_json(&report)?))
}

#[derive(Debug, Deserialize)]
struct FrontierQuery {
    group: String,
    grid: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FrontierResponse {
    pub dataset_id: String,
    pub group: String,
    pub grid: usize,
    pub other_threshold: f64,
    pub rows: Vec<FrontierRow>,
}

async fn frontier_rows(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<FrontierQuery>,
) -> Result<Json<FrontierResponse>, ApiError> {
    let ds = state.store.get(&id)?;
    let grid = q.grid.unwrap_or(DEFAULT_FRONTIER_GRID);
    let rows = frontier(&ds.data, &q.group, grid, Execution::default())?;
    Ok(Json(FrontierResponse {
        dataset_id: ds.id.clone(),
        group: q.group,
        grid,
        other_threshold: DEFAULT_OTHER_THRESHOLD,
        rows,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScenarioList {
    pub scenarios: Vec<String>,
}

async fn scenarios() -> Json<ScenarioList> {
    Json(ScenarioList {
        scenarios: catalog().into_iter().map(String::from).collect(),
    })
}

async fn scenario_detail(Path(name): Path<String>) -> Result<Response, ApiError> {
    let s = scenario(&name).map_err(|e| ApiError::new(StatusCode::NOT_FOUND, e.to_string()))?;
    Ok(json_bytes(StatusCode::OK, to_canonical_json(&s.summary()?)?))
}
