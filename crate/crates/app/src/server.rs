//! JSON HTTP API over the dataset store.
//!
//! The server is stateless with respect to analysis settings: every request
//! carries its own time range, filter and selection. Datasets are loaded on
//! first use and cached until their file changes on disk.

use std::collections::HashMap;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::SystemTime;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nftdisk_core::analytics::AnalyticsError;
use nftdisk_core::disklayout::{build_disk_layout, resolve_circular_brush, CircularBrush, DiskError};
use nftdisk_core::flowlayout::{build_flow_detail, build_stacked_series, EventRange, FlowError};
use nftdisk_core::{
    detect_constant_spans, replay_holdings, Address, AddressId, BackgroundMetric, CollectionDataset,
    ConstantSpan, FlowLayout, StackedSeries, TimeRange,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::report::{generate_report, ReportOptions};
use crate::session::{parse_time, resolve_range, SessionConfig};
use crate::store::{Store, StoreError};

pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("data directory {0} does not exist")]
    DataDirMissing(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub data_dir: PathBuf,
    pub host: Ipv4Addr,
    pub port: u16,
}

/// Error body: `{"code": ..., "message": ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { code: code.into(), message: message.into() } }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", e.to_string()),
            StoreError::InvalidId(_) => ApiError::bad_request(e.to_string()),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
        }
    }
}

impl From<DiskError> for ApiError {
    fn from(e: DiskError) -> Self {
        match e {
            DiskError::EmptyBrush => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_brush", e.to_string()),
            DiskError::InvalidBrush(_) => ApiError::new(StatusCode::BAD_REQUEST, "invalid_brush", e.to_string()),
            _ => ApiError::bad_request(e.to_string()),
        }
    }
}

impl From<FlowError> for ApiError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::EmptyBrush => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_brush", e.to_string()),
            FlowError::InvalidBrush(_) => ApiError::new(StatusCode::BAD_REQUEST, "invalid_brush", e.to_string()),
            _ => ApiError::bad_request(e.to_string()),
        }
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        ApiError::bad_request(e.to_string())
    }
}

type Cached = (Option<SystemTime>, Arc<CollectionDataset>);

pub struct AppState {
    store: Store,
    cache: RwLock<HashMap<String, Cached>>,
}

impl AppState {
    pub fn new(store: Store) -> Arc<Self> {
        Arc::new(AppState { store, cache: RwLock::new(HashMap::new()) })
    }

    fn dataset(&self, id: &str) -> Result<Arc<CollectionDataset>, ApiError> {
        crate::store::validate_id(id)?;
        let mtime = std::fs::metadata(self.store.dataset_path(id)).and_then(|m| m.modified()).ok();
        if let Some((cached_at, ds)) = self.cache.read().expect("cache lock").get(id) {
            if mtime.is_some() && *cached_at == mtime {
                return Ok(ds.clone());
            }
        }
        let ds = Arc::new(self.store.load(id)?);
        self.cache.write().expect("cache lock").insert(id.to_string(), (mtime, ds.clone()));
        Ok(ds)
    }
}

type Params = HashMap<String, String>;

fn param<T: std::str::FromStr>(params: &Params, key: &str) -> Result<Option<T>, ApiError>
where
    T::Err: std::fmt::Display,
{
    params
        .get(key)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<T>().map_err(|e| ApiError::bad_request(format!("{key}: {e}"))))
        .transpose()
}

fn time_param(params: &Params, key: &str) -> Result<Option<u64>, ApiError> {
    params
        .get(key)
        .filter(|v| !v.is_empty())
        .map(|v| parse_time(v).map_err(|e| ApiError::bad_request(format!("{key}: {e}"))))
        .transpose()
}

fn window(ds: &CollectionDataset, from: Option<u64>, to: Option<u64>) -> Result<TimeRange, ApiError> {
    resolve_range(ds, from, to).map_err(ApiError::bad_request)
}

fn session_from(ds: &CollectionDataset, params: &Params) -> Result<SessionConfig, ApiError> {
    let mut session = SessionConfig::new(ds.collection_id());
    session.time_range = Some(window(ds, time_param(params, "from")?, time_param(params, "to")?)?);
    if let Some(min_tx) = param::<u32>(params, "min_tx")? {
        session.min_tx = min_tx;
    }
    if let Some(metric) = param::<BackgroundMetric>(params, "metric")? {
        session.metric = metric;
    }
    Ok(session)
}

/// Group members from a comma-separated `addresses` parameter, in the order
/// given.
fn group_param(ds: &CollectionDataset, params: &Params) -> Result<Vec<AddressId>, ApiError> {
    let raw = params.get("addresses").map(String::as_str).unwrap_or("");
    let mut out = Vec::new();
    for part in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let address: Address = part.parse().map_err(|e| ApiError::bad_request(format!("addresses: {e}")))?;
        let id = ds
            .address_id(&address)
            .ok_or_else(|| ApiError::bad_request(format!("address {address} does not occur in the collection")))?;
        if !out.contains(&id) {
            out.push(id);
        }
    }
    if out.is_empty() {
        return Err(ApiError::bad_request("addresses: at least one address is required"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressEntry {
    pub id: AddressId,
    pub address: Address,
}

fn entries(ds: &CollectionDataset, ids: &[AddressId]) -> Vec<AddressEntry> {
    ids.iter().map(|id| AddressEntry { id: *id, address: ds.address(*id) }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowGroupResponse {
    pub collection_id: String,
    pub window: TimeRange,
    pub addresses: Vec<AddressEntry>,
    pub series: StackedSeries,
    pub constant_spans: Vec<ConstantSpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowDetailResponse {
    pub collection_id: String,
    pub window: TimeRange,
    pub addresses: Vec<AddressEntry>,
    pub layout: FlowLayout,
}

/// Minimum run length reported as a constant-holdings span by the group view.
const GROUP_SPAN_EVENTS: usize = 3;

pub fn flow_group(ds: &CollectionDataset, params: &Params) -> Result<FlowGroupResponse, ApiError> {
    let group = group_param(ds, params)?;
    let range = window(ds, time_param(params, "from")?, time_param(params, "to")?)?;
    let timeline = replay_holdings(ds, &group, &range)?;
    let series = build_stacked_series(&timeline, &group)?;
    Ok(FlowGroupResponse {
        collection_id: ds.collection_id().to_string(),
        window: range,
        addresses: entries(ds, &group),
        constant_spans: detect_constant_spans(&timeline, GROUP_SPAN_EVENTS),
        series,
    })
}

pub fn flow_detail(ds: &CollectionDataset, params: &Params) -> Result<FlowDetailResponse, ApiError> {
    let group = group_param(ds, params)?;
    let range = window(ds, time_param(params, "from")?, time_param(params, "to")?)?;
    let timeline = replay_holdings(ds, &group, &range)?;
    let Some(full) = EventRange::full(&timeline) else {
        return Err(FlowError::EmptyBrush.into());
    };
    let events = EventRange {
        lo: param::<usize>(params, "event_lo")?.unwrap_or(full.lo),
        hi: param::<usize>(params, "event_hi")?.unwrap_or(full.hi),
    };
    let layout = build_flow_detail(&timeline, events, &group)?;
    Ok(FlowDetailResponse {
        collection_id: ds.collection_id().to_string(),
        window: range,
        addresses: entries(ds, &group),
        layout,
    })
}

/// Brush body. The optional fields repeat the disk view's settings.
#[derive(Debug, Clone, Deserialize)]
pub struct SelectionRequest {
    pub angle_start: f64,
    pub angle_end: f64,
    pub r_lo: f64,
    pub r_hi: f64,
    #[serde(default)]
    pub from: Option<Value>,
    #[serde(default)]
    pub to: Option<Value>,
    #[serde(default)]
    pub min_tx: Option<u32>,
    #[serde(default)]
    pub metric: Option<BackgroundMetric>,
}

fn value_to_param(v: &Option<Value>) -> Option<String> {
    match v {
        Some(Value::String(s)) => Some(s.clone()),
        Some(Value::Number(n)) => Some(n.to_string()),
        _ => None,
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn list_collections(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let metas = state.store.list()?;
    Ok(Json(metas).into_response())
}

async fn disk(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(params): Query<Params>,
) -> Result<Response, ApiError> {
    let layout = blocking(move || {
        let ds = state.dataset(&id)?;
        let session = session_from(&ds, &params)?;
        Ok(build_disk_layout(&ds, &session.disk_config(&ds))?)
    })
    .await?;
    Ok(Json(layout).into_response())
}

async fn selection(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<SelectionRequest>, axum::extract::rejection::JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let sel = blocking(move || {
        let ds = state.dataset(&id)?;
        let mut params = Params::new();
        for (k, v) in [("from", value_to_param(&req.from)), ("to", value_to_param(&req.to))] {
            if let Some(v) = v {
                params.insert(k.to_string(), v);
            }
        }
        let mut session = session_from(&ds, &params)?;
        if let Some(m) = req.min_tx {
            session.min_tx = m;
        }
        if let Some(m) = req.metric {
            session.metric = m;
        }
        let layout = build_disk_layout(&ds, &session.disk_config(&ds))?;
        let brush = CircularBrush { angle_start: req.angle_start, angle_end: req.angle_end, r_lo: req.r_lo, r_hi: req.r_hi };
        Ok(resolve_circular_brush(&layout, &brush)?)
    })
    .await?;
    Ok(Json(sel).into_response())
}

async fn group_view(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(params): Query<Params>,
) -> Result<Response, ApiError> {
    let out = blocking(move || flow_group(&*state.dataset(&id)?, &params)).await?;
    Ok(Json(out).into_response())
}

async fn detail_view(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(params): Query<Params>,
) -> Result<Response, ApiError> {
    let out = blocking(move || flow_detail(&*state.dataset(&id)?, &params)).await?;
    Ok(Json(out).into_response())
}

async fn report(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(params): Query<Params>,
) -> Result<Response, ApiError> {
    let doc = blocking(move || {
        let ds = state.dataset(&id)?;
        let session = session_from(&ds, &params)?;
        let mut options = ReportOptions::default();
        if let Some(top) = param::<usize>(&params, "top")? {
            options.top = top;
        }
        Ok(generate_report(&ds, &session, &options))
    })
    .await?;
    Ok(Json(doc).into_response())
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/collections", get(list_collections))
        .route("/collections/{id}/disk", get(disk))
        .route("/collections/{id}/selection", post(selection))
        .route("/collections/{id}/flow/group", get(group_view))
        .route("/collections/{id}/flow/detail", get(detail_view))
        .route("/collections/{id}/report", get(report))
        .fallback(fallback)
        .with_state(state)
}

/// Binds the listener, failing fast on a missing data directory or a busy
/// port.
pub async fn bind(config: &ServerConfig) -> Result<(tokio::net::TcpListener, Arc<AppState>), ServerError> {
    let store = Store::open(&config.data_dir).map_err(|e| match e {
        StoreError::DataDirMissing(p) => ServerError::DataDirMissing(p),
        StoreError::Io(io) => ServerError::Io(io),
        other => ServerError::Io(std::io::Error::other(other.to_string())),
    })?;
    let addr = SocketAddr::from((config.host, config.port));
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => ServerError::PortInUse(config.port),
        _ => ServerError::Io(e),
    })?;
    Ok((listener, AppState::new(store)))
}

pub async fn serve(config: ServerConfig) -> Result<(), ServerError> {
    let (listener, state) = bind(&config).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
