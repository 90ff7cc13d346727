//! JSON-over-HTTP query service.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Instant;

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use geoblocks::aggtrie::{adapted_select_covering, select_with_stats, AggregateTrie, StatsCollector, StatsTrie};
use geoblocks::cellgrid::{Polygon, DEFAULT_MAX_CELLS};
use geoblocks::geoblock::{AggSpec, GeoBlock};
use geoblocks::Error as CoreError;
use log::{info, warn};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::workload::DEFAULT_REFRESH_EVERY;

#[derive(Clone, Copy, Debug)]
pub struct ServeOptions {
    /// Rebuild a block's cache after this many SELECT queries; 0 never.
    pub refresh_every: u64,
    /// Budget for automatic refreshes, percent of the aggregate-array bytes.
    pub budget_pct: f64,
    pub hit_window: usize,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            refresh_every: DEFAULT_REFRESH_EVERY as u64,
            budget_pct: 5.0,
            hit_window: geoblocks::aggtrie::DEFAULT_HIT_WINDOW,
        }
    }
}

pub struct BlockEntry {
    block: RwLock<Arc<GeoBlock>>,
    collector: StatsCollector,
    admin_busy: AtomicBool,
    since_refresh: AtomicU64,
    refreshes: AtomicU64,
}

impl BlockEntry {
    pub fn new(block: GeoBlock, window: usize) -> BlockEntry {
        BlockEntry {
            block: RwLock::new(Arc::new(block)),
            collector: StatsCollector::new(StatsTrie::default(), window),
            admin_busy: AtomicBool::new(false),
            since_refresh: AtomicU64::new(0),
            refreshes: AtomicU64::new(0),
        }
    }

    pub fn current(&self) -> Arc<GeoBlock> {
        self.block.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Rebuilds the cache from the collected statistics and swaps in a new
    /// block. Returns `None` when another admin operation is running.
    pub fn refresh(&self, budget_pct: f64) -> Option<Result<Arc<GeoBlock>, CoreError>> {
        if self.admin_busy.compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire).is_err() {
            return None;
        }
        let result = (|| {
            let current = self.current();
            let budget = (current.aggregate_bytes() as f64 * budget_pct / 100.0).round() as usize;
            let trie = AggregateTrie::build(&current, &self.collector.stats(), budget)?;
            let mut next = (*current).clone();
            next.set_cache(trie)?;
            let next = Arc::new(next);
            *self.block.write().unwrap_or_else(|e| e.into_inner()) = next.clone();
            self.since_refresh.store(0, Ordering::Release);
            self.refreshes.fetch_add(1, Ordering::AcqRel);
            Ok(next)
        })();
        self.admin_busy.store(false, Ordering::Release);
        Some(result)
    }

    /// Marks an admin operation as running until the guard drops.
    pub fn hold_admin(self: &Arc<Self>) -> Option<AdminGuard> {
        self.admin_busy
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .ok()
            .map(|_| AdminGuard(self.clone()))
    }
}

pub struct AdminGuard(Arc<BlockEntry>);

impl Drop for AdminGuard {
    fn drop(&mut self) {
        self.0.admin_busy.store(false, Ordering::Release);
    }
}

pub struct AppState {
    pub blocks: BTreeMap<String, Arc<BlockEntry>>,
    pub options: ServeOptions,
}

impl AppState {
    pub fn new(blocks: BTreeMap<String, GeoBlock>, options: ServeOptions) -> AppState {
        let blocks = blocks
            .into_iter()
            .map(|(name, b)| (name, Arc::new(BlockEntry::new(b, options.hit_window))))
            .collect();
        AppState { blocks, options }
    }

    /// Loads `name=path` pairs.
    pub fn load(specs: &[(String, String)], options: ServeOptions) -> anyhow::Result<AppState> {
        let mut blocks = BTreeMap::new();
        for (name, path) in specs {
            let block = GeoBlock::load(Path::new(path)).with_context(|| format!("loading block `{name}` from {path}"))?;
            info!("loaded block `{name}`: {} aggregates at level {}", block.aggregates().len(), block.block_level());
            blocks.insert(name.clone(), block);
        }
        Ok(AppState::new(blocks, options))
    }

    pub fn entry(&self, name: &str) -> Result<&Arc<BlockEntry>, ApiError> {
        self.blocks.get(name).ok_or_else(|| ApiError::not_found(format!("unknown block `{name}`")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(m: impl Into<String>) -> ApiError {
        ApiError { status: StatusCode::BAD_REQUEST, message: m.into() }
    }

    fn not_found(m: impl Into<String>) -> ApiError {
        ApiError { status: StatusCode::NOT_FOUND, message: m.into() }
    }

    fn conflict(m: impl Into<String>) -> ApiError {
        ApiError { status: StatusCode::CONFLICT, message: m.into() }
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> ApiError {
        let status = match e {
            CoreError::Io(_) | CoreError::CorruptRegion(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError { status, message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/blocks", get(list_blocks))
        .route("/query", post(query))
        .route("/admin/refresh-cache", post(refresh_cache))
        .route("/stats/{block}", get(block_stats))
        .with_state(state)
}

pub fn block_summary(name: &str, block: &GeoBlock) -> Value {
    let h = block.header();
    let totals: serde_json::Map<String, Value> = h
        .schema
        .columns()
        .iter()
        .zip(&h.totals)
        .map(|(c, t)| {
            let v = if h.total_count == 0 {
                json!({ "min": null, "max": null, "sum": 0.0 })
            } else {
                json!({ "min": t.min, "max": t.max, "sum": t.sum })
            };
            (c.name.clone(), v)
        })
        .collect();
    json!({
        "name": name,
        "level": h.block_level,
        "filter": h.filter.to_string(),
        "schema": h.schema.to_string(),
        "total_count": h.total_count,
        "aggregate_count": h.aggregate_count,
        "totals": totals,
        "cached_cells": block.cache().map_or(0, |c| c.cached_cells()),
    })
}

async fn list_blocks(State(state): State<Arc<AppState>>) -> Json<Value> {
    let list: Vec<Value> = state.blocks.iter().map(|(name, e)| block_summary(name, &e.current())).collect();
    Json(Value::Array(list))
}

#[derive(Debug, Deserialize)]
pub struct QueryRequest {
    pub block: String,
    pub polygon: Value,
    #[serde(default)]
    pub aggs: Option<String>,
    #[serde(default)]
    pub count_only: bool,
    #[serde(default = "yes")]
    pub use_cache: bool,
    #[serde(default)]
    pub max_cells: Option<usize>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Default, Deserialize)]
pub struct QueryParams {
    #[serde(default)]
    pub debug_covering: Option<String>,
}

fn strict_polygon(v: &Value) -> Result<Polygon, ApiError> {
    if v.get("type").and_then(Value::as_str) != Some("Polygon") {
        return Err(ApiError::bad_request("polygon must be a GeoJSON Polygon"));
    }
    Ok(Polygon::from_geojson(v)?)
}

async fn query(
    State(state): State<Arc<AppState>>,
    Query(params): Query<QueryParams>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let req: QueryRequest = parse_body(&body)?;
    let entry = state.entry(&req.block)?.clone();
    let t0 = Instant::now();
    let poly = strict_polygon(&req.polygon)?;
    let block = entry.current();
    let cov = block.covering(&poly, req.max_cells.unwrap_or(DEFAULT_MAX_CELLS))?;
    let mut out = serde_json::Map::new();
    if req.count_only {
        out.insert("count".into(), json!(block.count_covering(&cov)));
        out.insert("epsilon_m".into(), json!(cov.epsilon_m));
    } else {
        let spec: AggSpec = req.aggs.as_deref().unwrap_or("count").parse()?;
        let result = match block.cache() {
            Some(trie) if req.use_cache => adapted_select_covering(&block, trie, &cov, &spec, Some(&entry.collector))?,
            _ => select_with_stats(&block, &cov, &spec, &entry.collector)?,
        };
        out.insert("result".into(), Value::Object(result.to_json(&spec)));
        out.insert("count".into(), json!(result.count));
        out.insert("epsilon_m".into(), json!(result.epsilon_m));
        out.insert("cells_visited".into(), json!(result.cells_visited));
        out.insert("cache_hits".into(), json!(result.cache_hits));
        out.insert("aggregates_scanned".into(), json!(result.aggregates_scanned));
        maybe_auto_refresh(&state, &entry);
    }
    if matches!(params.debug_covering.as_deref(), Some("1" | "true")) {
        let cells: Vec<String> = cov.cells.iter().map(|c| c.to_hex()).collect();
        out.insert("covering".into(), json!(cells));
    }
    out.insert("block".into(), json!(req.block));
    out.insert("latency_us".into(), json!(t0.elapsed().as_secs_f64() * 1e6));
    Ok(Json(Value::Object(out)))
}

fn maybe_auto_refresh(state: &AppState, entry: &BlockEntry) {
    let every = state.options.refresh_every;
    if every == 0 {
        return;
    }
    let n = entry.since_refresh.fetch_add(1, Ordering::AcqRel) + 1;
    if n >= every {
        match entry.refresh(state.options.budget_pct) {
            Some(Err(e)) => warn!("automatic cache refresh failed: {e}"),
            Some(Ok(b)) => info!("cache refreshed: {} cells", b.cache().map_or(0, |c| c.cached_cells())),
            None => {}
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct RefreshRequest {
    pub block: String,
    #[serde(default)]
    pub budget_pct: Option<f64>,
}

async fn refresh_cache(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: RefreshRequest = parse_body(&body)?;
    let entry = state.entry(&req.block)?;
    let pct = req.budget_pct.unwrap_or(state.options.budget_pct);
    if !(pct.is_finite() && pct > 0.0) {
        return Err(ApiError::bad_request("budget_pct must be positive"));
    }
    match entry.refresh(pct) {
        None => Err(ApiError::conflict("another admin operation is running on this block")),
        Some(Err(e)) => Err(e.into()),
        Some(Ok(block)) => Ok(Json(json!({
            "block": req.block,
            "cache": block.cache().map(|c| c.stats()),
        }))),
    }
}

async fn block_stats(State(state): State<Arc<AppState>>, UrlPath(name): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let entry = state.entry(&name)?;
    let block = entry.current();
    let snap = entry.collector.snapshot();
    Ok(Json(json!({
        "block": name,
        "cache": block.cache().map(|c| c.stats()),
        "hit_rate": snap.hit_rate,
        "window": snap.window_len,
        "queries": snap.queries,
        "recorded_cells": snap.recorded_cells,
        "refreshes": entry.refreshes.load(Ordering::Acquire),
        "queries_since_refresh": entry.since_refresh.load(Ordering::Acquire),
    })))
}

pub async fn serve(state: AppState, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
