use std::collections::HashMap;
use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::{PathRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, Method};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use semspace_core::attribution::{integrated_gradients, AttributionConfig, AttributionReport};
use semspace_core::catalog::{filter_items, FilterSpec, Item};
use semspace_core::lenses::{marker_items, year_detail, yearly_counts};
use semspace_core::projection::ViewMode;
use semspace_core::spatial::{viewport_clusters_where, ClusterBatch, Rect, Viewport};
use serde::Serialize;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::error::ApiError;
use crate::json::canonical_json;
use crate::state::{AppState, ViewData};

type Shared = State<Arc<AppState>>;
type Params = Result<Query<HashMap<String, String>>, QueryRejection>;
type Segment = Result<Path<String>, PathRejection>;
type ApiResult = Result<Response, ApiError>;

fn reply<S: Serialize>(value: &S) -> ApiResult {
    let body = canonical_json(value).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

/// Query string accessor that reports every problem in the API error format.
struct QueryArgs(HashMap<String, String>);

impl QueryArgs {
    fn from(params: Params) -> Result<Self, ApiError> {
        params
            .map(|Query(q)| Self(q))
            .map_err(|e| ApiError::bad_request(e.body_text()))
    }

    fn raw(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str).filter(|s| !s.is_empty())
    }

    fn required(&self, name: &str) -> Result<&str, ApiError> {
        self.raw(name)
            .ok_or_else(|| ApiError::bad_request(format!("missing query parameter {name:?}")))
    }

    fn parsed<T: std::str::FromStr>(&self, name: &str) -> Result<Option<T>, ApiError> {
        self.raw(name)
            .map(|s| {
                s.parse()
                    .map_err(|_| ApiError::bad_request(format!("invalid value for {name:?}: {s:?}")))
            })
            .transpose()
    }
}

fn segment(path: Segment) -> Result<String, ApiError> {
    path.map(|Path(s)| s).map_err(|e| ApiError::bad_request(e.body_text()))
}

fn parse_id(raw: &str) -> Result<u64, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::bad_request(format!("invalid item id {raw:?}")))
}

fn view<'a>(state: &'a AppState, raw: &str) -> Result<(ViewMode, &'a ViewData), ApiError> {
    let mode: ViewMode = raw.parse().map_err(ApiError::not_found)?;
    state
        .views
        .get(&mode)
        .map(|v| (mode, v))
        .ok_or_else(|| ApiError::not_found(format!("view {mode} is not loaded")))
}

fn page_args(q: &QueryArgs, state: &AppState) -> Result<(usize, usize), ApiError> {
    let page = q.parsed("page")?.unwrap_or(0);
    let page_size = q.parsed("page_size")?.unwrap_or(state.config.page_size);
    if page_size == 0 {
        return Err(ApiError::bad_request("page_size must be at least 1"));
    }
    Ok((page, page_size))
}

#[derive(Serialize)]
struct Health<'a> {
    status: &'static str,
    catalog_hash: &'a str,
    items: usize,
    views: Vec<ViewMode>,
}

async fn health(State(state): Shared) -> ApiResult {
    reply(&Health {
        status: "ok",
        catalog_hash: &state.catalog_hash,
        items: state.catalog.len(),
        views: state.views.keys().copied().collect(),
    })
}

#[derive(Serialize)]
struct ItemDetail<'a> {
    #[serde(flatten)]
    item: &'a Item,
    #[serde(skip_serializing_if = "Option::is_none")]
    record_url: Option<String>,
}

async fn item(State(state): Shared, path: Segment) -> ApiResult {
    let id = parse_id(&segment(path)?)?;
    let item = state
        .catalog
        .get(id)
        .ok_or_else(|| ApiError::not_found(format!("no item with id {id}")))?;
    reply(&ItemDetail {
        item,
        record_url: state.config.item_url(id),
    })
}

fn parse_bbox(raw: &str) -> Result<Rect<f64>, ApiError> {
    let bad = || ApiError::bad_request(format!("bbox must be four finite numbers x0,y0,x1,y1, got {raw:?}"));
    let v: Vec<f64> = raw
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let [x0, y0, x1, y1] = v[..] else { return Err(bad()) };
    if !v.iter().all(|c| c.is_finite()) || x0 >= x1 || y0 >= y1 {
        return Err(bad());
    }
    Rect::new(x0, x1, y0, y1).map_err(|_| bad())
}

#[derive(Debug, Serialize)]
struct PointsResponse {
    view: ViewMode,
    live_count: usize,
    batch: ClusterBatch,
}

async fn points(State(state): Shared, params: Params) -> ApiResult {
    let q = QueryArgs::from(params)?;
    let (mode, data) = view(&state, q.required("view")?)?;
    let world = parse_bbox(q.required("bbox")?)?;
    let width: u32 = q.parsed("w")?.ok_or_else(|| ApiError::bad_request("missing query parameter \"w\""))?;
    let height: u32 = q.parsed("h")?.ok_or_else(|| ApiError::bad_request("missing query parameter \"h\""))?;
    let g: f64 = q.parsed("g")?.unwrap_or(1.0);
    let radius: f64 = q.parsed("r")?.unwrap_or(state.config.radius_px);
    let spec: FilterSpec = match q.raw("f") {
        Some(f) => serde_json::from_str(f).map_err(|e| ApiError::bad_request(format!("invalid filter: {e}")))?,
        None => FilterSpec::default(),
    };
    let viewport = Viewport::new(world, width, height).map_err(|e| ApiError::bad_request(e.to_string()))?;

    let batch;
    let live_count;
    if spec.is_empty() {
        live_count = data.tree.len();
        batch = viewport_clusters_where(&data.tree, &viewport, radius, g, |_| true);
    } else {
        let kept = filter_items(&state.catalog, &spec)
            .map_err(|e| ApiError::bad_request(e.to_string()))?
            .ids;
        let in_view = |id: u64| kept.binary_search(&id).is_ok();
        live_count = data.ids.iter().filter(|&&id| in_view(id)).count();
        batch = viewport_clusters_where(&data.tree, &viewport, radius, g, in_view);
    }
    let batch = batch.map_err(|e| ApiError::bad_request(e.to_string()))?;
    reply(&PointsResponse {
        view: mode,
        live_count,
        batch,
    })
}

async fn filter_schema(State(state): Shared) -> ApiResult {
    reply(&state.schema)
}

async fn timeline_years(State(state): Shared) -> ApiResult {
    reply(&yearly_counts(&state.catalog))
}

async fn timeline_year(State(state): Shared, path: Segment, params: Params) -> ApiResult {
    let raw = segment(path)?;
    let year: i32 = raw
        .parse()
        .map_err(|_| ApiError::bad_request(format!("invalid year {raw:?}")))?;
    let (page, page_size) = page_args(&QueryArgs::from(params)?, &state)?;
    let detail = year_detail(&state.catalog, year, page, page_size).map_err(|e| ApiError::bad_request(e.to_string()))?;
    if detail.items.total == 0 {
        return Err(ApiError::not_found(format!("no items acquired in {year}")));
    }
    reply(&detail)
}

async fn map_markers(State(state): Shared) -> ApiResult {
    reply(&state.markers)
}

async fn map_marker_items(State(state): Shared, path: Segment, params: Params) -> ApiResult {
    let key = segment(path)?;
    let (page, page_size) = page_args(&QueryArgs::from(params)?, &state)?;
    let marker = state
        .markers
        .find(&key)
        .ok_or_else(|| ApiError::not_found(format!("no marker {key:?}")))?;
    reply(&marker_items(&state.catalog, marker, page, page_size).map_err(|e| ApiError::bad_request(e.to_string()))?)
}

/// Integrated gradients of the cosine between the item's head projection and
/// the reference item's head projection, from a zero baseline.
pub(crate) fn attribution_report(state: &AppState, id: u64, reference: u64, mode: ViewMode) -> Result<AttributionReport, ApiError> {
    let (_, data) = view(state, mode.as_str())?;
    for i in [id, reference] {
        if !state.catalog.contains(i) {
            return Err(ApiError::not_found(format!("no item with id {i}")));
        }
    }
    let (Some(head), Some(embeddings)) = (&data.head, &data.embeddings) else {
        return Err(ApiError::conflict(format!("no head model loaded for view {mode}")));
    };
    let row = |i: u64| {
        embeddings
            .row(i)
            .ok_or_else(|| ApiError::not_found(format!("item {i} has no {mode} embedding")))
    };
    let x = row(id)?;
    let reference = head
        .project(row(reference)?)
        .map_err(|e| ApiError::unprocessable(e.to_string()))?;
    let config = AttributionConfig::cosine(reference);
    let result = integrated_gradients(head, x, &config).map_err(|e| ApiError::unprocessable(e.to_string()))?;
    Ok(AttributionReport::new(Some(id), &config, result, Default::default()))
}

async fn attribution(State(state): Shared, path: Segment, params: Params) -> ApiResult {
    let id = parse_id(&segment(path)?)?;
    let q = QueryArgs::from(params)?;
    let reference = parse_id(q.required("ref")?)?;
    let mode: ViewMode = q.required("view")?.parse().map_err(ApiError::not_found)?;
    let report = tokio::task::spawn_blocking(move || attribution_report(&state, id, reference, mode))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    reply(&report)
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}

fn cors(origins: &[String]) -> Option<CorsLayer> {
    if origins.is_empty() {
        return None;
    }
    let allow = if origins.iter().any(|o| o == "*") {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    Some(CorsLayer::new().allow_methods([Method::GET]).allow_origin(allow))
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/items/{id}", get(item))
        .route("/points", get(points))
        .route("/filters/schema", get(filter_schema))
        .route("/timeline/years", get(timeline_years))
        .route("/timeline/{year}", get(timeline_year))
        .route("/map/markers", get(map_markers))
        .route("/map/markers/{key}/items", get(map_marker_items))
        .route("/attribution/{id}", get(attribution));
    let app = Router::new()
        .nest("/api", api)
        .fallback(fallback)
        .with_state(state.clone());
    match cors(&state.config.cors_origins) {
        Some(layer) => app.layer(layer),
        None => app,
    }
}

/// Serves until `shutdown` resolves, letting in-flight requests finish.
pub async fn serve(
    state: Arc<AppState>,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
