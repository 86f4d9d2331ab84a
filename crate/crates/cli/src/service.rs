//! Query service over one loaded snapshot (model, world, road graph).
//!
//! Endpoints, all returning one JSON document:
//! - `GET /v1/predict?lat=&lon=[&time=]`: concentrations, PAQI, category and imputed features
//! - `GET /v1/route?from_lat=&from_lon=&to_lat=&to_lon=[&time=]`: shortest and clean routes as GeoJSON
//! - `GET /v1/health`: version and fingerprints
//! - `POST /v1/reload`: reloads the snapshot from disk and swaps it in atomically
//!
//! Errors are `{"error": kind, "message": text}` with status 400 for malformed
//! queries, 422 for points outside the region and 500 otherwise.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};

use aqmap_core::apps::{annotate_paqi, build_graph, RoadGraph};
use aqmap_core::model::MlpModel;
use aqmap_core::{Execution, GeoPoint, Hour};

use crate::config::EngineConfig;
use crate::pipeline::{
    load_model, predict_point, prepare, query_hour, route_between, route_document, Prepared,
};

/// Everything one request needs. Never mutated after loading, except for the
/// cache of PAQI-annotated graphs.
pub struct Snapshot {
    pub region: String,
    pub prepared: Prepared,
    pub model: MlpModel,
    pub graph: RoadGraph,
    pub config_fingerprint: String,
    annotated: Mutex<HashMap<Hour, Arc<RoadGraph>>>,
}

impl Snapshot {
    pub fn load(cfg: &EngineConfig, region: &str) -> anyhow::Result<Snapshot> {
        let rc = cfg.region(region)?;
        let prepared = prepare(cfg, rc, None)?;
        let model = load_model(cfg, region)?;
        // Fail at load rather than on the first request.
        prepared.predictor(&model)?;
        let graph = build_graph(&prepared.world.world().roads);
        Ok(Snapshot {
            region: region.to_string(),
            prepared,
            model,
            graph,
            config_fingerprint: cfg.fingerprint(),
            annotated: Mutex::new(HashMap::new()),
        })
    }

    pub fn predict(&self, lat: f64, lon: f64, time: Option<&str>) -> anyhow::Result<Value> {
        predict_point(&self.prepared, &self.model, lat, lon, time)
    }

    /// Graph weighted by the PAQI at `hour`, computed once per hour.
    fn annotated(&self, hour: Hour) -> anyhow::Result<Arc<RoadGraph>> {
        if let Some(g) = self.annotated.lock().expect("cache lock").get(&hour) {
            return Ok(g.clone());
        }
        let predictor = self.prepared.predictor(&self.model)?;
        let g = Arc::new(annotate_paqi(
            &self.graph,
            &predictor,
            hour,
            Execution::default(),
        )?);
        self.annotated
            .lock()
            .expect("cache lock")
            .insert(hour, g.clone());
        Ok(g)
    }

    pub fn route(&self, from: GeoPoint, to: GeoPoint, time: Option<&str>) -> anyhow::Result<Value> {
        let hour = query_hour(&self.prepared.world.world().measurements, time)?;
        let coverage = self.prepared.world.world().region.bbox;
        for p in [&from, &to] {
            if !coverage.contains(p) {
                return Err(aqmap_core::Error::OutOfCoverage(format!(
                    "({}, {}) is outside the region",
                    p.lat(),
                    p.lon()
                ))
                .into());
            }
        }
        let graph = self.annotated(hour)?;
        let plan = route_between(&graph, from, to)?;
        Ok(route_document(&graph, &plan, hour))
    }

    pub fn health(&self) -> Value {
        let m = &self.prepared.world.world().measurements;
        json!({
            "status": "ok",
            "version": env!("CARGO_PKG_VERSION"),
            "region": self.region,
            "preset": self.model.preset(),
            "model_fingerprint": self.model.fingerprint(),
            "config_fingerprint": self.config_fingerprint,
            "first_hour": m.start().to_string(),
            "last_hour": m.start().offset(m.n_hours().saturating_sub(1) as i64).to_string(),
        })
    }
}

type Loader = dyn Fn() -> anyhow::Result<Snapshot> + Send + Sync;

/// The current snapshot and how to load a fresh one.
pub struct ServiceState {
    current: RwLock<Arc<Snapshot>>,
    loader: Box<Loader>,
}

impl ServiceState {
    /// Loads the first snapshot with `loader`, which is reused by [`ServiceState::reload`].
    pub fn new(
        loader: impl Fn() -> anyhow::Result<Snapshot> + Send + Sync + 'static,
    ) -> anyhow::Result<ServiceState> {
        let first = loader()?;
        Ok(ServiceState {
            current: RwLock::new(Arc::new(first)),
            loader: Box::new(loader),
        })
    }

    pub fn current(&self) -> Arc<Snapshot> {
        self.current.read().expect("snapshot lock").clone()
    }

    /// Replaces the snapshot; requests already running keep the old one.
    pub fn swap(&self, next: Snapshot) -> Arc<Snapshot> {
        std::mem::replace(
            &mut *self.current.write().expect("snapshot lock"),
            Arc::new(next),
        )
    }

    /// Loads a fresh snapshot and swaps it in. The old one stays on failure.
    pub fn reload(&self) -> anyhow::Result<Arc<Snapshot>> {
        let next = (self.loader)()?;
        self.swap(next);
        Ok(self.current())
    }
}

/// An error document with its status code.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
}

impl ApiError {
    fn bad_request(message: String) -> ApiError {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            kind: "bad_request",
            message,
        }
    }
}

impl From<anyhow::Error> for ApiError {
    fn from(e: anyhow::Error) -> ApiError {
        use aqmap_core::Error as E;
        let (status, kind) = match e.downcast_ref::<E>() {
            Some(E::InvalidParameter(_)) => (StatusCode::BAD_REQUEST, "invalid_parameter"),
            Some(c @ (E::OutOfCoverage(_) | E::Disconnected { .. })) => {
                (StatusCode::UNPROCESSABLE_ENTITY, c.kind())
            }
            Some(c) => (StatusCode::INTERNAL_SERVER_ERROR, c.kind()),
            None => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError {
            status,
            kind,
            message: format!("{e:#}"),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.kind, "message": self.message })),
        )
            .into_response()
    }
}

type Params = HashMap<String, String>;

fn number(q: &Params, key: &str) -> Result<f64, ApiError> {
    let raw = q
        .get(key)
        .ok_or_else(|| ApiError::bad_request(format!("missing query parameter `{key}`")))?;
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| ApiError::bad_request(format!("`{key}` must be a number, got `{raw}`")))
}

fn point(q: &Params, lat: &str, lon: &str) -> Result<GeoPoint, ApiError> {
    let (a, b) = (number(q, lat)?, number(q, lon)?);
    GeoPoint::new(a, b).map_err(|e| ApiError::bad_request(e.to_string()))
}

/// Runs `f` on the blocking pool against the current snapshot.
async fn on_snapshot<F>(state: Arc<ServiceState>, f: F) -> Result<Json<Value>, ApiError>
where
    F: FnOnce(&Snapshot) -> anyhow::Result<Value> + Send + 'static,
{
    let snapshot = state.current();
    tokio::task::spawn_blocking(move || f(&snapshot))
        .await
        .map_err(|e| ApiError::from(anyhow::anyhow!("worker failed: {e}")))?
        .map(Json)
        .map_err(ApiError::from)
}

async fn predict(
    State(state): State<Arc<ServiceState>>,
    query: Result<Query<Params>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let l = point(&q, "lat", "lon")?;
    let time = q.get("time").cloned();
    on_snapshot(state, move |s| s.predict(l.lat(), l.lon(), time.as_deref())).await
}

async fn route(
    State(state): State<Arc<ServiceState>>,
    query: Result<Query<Params>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let from = point(&q, "from_lat", "from_lon")?;
    let to = point(&q, "to_lat", "to_lon")?;
    let time = q.get("time").cloned();
    on_snapshot(state, move |s| s.route(from, to, time.as_deref())).await
}

async fn health(State(state): State<Arc<ServiceState>>) -> Json<Value> {
    Json(state.current().health())
}

async fn reload(State(state): State<Arc<ServiceState>>) -> Result<Json<Value>, ApiError> {
    let s = state.clone();
    let snapshot = tokio::task::spawn_blocking(move || s.reload())
        .await
        .map_err(|e| ApiError::from(anyhow::anyhow!("worker failed: {e}")))??;
    Ok(Json(snapshot.health()))
}

async fn not_found() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        kind: "not_found",
        message: "unknown endpoint".into(),
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/v1/predict", get(predict))
        .route("/v1/route", get(route))
        .route("/v1/health", get(health))
        .route("/v1/reload", post(reload))
        .fallback(not_found)
        .with_state(state)
}

/// Serves until `shutdown` resolves. Returns once the listener is closed.
pub async fn serve(
    state: Arc<ServiceState>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> anyhow::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}

/// Binds `addr` and returns the listener with its actual address (port 0 picks a free port).
pub async fn bind(addr: &str) -> anyhow::Result<(tokio::net::TcpListener, SocketAddr)> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((listener, local))
}
