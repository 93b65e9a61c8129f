//! JSON query service over a loaded plan.
//!
//! All routes live under [`API_PREFIX`]. The only mutation is adding a dose
//! region; it is serialized behind a writer lock and published by swapping
//! the shared analysis, so readers never see a half-built cache.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::analysis::{AnalysisConfig, DoseRegionRequest, PlanAnalysis, SliceRequest};
use crate::error::Error;
use crate::filter::{FilterSpec, Metric, Range};
use crate::metrics::HiConvention;
use crate::slice::SliceAxis;

pub const API_PREFIX: &str = "/api/v1";

/// Settings for `rtoverlap serve`, readable from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bundle: Option<PathBuf>,
    pub listen: SocketAddr,
    pub bin_width_gy: f64,
    pub hi_convention: HiConvention,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        let analysis = AnalysisConfig::default();
        ServiceConfig {
            bundle: None,
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            bin_width_gy: analysis.bin_width_gy,
            hi_convention: analysis.hi_convention,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn analysis(&self) -> AnalysisConfig {
        AnalysisConfig {
            bin_width_gy: self.bin_width_gy,
            hi_convention: self.hi_convention,
        }
    }
}

#[derive(Default)]
pub struct AppState {
    current: RwLock<Option<Arc<PlanAnalysis>>>,
    writer: tokio::sync::Mutex<()>,
}

impl AppState {
    pub fn new(analysis: PlanAnalysis) -> Arc<Self> {
        Arc::new(AppState {
            current: RwLock::new(Some(Arc::new(analysis))),
            writer: tokio::sync::Mutex::new(()),
        })
    }

    /// State with no plan; every data route answers 503.
    pub fn empty() -> Arc<Self> {
        Arc::new(AppState::default())
    }

    pub fn snapshot(&self) -> Result<Arc<PlanAnalysis>, ApiError> {
        self.current
            .read()
            .expect("analysis lock poisoned")
            .clone()
            .ok_or(ApiError::Unavailable)
    }

    fn publish(&self, analysis: PlanAnalysis) {
        *self.current.write().expect("analysis lock poisoned") = Some(Arc::new(analysis));
    }
}

#[derive(Debug)]
pub enum ApiError {
    Unavailable,
    Engine(Error),
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::Engine(e)
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, error, message) = match self {
            ApiError::Unavailable => (
                StatusCode::SERVICE_UNAVAILABLE,
                "service_unavailable",
                "no plan loaded".to_owned(),
            ),
            ApiError::Engine(e) => {
                let status = match e {
                    Error::UnknownStructure(_) => StatusCode::NOT_FOUND,
                    Error::RegionExists(_) => StatusCode::CONFLICT,
                    Error::Disjoint(..) => StatusCode::UNPROCESSABLE_ENTITY,
                    Error::OutOfVolume(_)
                    | Error::SliceOutOfRange { .. }
                    | Error::InvalidFilter(_)
                    | Error::InvalidRequest(_)
                    | Error::InvalidThreshold(_) => StatusCode::BAD_REQUEST,
                    _ => StatusCode::INTERNAL_SERVER_ERROR,
                };
                (status, e.code(), e.to_string())
            }
        };
        (status, Json(ErrorBody { error, message })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/plan", get(plan_summary))
        .route("/graph", get(graph))
        .route("/records", get(records))
        .route("/dvh", get(dvh))
        .route("/slice", get(slice))
        .route("/point", get(point))
        .route("/dose-regions", post(add_dose_region));
    Router::new().nest(API_PREFIX, api).with_state(state)
}

pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    serve_on(tokio::net::TcpListener::bind(addr).await?, state).await
}

/// Serves on an already bound listener, e.g. one bound to port 0.
pub async fn serve_on(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let loaded = state.snapshot().is_ok();
    Json(serde_json::json!({ "status": "ok", "plan_loaded": loaded }))
}

async fn plan_summary(State(state): State<Arc<AppState>>) -> ApiResult<impl Serialize> {
    Ok(Json(state.snapshot()?.summary()))
}

async fn graph(State(state): State<Arc<AppState>>) -> ApiResult<impl Serialize> {
    Ok(Json(state.snapshot()?.graph_view()))
}

#[derive(Serialize)]
struct RecordsResponse<'a> {
    reference: Option<&'a str>,
    filter: &'a FilterSpec,
    records: Vec<&'a crate::metrics::OverlapRecord>,
}

/// `?reference=NAME&<metric>=lo,hi...`
async fn records(
    State(state): State<Arc<AppState>>,
    Query(params): Query<BTreeMap<String, String>>,
) -> Result<Response, ApiError> {
    let analysis = state.snapshot()?;
    let mut filter = FilterSpec::new();
    let mut reference = None;
    for (key, value) in &params {
        if key == "reference" {
            reference = Some(value.as_str());
        } else {
            let metric: Metric = key.parse()?;
            filter.set(metric, Range::parse(value)?);
        }
    }
    let records = analysis.records(reference, &filter)?;
    Ok(Json(RecordsResponse {
        reference,
        filter: &filter,
        records,
    })
    .into_response())
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(|p| p.trim().to_owned()).filter(|p| !p.is_empty()).collect()
}

fn parse_pair(s: &str) -> Result<(String, String), ApiError> {
    match split_list(s).as_slice() {
        [a, b] => Ok((a.clone(), b.clone())),
        _ => Err(Error::InvalidRequest(format!("pair must be \"A,B\", got {s:?}")).into()),
    }
}

#[derive(Deserialize)]
struct DvhParams {
    names: Option<String>,
    pair: Option<String>,
}

async fn dvh(
    State(state): State<Arc<AppState>>,
    Query(p): Query<DvhParams>,
) -> ApiResult<Vec<crate::metrics::DvhCurve>> {
    let analysis = state.snapshot()?;
    let names = p.names.as_deref().map(split_list);
    let pair = p.pair.as_deref().map(parse_pair).transpose()?;
    let curves = analysis.dvh(
        names.as_deref(),
        pair.as_ref().map(|(a, b)| (a.as_str(), b.as_str())),
    )?;
    Ok(Json(curves))
}

#[derive(Deserialize)]
struct SliceParams {
    axis: SliceAxis,
    index: usize,
    overlays: Option<String>,
    pair: Option<String>,
    #[serde(default)]
    dose: bool,
    #[serde(default)]
    background: bool,
}

async fn slice(
    State(state): State<Arc<AppState>>,
    Query(p): Query<SliceParams>,
) -> ApiResult<crate::analysis::SlicePayload> {
    let analysis = state.snapshot()?;
    let req = SliceRequest {
        axis: p.axis,
        index: p.index,
        overlays: p.overlays.as_deref().map(split_list),
        pair: p.pair.as_deref().map(parse_pair).transpose()?,
        dose: p.dose,
        background: p.background,
    };
    Ok(Json(analysis.slice(&req)?))
}

#[derive(Deserialize)]
struct PointParams {
    x: f64,
    y: f64,
    z: f64,
}

async fn point(
    State(state): State<Arc<AppState>>,
    Query(p): Query<PointParams>,
) -> ApiResult<crate::analysis::PointQueryResponse> {
    Ok(Json(state.snapshot()?.point_query([p.x, p.y, p.z])?))
}

async fn add_dose_region(
    State(state): State<Arc<AppState>>,
    Json(req): Json<DoseRegionRequest>,
) -> Result<(StatusCode, Json<crate::analysis::DoseRegionCreated>), ApiError> {
    let _guard = state.writer.lock().await;
    let current = state.snapshot()?;
    let threshold = current.resolve_threshold(&req)?;
    let (next, created) = tokio::task::spawn_blocking(move || current.with_dose_region(threshold))
        .await
        .map_err(|e| Error::InvalidRequest(format!("dose region task failed: {e}")))??;
    state.publish(next);
    Ok((StatusCode::CREATED, Json(created)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_from_toml() {
        let cfg = ServiceConfig::from_toml(
            "bundle = \"plans/slab\"\nlisten = \"0.0.0.0:9000\"\nbin_width_gy = 0.5\nhi_convention = \"icru83\"\n",
        )
        .unwrap();
        assert_eq!(cfg.bundle, Some(PathBuf::from("plans/slab")));
        assert_eq!(cfg.listen.port(), 9000);
        assert_eq!(cfg.bin_width_gy, 0.5);
        assert_eq!(ServiceConfig::from_toml("").unwrap(), ServiceConfig::default());
        assert!(ServiceConfig::from_toml("colour = 1").is_err());
    }

    #[test]
    fn list_parsing() {
        assert_eq!(split_list("A, B,,C"), vec!["A", "B", "C"]);
        assert!(parse_pair("A").is_err());
        assert_eq!(parse_pair("A,B").unwrap(), ("A".into(), "B".into()));
    }
}
