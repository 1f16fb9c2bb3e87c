//! Local JSON service used by the interactive explorer.
//!
//! `POST /api/evaluate` scores one spec, `POST /api/explore/step` scores all
//! single-toggle neighbours of a spec and `GET /api/schema` describes the
//! documents. Evaluations are cached per configuration hash.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use shg_core::explore::{Candidate, Evaluator, ExploreConfig, Explorer};
use shg_core::routing::DetailedRouteOptions;
use shg_core::{ArchParams, GridDims, RouterConfig, SimControl, TopologySpec, TrafficSpec};

use crate::exit::InputError;
use crate::input::{fit_arch, load_arch, parse_json};
use crate::manifest::{Recorder, VERSION};
use crate::ServeArgs;

/// Body of both POST endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateRequest {
    pub dims: GridDims,
    pub spec: TopologySpec,
    /// Falls back to the server's architecture.
    #[serde(default)]
    pub arch: Option<ArchParams>,
    #[serde(default)]
    pub budget: Option<f64>,
    #[serde(default)]
    pub evaluator: Option<Evaluator>,
    #[serde(default)]
    pub rc: Option<RouterConfig>,
    #[serde(default)]
    pub traffic: Option<TrafficSpec>,
    #[serde(default)]
    pub sim: Option<SimControl>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub config_hash: String,
    pub current: Candidate,
    /// In neighbour order: row distances before column distances, ascending.
    pub neighbors: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub field: Option<String>,
    pub message: String,
}

impl ApiError {
    fn new(code: &str, field: Option<String>, message: impl Into<String>) -> Self {
        ApiError {
            code: code.to_string(),
            field,
            message: message.into(),
        }
    }
}

impl From<shg_core::Error> for ApiError {
    fn from(e: shg_core::Error) -> Self {
        let code = match e {
            shg_core::Error::InvalidParam { .. } => "invalid_param",
            _ => "invalid_request",
        };
        let message = match &e {
            shg_core::Error::InvalidParam { message, .. } => message.clone(),
            other => other.to_string(),
        };
        ApiError::new(code, e.field().map(str::to_string), message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = if self.code == "internal" {
            StatusCode::INTERNAL_SERVER_ERROR
        } else {
            StatusCode::BAD_REQUEST
        };
        (status, Json(self)).into_response()
    }
}

#[derive(Default)]
pub struct AppState {
    default_arch: Option<ArchParams>,
    explorers: Mutex<HashMap<String, Arc<Explorer>>>,
}

impl AppState {
    pub fn new(default_arch: Option<ArchParams>) -> Self {
        AppState {
            default_arch,
            explorers: Mutex::default(),
        }
    }

    /// Explorer for the request's configuration, shared with earlier
    /// requests that resolved to the same configuration.
    fn explorer(&self, req: &EvaluateRequest) -> Result<Arc<Explorer>, ApiError> {
        req.dims.validate()?;
        req.spec.validate(req.dims)?;
        let arch = req
            .arch
            .as_ref()
            .or(self.default_arch.as_ref())
            .ok_or_else(|| ApiError::new("missing_field", Some("arch".into()), "no architecture in the request and none configured on the server"))?;
        let cfg = ExploreConfig {
            dims: req.dims,
            arch: fit_arch(arch, req.dims.n_tiles()),
            rc: req.rc.unwrap_or_default(),
            budget: req.budget.unwrap_or(shg_core::explore::DEFAULT_BUDGET),
            evaluator: req.evaluator.unwrap_or_default(),
            routing: DetailedRouteOptions::default(),
            traffic: req.traffic.unwrap_or_default(),
            sim: req.sim.unwrap_or_default(),
        };
        cfg.validate()?;
        let hash = cfg.hash();
        let mut map = self.explorers.lock().expect("explorer map poisoned");
        if let Some(e) = map.get(&hash) {
            return Ok(e.clone());
        }
        let e = Arc::new(Explorer::new(cfg)?);
        map.insert(hash, e.clone());
        Ok(e)
    }

    pub fn cached_configs(&self) -> usize {
        self.explorers.lock().expect("explorer map poisoned").len()
    }
}

fn parse_request(body: &Bytes) -> Result<EvaluateRequest, ApiError> {
    parse_json(body).map_err(|e: InputError| ApiError::new("malformed_body", e.field, e.message))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new("internal", None, e.to_string()))
}

async fn evaluate(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<Candidate>, ApiError> {
    let req = parse_request(&body)?;
    let explorer = state.explorer(&req)?;
    let c = blocking(move || (*explorer.evaluate(&req.spec)).clone()).await?;
    Ok(Json(c))
}

async fn explore_step(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<StepResponse>, ApiError> {
    let req = parse_request(&body)?;
    if !matches!(req.spec, TopologySpec::SparseHamming { .. }) {
        return Err(ApiError::new("invalid_param", Some("spec".into()), "only sparse Hamming graphs have neighbours"));
    }
    let explorer = state.explorer(&req)?;
    let resp = blocking(move || -> shg_core::Result<StepResponse> {
        Ok(StepResponse {
            config_hash: explorer.config().hash(),
            current: (*explorer.evaluate(&req.spec)).clone(),
            neighbors: explorer.step(&req.spec)?,
        })
    })
    .await??;
    Ok(Json(resp))
}

pub fn schema() -> serde_json::Value {
    let example = EvaluateRequest {
        dims: GridDims { rows: 8, cols: 8 },
        spec: TopologySpec::sparse_hamming([4], [2, 5]),
        arch: None,
        budget: Some(shg_core::explore::DEFAULT_BUDGET),
        evaluator: Some(Evaluator::Analytic),
        rc: None,
        traffic: None,
        sim: None,
    };
    json!({
        "version": VERSION,
        "endpoints": [
            {
                "method": "POST",
                "path": "/api/evaluate",
                "request": "EvaluateRequest",
                "response": "Candidate",
            },
            {
                "method": "POST",
                "path": "/api/explore/step",
                "request": "EvaluateRequest",
                "response": "StepResponse",
            },
            { "method": "GET", "path": "/api/schema", "response": "this document" },
        ],
        "documents": {
            "EvaluateRequest": {
                "dims": "{rows, cols}, both at least 2",
                "spec": "{family: ring|mesh2d|torus2d|folded_torus2d|hypercube|flattened_butterfly|sparse_hamming, s_r?: [int], s_c?: [int]}",
                "arch": "ArchParams, optional when the server has a default",
                "budget": "area overhead limit in (0, 1], default 0.4",
                "evaluator": "analytic | simulated, default analytic",
                "rc": "{vcs, buffer_depth, router_delay, injection_delay}, optional",
                "traffic": "{pattern: uniform_random, injection_rate, packet_length, seed}, optional",
                "sim": "{warmup_cycles, measure_cycles, drain_cycles, deadlock_cycles, saturation_factor, search_iterations, curve_points}, optional",
            },
            "Candidate": "{spec, config_hash, cost?, routability?, perf?, feasible, error?}",
            "StepResponse": "{config_hash, current: Candidate, neighbors: [Candidate]}",
            "Error": "{code: malformed_body|invalid_param|missing_field|invalid_request|internal, field?, message}",
        },
        "example_request": example,
    })
}

async fn get_schema() -> Json<serde_json::Value> {
    Json(schema())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/schema", get(get_schema))
        .route("/api/evaluate", post(evaluate))
        .route("/api/explore/step", post(explore_step))
        .with_state(state)
}

pub fn run(a: &ServeArgs) -> Result<()> {
    let arch = match &a.arch {
        Some(p) => Some(load_arch(p, &mut Recorder::new("serve"))?),
        None => None,
    };
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| InputError::new("host".to_string(), format!("{e}")))?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(Arc::new(AppState::new(arch))))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
