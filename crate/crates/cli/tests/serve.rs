use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use shg_cli::serve::{router, schema, ApiError, AppState, EvaluateRequest, StepResponse};
use shg_core::explore::Candidate;
use shg_core::ArchParams;
use tower::ServiceExt;

fn arch() -> ArchParams {
    ArchParams::from_file(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/arch_example.json")).unwrap()
}

fn app() -> (Router, Arc<AppState>) {
    let state = Arc::new(AppState::new(Some(arch())));
    (router(state.clone()), state)
}

async fn call(app: &Router, method: &str, uri: &str, body: impl Into<Body>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.into())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, "POST", uri, body.to_string()).await
}

fn shg_request(rows: u32, cols: u32, s_r: &[u32], s_c: &[u32]) -> Value {
    json!({
        "dims": { "rows": rows, "cols": cols },
        "spec": { "family": "sparse_hamming", "s_r": s_r, "s_c": s_c },
    })
}

#[tokio::test]
async fn schema_lists_endpoints() {
    let (app, _) = app();
    let (status, body) = call(&app, "GET", "/api/schema", Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, schema());
    let paths: Vec<&str> = body["endpoints"].as_array().unwrap().iter().map(|e| e["path"].as_str().unwrap()).collect();
    assert_eq!(paths, ["/api/evaluate", "/api/explore/step", "/api/schema"]);
    let example: EvaluateRequest = serde_json::from_value(body["example_request"].clone()).unwrap();
    assert_eq!(example.dims.rows, 8);
}

#[tokio::test]
async fn evaluate_matches_library_pipeline_and_caches() {
    let (app, state) = app();
    let (status, body) = post(&app, "/api/evaluate", shg_request(8, 8, &[4], &[2, 5])).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let c: Candidate = serde_json::from_value(body.clone()).unwrap();
    assert!(c.error.is_none());

    let t = shg_core::Topology::generate(&shg_core::TopologySpec::sparse_hamming([4], [2, 5]), shg_core::GridDims::new(8, 8).unwrap()).unwrap();
    let p = shg_core::predict(&t, &arch(), &Default::default()).unwrap();
    assert_eq!(c.cost.as_ref().unwrap(), &p.cost);
    assert_eq!(c.feasible, p.cost.area_overhead <= 0.4);

    let (_, again) = post(&app, "/api/evaluate", shg_request(8, 8, &[4], &[2, 5])).await;
    assert_eq!(again, body);
    assert_eq!(state.cached_configs(), 1);
}

#[tokio::test]
async fn evaluate_uses_request_arch_and_budget() {
    let (app, state) = app();
    let mut req = shg_request(4, 4, &[], &[]);
    req["arch"] = serde_json::to_value(arch().with_tiles(16)).unwrap();
    req["budget"] = json!(0.001);
    let (status, body) = post(&app, "/api/evaluate", req).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let c: Candidate = serde_json::from_value(body).unwrap();
    assert!(!c.feasible);
    assert!(c.area_overhead().unwrap() > 0.001);
    let (_, _) = post(&app, "/api/evaluate", shg_request(4, 4, &[], &[])).await;
    assert_eq!(state.cached_configs(), 2);
}

#[tokio::test]
async fn pipeline_failures_are_attached_to_the_candidate() {
    let (app, _) = app();
    let req = json!({ "dims": { "rows": 3, "cols": 3 }, "spec": { "family": "ring" } });
    let (status, body) = post(&app, "/api/evaluate", req).await;
    assert_eq!(status, StatusCode::OK);
    let c: Candidate = serde_json::from_value(body).unwrap();
    assert!(!c.feasible);
    assert!(c.error.unwrap().contains("not aligned"));
}

#[tokio::test]
async fn explore_step_returns_neighbours_in_order() {
    let (app, _) = app();
    let (status, body) = post(&app, "/api/explore/step", shg_request(4, 5, &[3], &[])).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let r: StepResponse = serde_json::from_value(body).unwrap();
    let specs: Vec<String> = r.neighbors.iter().map(|c| c.spec.to_string()).collect();
    assert_eq!(
        specs,
        [
            "shg(sr={2,3},sc={})",
            "shg(sr={3},sc={2})",
            "shg(sr={},sc={})",
            "shg(sr={3},sc={3})",
            "shg(sr={3,4},sc={})",
        ]
    );
    assert_eq!(r.current.spec.to_string(), "shg(sr={3},sc={})");
    assert!(r.neighbors.iter().all(|c| c.config_hash == r.config_hash));
}

#[tokio::test]
async fn malformed_bodies_are_rejected_with_error_objects() {
    let (app, _) = app();
    let cases = [
        ("{not json".to_string(), "malformed_body", None),
        (json!({ "dims": { "rows": 4, "cols": "x" }, "spec": { "family": "mesh2d" } }).to_string(), "malformed_body", Some("dims.cols")),
        (json!({ "dims": { "rows": 4, "cols": 4 }, "spec": { "family": "mesh2d" }, "colour": 1 }).to_string(), "malformed_body", None),
        (json!({ "dims": { "rows": 4, "cols": 4 }, "spec": { "family": "blob" } }).to_string(), "malformed_body", Some("spec.family")),
        (shg_request(4, 4, &[4], &[]).to_string(), "invalid_param", Some("s_r")),
        (shg_request(1, 4, &[], &[]).to_string(), "invalid_param", Some("rows")),
        (json!({ "dims": { "rows": 4, "cols": 4 }, "spec": { "family": "mesh2d" }, "budget": 2.0 }).to_string(), "invalid_param", Some("budget")),
    ];
    for (body, code, field) in cases {
        let (status, resp) = call(&app, "POST", "/api/evaluate", body.clone()).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        let err: ApiError = serde_json::from_value(resp).unwrap();
        assert_eq!(err.code, code, "{body}");
        if let Some(f) = field {
            assert_eq!(err.field.as_deref(), Some(f), "{body}");
        }
        assert!(!err.message.is_empty());
    }
    let (status, resp) = post(&app, "/api/explore/step", json!({ "dims": { "rows": 4, "cols": 4 }, "spec": { "family": "mesh2d" } })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(resp["field"], "spec");
}

#[tokio::test]
async fn missing_arch_without_server_default() {
    let app = router(Arc::new(AppState::new(None)));
    let (status, resp) = post(&app, "/api/evaluate", shg_request(4, 4, &[], &[])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(resp["code"], "missing_field");
    assert_eq!(resp["field"], "arch");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_requests_agree() {
    let (app, _) = app();
    let reqs = (0..4).map(|_| {
        let app = app.clone();
        tokio::spawn(async move { post(&app, "/api/evaluate", shg_request(6, 6, &[2], &[3])).await })
    });
    let mut bodies = Vec::new();
    for r in reqs {
        let (status, body) = r.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        bodies.push(body);
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}
