//! Query the HTTP API in-process, without opening a socket.
//! Run `rtoverlap serve BUNDLE` to expose the same routes over TCP.
//!
//!     cargo run --example api_queries

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use rtoverlap::phantom::{generate_phantom, presets};
use rtoverlap::service::{router, AppState};
use rtoverlap::{AnalysisConfig, PlanAnalysis};
use tower::ServiceExt;

async fn call(app: &axum::Router, method: &str, uri: &str, body: &str) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_owned()))
        .expect("valid request");
    let resp = app.clone().oneshot(req).await.expect("infallible router");
    let status = resp.status();
    let bytes = resp.into_body().collect().await.expect("body").to_bytes();
    (status, String::from_utf8_lossy(&bytes).into_owned())
}

#[tokio::main]
async fn main() -> rtoverlap::Result<()> {
    let analysis = PlanAnalysis::new(generate_phantom(&presets::hotspot())?, AnalysisConfig::default())?;
    let app = router(AppState::new(analysis));

    for (method, uri, body) in [
        ("GET", "/api/v1/records?reference=PTV&ov_pct_of_ref=1,", ""),
        ("POST", "/api/v1/dose-regions", r#"{"d_pct": 105}"#),
        ("POST", "/api/v1/dose-regions", r#"{"d_abs": 52.5}"#),
        ("GET", "/api/v1/records?reference=R_52.5Gy", ""),
        ("GET", "/api/v1/point?x=500&y=0&z=0", ""),
    ] {
        let (status, text) = call(&app, method, uri, body).await;
        let shown: String = text.chars().take(300).collect();
        println!("{method} {uri} -> {status}\n  {shown}\n");
    }
    Ok(())
}
