#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use mergebo_core::SessionConfig;
use mergebo_service::{router, AppState, ServiceConfig};
use serde_json::Value;
use tower::ServiceExt;

/// Small engine settings so each round takes milliseconds.
pub fn quick_config(t1: usize, t2: usize) -> SessionConfig {
    SessionConfig {
        t1,
        t2,
        raw_samples: 64,
        restarts: 2,
        mc_base_samples: 32,
        warmup: 20,
        posterior_samples: 20,
        thinning: 5,
        ascent_iters: 30,
        seed: 11,
        ..SessionConfig::default()
    }
}

pub fn app(config: ServiceConfig) -> (Arc<AppState>, Router) {
    let state = Arc::new(AppState::new(config).unwrap());
    (state.clone(), router(state))
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let builder = Request::builder().method(method).uri(uri);
    let request = match body {
        Some(v) => builder
            .header("content-type", "application/json")
            .body(Body::from(v.to_string()))
            .unwrap(),
        None => builder.body(Body::empty()).unwrap(),
    };
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

pub fn ids(batch: &Value) -> Vec<u64> {
    batch["candidates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["sample_id"].as_u64().unwrap())
        .collect()
}

/// Deterministic user: prefers coefficients closest to `target`.
pub fn rank_by_target(batch: &Value, target: &[f64], k: usize) -> Vec<u64> {
    let mut scored: Vec<(u64, f64)> = batch["candidates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            let alpha: Vec<f64> = serde_json::from_value(c["coefficients"].clone()).unwrap();
            let d: f64 = alpha.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum();
            (c["sample_id"].as_u64().unwrap(), d)
        })
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    scored.into_iter().take(k).map(|(id, _)| id).collect()
}

pub fn target() -> Vec<f64> {
    let mut t = vec![0.0; 20];
    t[3] = 0.8;
    t[11] = 0.6;
    t
}
