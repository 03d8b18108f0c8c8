mod common;

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use common::*;
use mergebo_service::ServiceConfig;
use serde_json::{json, Value};

const FAKE_PNG: &[u8] = b"\x89PNG\r\n\x1a\nfake-image-bytes";

#[derive(Default)]
struct Mock {
    requests: Mutex<Vec<Value>>,
}

/// Starts a generator stub; `/ok` answers with a fixed PNG, `/slow` sleeps
/// before answering, `/text` returns a non-image body.
async fn mock_generator() -> (String, Arc<Mock>) {
    let mock = Arc::new(Mock::default());
    let m = mock.clone();
    let app = Router::new()
        .route(
            "/ok",
            post(move |Json(body): Json<Value>| {
                let m = m.clone();
                async move {
                    m.requests.lock().unwrap().push(body);
                    FAKE_PNG.to_vec()
                }
            }),
        )
        .route(
            "/slow",
            post(|| async {
                tokio::time::sleep(Duration::from_secs(5)).await;
                FAKE_PNG.to_vec()
            }),
        )
        .route("/text", post(|| async { "not an image" }));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}"), mock)
}

fn external_config(url: String, timeout: Duration) -> ServiceConfig {
    ServiceConfig {
        generator_url: Some(url),
        generator_timeout: timeout,
        ..ServiceConfig::default()
    }
}

async fn create_external(app: &Router) -> Value {
    let body = json!({
        "mode": "external",
        "prompt": "a drawing of a cat",
        "prompt_seed": 9,
        "config": quick_config(2, 2),
    });
    let (status, v) = call_json(app, "POST", "/api/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v
}

#[tokio::test(flavor = "multi_thread")]
async fn external_images_come_from_the_generator_once() {
    let (base, mock) = mock_generator().await;
    let (state, app) = app(external_config(format!("{base}/ok"), Duration::from_secs(5)));
    let v = create_external(&app).await;
    let candidate = &v["batch"]["candidates"][1];
    let url = candidate["image_url"].as_str().unwrap();

    let (status, bytes) = call(&app, "GET", url, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(bytes, FAKE_PNG);
    let (_, again) = call(&app, "GET", url, None).await;
    assert_eq!(again, FAKE_PNG);

    let requests = mock.requests.lock().unwrap().clone();
    assert_eq!(requests.len(), 1);
    let req = &requests[0];
    let mut keys: Vec<&str> = req.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["coefficients", "prompt", "seed"]);
    assert_eq!(req["prompt"], "a drawing of a cat");
    assert_eq!(req["seed"], 9);
    assert_eq!(req["coefficients"], candidate["coefficients"]);
    assert_eq!(
        state
            .counters
            .generator_calls
            .load(std::sync::atomic::Ordering::Relaxed),
        1
    );
    assert_eq!(state.counters.renders.load(std::sync::atomic::Ordering::Relaxed), 0);
}

#[tokio::test(flavor = "multi_thread")]
async fn slow_generator_times_out_with_one_retry() {
    let (base, _) = mock_generator().await;
    let (_, app) = app(external_config(format!("{base}/slow"), Duration::from_millis(300)));
    let v = create_external(&app).await;
    let sid = v["session_id"].as_str().unwrap();
    let url = v["batch"]["candidates"][0]["image_url"].as_str().unwrap();

    let started = Instant::now();
    let (status, body) = call_json(&app, "GET", url, None).await;
    let elapsed = started.elapsed();
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(body["error"]["code"], "generator_failed");
    assert!(
        elapsed >= Duration::from_millis(600),
        "two attempts expected, took {elapsed:?}"
    );
    assert!(elapsed < Duration::from_secs(4), "{elapsed:?}");

    let (_, s) = call_json(&app, "GET", &format!("/api/sessions/{sid}"), None).await;
    assert_eq!(s["failed_samples"], json!([v["batch"]["candidates"][0]["sample_id"]]));
    // The session itself is still usable.
    assert_eq!(s["status"], "ready");
}

#[tokio::test(flavor = "multi_thread")]
async fn non_png_answer_is_bad_gateway() {
    let (base, _) = mock_generator().await;
    let (_, app) = app(external_config(format!("{base}/text"), Duration::from_secs(5)));
    let v = create_external(&app).await;
    let url = v["batch"]["candidates"][0]["image_url"].as_str().unwrap();
    let (status, _) = call(&app, "GET", url, None).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
}

#[tokio::test(flavor = "multi_thread")]
async fn unreachable_generator_is_bad_gateway() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let (_, app) = app(external_config(format!("http://{addr}/"), Duration::from_secs(2)));
    let v = create_external(&app).await;
    let url = v["batch"]["candidates"][0]["image_url"].as_str().unwrap();
    let (status, _) = call(&app, "GET", url, None).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
}
