mod common;

use std::time::{Duration, Instant};

use axum::http::StatusCode;
use common::*;
use mergebo_core::{RankingSubmission, SampleId, Session, Step};
use mergebo_service::ServiceConfig;
use serde_json::{json, Value};

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

async fn create(app: &axum::Router, body: Value) -> Value {
    let (status, v) = call_json(app, "POST", "/api/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v
}

async fn submit_wait(app: &axum::Router, sid: &str, batch: &Value, ranked: Vec<u64>) -> Value {
    let body = json!({ "token": batch["token"], "ranked_top": ranked });
    let (status, v) = call_json(
        app,
        "POST",
        &format!("/api/sessions/{sid}/rankings?wait=true"),
        Some(body),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    v
}

#[tokio::test]
async fn create_returns_first_batch_and_images() {
    let (state, app) = app(ServiceConfig::default());
    let v = create(&app, json!({ "config": quick_config(2, 2) })).await;
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["stage"], 1);
    let batch = &v["batch"];
    assert_eq!(ids(batch).len(), 5);
    assert_eq!(batch["k"], 5);
    let sid = v["session_id"].as_str().unwrap();
    let url = batch["candidates"][0]["image_url"].as_str().unwrap().to_string();

    let (status, bytes) = call(&app, "GET", &url, None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(bytes.starts_with(PNG_MAGIC));
    assert_eq!(state.counters.renders.load(std::sync::atomic::Ordering::Relaxed), 1);

    let (_, again) = call(&app, "GET", &url, None).await;
    assert_eq!(again, bytes);
    let (_, stats) = call_json(&app, "GET", "/api/stats", None).await;
    assert_eq!(stats["renders"], 1);
    assert_eq!(stats["cache_hits"], 1);
    assert_eq!(stats["cache_entries"], 1);
    assert_eq!(stats["sessions"], 1);

    let (status, s) = call_json(&app, "GET", &format!("/api/sessions/{sid}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(s["status"], "ready");
    assert_eq!(s["renders_requested"], 5);
    assert_eq!(s["pending"]["token"], batch["token"]);
}

#[tokio::test]
async fn unknown_resources_are_404() {
    let (_, app) = app(ServiceConfig::default());
    let (status, v) = call_json(&app, "GET", "/api/sessions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "not_found");

    let v = create(&app, json!({ "config": quick_config(2, 2) })).await;
    let sid = v["session_id"].as_str().unwrap();
    for file in ["999.png", "abc.png", "0.jpg", "target.png"] {
        let (status, _) = call(&app, "GET", &format!("/api/sessions/{sid}/images/{file}"), None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{file}");
    }
}

#[tokio::test]
async fn invalid_requests_are_rejected() {
    let (_, app) = app(ServiceConfig::default());
    let (status, _) = call_json(&app, "POST", "/api/sessions", Some(json!({ "mode": "external" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call_json(&app, "POST", "/api/sessions", Some(json!({ "mode": "matching" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call_json(&app, "POST", "/api/sessions", Some(json!({ "config": { "q": 0 } }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call_json(
        &app,
        "POST",
        "/api/sessions",
        Some(json!({ "mode": "matching", "target_case": { "alpha_gt": [0.5, 0.5] } })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let v = create(&app, json!({ "config": quick_config(2, 2) })).await;
    let sid = v["session_id"].as_str().unwrap();
    let batch = &v["batch"];
    let uri = format!("/api/sessions/{sid}/rankings?wait=true");

    let stale = json!({ "token": batch["token"].as_u64().unwrap() + 1, "ranked_top": ids(batch) });
    let (status, body) = call_json(&app, "POST", &uri, Some(stale)).await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");

    let short = json!({ "token": batch["token"], "ranked_top": ids(batch)[..2] });
    let (status, _) = call_json(&app, "POST", &uri, Some(short)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, _) = call_json(&app, "POST", &uri, Some(json!({ "ranked_top": [] }))).await;
    assert!(status.is_client_error());

    // Nothing above changed the session.
    let (_, s) = call_json(&app, "GET", &format!("/api/sessions/{sid}"), None).await;
    assert_eq!(s["iteration"], 0);
    assert_eq!(s["pending"]["token"], batch["token"]);
}

#[tokio::test]
async fn matching_session_serves_target() {
    let (_, app) = app(ServiceConfig::default());
    let v = create(
        &app,
        json!({
            "mode": "matching",
            "config": quick_config(2, 2),
            "target_case": { "alpha_gt": target(), "prompt_seed": 42, "case_id": "x" },
        }),
    )
    .await;
    let url = v["target"]["image_url"].as_str().unwrap();
    let (status, bytes) = call(&app, "GET", url, None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(bytes.starts_with(PNG_MAGIC));
}

#[tokio::test(flavor = "multi_thread")]
async fn scripted_session_matches_direct_engine() {
    let config = quick_config(10, 10);
    let t = target();

    let mut direct = Session::start(config.clone()).unwrap();
    let mut rounds = 0;
    let direct_best = loop {
        let batch = direct.pending().unwrap().clone();
        let mut scored: Vec<(u64, f64)> = batch
            .samples
            .iter()
            .map(|&id| {
                let a = direct.sample(id).unwrap().alpha.as_slice();
                (id.0, a.iter().zip(&t).map(|(x, y)| (x - y).powi(2)).sum())
            })
            .collect();
        scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let submission = RankingSubmission {
            token: Some(batch.token),
            displayed: batch.samples.clone(),
            ranked_top: scored.iter().take(config.k).map(|&(id, _)| SampleId(id)).collect(),
        };
        rounds += 1;
        if let Step::Finished { best_id, .. } = direct.submit(&submission).unwrap() {
            break best_id;
        }
    };
    assert_eq!(rounds, 21, "initial ranking plus 20 iterations");

    let (_, app) = app(ServiceConfig::default());
    let v = create(&app, json!({ "config": config })).await;
    let sid = v["session_id"].as_str().unwrap().to_string();
    let mut batch = v["batch"].clone();
    let mut served = 0;
    let best = loop {
        let ranked = rank_by_target(&batch, &t, config.k);
        let next = submit_wait(&app, &sid, &batch, ranked).await;
        served += 1;
        if next["status"] == "finished" {
            break next["best"]["sample_id"].as_u64().unwrap();
        }
        batch = next["batch"].clone();
    };
    assert_eq!(served, 21);
    assert_eq!(best, direct_best.0);

    let (_, history) = call_json(&app, "GET", &format!("/api/sessions/{sid}/history"), None).await;
    assert_eq!(history["events"], serde_json::to_value(direct.events()).unwrap());
    assert_eq!(history["top_history"].as_array().unwrap().len(), 21);

    let (_, s) = call_json(&app, "GET", &format!("/api/sessions/{sid}"), None).await;
    assert_eq!(s["finished"], true);
    assert_eq!(s["renders_requested"], direct.renders_requested());
    assert_eq!(direct.renders_requested(), 5 + 20 * 8);
}

#[tokio::test(flavor = "multi_thread")]
async fn polling_and_finalize() {
    let (_, app) = app(ServiceConfig::default());
    let v = create(&app, json!({ "config": quick_config(2, 2) })).await;
    let sid = v["session_id"].as_str().unwrap();
    let batch = &v["batch"];

    let (status, _) = call_json(&app, "POST", &format!("/api/sessions/{sid}/finalize"), None).await;
    assert_eq!(status, StatusCode::CONFLICT, "nothing ranked yet");

    let body = json!({ "token": batch["token"], "ranked_top": ids(batch) });
    let (status, v) = call_json(&app, "POST", &format!("/api/sessions/{sid}/rankings"), Some(body)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(v["status"], "computing");

    let deadline = Instant::now() + Duration::from_secs(60);
    let next = loop {
        let (status, v) = call_json(&app, "GET", &format!("/api/sessions/{sid}/batch"), None).await;
        if status == StatusCode::OK {
            break v;
        }
        assert_eq!(status, StatusCode::ACCEPTED);
        assert!(Instant::now() < deadline);
        tokio::time::sleep(Duration::from_millis(20)).await;
    };
    assert_eq!(next["status"], "ready");
    assert_eq!(next["batch"]["counts_as_iteration"], true);
    assert_eq!(ids(&next["batch"]).len(), 8 + 2 + 1, "q new, m_past past, current best");

    let again = json!({ "token": batch["token"], "ranked_top": ids(batch) });
    let (status, _) = call_json(
        &app,
        "POST",
        &format!("/api/sessions/{sid}/rankings?wait=true"),
        Some(again),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT, "resubmitting a consumed token");

    let (status, fin) = call_json(&app, "POST", &format!("/api/sessions/{sid}/finalize"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(fin["best"]["sample_id"], ids(batch)[0]);
    let (_, b) = call_json(&app, "GET", &format!("/api/sessions/{sid}/batch"), None).await;
    assert_eq!(b["status"], "finished");
    let body = json!({ "token": next["batch"]["token"], "ranked_top": ids(&next["batch"])[..5] });
    let (status, _) = call_json(&app, "POST", &format!("/api/sessions/{sid}/rankings"), Some(body)).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread")]
async fn busy_session_does_not_block_others() {
    let (_, app) = app(ServiceConfig::default());
    // Full-size engine settings so the refit takes a while.
    let slow = create(&app, json!({})).await;
    let fast = create(&app, json!({ "config": quick_config(2, 2) })).await;
    let slow_id = slow["session_id"].as_str().unwrap();
    let fast_id = fast["session_id"].as_str().unwrap();

    let body = json!({ "token": slow["batch"]["token"], "ranked_top": ids(&slow["batch"]) });
    let (status, _) = call_json(&app, "POST", &format!("/api/sessions/{slow_id}/rankings"), Some(body)).await;
    assert_eq!(status, StatusCode::ACCEPTED);

    let started = Instant::now();
    let (status, _) = call_json(&app, "GET", &format!("/api/sessions/{fast_id}/batch"), None).await;
    assert_eq!(status, StatusCode::OK);
    let url = fast["batch"]["candidates"][0]["image_url"].as_str().unwrap();
    let (status, _) = call(&app, "GET", url, None).await;
    assert_eq!(status, StatusCode::OK);
    let elapsed = started.elapsed();

    let (status, v) = call_json(&app, "GET", &format!("/api/sessions/{slow_id}/batch"), None).await;
    assert_eq!(
        status,
        StatusCode::ACCEPTED,
        "slow session finished too early to tell: {v}"
    );
    assert!(elapsed < Duration::from_secs(1), "{elapsed:?}");

    // A second submission while computing is refused.
    let body = json!({ "token": slow["batch"]["token"], "ranked_top": ids(&slow["batch"]) });
    let (status, _) = call_json(&app, "POST", &format!("/api/sessions/{slow_id}/rankings"), Some(body)).await;
    assert_eq!(status, StatusCode::CONFLICT);
}
