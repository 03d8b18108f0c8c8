use std::sync::atomic::Ordering;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mergebo_core::session::Origin;
use mergebo_core::{
    Error as CoreError, MergeCoefficients, RankingSubmission, RenderSpec, SampleId, Session, SessionConfig, Step,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{ApiError, Result};
use crate::generator::GenerateRequest;
use crate::state::{unix_now, AppState, ExternalImage, Inner, Mode, SessionEntry, SessionRecordEnvelope, Status};
use crate::SCHEMA_VERSION;

type AppResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/batch", get(get_batch))
        .route("/api/sessions/{id}/rankings", post(submit_ranking))
        .route("/api/sessions/{id}/images/{file}", get(get_image))
        .route("/api/sessions/{id}/history", get(get_history))
        .route("/api/sessions/{id}/finalize", post(finalize))
        .route("/api/stats", get(stats))
        .with_state(state)
}

/// The target of a matching session; extra fields (as in a benchmark case
/// file) are ignored.
#[derive(Debug, Clone, Deserialize)]
pub struct TargetCase {
    pub alpha_gt: Vec<f64>,
    #[serde(default)]
    pub prompt_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct CreateSessionRequest {
    pub config: SessionConfig,
    pub mode: Mode,
    pub target_case: Option<TargetCase>,
    pub prompt: Option<String>,
    pub prompt_seed: Option<u64>,
    pub collection_seed: Option<u64>,
    /// Side length of procedural renders.
    pub image_size: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RankingRequest {
    pub token: u64,
    /// Best first.
    pub ranked_top: Vec<u64>,
    /// Defaults to the pending display.
    #[serde(default)]
    pub displayed: Option<Vec<u64>>,
}

#[derive(Debug, Default, Deserialize)]
pub struct WaitQuery {
    #[serde(default)]
    pub wait: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateView {
    pub sample_id: u64,
    pub image_url: String,
    pub estimate: Option<f64>,
    pub origin: Origin,
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchView {
    pub token: u64,
    pub stage: u8,
    pub iteration: usize,
    pub k: usize,
    pub transitioned: bool,
    pub counts_as_iteration: bool,
    /// Server order: descending surrogate estimate once a model exists.
    pub candidates: Vec<CandidateView>,
}

fn image_url(id: &str, file: &str) -> String {
    format!("/api/sessions/{id}/images/{file}.png")
}

fn batch_view(entry: &SessionEntry, inner: &Inner) -> Option<BatchView> {
    let pending = inner.pending.as_ref()?;
    let candidates = pending
        .samples
        .iter()
        .zip(&pending.estimates)
        .filter_map(|(&id, &estimate)| {
            let s = inner.sample(id)?;
            Some(CandidateView {
                sample_id: id.0,
                image_url: image_url(&entry.id, &id.0.to_string()),
                estimate,
                origin: s.origin,
                coefficients: s.alpha.as_slice().to_vec(),
            })
        })
        .collect();
    Some(BatchView {
        token: pending.token,
        stage: pending.stage,
        iteration: pending.iteration,
        k: entry.k.min(pending.samples.len()),
        transitioned: pending.transitioned,
        counts_as_iteration: pending.counts_as_iteration,
        candidates,
    })
}

fn best_view(entry: &SessionEntry, inner: &Inner) -> Value {
    match &inner.best {
        Some((id, alpha)) => json!({
            "sample_id": id.0,
            "coefficients": alpha.as_slice(),
            "support": alpha.support(),
            "image_url": image_url(&entry.id, &id.0.to_string()),
        }),
        None => Value::Null,
    }
}

fn status_str(status: &Status) -> &'static str {
    match status {
        Status::Ready => "ready",
        Status::Computing => "computing",
        Status::Failed(_) => "failed",
    }
}

fn target_view(entry: &SessionEntry) -> Value {
    match entry.mode {
        Mode::Matching => json!({ "image_url": image_url(&entry.id, "target") }),
        _ => Value::Null,
    }
}

/// Batch endpoint body: the pending display, the final result, or a
/// still-computing marker.
fn batch_response(entry: &SessionEntry, inner: &Inner) -> Response {
    match &inner.status {
        Status::Computing => (
            StatusCode::ACCEPTED,
            Json(json!({ "schema_version": SCHEMA_VERSION, "session_id": entry.id, "status": "computing" })),
        )
            .into_response(),
        Status::Failed(msg) => ApiError::Internal(format!("session step failed: {msg}")).into_response(),
        Status::Ready if inner.finished => Json(json!({
            "schema_version": SCHEMA_VERSION,
            "session_id": entry.id,
            "status": "finished",
            "stage": inner.stage,
            "iteration": inner.iteration,
            "best": best_view(entry, inner),
        }))
        .into_response(),
        Status::Ready => Json(json!({
            "schema_version": SCHEMA_VERSION,
            "session_id": entry.id,
            "status": "ready",
            "stage": inner.stage,
            "iteration": inner.iteration,
            "batch": batch_view(entry, inner),
        }))
        .into_response(),
    }
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: std::result::Result<Json<CreateSessionRequest>, axum::extract::rejection::JsonRejection>,
) -> AppResult<Response> {
    let Json(req) = body.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let config = req.config;
    config.validate()?;
    if req.mode == Mode::External && state.generator.is_none() {
        return Err(ApiError::BadRequest(
            "external mode needs a generator URL (MERGEBO_GENERATOR_URL)".into(),
        ));
    }
    let target = match (req.mode, &req.target_case) {
        (Mode::Matching, None) => return Err(ApiError::BadRequest("matching mode needs target_case".into())),
        (Mode::Matching, Some(t)) => {
            if t.alpha_gt.len() != config.n {
                return Err(ApiError::BadRequest(format!(
                    "target has {} coefficients, session has n = {}",
                    t.alpha_gt.len(),
                    config.n
                )));
            }
            Some(MergeCoefficients::new(t.alpha_gt.clone())?)
        }
        _ => None,
    };
    let side = req.image_size.unwrap_or(128);
    let render = RenderSpec {
        width: side,
        height: side,
        prompt_seed: req
            .target_case
            .as_ref()
            .and_then(|t| t.prompt_seed)
            .or(req.prompt_seed)
            .unwrap_or(0),
        collection_seed: req.collection_seed.unwrap_or(0),
    };
    render.validate()?;
    let envelope = SessionRecordEnvelope {
        session_id: String::new(),
        created_at: unix_now(),
        mode: req.mode,
        config: config.clone(),
        prompt: req.prompt.unwrap_or_default(),
        render,
        target,
        finalized: false,
    };
    let session = Session::start(config)?;
    let entry = state.insert(envelope, session)?;
    let inner = entry.lock();
    let body = json!({
        "schema_version": SCHEMA_VERSION,
        "session_id": entry.id,
        "created_at": entry.envelope.lock().unwrap_or_else(|e| e.into_inner()).created_at,
        "mode": entry.mode,
        "stage": inner.stage,
        "iteration": inner.iteration,
        "batch": batch_view(&entry, &inner),
        "target": target_view(&entry),
    });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> AppResult<Response> {
    let entry = state.session(&id)?;
    let inner = entry.lock();
    let envelope = entry.envelope.lock().unwrap_or_else(|e| e.into_inner()).clone();
    let failed: Vec<u64> = inner
        .external
        .iter()
        .filter(|(_, img)| matches!(img, ExternalImage::Failed(_)))
        .map(|(id, _)| id.0)
        .collect();
    let error = match &inner.status {
        Status::Failed(msg) => Value::String(msg.clone()),
        _ => Value::Null,
    };
    Ok(Json(json!({
        "schema_version": SCHEMA_VERSION,
        "session_id": entry.id,
        "created_at": envelope.created_at,
        "mode": entry.mode,
        "prompt": entry.prompt,
        "config": envelope.config,
        "status": status_str(&inner.status),
        "error": error,
        "stage": inner.stage,
        "iteration": inner.iteration,
        "finished": inner.finished,
        "renders_requested": inner.samples.len(),
        "pending": batch_view(&entry, &inner),
        "best": best_view(&entry, &inner),
        "failed_samples": failed,
        "target": target_view(&entry),
    }))
    .into_response())
}

async fn get_batch(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> AppResult<Response> {
    let entry = state.session(&id)?;
    let inner = entry.lock();
    Ok(batch_response(&entry, &inner))
}

async fn submit_ranking(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(query): Query<WaitQuery>,
    body: std::result::Result<Json<RankingRequest>, axum::extract::rejection::JsonRejection>,
) -> AppResult<Response> {
    let entry = state.session(&id)?;
    let Json(req) = body.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let (mut session, submission) = {
        let mut inner = entry.lock();
        if inner.status == Status::Computing {
            return Err(ApiError::Conflict(
                "the previous ranking is still being processed".into(),
            ));
        }
        if inner.finished {
            return Err(ApiError::Conflict("session already finished".into()));
        }
        let pending = inner
            .pending
            .clone()
            .ok_or_else(|| ApiError::Conflict("no pending display".into()))?;
        let submission = RankingSubmission {
            token: Some(req.token),
            displayed: req
                .displayed
                .map(|d| d.into_iter().map(SampleId).collect())
                .unwrap_or(pending.samples),
            ranked_top: req.ranked_top.into_iter().map(SampleId).collect(),
        };
        let session = inner
            .session
            .as_ref()
            .ok_or_else(|| ApiError::Conflict("session busy".into()))?;
        session.check_submission(&submission)?;
        let session = inner.session.take().expect("checked above");
        inner.status = Status::Computing;
        (session, submission)
    };

    let task_state = state.clone();
    let task_entry = entry.clone();
    let handle = tokio::spawn(async move {
        let outcome = tokio::task::spawn_blocking(move || {
            let result = session.submit(&submission);
            (session, result)
        })
        .await;
        match outcome {
            Ok((session, result)) => {
                let persisted = task_state.persist_transcript(&task_entry.id, &session);
                let mut inner = task_entry.lock();
                inner.restore(session);
                inner.status = match (result, persisted) {
                    (Ok(Step::Display(_) | Step::Finished { .. }), Ok(())) => Status::Ready,
                    (Err(e), _) => Status::Failed(e.to_string()),
                    (_, Err(e)) => Status::Failed(e.to_string()),
                };
            }
            Err(join) => task_entry.lock().status = Status::Failed(format!("worker panicked: {join}")),
        }
    });

    if query.wait {
        handle.await.map_err(|e| ApiError::Internal(format!("worker: {e}")))?;
        let inner = entry.lock();
        return Ok(batch_response(&entry, &inner));
    }
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({
            "schema_version": SCHEMA_VERSION,
            "session_id": entry.id,
            "status": "computing",
            "batch_url": format!("/api/sessions/{}/batch", entry.id),
        })),
    )
        .into_response())
}

fn png(bytes: Arc<Vec<u8>>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes.as_ref().clone()).into_response()
}

async fn get_image(
    State(state): State<Arc<AppState>>,
    Path((id, file)): Path<(String, String)>,
) -> AppResult<Response> {
    let entry = state.session(&id)?;
    let name = file
        .strip_suffix(".png")
        .ok_or_else(|| ApiError::NotFound(format!("no image `{file}`")))?;
    let alpha: Vec<f64> = if name == "target" {
        entry
            .target
            .as_ref()
            .ok_or_else(|| ApiError::NotFound("session has no target".into()))?
            .as_slice()
            .to_vec()
    } else {
        let sid = SampleId(
            name.parse()
                .map_err(|_| ApiError::NotFound(format!("no image `{file}`")))?,
        );
        let inner = entry.lock();
        inner
            .sample(sid)
            .ok_or_else(|| ApiError::NotFound(format!("unknown sample {}", sid.0)))?
            .alpha
            .as_slice()
            .to_vec()
    };

    if let Some(renderer) = entry.renderer.clone() {
        let st = state.clone();
        let bytes = tokio::task::spawn_blocking(move || st.render_png(&renderer, &alpha))
            .await
            .map_err(|e| ApiError::Internal(format!("render worker: {e}")))??;
        return Ok(png(bytes));
    }

    let sid = SampleId(name.parse().expect("external sessions have no target"));
    if let Some(ExternalImage::Ready(bytes)) = entry.lock().external.get(&sid).cloned() {
        return Ok(png(bytes));
    }
    let generator = state
        .generator
        .as_ref()
        .ok_or_else(|| ApiError::BadGateway("no generator configured".into()))?;
    state.counters.generator_calls.fetch_add(1, Ordering::Relaxed);
    let request = GenerateRequest {
        prompt: &entry.prompt,
        coefficients: &alpha,
        seed: entry.render.prompt_seed,
    };
    match generator.generate(&request).await {
        Ok(bytes) => {
            let bytes = Arc::new(bytes);
            entry.lock().external.insert(sid, ExternalImage::Ready(bytes.clone()));
            Ok(png(bytes))
        }
        Err(e) => {
            entry.lock().external.insert(sid, ExternalImage::Failed(e.to_string()));
            Err(e)
        }
    }
}

async fn get_history(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> AppResult<Response> {
    let entry = state.session(&id)?;
    let inner = entry.lock();
    let top_history: Vec<u64> = inner
        .events
        .iter()
        .filter_map(|e| match e {
            mergebo_core::Event::Submission { submission } => submission.ranked_top.first().map(|s| s.0),
            _ => None,
        })
        .collect();
    Ok(Json(json!({
        "schema_version": SCHEMA_VERSION,
        "session_id": entry.id,
        "top_history": top_history,
        "events": inner.events,
    }))
    .into_response())
}

async fn finalize(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> AppResult<Response> {
    let entry = state.session(&id)?;
    let mut inner = entry.lock();
    if inner.status == Status::Computing {
        return Err(ApiError::Conflict("a ranking is still being processed".into()));
    }
    if inner.best.is_none() {
        return Err(ApiError::Conflict(CoreError::NoRanking.to_string()));
    }
    if !inner.finalized {
        inner.finalized = true;
        inner.finished = true;
        inner.pending = None;
        let mut envelope = entry.envelope.lock().unwrap_or_else(|e| e.into_inner());
        envelope.finalized = true;
        state.persist_envelope(&envelope)?;
    }
    Ok(Json(json!({
        "schema_version": SCHEMA_VERSION,
        "session_id": entry.id,
        "status": "finished",
        "best": best_view(&entry, &inner),
    }))
    .into_response())
}

async fn stats(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "schema_version": SCHEMA_VERSION,
        "sessions": state.session_count(),
        "renders": state.counters.renders.load(Ordering::Relaxed),
        "cache_hits": state.counters.cache_hits.load(Ordering::Relaxed),
        "cache_entries": state.cache_len(),
        "generator_calls": state.counters.generator_calls.load(Ordering::Relaxed),
    }))
}
