//! JSON-over-HTTP routes. Handlers move the work onto the blocking pool
//! because providers and storage are synchronous.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use feedwarden_core::agents::{ProposalEdits, RulePatch};
use feedwarden_core::telemetry::{self, DEFAULT_TAIL_THRESHOLD};
use feedwarden_core::{FeedItem, RuleDraft};

use crate::error::ApiError;
use crate::state::{
    AppealRequest, InteractionRequest, IntentRequest, ResolveRequest, Service, SliderRequest, DEFAULT_USER,
};

pub const USER_HEADER: &str = "x-user-id";
pub const DEFAULT_TOP_N: usize = 15;
pub const DEFAULT_GOVERNANCE_DAYS: u32 = 7;

type Shared = Arc<Service>;

fn user_of(headers: &HeaderMap) -> Result<String, ApiError> {
    match headers.get(USER_HEADER) {
        None => Ok(DEFAULT_USER.to_string()),
        Some(v) => v
            .to_str()
            .map(|s| s.trim().to_string())
            .map_err(|_| ApiError::bad_request("X-User-Id is not valid text")),
    }
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    body.map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

fn optional_body<T: DeserializeOwned>(bytes: &Bytes) -> Result<Option<T>, ApiError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(None);
    }
    serde_json::from_slice(bytes)
        .map(Some)
        .map_err(|e| ApiError::bad_request(e.to_string()))
}

async fn blocking<T, F>(status: StatusCode, f: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(Ok(value)) => (status, Json(value)).into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(e) => ApiError::internal(e.to_string()).into_response(),
    }
}

/// Wraps a handler body: resolves the user, then runs `f` off the async
/// executor.
macro_rules! with_user {
    ($svc:expr, $headers:expr, $status:expr, |$s:ident, $u:ident| $body:expr) => {{
        let $u = match user_of(&$headers) {
            Ok(u) => u,
            Err(e) => return e.into_response(),
        };
        let $s = $svc.clone();
        blocking($status, move || $body).await
    }};
}

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/v1/adjudicate", post(adjudicate))
        .route("/v1/adjudicate/batch", post(adjudicate_batch))
        .route("/v1/rules", get(list_rules).post(add_rule))
        .route("/v1/rules/{id}", get(get_rule).patch(update_rule).delete(delete_rule))
        .route("/v1/intent", post(intent))
        .route("/v1/proposals", get(proposals))
        .route("/v1/proposals/{id}/confirm", post(confirm))
        .route("/v1/proposals/{id}/reject", post(reject))
        .route("/v1/dossiers/{id}", get(dossier))
        .route("/v1/appeals", post(file_appeal))
        .route("/v1/appeals/{id}", get(appeal))
        .route("/v1/appeals/{id}/resolve", post(resolve_appeal))
        .route("/v1/profile", get(profile))
        .route("/v1/profile/tags/{tag}", patch(set_slider))
        .route("/v1/profile/interactions", post(interaction))
        .route("/v1/session/advance", post(advance_session))
        .route("/v1/telemetry/summary", get(telemetry_summary))
        .route("/v1/telemetry/layers", get(telemetry_layers))
        .route("/v1/telemetry/longtail", get(telemetry_longtail))
        .route("/v1/telemetry/governance", get(telemetry_governance))
        .route("/v1/graph", get(graph))
        .route("/v1/config", get(config))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(service)
}

async fn not_found() -> Response {
    ApiError::not_found("no such route").into_response()
}

async fn method_not_allowed() -> Response {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed").into_response()
}

#[derive(Debug, Deserialize)]
struct BatchRequest {
    items: Vec<FeedItem>,
}

async fn adjudicate(State(svc): State<Shared>, headers: HeaderMap, body: Result<Json<FeedItem>, JsonRejection>) -> Response {
    let item = match json_body(body) {
        Ok(v) => v,
        Err(e) => return e.into_response(),
    };
    with_user!(svc, headers, StatusCode::OK, |s, u| s.adjudicate(&u, &item))
}

async fn adjudicate_batch(
    State(svc): State<Shared>,
    headers: HeaderMap,
    body: Result<Json<BatchRequest>, JsonRejection>,
) -> Response {
    let req = match json_body(body) {
        Ok(v) => v,
        Err(e) => return e.into_response(),
    };
    with_user!(svc, headers, StatusCode::OK, |s, u| s.adjudicate_batch(&u, &req.items))
}

async fn list_rules(State(svc): State<Shared>, headers: HeaderMap) -> Response {
    with_user!(svc, headers, StatusCode::OK, |s, u| s.rules(&u))
}

async fn add_rule(State(svc): State<Shared>, headers: HeaderMap, body: Result<Json<RuleDraft>, JsonRejection>) -> Response {
    let draft = match json_body(body) {
        Ok(v) => v,
        Err(e) => return e.into_response(),
    };
    with_user!(svc, headers, StatusCode::CREATED, |s, u| s.add_rule(&u, &draft))
}

async fn get_rule(State(svc): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    with_user!(svc, headers, StatusCode::OK, |s, u| s.rule(&u, &id))
}

async fn update_rule(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Result<Json<RulePatch>, JsonRejection>,
) -> Response {
    let patch = match json_body(body) {
        Ok(v) => v,
        Err(e) => return e.into_response(),
    };
    with_user!(svc, headers, StatusCode::OK, |s, u| s.update_rule(&u, &id, &patch))
}

async fn delete_rule(State(svc): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    with_user!(svc, headers, StatusCode::OK, |s, u| s.delete_rule(&u, &id))
}

async fn intent(State(svc): State<Shared>, headers: HeaderMap, body: Result<Json<IntentRequest>, JsonRejection>) -> Response {
    let req = match json_body(body) {
        Ok(v) => v,
        Err(e) => return e.into_response(),
    };
    with_user!(svc, headers, StatusCode::CREATED, |s, u| s.intent(&u, &req))
}

async fn proposals(State(svc): State<Shared>, headers: HeaderMap) -> Response {
    with_user!(svc, headers, StatusCode::OK, |s, u| s.proposals(&u))
}

async fn confirm(State(svc): State<Shared>, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    let edits: Option<ProposalEdits> = match optional_body(&body) {
        Ok(v) => v,
        Err(e) => return e.into_response(),
    };
    with_user!(svc, headers, StatusCode::OK, |s, u| s.confirm(&u, &id, edits.as_ref()))
}

async fn reject(State(svc): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    with_user!(svc, headers, StatusCode::OK, |s, u| s.reject(&u, &id))
}

async fn dossier(State(svc): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    with_user!(svc, headers, StatusCode::OK, |s, u| s.dossier(&u, &id).map(|d| (*d).clone()))
}

async fn file_appeal(
    State(svc): State<Shared>,
    headers: HeaderMap,
    body: Result<Json<AppealRequest>, JsonRejection>,
) -> Response {
    let req = match json_body(body) {
        Ok(v) => v,
        Err(e) => return e.into_response(),
    };
    with_user!(svc, headers, StatusCode::CREATED, |s, u| s.file_appeal(&u, &req))
}

async fn appeal(State(svc): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    with_user!(svc, headers, StatusCode::OK, |s, u| s.appeal(&u, &id))
}

async fn resolve_appeal(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Result<Json<ResolveRequest>, JsonRejection>,
) -> Response {
    let req = match json_body(body) {
        Ok(v) => v,
        Err(e) => return e.into_response(),
    };
    with_user!(svc, headers, StatusCode::OK, |s, u| s.resolve_appeal(&u, &id, &req))
}

async fn profile(State(svc): State<Shared>, headers: HeaderMap) -> Response {
    with_user!(svc, headers, StatusCode::OK, |s, u| s.profile(&u))
}

async fn set_slider(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(tag): Path<String>,
    body: Result<Json<SliderRequest>, JsonRejection>,
) -> Response {
    let req = match json_body(body) {
        Ok(v) => v,
        Err(e) => return e.into_response(),
    };
    with_user!(svc, headers, StatusCode::OK, |s, u| s.set_slider(&u, &tag, &req))
}

async fn interaction(
    State(svc): State<Shared>,
    headers: HeaderMap,
    body: Result<Json<InteractionRequest>, JsonRejection>,
) -> Response {
    let req = match json_body(body) {
        Ok(v) => v,
        Err(e) => return e.into_response(),
    };
    with_user!(svc, headers, StatusCode::OK, |s, u| s.record_interaction(&u, &req))
}

async fn advance_session(State(svc): State<Shared>, headers: HeaderMap) -> Response {
    with_user!(svc, headers, StatusCode::OK, |s, u| s.advance_session(&u))
}

/// `scope=all` aggregates every user; otherwise the caller's events only.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TelemetryQuery {
    #[serde(default)]
    scope: Option<String>,
    #[serde(default)]
    top: Option<usize>,
    #[serde(default)]
    tail_threshold: Option<u64>,
    #[serde(default)]
    days: Option<u32>,
}

fn telemetry_query(
    headers: &HeaderMap,
    query: Result<Query<TelemetryQuery>, QueryRejection>,
) -> Result<(Option<String>, TelemetryQuery), ApiError> {
    let Query(q) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let user = match q.scope.as_deref() {
        Some("all") => None,
        None | Some("user") => Some(user_of(headers)?),
        Some(other) => return Err(ApiError::bad_request(format!("unknown scope {other:?}"))),
    };
    Ok((user, q))
}

macro_rules! telemetry_handler {
    ($name:ident, |$events:ident, $q:ident| $body:expr) => {
        async fn $name(
            State(svc): State<Shared>,
            headers: HeaderMap,
            query: Result<Query<TelemetryQuery>, QueryRejection>,
        ) -> Response {
            let (user, $q) = match telemetry_query(&headers, query) {
                Ok(v) => v,
                Err(e) => return e.into_response(),
            };
            let svc = svc.clone();
            blocking(StatusCode::OK, move || {
                let $events = svc.events(user.as_deref());
                Ok($body)
            })
            .await
        }
    };
}

telemetry_handler!(telemetry_summary, |events, _q| telemetry::summary(&events));
telemetry_handler!(telemetry_layers, |events, _q| telemetry::layer_distribution(&events));
telemetry_handler!(telemetry_longtail, |events, q| telemetry::rule_longtail(
    &events,
    q.top.unwrap_or(DEFAULT_TOP_N),
    q.tail_threshold.unwrap_or(DEFAULT_TAIL_THRESHOLD)
));
telemetry_handler!(telemetry_governance, |events, q| telemetry::governance_efficiency(
    &events,
    q.days.unwrap_or(DEFAULT_GOVERNANCE_DAYS)
));

async fn graph(State(svc): State<Shared>, headers: HeaderMap) -> Response {
    with_user!(svc, headers, StatusCode::OK, |s, u| s.graph(&u))
}

async fn config(State(svc): State<Shared>) -> Response {
    (StatusCode::OK, Json(svc.config().clone())).into_response()
}
