//! HTTP surface of the audit service.
//!
//! Handlers are thin: each one parses its request, calls one core
//! operation (on the blocking pool when it touches disk or runs a step) and
//! maps the result. All errors leave as `{"code", "message"}` JSON.

mod error;

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use zkmlops_core::orchestrator::{Audit, AuditState};
use zkmlops_core::selection::{build_spec, LifecyclePhase, ModelCategory, ProtocolProfile, StoredSpec};
use zkmlops_core::workflow::{StepName, WorkflowConfig};
use zkmlops_core::Services;

pub use error::ApiError;

/// Largest accepted artifact upload.
pub const MAX_BODY_BYTES: usize = 512 * 1024 * 1024;

/// Header naming the caller on step requests; recorded in the step history.
pub const ACTOR_HEADER: &str = "x-actor";

type ApiResult<T> = Result<T, ApiError>;
type AppState = Arc<Services>;

pub fn router(services: Arc<Services>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/workflows", post(create_workflow).get(list_workflows))
        .route("/workflows/{id}", get(get_workflow))
        .route("/audits", post(create_audit).get(list_audits))
        .route("/audits/{id}", get(get_audit))
        .route("/audits/{id}/artifacts/{kind}", put(put_artifact).get(get_artifact))
        .route("/audits/{id}/steps/{step}", post(run_step))
        .route("/audits/{id}/certificate", get(certificate))
        .route("/recommendations", post(recommend))
        .route("/specs", post(create_spec).get(list_specs))
        .route("/specs/{id}", get(get_spec))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(services)
}

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker task failed: {e}")))?
}

/// Audit as served: the persisted record plus the next legal step.
#[derive(Serialize)]
pub struct AuditView {
    #[serde(flatten)]
    pub audit: Audit,
    pub next_step: Option<StepName>,
}

impl From<Audit> for AuditView {
    fn from(audit: Audit) -> Self {
        AuditView {
            next_step: audit.next_step(),
            audit,
        }
    }
}

async fn create_workflow(State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let cfg = blocking(move || Ok(s.orchestrator.workflows().load_config(&body)?)).await?;
    Ok((StatusCode::CREATED, Json(serde_json::json!({ "id": cfg.id }))).into_response())
}

async fn list_workflows(State(s): State<AppState>) -> Json<Vec<WorkflowConfig>> {
    Json(s.orchestrator.workflows().list().iter().map(|c| (**c).clone()).collect())
}

async fn get_workflow(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<WorkflowConfig>> {
    Ok(Json((*s.orchestrator.workflows().get(&id)?).clone()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateAudit {
    workflow_id: String,
}

async fn create_audit(State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: CreateAudit = parse_json(&body)?;
    let audit = blocking(move || Ok(s.orchestrator.create_audit(&req.workflow_id)?)).await?;
    Ok((StatusCode::CREATED, Json(AuditView::from(audit))).into_response())
}

#[derive(Deserialize)]
struct AuditFilter {
    state: Option<String>,
}

async fn list_audits(State(s): State<AppState>, Query(q): Query<AuditFilter>) -> ApiResult<Json<Vec<AuditView>>> {
    let state = q
        .state
        .map(|st| st.parse::<AuditState>().map_err(ApiError::bad_request))
        .transpose()?;
    Ok(Json(s.orchestrator.list_audits(state).into_iter().map(AuditView::from).collect()))
}

async fn get_audit(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<AuditView>> {
    Ok(Json(s.orchestrator.get_audit(&id)?.into()))
}

async fn put_artifact(
    State(s): State<AppState>,
    Path((id, kind)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    let (audit, artifact) = blocking(move || Ok(s.orchestrator.upload_artifact(&id, &kind, &body, None)?)).await?;
    Ok(Json(serde_json::json!({
        "artifact": artifact,
        "audit": AuditView::from(audit),
    })))
}

async fn get_artifact(State(s): State<AppState>, Path((id, kind)): Path<(String, String)>) -> ApiResult<Response> {
    let (artifact, bytes) = blocking(move || Ok(s.orchestrator.artifact_bytes(&id, &kind)?)).await?;
    Ok((
        [
            (header::CONTENT_TYPE, "application/octet-stream".to_string()),
            (header::HeaderName::from_static("x-artifact-id"), artifact.id),
        ],
        bytes,
    )
        .into_response())
}

async fn run_step(
    State(s): State<AppState>,
    Path((id, step)): Path<(String, String)>,
    headers: HeaderMap,
) -> ApiResult<Json<AuditView>> {
    let actor = headers
        .get(ACTOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    tracing::info!(audit = %id, %step, actor = actor.as_deref().unwrap_or("-"), "running step");
    let audit = blocking(move || Ok(s.orchestrator.advance(&id, &step, actor.as_deref())?)).await?;
    Ok(Json(audit.into()))
}

async fn certificate(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(s.orchestrator.certificate(&id)?).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecommendRequest {
    phase: LifecyclePhase,
    model_category: ModelCategory,
}

#[derive(Serialize)]
struct Recommendation {
    phase: LifecyclePhase,
    model_category: ModelCategory,
    candidates: Vec<ProtocolProfile>,
}

async fn recommend(State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: RecommendRequest = parse_json(&body)?;
    let candidates = s.knowledge_base.recommend(req.phase, req.model_category)?;
    Ok(Json(Recommendation {
        phase: req.phase,
        model_category: req.model_category,
        candidates,
    })
    .into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecRequest {
    audit_purpose: String,
    phase: LifecyclePhase,
    model_category: ModelCategory,
    selected_protocol: String,
    author: String,
}

async fn create_spec(State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: SpecRequest = parse_json(&body)?;
    if req.audit_purpose.trim().is_empty() {
        return Err(ApiError::bad_request("audit_purpose must not be empty"));
    }
    let stored = blocking(move || {
        let spec = build_spec(
            &s.knowledge_base,
            &req.audit_purpose,
            req.phase,
            req.model_category,
            &req.selected_protocol,
            &req.author,
        )?;
        let number = s.adr.store_spec(&spec)?;
        Ok(s.adr.get_spec(number)?)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(stored)).into_response())
}

async fn list_specs(State(s): State<AppState>) -> ApiResult<Json<Vec<StoredSpec>>> {
    blocking(move || Ok(Json(s.adr.list()?))).await
}

/// Rendered markdown by default; the stored JSON with `Accept: application/json`.
async fn get_spec(State(s): State<AppState>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Response> {
    let number: u32 = id
        .parse()
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "unknown_record", format!("unknown ADR record {id:?}")))?;
    let wants_json = headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("application/json"));
    blocking(move || {
        if wants_json {
            return Ok(Json(s.adr.get_spec(number)?).into_response());
        }
        let md = s.adr.render_spec(number)?;
        Ok(([(header::CONTENT_TYPE, "text/markdown; charset=utf-8")], md).into_response())
    })
    .await
}
