//! HTTP/JSON API.
//!
//! Management and export routes take the admin token when one is configured.
//! Annotator routes take the bearer token issued at consent. Errors are JSON
//! objects `{"error": code, "message": text, ...}`.

use std::collections::BTreeSet;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sevscale::audit::DatasheetConfig;
use sevscale::io::write_jsonl;
use sevscale::model::{Phase, Pool};
use sevscale::reliability::DEFAULT_TRIALS;
use sevscale::{AnnotatorId, CampaignId, CampaignPolicy, IdentityRegistry, Item, ItemId, SubjectMatterLabel};

use crate::error::ServiceError;
use crate::service::Service;
use crate::state::Answer;

#[derive(Clone)]
pub struct ApiState {
    pub service: Arc<Service>,
    pub admin_token: Option<String>,
    pub default_policy: CampaignPolicy,
    pub datasheet: DatasheetConfig,
}

pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        use ServiceError::*;
        let status = match &e {
            CampaignNotFound(_) | AnnotatorNotFound(_) | AssignmentNotFound(_) | NoTaskAvailable => StatusCode::NOT_FOUND,
            CampaignExists(_) | AnnotatorExists(_) | AlreadySubmitted(_) | PhaseOrderViolation(_) | NotAdjudicable(_)
            | Design { .. } => StatusCode::CONFLICT,
            Unauthorized => StatusCode::UNAUTHORIZED,
            NotOwner(_) | InvalidInvite | ConsentRequired => StatusCode::FORBIDDEN,
            ExposureLimitReached { .. } => StatusCode::TOO_MANY_REQUESTS,
            AssignmentExpired(_) => StatusCode::GONE,
            Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
            InvalidCampaignId(_) | UnknownPool(_) | WrongAnswerKind | EmptyLabeling | InvalidLabel { .. }
            | Judgment(_) | Item(_) | Policy(_) | Registry(_) | Audit(_) | Reliability(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
        };
        let mut body = json!({ "error": e.code(), "message": e.to_string() });
        match &e {
            ExposureLimitReached { scope, resume_at } => {
                body["scope"] = json!(scope);
                body["resume_at"] = json!(resume_at);
            }
            InvalidLabel { violation, .. } => body["violation"] = json!(violation),
            Judgment(j) => body["violation"] = json!(j),
            _ => {}
        }
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            tracing::error!(error = %e, "request failed");
        }
        ApiError { status, body }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: json!({ "error": "malformed-request", "message": r.body_text() }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

fn require_admin(state: &ApiState, headers: &HeaderMap) -> ApiResult<()> {
    match &state.admin_token {
        Some(expected) if bearer(headers) != Some(expected.as_str()) => Err(ServiceError::Unauthorized.into()),
        _ => Ok(()),
    }
}

fn annotator(state: &ApiState, campaign: &CampaignId, headers: &HeaderMap) -> ApiResult<AnnotatorId> {
    let token = bearer(headers).ok_or(ServiceError::Unauthorized)?;
    Ok(state.service.authenticate(campaign, token)?)
}

pub fn router(state: ApiState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/campaigns", post(create_campaign).get(list_campaigns))
        .route("/campaigns/{campaign}/status", get(status))
        .route("/campaigns/{campaign}/items", post(add_items))
        .route("/campaigns/{campaign}/registry", put(set_registry))
        .route("/campaigns/{campaign}/annotators", post(enroll))
        .route("/campaigns/{campaign}/annotators/{annotator}/consent", post(consent))
        .route("/campaigns/{campaign}/phase", post(open_phase))
        .route("/campaigns/{campaign}/adjudications", post(adjudicate))
        .route("/campaigns/{campaign}/me", get(me))
        .route("/campaigns/{campaign}/tasks/next", post(next_task))
        .route("/campaigns/{campaign}/assignments/{assignment}/submit", post(submit))
        .route("/campaigns/{campaign}/assignments/{assignment}/release", post(release))
        .route("/campaigns/{campaign}/export/{artifact}", get(export))
        .route("/campaigns/{campaign}/reports/balance", get(balance))
        .route("/campaigns/{campaign}/reports/reliability", get(reliability))
        .route("/campaigns/{campaign}/reports/datasheet", get(datasheet))
        .with_state(state)
}

#[derive(Deserialize)]
struct CreateCampaign {
    campaign_id: CampaignId,
    #[serde(default)]
    policy: Option<CampaignPolicy>,
}

async fn create_campaign(
    State(state): State<ApiState>,
    headers: HeaderMap,
    body: Result<Json<CreateCampaign>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    require_admin(&state, &headers)?;
    let Json(req) = body?;
    let policy = req.policy.unwrap_or_else(|| state.default_policy.clone());
    let status = state.service.create_campaign(req.campaign_id, policy)?;
    Ok((StatusCode::CREATED, Json(status)))
}

async fn list_campaigns(State(state): State<ApiState>, headers: HeaderMap) -> ApiResult<impl IntoResponse> {
    require_admin(&state, &headers)?;
    Ok(Json(state.service.campaign_ids()))
}

async fn status(
    State(state): State<ApiState>,
    headers: HeaderMap,
    Path(campaign): Path<CampaignId>,
) -> ApiResult<impl IntoResponse> {
    require_admin(&state, &headers)?;
    Ok(Json(state.service.status(&campaign)?))
}

async fn add_items(
    State(state): State<ApiState>,
    headers: HeaderMap,
    Path(campaign): Path<CampaignId>,
    body: Result<Json<Vec<Item>>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    require_admin(&state, &headers)?;
    let Json(items) = body?;
    let total = state.service.add_items(&campaign, items)?;
    Ok(Json(json!({ "items": total })))
}

async fn set_registry(
    State(state): State<ApiState>,
    headers: HeaderMap,
    Path(campaign): Path<CampaignId>,
    body: Result<Json<IdentityRegistry>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    require_admin(&state, &headers)?;
    let Json(registry) = body?;
    let version = state.service.set_registry(&campaign, registry)?;
    Ok(Json(json!({ "version": version })))
}

#[derive(Deserialize)]
struct Enroll {
    annotator_id: AnnotatorId,
    pools: BTreeSet<Pool>,
}

async fn enroll(
    State(state): State<ApiState>,
    headers: HeaderMap,
    Path(campaign): Path<CampaignId>,
    body: Result<Json<Enroll>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    require_admin(&state, &headers)?;
    let Json(req) = body?;
    let invite = state.service.enroll(&campaign, req.annotator_id, req.pools)?;
    Ok((StatusCode::CREATED, Json(invite)))
}

#[derive(Deserialize)]
struct Consent {
    invite_code: String,
}

async fn consent(
    State(state): State<ApiState>,
    Path((campaign, annotator)): Path<(CampaignId, AnnotatorId)>,
    body: Result<Json<Consent>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(req) = body?;
    Ok(Json(state.service.consent(&campaign, &annotator, &req.invite_code)?))
}

#[derive(Deserialize)]
struct OpenPhase {
    phase: Phase,
}

async fn open_phase(
    State(state): State<ApiState>,
    headers: HeaderMap,
    Path(campaign): Path<CampaignId>,
    body: Result<Json<OpenPhase>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    require_admin(&state, &headers)?;
    let Json(req) = body?;
    Ok(Json(state.service.open_phase(&campaign, req.phase)?))
}

#[derive(Deserialize)]
struct Adjudicate {
    item_id: ItemId,
    labels: BTreeSet<SubjectMatterLabel>,
}

async fn adjudicate(
    State(state): State<ApiState>,
    headers: HeaderMap,
    Path(campaign): Path<CampaignId>,
    body: Result<Json<Adjudicate>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    require_admin(&state, &headers)?;
    let Json(req) = body?;
    Ok(Json(state.service.adjudicate(&campaign, req.item_id, req.labels)?))
}

async fn me(
    State(state): State<ApiState>,
    headers: HeaderMap,
    Path(campaign): Path<CampaignId>,
) -> ApiResult<impl IntoResponse> {
    let who = annotator(&state, &campaign, &headers)?;
    Ok(Json(state.service.annotator(&campaign, &who)?))
}

async fn next_task(
    State(state): State<ApiState>,
    headers: HeaderMap,
    Path(campaign): Path<CampaignId>,
) -> ApiResult<impl IntoResponse> {
    let who = annotator(&state, &campaign, &headers)?;
    Ok(Json(state.service.next_task(&campaign, &who)?))
}

async fn submit(
    State(state): State<ApiState>,
    headers: HeaderMap,
    Path((campaign, assignment)): Path<(CampaignId, String)>,
    body: Result<Json<Answer>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let who = annotator(&state, &campaign, &headers)?;
    let Json(answer) = body?;
    Ok(Json(state.service.submit(&campaign, &who, &assignment, answer)?))
}

async fn release(
    State(state): State<ApiState>,
    headers: HeaderMap,
    Path((campaign, assignment)): Path<(CampaignId, String)>,
) -> ApiResult<impl IntoResponse> {
    let who = annotator(&state, &campaign, &headers)?;
    state.service.release(&campaign, &who, &assignment)?;
    Ok(StatusCode::NO_CONTENT)
}

fn jsonl<T: Serialize>(records: &[T]) -> ApiResult<Response> {
    let mut out = Vec::new();
    write_jsonl(&mut out, records).map_err(|e| ServiceError::Storage(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], out).into_response())
}

async fn export(
    State(state): State<ApiState>,
    headers: HeaderMap,
    Path((campaign, artifact)): Path<(CampaignId, String)>,
) -> ApiResult<Response> {
    require_admin(&state, &headers)?;
    let service = &state.service;
    match artifact.as_str() {
        "scores.csv" => Ok(([(header::CONTENT_TYPE, "text/csv")], service.scores_csv(&campaign)?).into_response()),
        "labels.jsonl" => jsonl(&service.snapshot(&campaign)?.aggregated.into_values().collect::<Vec<_>>()),
        "labelings.jsonl" => jsonl(&service.snapshot(&campaign)?.labelings),
        "judgments.jsonl" => jsonl(&service.snapshot(&campaign)?.judgments),
        "designs.json" => Ok(Json(service.snapshot(&campaign)?.pools).into_response()),
        _ => Err(ApiError {
            status: StatusCode::NOT_FOUND,
            body: json!({
                "error": "unknown-export",
                "message": "exports: scores.csv, labels.jsonl, labelings.jsonl, judgments.jsonl, designs.json",
            }),
        }),
    }
}

#[derive(Deserialize)]
struct ReportQuery {
    #[serde(default = "default_tau")]
    tau: f64,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default)]
    seed: u64,
}

fn default_tau() -> f64 {
    0.5
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

async fn balance(
    State(state): State<ApiState>,
    headers: HeaderMap,
    Path(campaign): Path<CampaignId>,
    Query(q): Query<ReportQuery>,
) -> ApiResult<impl IntoResponse> {
    require_admin(&state, &headers)?;
    Ok(Json(state.service.balance(&campaign, q.tau)?))
}

async fn reliability(
    State(state): State<ApiState>,
    headers: HeaderMap,
    Path(campaign): Path<CampaignId>,
    Query(q): Query<ReportQuery>,
) -> ApiResult<impl IntoResponse> {
    require_admin(&state, &headers)?;
    Ok(Json(state.service.reliability(&campaign, q.trials, q.seed)?))
}

async fn datasheet(
    State(state): State<ApiState>,
    headers: HeaderMap,
    Path(campaign): Path<CampaignId>,
    Query(q): Query<ReportQuery>,
) -> ApiResult<Response> {
    require_admin(&state, &headers)?;
    let text = state
        .service
        .datasheet(&campaign, q.tau, q.trials, q.seed, &state.datasheet)?;
    Ok(([(header::CONTENT_TYPE, "text/markdown; charset=utf-8")], text).into_response())
}
