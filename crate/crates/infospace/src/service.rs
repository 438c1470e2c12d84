//! JSON HTTP API over a set of domain sessions.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use infospace_core::compiler::{CompileError, SqlParam};
use infospace_core::post::ResultTable;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::session::{DomainSession, SessionError};

pub const DEFAULT_PAGE: usize = 20;
pub const MAX_PAGE: usize = 500;

type Sessions = Arc<BTreeMap<String, Arc<DomainSession>>>;

/// Builds the router. Domains are keyed by labeling id; later duplicates
/// replace earlier ones.
pub fn router(sessions: Vec<DomainSession>) -> Router {
    let map: BTreeMap<String, Arc<DomainSession>> =
        sessions.into_iter().map(|s| (s.labeling.id.clone(), Arc::new(s))).collect();
    Router::new()
        .route("/api/health", get(health))
        .route("/api/domains", get(domains))
        .route("/api/domains/{domain}/questions", get(search))
        .route("/api/domains/{domain}/questions/{qid}", get(question))
        .route("/api/domains/{domain}/questions/{qid}/execute", post(execute_question))
        .route("/api/domains/{domain}/plans/execute", post(execute_plan))
        .with_state(Arc::new(map))
}

pub async fn serve(sessions: Vec<DomainSession>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(sessions)).await
}

#[derive(Debug, Serialize)]
struct Diagnostic {
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    column: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    step: Option<u32>,
    message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
    diagnostics: Vec<Diagnostic>,
}

impl ApiError {
    fn not_found(message: String) -> ApiError {
        ApiError { status: StatusCode::NOT_FOUND, kind: "not_found", message, diagnostics: Vec::new() }
    }

    fn internal(message: String) -> ApiError {
        ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, kind: "internal", message, diagnostics: Vec::new() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.kind, "message": self.message, "diagnostics": self.diagnostics });
        (self.status, Json(body)).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> ApiError {
        let message = e.to_string();
        let bad_request = |kind, diagnostics| ApiError { status: StatusCode::BAD_REQUEST, kind, message: message.clone(), diagnostics };
        match &e {
            SessionError::UnknownQuestion(_) => ApiError::not_found(message),
            SessionError::Parse(p) => {
                let (line, column) = p.position().unzip();
                bad_request("parse", vec![Diagnostic { line, column, step: None, message: p.to_string() }])
            }
            SessionError::Check(errors) => bad_request(
                "type",
                errors
                    .iter()
                    .map(|c| Diagnostic { line: None, column: None, step: Some(c.step), message: c.to_string() })
                    .collect(),
            ),
            SessionError::Compile(c) => bad_request("compile", vec![compile_diagnostic(c)]),
            SessionError::Exec(_) | SessionError::Database(_) => ApiError::internal(message),
        }
    }
}

fn compile_diagnostic(e: &CompileError) -> Diagnostic {
    let step = match e {
        CompileError::NoLowering { step, .. }
        | CompileError::ZeroDivisor(step)
        | CompileError::Unsupported { step, .. } => Some(*step),
        _ => None,
    };
    Diagnostic { line: None, column: None, step, message: e.to_string() }
}

fn session(sessions: &Sessions, id: &str) -> Result<Arc<DomainSession>, ApiError> {
    sessions.get(id).cloned().ok_or_else(|| ApiError::not_found(format!("unknown domain `{id}`")))
}

/// Runs blocking database work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Serialize)]
struct DomainSummary {
    id: String,
    name: String,
    description: String,
    entity_count: usize,
    question_count: usize,
}

async fn domains(State(sessions): State<Sessions>) -> Json<Vec<DomainSummary>> {
    Json(
        sessions
            .values()
            .map(|s| DomainSummary {
                id: s.labeling.id.clone(),
                name: s.labeling.name.clone(),
                description: s.labeling.description.clone(),
                entity_count: s.labeling.entities().len(),
                question_count: s.index.len(),
            })
            .collect(),
    )
}

#[derive(Deserialize)]
struct SearchParams {
    #[serde(default)]
    q: String,
    limit: Option<usize>,
    #[serde(default)]
    offset: usize,
}

#[derive(Serialize)]
struct QuestionHit {
    question_id: String,
    text: String,
    template_id: String,
}

/// Ranked matches for `q`; with no search terms, the corpus in generation
/// order.
async fn search(
    State(sessions): State<Sessions>,
    Path(domain): Path<String>,
    Query(params): Query<SearchParams>,
) -> Result<Json<Vec<QuestionHit>>, ApiError> {
    let s = session(&sessions, &domain)?;
    let limit = params.limit.unwrap_or(DEFAULT_PAGE).min(MAX_PAGE);
    let hit = |r: &infospace_core::questions::QuestionRecord| QuestionHit {
        question_id: r.question_id.clone(),
        text: r.question_text.clone(),
        template_id: r.template_id.clone(),
    };
    let hits = if infospace_core::questions::tokenize(&params.q).is_empty() {
        s.index.records().iter().skip(params.offset).take(limit).map(hit).collect()
    } else {
        s.index.search_page(&params.q, params.offset, limit).into_iter().map(|h| hit(h.record)).collect()
    };
    Ok(Json(hits))
}

#[derive(Serialize)]
struct QuestionDetail {
    question_id: String,
    template_id: String,
    text: String,
    plan_text: String,
    sql_text: String,
    params: Vec<SqlParam>,
}

async fn question(
    State(sessions): State<Sessions>,
    Path((domain, qid)): Path<(String, String)>,
) -> Result<Json<QuestionDetail>, ApiError> {
    let s = session(&sessions, &domain)?;
    let record = s.question(&qid)?;
    let compiled = s.compile(&record.plan_text)?;
    let primary = compiled
        .outputs
        .last()
        .and_then(|r| compiled.subplan(*r))
        .ok_or_else(|| ApiError::internal("plan has no output".into()))?;
    Ok(Json(QuestionDetail {
        question_id: record.question_id.clone(),
        template_id: record.template_id.clone(),
        text: record.question_text.clone(),
        plan_text: record.plan_text.clone(),
        sql_text: primary.query.sql.clone(),
        params: primary.query.params.clone(),
    }))
}

fn run_primary(s: &DomainSession, plan_text: &str) -> Result<ResultTable, ApiError> {
    let conn = s.connect().map_err(SessionError::from)?;
    let result = s.run(&conn, plan_text)?;
    result.primary().cloned().ok_or_else(|| ApiError::internal("plan has no output".into()))
}

async fn execute_question(
    State(sessions): State<Sessions>,
    Path((domain, qid)): Path<(String, String)>,
) -> Result<Json<ResultTable>, ApiError> {
    let s = session(&sessions, &domain)?;
    let plan_text = s.question(&qid)?.plan_text.clone();
    blocking(move || run_primary(&s, &plan_text)).await.map(Json)
}

#[derive(Deserialize)]
struct PlanBody {
    plan_text: String,
}

async fn execute_plan(
    State(sessions): State<Sessions>,
    Path(domain): Path<String>,
    Json(body): Json<PlanBody>,
) -> Result<Json<ResultTable>, ApiError> {
    let s = session(&sessions, &domain)?;
    blocking(move || run_primary(&s, &body.plan_text)).await.map(Json)
}
