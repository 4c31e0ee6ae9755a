//! JSON API under `/api/v1` for the review workbench. Reads are served from
//! the open session; the only writes are revision dispositions and runs.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use framelab_core::prompting::FeatureSet;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;

use crate::llm::LlmClient;
use crate::store::{RevisionRequest, RunSummary, Session, StoreError};

pub struct AppState {
    pub session: Mutex<Session>,
    pub client: Option<Arc<LlmClient>>,
    runs: Mutex<BTreeMap<u64, RunStatus>>,
    next_run: AtomicU64,
}

impl AppState {
    pub fn new(session: Session, client: Option<Arc<LlmClient>>) -> Arc<Self> {
        Arc::new(AppState { session: Mutex::new(session), client, runs: Mutex::new(BTreeMap::new()), next_run: AtomicU64::new(1) })
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Running { run_id: u64, batch: u32 },
    Completed { run_id: u64, summary: RunSummary },
    Failed { run_id: u64, error: String },
}

pub struct ApiError(StatusCode, &'static str, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({"error": self.1, "message": self.2}))).into_response()
    }
}

impl From<anyhow::Error> for ApiError {
    fn from(e: anyhow::Error) -> Self {
        ApiError(StatusCode::INTERNAL_SERVER_ERROR, "Internal", format!("{e:#}"))
    }
}

fn not_found(what: impl Into<String>) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, "NotFound", what.into())
}

type ApiResult = Result<Json<Value>, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/v1/session", get(session))
        .route("/api/v1/codebook", get(codebook))
        .route("/api/v1/codebook/diff", get(codebook_diff))
        .route("/api/v1/cases", get(cases))
        .route("/api/v1/cases/{article_id}", get(case_detail))
        .route("/api/v1/report", get(report))
        .route("/api/v1/revisions", post(revisions))
        .route("/api/v1/runs", post(runs))
        .route("/api/v1/runs/{id}/status", get(run_status))
        .with_state(state)
}

async fn session(State(st): State<Arc<AppState>>) -> ApiResult {
    let s = st.session.lock().await;
    let mut v = s.status()?;
    v["state"] = serde_json::to_value(s.state()).map_err(anyhow::Error::from)?;
    v["ledger"] = serde_json::to_value(s.history().ledger()).map_err(anyhow::Error::from)?;
    Ok(Json(v))
}

#[derive(Deserialize)]
struct VersionQuery {
    version: Option<u32>,
}

async fn codebook(State(st): State<Arc<AppState>>, Query(q): Query<VersionQuery>) -> ApiResult {
    let s = st.session.lock().await;
    let cb = match q.version {
        Some(v) => s.history().version(v).ok_or_else(|| not_found(format!("codebook version {v}")))?,
        None => s.codebook(),
    };
    Ok(Json(serde_json::to_value(cb).map_err(anyhow::Error::from)?))
}

#[derive(Deserialize)]
struct DiffQuery {
    from: u32,
    to: u32,
}

async fn codebook_diff(State(st): State<Arc<AppState>>, Query(q): Query<DiffQuery>) -> ApiResult {
    let s = st.session.lock().await;
    let changes = s
        .history()
        .diff(q.from, q.to)
        .ok_or_else(|| not_found(format!("versions {} / {}", q.from, q.to)))?;
    Ok(Json(json!({"from": q.from, "to": q.to, "changes": changes})))
}

#[derive(Deserialize)]
struct CasesQuery {
    filter: Option<String>,
    frame: Option<String>,
}

/// Flattened review queue: one item per (kind, frame, article).
async fn cases(State(st): State<Arc<AppState>>, Query(q): Query<CasesQuery>) -> ApiResult {
    let kinds: &[&str] = match q.filter.as_deref() {
        None => &["disagreement", "borderline", "ambiguous"],
        Some("disagreement") => &["disagreement"],
        Some("borderline") => &["borderline"],
        Some("ambiguous") => &["ambiguous"],
        Some(other) => {
            return Err(ApiError(StatusCode::BAD_REQUEST, "BadFilter", format!("unknown filter `{other}`")));
        }
    };
    let s = st.session.lock().await;
    let Some(report) = s.cases()? else {
        return Ok(Json(json!({"batch": null, "cases": []})));
    };
    let frame_ok = |f: &str| q.frame.as_deref().is_none_or(|want| want == f);
    let mut items = Vec::new();
    if kinds.contains(&"disagreement") {
        if let Some(d) = &report.disagreements {
            for c in d.cases().filter(|c| frame_ok(&c.frame_id)) {
                let mut v = serde_json::to_value(c).map_err(anyhow::Error::from)?;
                v["kind"] = json!("disagreement");
                items.push(v);
            }
        }
    }
    if let Some(a) = &report.anchors {
        for (frame, anchors) in a.frames.iter().filter(|(f, _)| frame_ok(f)) {
            for (kind, list) in [("borderline", &anchors.borderline), ("ambiguous", &anchors.ambiguous)] {
                if !kinds.contains(&kind) {
                    continue;
                }
                for c in list {
                    let mut v = serde_json::to_value(c).map_err(anyhow::Error::from)?;
                    v["kind"] = json!(kind);
                    v["frame_id"] = json!(frame);
                    items.push(v);
                }
            }
        }
    }
    Ok(Json(json!({"batch": report.batch, "codebook_version": report.codebook_version, "cases": items})))
}

async fn case_detail(State(st): State<Arc<AppState>>, Path(article_id): Path<String>) -> ApiResult {
    let s = st.session.lock().await;
    let corpus = s.working_corpus()?;
    let article = corpus.get(&article_id).ok_or_else(|| not_found(format!("article `{article_id}`")))?;
    let verdicts: Vec<_> = match s.latest_batch() {
        Ok((_, records)) => records.into_iter().filter(|r| r.article_id == article_id).collect(),
        Err(_) => Vec::new(),
    };
    let disagreements: Vec<_> = s
        .cases()?
        .and_then(|r| r.disagreements)
        .map(|d| d.cases().filter(|c| c.article_id == article_id).cloned().collect())
        .unwrap_or_default();
    Ok(Json(json!({"article": article, "verdicts": verdicts, "disagreements": disagreements})))
}

async fn report(State(st): State<Arc<AppState>>) -> ApiResult {
    let s = st.session.lock().await;
    let r = s.report()?.ok_or_else(|| not_found("no evaluation report yet"))?;
    Ok(Json(serde_json::to_value(r).map_err(anyhow::Error::from)?))
}

async fn revisions(State(st): State<Arc<AppState>>, Json(req): Json<RevisionRequest>) -> Result<(StatusCode, Json<Value>), ApiError> {
    let mut s = st.session.lock().await;
    match s.revise(req) {
        Ok(entry) => Ok((
            StatusCode::CREATED,
            Json(json!({"entry": entry, "codebook_version": s.codebook().version})),
        )),
        Err(StoreError::VersionConflict { expected, current }) => Err(ApiError(
            StatusCode::CONFLICT,
            "VersionConflict",
            format!("submitted against version {expected}, codebook is at {current}"),
        )),
        Err(StoreError::Revision(e)) => Err(ApiError(StatusCode::UNPROCESSABLE_ENTITY, "RevisionRejected", e.to_string())),
        Err(e) => Err(ApiError(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string())),
    }
}

#[derive(Deserialize)]
struct RunRequest {
    k_runs: u32,
    #[serde(default)]
    features: Option<FeatureSet>,
}

async fn runs(State(st): State<Arc<AppState>>, Json(req): Json<RunRequest>) -> Result<(StatusCode, Json<Value>), ApiError> {
    let Some(client) = st.client.clone() else {
        return Err(ApiError(StatusCode::SERVICE_UNAVAILABLE, "NoClient", "server was started without an LLM backend".into()));
    };
    let plan = {
        let s = st.session.lock().await;
        match s.plan_rerun(req.k_runs, req.features) {
            Ok(p) => p,
            Err(StoreError::RunRejected(phase)) => {
                return Err(ApiError(StatusCode::CONFLICT, "RunRejected", format!("session is in {phase}")));
            }
            Err(e) => return Err(ApiError(StatusCode::UNPROCESSABLE_ENTITY, "RunRejected", e.to_string())),
        }
    };
    let run_id = st.next_run.fetch_add(1, Ordering::SeqCst);
    st.runs.lock().await.insert(run_id, RunStatus::Running { run_id, batch: plan.batch });
    let task_state = st.clone();
    tokio::spawn(async move {
        let outcome = Session::execute(&plan, &client).await;
        let status = {
            let mut s = task_state.session.lock().await;
            match s.commit_run(&plan, outcome) {
                Ok(summary) => RunStatus::Completed { run_id, summary },
                Err(e) => RunStatus::Failed { run_id, error: format!("{e:#}") },
            }
        };
        task_state.runs.lock().await.insert(run_id, status);
    });
    Ok((StatusCode::ACCEPTED, Json(json!({"run_id": run_id, "status": "running"}))))
}

async fn run_status(State(st): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult {
    let runs = st.runs.lock().await;
    let status = runs.get(&id).ok_or_else(|| not_found(format!("run {id}")))?;
    Ok(Json(serde_json::to_value(status).map_err(anyhow::Error::from)?))
}
