mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use common::{article_25801_mapping, case_study, fixture};
use framelab::api::{router, AppState};
use framelab::io::FileFormat;
use framelab::llm::{AuditLog, LlmClient, LlmConfig, MockEntry, MockTranscript};
use framelab::store::Session;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

fn client() -> Arc<LlmClient> {
    let payload = std::fs::read_to_string(fixture("verdict_25801.json")).unwrap();
    let t = MockTranscript::new(vec![MockEntry::for_article("25801", payload)]);
    Arc::new(LlmClient::mock(LlmConfig::default(), Arc::new(t), Arc::new(AuditLog::memory())).unwrap())
}

async fn fresh(dir: &TempDir) -> Session {
    let mut s = Session::init(dir.path(), case_study(), LlmConfig::default()).unwrap();
    s.ingest(&fixture("article_25801.csv"), FileFormat::Csv, &article_25801_mapping()).unwrap();
    s
}

/// A session in P5 whose morality queue holds article 25801.
async fn mined(dir: &TempDir) -> Session {
    let mut s = fresh(dir).await;
    s.classify(&client(), 3, None).await.unwrap();
    s.evaluate().unwrap();
    s.mine().unwrap();
    s
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() })
}

fn morality_patch() -> Value {
    json!([{
        "op": "insert_item",
        "target": {"scope": "frame", "frame_id": "moralidad", "list": "include_rules"},
        "index": 0,
        "item": "Privacy violations count as moral even without explicit normative language."
    }])
}

fn revision(disposition: &str, base: u32, edits: Value) -> Value {
    json!({
        "candidate_criterion": "privacy as morality",
        "disposition": disposition,
        "rationale": "human coders treat privacy violations as moral",
        "provenance_case_ids": ["25801"],
        "edits": edits,
        "base_version": base
    })
}

#[tokio::test]
async fn session_endpoint_reports_phase_and_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(mined(&dir).await, None));
    let (status, body) = call(&app, "GET", "/api/v1/session", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["phase"], "P5_INTERROGATION");
    assert_eq!(body["codebook_version"], 1);
    assert_eq!(body["ledger"], json!([]));
    assert_eq!(body["state"]["cycle_history"][0]["disagreement_rate"], json!(0.25));
}

#[tokio::test]
async fn morality_queue_lists_the_fixture_article() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(mined(&dir).await, None));
    let (status, body) = call(&app, "GET", "/api/v1/cases?filter=disagreement&frame=moralidad", None).await;
    assert_eq!(status, StatusCode::OK);
    let cases = body["cases"].as_array().unwrap();
    assert_eq!(cases.len(), 1);
    assert_eq!(cases[0]["article_id"], "25801");
    assert_eq!(cases[0]["kind"], "disagreement");
    assert_eq!(cases[0]["direction"], "false_negative");
    assert_eq!((cases[0]["llm_label"].as_u64(), cases[0]["human_label"].as_u64()), (Some(0), Some(1)));

    let (_, other) = call(&app, "GET", "/api/v1/cases?filter=disagreement&frame=conflicto", None).await;
    assert_eq!(other["cases"], json!([]));
    let (status, err) = call(&app, "GET", "/api/v1/cases?filter=everything", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"], "BadFilter");
}

#[tokio::test]
async fn case_detail_carries_article_and_justifications() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(mined(&dir).await, None));
    let (status, body) = call(&app, "GET", "/api/v1/cases/25801", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["article"]["headline"], "Kate Upton's Lawyer Addresses Controversial Photo Leak");
    assert_eq!(body["verdicts"].as_array().unwrap().len(), 3);
    let j = body["disagreements"][0]["justifications"].to_string();
    assert!(j.contains("legal complaint"), "{j}");
    let (status, _) = call(&app, "GET", "/api/v1/cases/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn revisions_follow_version_arithmetic() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(mined(&dir).await, None));

    let (status, body) = call(&app, "POST", "/api/v1/revisions", Some(revision("REJECTED", 1, json!([])))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["codebook_version"], 1);
    let (_, s) = call(&app, "GET", "/api/v1/session", None).await;
    assert_eq!(s["ledger"].as_array().unwrap().len(), 1);

    let (status, body) = call(&app, "POST", "/api/v1/revisions", Some(revision("ACCEPTED", 1, morality_patch()))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["codebook_version"], 2);
    let (_, diff) = call(&app, "GET", "/api/v1/codebook/diff?from=1&to=2", None).await;
    assert_eq!(diff["changes"], morality_patch());

    let (status, err) = call(&app, "POST", "/api/v1/revisions", Some(revision("ACCEPTED", 1, morality_patch()))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"], "VersionConflict");

    let bad = json!([{"op": "remove_frame", "frame_id": "salud"}]);
    let (status, err) = call(&app, "POST", "/api/v1/revisions", Some(revision("ACCEPTED", 2, bad))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"], "RevisionRejected");
    let (_, s) = call(&app, "GET", "/api/v1/session", None).await;
    assert_eq!(s["ledger"].as_array().unwrap().len(), 2);
    assert_eq!(s["phase"], "P6_REFINEMENT");
}

#[tokio::test]
async fn codebook_versions_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(mined(&dir).await, None));
    let (status, cb) = call(&app, "GET", "/api/v1/codebook?version=1", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(cb["frames"].as_array().unwrap().len(), 4);
    let (status, _) = call(&app, "GET", "/api/v1/codebook?version=9", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, report) = call(&app, "GET", "/api/v1/report", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["evaluated_articles"], 1);
}

#[tokio::test]
async fn report_is_404_before_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(fresh(&dir).await, None));
    let (status, body) = call(&app, "GET", "/api/v1/report", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "NotFound");
    let (_, cases) = call(&app, "GET", "/api/v1/cases", None).await;
    assert_eq!(cases["cases"], json!([]));
}

#[tokio::test]
async fn runs_are_rejected_outside_the_refinement_loop() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(fresh(&dir).await, Some(client())));
    let (status, body) = call(&app, "POST", "/api/v1/runs", Some(json!({"k_runs": 1}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "RunRejected");
}

#[tokio::test]
async fn runs_need_a_backend() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(mined(&dir).await, None));
    let (status, _) = call(&app, "POST", "/api/v1/runs", Some(json!({"k_runs": 1}))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn a_run_completes_and_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(mined(&dir).await, Some(client())));
    let (status, body) = call(&app, "POST", "/api/v1/runs", Some(json!({"k_runs": 2, "features": "full_text"}))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let id = body["run_id"].as_u64().unwrap();
    let mut last = Value::Null;
    for _ in 0..200 {
        let (_, s) = call(&app, "GET", &format!("/api/v1/runs/{id}/status"), None).await;
        last = s;
        if last["status"] != "running" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    assert_eq!(last["status"], "completed", "{last}");
    assert_eq!(last["summary"]["batch"], 2);
    assert_eq!(last["summary"]["records"], 2);
    let (status, _) = call(&app, "GET", "/api/v1/runs/999/status", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
