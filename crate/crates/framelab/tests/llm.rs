mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use common::{case_study, small_corpus, uniform_response};
use framelab::llm::{AuditLog, ClassifyError, LlmClient, LlmConfig, LlmError, MockEntry, MockTranscript, Outcome};
use framelab_core::{Article, PromptOptions};
use serde_json::{json, Value};

#[derive(Clone)]
struct Step {
    status: u16,
    delay_ms: u64,
    content: String,
}

#[derive(Clone)]
struct Fake {
    script: Arc<Vec<Step>>,
    hits: Arc<AtomicUsize>,
    seen: Arc<Mutex<Vec<(Option<String>, Value)>>>,
}

async fn handler(State(f): State<Fake>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let i = f.hits.fetch_add(1, Ordering::SeqCst);
    let auth = headers.get("authorization").and_then(|v| v.to_str().ok()).map(String::from);
    f.seen.lock().unwrap().push((auth, body));
    let step = f.script[i.min(f.script.len() - 1)].clone();
    tokio::time::sleep(Duration::from_millis(step.delay_ms)).await;
    let status = StatusCode::from_u16(step.status).unwrap();
    (status, Json(json!({"choices": [{"message": {"role": "assistant", "content": step.content}}]})))
}

async fn serve(script: Vec<Step>) -> (String, Fake) {
    let fake = Fake { script: Arc::new(script), hits: Arc::default(), seen: Arc::default() };
    let app = Router::new().route("/v1/chat", post(handler)).with_state(fake.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("http://{}/v1/chat", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (url, fake)
}

fn step(status: u16, content: &str) -> Step {
    Step { status, delay_ms: 0, content: content.into() }
}

fn http_config(url: &str, max_retries: u32) -> LlmConfig {
    LlmConfig {
        endpoint_url: url.into(),
        model_id: "test-model".into(),
        max_retries,
        backoff_base_ms: 1,
        credential_env_var: "FRAMELAB_TEST_UNSET_KEY".into(),
        ..LlmConfig::default()
    }
}

fn mock_client(entries: Vec<MockEntry>, max_retries: u32) -> (LlmClient, Arc<MockTranscript>) {
    let transcript = Arc::new(MockTranscript::new(entries));
    let cfg = LlmConfig { model_id: "mock".into(), max_retries, ..LlmConfig::default() };
    (LlmClient::mock(cfg, transcript.clone(), Arc::new(AuditLog::memory())).unwrap(), transcript)
}

fn article() -> Article {
    Article::new("a1", "Headline", "Lead")
}

#[tokio::test]
async fn rate_limited_twice_then_ok_on_third_attempt() {
    let cb = case_study();
    let ok = uniform_response(&cb, "a1.txt", 0);
    let (url, fake) = serve(vec![step(429, ""), step(429, ""), step(200, &ok)]).await;
    let client = LlmClient::http(http_config(&url, 3), Arc::new(AuditLog::memory())).unwrap();
    let rec = client.classify_article(&cb, &article(), 1, &PromptOptions::default()).await.unwrap();
    assert_eq!(rec.frame_verdicts.len(), 4);
    assert_eq!(fake.hits.load(Ordering::SeqCst), 3);
    let log = client.audit().exchanges();
    assert_eq!(log.iter().map(|e| e.attempt).collect::<Vec<_>>(), [1, 2, 3]);
    assert_eq!(log.iter().map(|e| e.outcome).collect::<Vec<_>>(), [Outcome::TransportError, Outcome::TransportError, Outcome::Ok]);
}

#[tokio::test]
async fn timeout_without_retries_is_a_transport_error() {
    let cb = case_study();
    let slow = Step { status: 200, delay_ms: 2_000, content: uniform_response(&cb, "a1.txt", 0) };
    let (url, _fake) = serve(vec![slow]).await;
    let cfg = LlmConfig { timeout_ms: 100, ..http_config(&url, 0) };
    let client = LlmClient::http(cfg, Arc::new(AuditLog::memory())).unwrap();
    let err = client.classify_article(&cb, &article(), 1, &PromptOptions::default()).await.unwrap_err();
    assert!(matches!(err, ClassifyError::Llm(LlmError::TransportError(_))), "{err:?}");
    let log = client.audit().exchanges();
    assert_eq!(log.len(), 1);
    assert_eq!(log[0].outcome, Outcome::TransportError);
}

#[tokio::test]
async fn auth_failures_are_not_retried() {
    let (url, fake) = serve(vec![step(401, "")]).await;
    let client = LlmClient::http(http_config(&url, 3), Arc::new(AuditLog::memory())).unwrap();
    let err = client.classify_article(&case_study(), &article(), 1, &PromptOptions::default()).await.unwrap_err();
    assert!(matches!(err, ClassifyError::Llm(LlmError::AuthError(401))), "{err:?}");
    assert_eq!(fake.hits.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn request_carries_model_prompt_and_bearer_token() {
    let cb = case_study();
    let (url, fake) = serve(vec![step(200, &uniform_response(&cb, "a1.txt", 1))]).await;
    std::env::set_var("FRAMELAB_TEST_KEY_BEARER", "sk-test");
    let cfg = LlmConfig { credential_env_var: "FRAMELAB_TEST_KEY_BEARER".into(), temperature: 0.0, ..http_config(&url, 0) };
    let client = LlmClient::http(cfg, Arc::new(AuditLog::memory())).unwrap();
    let rec = client.classify_article(&cb, &article(), 2, &PromptOptions::default()).await.unwrap();
    assert_eq!((rec.run_index, rec.model_id.as_str()), (2, "test-model"));
    assert!(rec.frame_verdicts.iter().all(|f| f.present == 1));
    let seen = fake.seen.lock().unwrap();
    let (auth, body) = &seen[0];
    assert_eq!(auth.as_deref(), Some("Bearer sk-test"));
    assert_eq!(body["model"], "test-model");
    let content = body["messages"][0]["content"].as_str().unwrap();
    assert!(content.contains("<<<ARTICLE>>>\nHeadline\nLead\n<<<END ARTICLE>>>"));
}

#[tokio::test]
async fn non_string_content_is_a_transport_error() {
    let (url, _fake) = serve(vec![step(200, "")]).await;
    let cfg = LlmConfig { response_pointer: "/choices/0/message/missing".into(), ..http_config(&url, 0) };
    let client = LlmClient::http(cfg, Arc::new(AuditLog::memory())).unwrap();
    let err = client.classify_article(&case_study(), &article(), 1, &PromptOptions::default()).await.unwrap_err();
    assert!(matches!(err, ClassifyError::Llm(LlmError::TransportError(_))));
}

#[tokio::test]
async fn prose_then_json_succeeds_on_second_attempt() {
    let cb = case_study();
    let good = uniform_response(&cb, "a1.txt", 0);
    let prose = MockEntry { attempt: Some(1), ..MockEntry::for_article("a1", format!("Sure! {good}")) };
    let (client, _) = mock_client(vec![MockEntry::for_article("a1", good), prose], 2);
    let rec = client.classify_article(&cb, &article(), 1, &PromptOptions::default()).await.unwrap();
    assert_eq!(rec.answer_count(), 8);
    let log = client.audit().exchanges();
    assert_eq!(log.iter().map(|e| (e.attempt, e.outcome)).collect::<Vec<_>>(), [(1, Outcome::ParseRetry), (2, Outcome::Ok)]);
    assert!(log[1].raw_request.contains("CORRECTION"));
    assert!(!log[0].raw_request.contains("CORRECTION"));
    assert_eq!(log[0].prompt_hash, log[1].prompt_hash);
}

#[tokio::test]
async fn empty_object_every_time_gives_up_after_three_attempts() {
    let (client, _) = mock_client(vec![MockEntry::for_article("a1", "{}")], 2);
    let err = client.classify_article(&case_study(), &article(), 1, &PromptOptions::default()).await.unwrap_err();
    match err {
        ClassifyError::VerdictUnparseable { attempts, ref article_id, .. } => {
            assert_eq!(attempts, 3);
            assert_eq!(article_id, "a1");
        }
        other => panic!("unexpected {other:?}"),
    }
    let outcomes: Vec<_> = client.audit().exchanges().iter().map(|e| e.outcome).collect();
    assert_eq!(outcomes, [Outcome::ParseRetry, Outcome::ParseRetry, Outcome::GaveUp]);
}

#[tokio::test]
async fn transport_failure_and_parse_failure_share_one_budget() {
    let cb = case_study();
    let entries = vec![
        MockEntry { fail_times: 1, ..MockEntry::for_article("a1", "not json") },
        MockEntry { attempt: Some(3), ..MockEntry::for_article("a1", uniform_response(&cb, "a1.txt", 1)) },
    ];
    let (client, _) = mock_client(entries, 2);
    client.classify_article(&cb, &article(), 1, &PromptOptions::default()).await.unwrap();
    let outcomes: Vec<_> = client.audit().exchanges().iter().map(|e| e.outcome).collect();
    assert_eq!(outcomes, [Outcome::TransportError, Outcome::ParseRetry, Outcome::Ok]);
}

fn uniform_entries(n: usize, cb: &framelab_core::Codebook) -> Vec<MockEntry> {
    (1..=n).map(|i| MockEntry::for_article(format!("a{i}"), uniform_response(cb, &format!("a{i}.txt"), (i % 2) as u8))).collect()
}

#[tokio::test]
async fn batch_records_follow_corpus_order() {
    let cb = case_study();
    let (client, _) = mock_client(uniform_entries(20, &cb), 2);
    let out = client.classify_batch(&cb, &small_corpus(20), 1, &PromptOptions::default(), 1).await;
    let ids: Vec<_> = out.records.iter().map(|r| r.article_id.clone()).collect();
    let want: Vec<_> = (1..=20).map(|i| format!("a{i}")).collect();
    assert_eq!(ids, want);
    assert!(out.failures.is_empty());
    assert!(out.records.iter().all(|r| r.batch == 1));
}

#[tokio::test]
async fn batch_runs_every_article_k_times() {
    let cb = case_study();
    let (client, _) = mock_client(uniform_entries(5, &cb), 2);
    let out = client.classify_batch(&cb, &small_corpus(5), 3, &PromptOptions::default(), 4).await;
    assert_eq!(out.records.len(), 15);
    let keys: Vec<_> = out.records.iter().map(|r| (r.article_id.clone(), r.run_index)).collect();
    let want: Vec<_> = (1..=5).flat_map(|i| (1..=3).map(move |r| (format!("a{i}"), r))).collect();
    assert_eq!(keys, want);
}

#[tokio::test]
async fn permanent_failures_are_reported_not_fatal() {
    let cb = case_study();
    let mut entries = uniform_entries(10, &cb);
    for e in entries.iter_mut().filter(|e| matches!(e.article_id.as_deref(), Some("a3" | "a7"))) {
        e.fail_times = u32::MAX;
        e.fail_status = Some(503);
    }
    let (client, _) = mock_client(entries, 1);
    let out = client.classify_batch(&cb, &small_corpus(10), 1, &PromptOptions::default(), 1).await;
    assert_eq!(out.records.len(), 8);
    assert_eq!(out.failed_ids(), ["a3", "a7"]);
    assert_eq!(client.audit().exchanges().len(), 8 + 2 * 2);
}

#[tokio::test]
async fn in_flight_requests_respect_the_concurrency_limit() {
    let cb = case_study();
    let transcript = Arc::new(MockTranscript::new(uniform_entries(12, &cb)).with_delay(Duration::from_millis(20)));
    let cfg = LlmConfig { concurrency_limit: 3, ..LlmConfig::default() };
    let client = LlmClient::mock(cfg, transcript.clone(), Arc::new(AuditLog::memory())).unwrap();
    let out = client.classify_batch(&cb, &small_corpus(12), 2, &PromptOptions::default(), 1).await;
    assert_eq!(out.records.len(), 24);
    assert!(transcript.max_in_flight() <= 3);
    assert!(transcript.max_in_flight() >= 2, "requests never overlapped");
}

#[tokio::test]
async fn one_exchange_per_attempt() {
    let cb = case_study();
    let good = uniform_response(&cb, "x", 0);
    let entries = vec![
        MockEntry::for_article("a1", good.clone()),
        MockEntry { fail_times: 2, ..MockEntry::for_article("a2", good.clone()) },
        MockEntry { attempt: Some(1), ..MockEntry::for_article("a3", "prose") },
        MockEntry::for_article("a3", good),
    ];
    let (client, _) = mock_client(entries, 2);
    let out = client.classify_batch(&cb, &small_corpus(3), 1, &PromptOptions::default(), 1).await;
    assert_eq!(out.records.len(), 3);
    let log = client.audit().exchanges();
    let per = |id: &str| log.iter().filter(|e| e.article_id.as_deref() == Some(id)).map(|e| e.attempt).collect::<Vec<_>>();
    assert_eq!(per("a1"), [1]);
    assert_eq!(per("a2"), [1, 2, 3]);
    assert_eq!(per("a3"), [1, 2]);
}

#[tokio::test]
async fn mock_prefers_the_most_specific_entry() {
    let cb = case_study();
    let a = article();
    let hash = framelab_core::prompting::render_classification_prompt(&cb, &a, &PromptOptions::default()).unwrap().content_hash;
    let entries = vec![
        MockEntry::for_article("a1", uniform_response(&cb, "a1", 0)),
        MockEntry { run_index: Some(2), ..MockEntry::for_article("a1", uniform_response(&cb, "a1", 1)) },
        MockEntry::for_hash(hash, uniform_response(&cb, "a1", 1)),
    ];
    let (client, _) = mock_client(entries.clone(), 0);
    let rec = client.classify_article(&cb, &a, 1, &PromptOptions::default()).await.unwrap();
    assert_eq!(rec.presence("moralidad"), Some(1), "hash entry wins");

    let (client, _) = mock_client(entries[..2].to_vec(), 0);
    let r1 = client.classify_article(&cb, &a, 1, &PromptOptions::default()).await.unwrap();
    let r2 = client.classify_article(&cb, &a, 2, &PromptOptions::default()).await.unwrap();
    assert_eq!((r1.presence("moralidad"), r2.presence("moralidad")), (Some(0), Some(1)));
}

#[tokio::test]
async fn unscripted_prompt_fails_as_transport_error() {
    let (client, _) = mock_client(vec![], 0);
    let err = client.classify_article(&case_study(), &article(), 1, &PromptOptions::default()).await.unwrap_err();
    assert!(matches!(err, ClassifyError::Llm(LlmError::TransportError(_))));
}

#[test]
fn config_rejects_unbounded_retries() {
    let cfg = LlmConfig { max_retries: 11, ..LlmConfig::default() };
    assert!(matches!(cfg.validate(), Err(LlmError::InvalidConfig(_))));
    assert_eq!(LlmConfig::default().max_attempts(), 3);
}

#[test]
fn file_audit_log_appends_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exchanges.jsonl");
    let rt = tokio::runtime::Runtime::new().unwrap();
    rt.block_on(async {
        let cb = case_study();
        let t = Arc::new(MockTranscript::new(vec![MockEntry::for_article("a1", uniform_response(&cb, "a1", 0))]));
        let client = LlmClient::mock(LlmConfig::default(), t, Arc::new(AuditLog::file(&path).unwrap())).unwrap();
        client.classify_article(&cb, &article(), 1, &PromptOptions::default()).await.unwrap();
        client.classify_article(&cb, &article(), 2, &PromptOptions::default()).await.unwrap();
    });
    let lines: Vec<framelab::llm::Exchange> = framelab::io::read_jsonl(&path).unwrap();
    assert_eq!(lines.iter().map(|e| e.run_index).collect::<Vec<_>>(), [Some(1), Some(2)]);
}
