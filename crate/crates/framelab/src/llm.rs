//! Chat-completion client with retries, bounded batch concurrency, a
//! scripted mock backend and a JSON Lines audit trail.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use framelab_core::codebook::validate_codebook;
use framelab_core::prompting::{corrective_instruction, render_classification_prompt, PromptError};
use framelab_core::verdict::{parse_verdict, ParseOptions};
use framelab_core::{Article, Codebook, Corpus, PromptOptions, PromptText, VerdictRecord};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::io::{now_rfc3339, read_jsonl};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub endpoint_url: String,
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "defaults::max_retries")]
    pub max_retries: u32,
    #[serde(default = "defaults::concurrency_limit")]
    pub concurrency_limit: usize,
    #[serde(default = "defaults::timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "defaults::credential_env_var")]
    pub credential_env_var: String,
    /// JSON pointer to the completion text inside the endpoint's response.
    #[serde(default = "defaults::response_pointer")]
    pub response_pointer: String,
    /// First backoff after HTTP 429; doubles on each further attempt.
    #[serde(default = "defaults::backoff_base_ms")]
    pub backoff_base_ms: u64,
    #[serde(default)]
    pub parse: ParseOptions,
}

mod defaults {
    pub fn max_retries() -> u32 {
        2
    }
    pub fn concurrency_limit() -> usize {
        4
    }
    pub fn timeout_ms() -> u64 {
        60_000
    }
    pub fn credential_env_var() -> String {
        "FRAMELAB_API_KEY".into()
    }
    pub fn response_pointer() -> String {
        "/choices/0/message/content".into()
    }
    pub fn backoff_base_ms() -> u64 {
        500
    }
}

pub const MAX_RETRIES_CAP: u32 = 10;

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint_url: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model_id: "mock".into(),
            temperature: 0.0,
            max_retries: defaults::max_retries(),
            concurrency_limit: defaults::concurrency_limit(),
            timeout_ms: defaults::timeout_ms(),
            credential_env_var: defaults::credential_env_var(),
            response_pointer: defaults::response_pointer(),
            backoff_base_ms: defaults::backoff_base_ms(),
            parse: ParseOptions::default(),
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |m: &str| Err(LlmError::InvalidConfig(m.into()));
        if self.concurrency_limit == 0 {
            return bad("concurrency_limit must be at least 1");
        }
        if self.max_retries > MAX_RETRIES_CAP {
            return bad("max_retries must be at most 10");
        }
        if !(self.temperature >= 0.0) {
            return bad("temperature must be non-negative");
        }
        Ok(())
    }

    pub fn max_attempts(&self) -> u32 {
        self.max_retries + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Ok,
    TransportError,
    ParseRetry,
    GaveUp,
}

/// One attempt against the backend, successful or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    /// Hash of the prompt before any corrective suffix.
    pub prompt_hash: String,
    pub raw_request: String,
    pub raw_response: String,
    pub model_id: String,
    pub latency_ms: u64,
    pub attempt: u32,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub article_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_index: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub timestamp: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("transport error: {0}")]
    TransportError(String),
    #[error("endpoint rejected the credential (HTTP {0})")]
    AuthError(u16),
    #[error("rate limited after {0} attempts")]
    RateLimited(u32),
    #[error("invalid LLM config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("article `{article_id}` run {run_index}: no valid verdict after {attempts} attempts ({last_error})")]
    VerdictUnparseable { article_id: String, run_index: u32, attempts: u32, last_error: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Where exchanges go. File sinks append one JSON line per exchange.
pub enum AuditLog {
    File(Mutex<File>),
    Memory(Mutex<Vec<Exchange>>),
}

impl AuditLog {
    pub fn file(path: &Path) -> std::io::Result<Self> {
        Ok(AuditLog::File(Mutex::new(OpenOptions::new().create(true).append(true).open(path)?)))
    }

    pub fn memory() -> Self {
        AuditLog::Memory(Mutex::new(Vec::new()))
    }

    pub fn record(&self, ex: &Exchange) {
        match self {
            AuditLog::File(f) => {
                let mut line = serde_json::to_vec(ex).expect("exchange serializes");
                line.push(b'\n');
                let mut f = f.lock().unwrap_or_else(|e| e.into_inner());
                // an unwritable audit file must not abort classification
                if let Err(e) = f.write_all(&line) {
                    eprintln!("audit log write failed: {e}");
                }
            }
            AuditLog::Memory(v) => v.lock().unwrap_or_else(|e| e.into_inner()).push(ex.clone()),
        }
    }

    /// In-memory exchanges; empty for file sinks.
    pub fn exchanges(&self) -> Vec<Exchange> {
        match self {
            AuditLog::Memory(v) => v.lock().unwrap_or_else(|e| e.into_inner()).clone(),
            AuditLog::File(_) => Vec::new(),
        }
    }
}

/// One scripted reply. Unset selector fields match anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub article_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codebook_version: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_index: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<u32>,
    pub response: String,
    /// Attempts numbered up to this value fail before `response` is returned.
    #[serde(default)]
    pub fail_times: u32,
    /// HTTP status the failing attempts simulate; absent means a timeout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_status: Option<u16>,
}

impl MockEntry {
    pub fn for_hash(hash: impl Into<String>, response: impl Into<String>) -> Self {
        MockEntry {
            prompt_hash: Some(hash.into()),
            article_id: None,
            codebook_version: None,
            run_index: None,
            attempt: None,
            response: response.into(),
            fail_times: 0,
            fail_status: None,
        }
    }

    pub fn for_article(article_id: impl Into<String>, response: impl Into<String>) -> Self {
        MockEntry { prompt_hash: None, article_id: Some(article_id.into()), ..MockEntry::for_hash("", response) }
    }

    fn matches(&self, req: &RequestContext<'_>, attempt: u32) -> bool {
        fn ok<T: PartialEq>(sel: &Option<T>, v: Option<T>) -> bool {
            sel.as_ref().is_none_or(|s| v.as_ref() == Some(s))
        }
        (self.prompt_hash.is_some() || self.article_id.is_some())
            && ok(&self.prompt_hash.as_deref(), Some(req.prompt_hash))
            && ok(&self.article_id.as_deref(), req.article_id)
            && ok(&self.codebook_version, req.codebook_version)
            && ok(&self.run_index, req.run_index)
            && ok(&self.attempt, Some(attempt))
    }

    fn specificity(&self) -> (bool, usize, bool, bool) {
        let extra = [self.codebook_version.is_some(), self.run_index.is_some(), self.attempt.is_some()]
            .iter()
            .filter(|&&b| b)
            .count();
        (self.prompt_hash.is_some(), extra, self.attempt.is_some(), self.run_index.is_some())
    }
}

/// Scripted backend. Lookups prefer prompt-hash entries over article-id
/// entries, then entries pinning more of (version, run, attempt); ties go
/// to the earliest line.
#[derive(Debug, Default)]
pub struct MockTranscript {
    entries: Vec<MockEntry>,
    delay: Duration,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

impl MockTranscript {
    pub fn new(entries: Vec<MockEntry>) -> Self {
        MockTranscript { entries, ..Default::default() }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        Ok(MockTranscript::new(read_jsonl(path)?))
    }

    /// Simulated per-request latency, so concurrent requests overlap.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    fn lookup(&self, req: &RequestContext<'_>, attempt: u32) -> Option<&MockEntry> {
        let mut best: Option<&MockEntry> = None;
        for e in self.entries.iter().filter(|e| e.matches(req, attempt)) {
            if best.is_none_or(|b| e.specificity() > b.specificity()) {
                best = Some(e);
            }
        }
        best
    }

    async fn respond(&self, req: &RequestContext<'_>, attempt: u32) -> Result<String, SendError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        if self.delay.is_zero() {
            tokio::task::yield_now().await;
        } else {
            tokio::time::sleep(self.delay).await;
        }
        let result = match self.lookup(req, attempt) {
            None => Err(SendError::Transport(format!("mock transcript has no entry for prompt {}", req.prompt_hash))),
            Some(e) if attempt <= e.fail_times => Err(match e.fail_status {
                Some(s @ (401 | 403)) => SendError::Auth(s),
                Some(429) => SendError::RateLimited,
                Some(s) => SendError::Transport(format!("HTTP {s}")),
                None => SendError::Transport("timed out".into()),
            }),
            Some(e) => Ok(e.response.clone()),
        };
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }
}

pub enum Backend {
    Http(reqwest::Client),
    Mock(Arc<MockTranscript>),
}

#[derive(Debug, Clone, Copy)]
struct RequestContext<'a> {
    prompt_hash: &'a str,
    article_id: Option<&'a str>,
    run_index: Option<u32>,
    codebook_version: Option<u32>,
}

#[derive(Debug)]
enum SendError {
    Transport(String),
    Auth(u16),
    RateLimited,
}

pub struct LlmClient {
    cfg: LlmConfig,
    backend: Backend,
    audit: Arc<AuditLog>,
}

impl LlmClient {
    pub fn http(cfg: LlmConfig, audit: Arc<AuditLog>) -> Result<Self, LlmError> {
        cfg.validate()?;
        let client = reqwest::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| LlmError::TransportError(e.to_string()))?;
        Ok(LlmClient { cfg, backend: Backend::Http(client), audit })
    }

    pub fn mock(cfg: LlmConfig, transcript: Arc<MockTranscript>, audit: Arc<AuditLog>) -> Result<Self, LlmError> {
        cfg.validate()?;
        Ok(LlmClient { cfg, backend: Backend::Mock(transcript), audit })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.cfg
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    fn request_body(&self, text: &str) -> Value {
        json!({
            "model": self.cfg.model_id,
            "messages": [{"role": "user", "content": text}],
            "temperature": self.cfg.temperature,
        })
    }

    async fn send_once(&self, text: &str, ctx: RequestContext<'_>, attempt: u32) -> (Result<String, SendError>, Exchange) {
        let body = self.request_body(text);
        let started = Instant::now();
        let (result, raw_response) = match &self.backend {
            Backend::Mock(m) => {
                let r = m.respond(&ctx, attempt).await;
                let raw = r.as_ref().map(Clone::clone).unwrap_or_default();
                (r, raw)
            }
            Backend::Http(client) => self.send_http(client, &body).await,
        };
        let ex = Exchange {
            prompt_hash: ctx.prompt_hash.to_string(),
            raw_request: body.to_string(),
            raw_response,
            model_id: self.cfg.model_id.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
            attempt,
            outcome: if result.is_ok() { Outcome::Ok } else { Outcome::TransportError },
            article_id: ctx.article_id.map(String::from),
            run_index: ctx.run_index,
            error: result.as_ref().err().map(|e| format!("{e:?}")),
            timestamp: now_rfc3339(),
        };
        (result, ex)
    }

    async fn send_http(&self, client: &reqwest::Client, body: &Value) -> (Result<String, SendError>, String) {
        let mut req = client.post(&self.cfg.endpoint_url).json(body);
        if let Ok(key) = std::env::var(&self.cfg.credential_env_var) {
            req = req.bearer_auth(key);
        }
        let resp = match req.send().await {
            Ok(r) => r,
            Err(e) => return (Err(SendError::Transport(e.to_string())), String::new()),
        };
        let status = resp.status().as_u16();
        let text = match resp.text().await {
            Ok(t) => t,
            Err(e) => return (Err(SendError::Transport(e.to_string())), String::new()),
        };
        let result = match status {
            200..=299 => serde_json::from_str::<Value>(&text)
                .ok()
                .and_then(|v| v.pointer(&self.cfg.response_pointer).and_then(Value::as_str).map(String::from))
                .ok_or_else(|| SendError::Transport(format!("no string at {} in response", self.cfg.response_pointer))),
            401 | 403 => Err(SendError::Auth(status)),
            429 => Err(SendError::RateLimited),
            s => Err(SendError::Transport(format!("HTTP {s}"))),
        };
        (result, text)
    }

    fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.cfg.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(16)))
    }

    /// Sends `prompt`, retrying transport failures within the attempt budget.
    pub async fn complete(&self, prompt: &PromptText) -> Result<(String, Exchange), LlmError> {
        let ctx = RequestContext { prompt_hash: &prompt.content_hash, article_id: None, run_index: None, codebook_version: None };
        let mut last = LlmError::TransportError("no attempt made".into());
        for attempt in 1..=self.cfg.max_attempts() {
            let (result, ex) = self.send_once(&prompt.full_text, ctx, attempt).await;
            self.audit.record(&ex);
            match result {
                Ok(text) => return Ok((text, ex)),
                Err(e) => {
                    last = self.to_error(e, attempt);
                    if !self.retryable(&last, attempt).await {
                        break;
                    }
                }
            }
        }
        Err(last)
    }

    fn to_error(&self, e: SendError, attempt: u32) -> LlmError {
        match e {
            SendError::Transport(m) => LlmError::TransportError(m),
            SendError::Auth(s) => LlmError::AuthError(s),
            SendError::RateLimited => LlmError::RateLimited(attempt),
        }
    }

    /// Sleeps the backoff when another attempt is allowed.
    async fn retryable(&self, err: &LlmError, attempt: u32) -> bool {
        if attempt >= self.cfg.max_attempts() || matches!(err, LlmError::AuthError(_)) {
            return false;
        }
        if matches!(err, LlmError::RateLimited(_)) {
            tokio::time::sleep(self.backoff(attempt)).await;
        }
        true
    }

    /// Render, send, validate. Parse failures and transport failures draw
    /// from one budget of `max_retries + 1` attempts; a parse failure
    /// resends the prompt with a corrective instruction appended.
    pub async fn classify_article(
        &self,
        cb: &Codebook,
        article: &Article,
        run_index: u32,
        opts: &PromptOptions,
    ) -> Result<VerdictRecord, ClassifyError> {
        let violations = validate_codebook(cb);
        if !violations.is_empty() {
            return Err(PromptError::InvalidCodebook(violations).into());
        }
        let prompt = render_classification_prompt(cb, article, opts)?;
        let ctx = RequestContext {
            prompt_hash: &prompt.content_hash,
            article_id: Some(&article.id),
            run_index: Some(run_index),
            codebook_version: Some(cb.version),
        };
        let mut text = prompt.full_text.clone();
        for attempt in 1..=self.cfg.max_attempts() {
            let (result, mut ex) = self.send_once(&text, ctx, attempt).await;
            let raw = match result {
                Ok(raw) => raw,
                Err(e) => {
                    self.audit.record(&ex);
                    let err = self.to_error(e, attempt);
                    if !self.retryable(&err, attempt).await {
                        return Err(err.into());
                    }
                    continue;
                }
            };
            match parse_verdict(&raw, cb, &article.id, &self.cfg.parse) {
                Ok(mut record) => {
                    self.audit.record(&ex);
                    record.run_index = run_index;
                    record.model_id = self.cfg.model_id.clone();
                    record.prompt_hash = prompt.content_hash.clone();
                    record.timestamp = ex.timestamp.clone();
                    return Ok(record);
                }
                Err(e) => {
                    let msg = e.to_string();
                    let last = attempt == self.cfg.max_attempts();
                    ex.outcome = if last { Outcome::GaveUp } else { Outcome::ParseRetry };
                    ex.error = Some(format!("{}: {msg}", e.class()));
                    self.audit.record(&ex);
                    if last {
                        return Err(ClassifyError::VerdictUnparseable {
                            article_id: article.id.clone(),
                            run_index,
                            attempts: attempt,
                            last_error: msg,
                        });
                    }
                    text = format!("{}{}", prompt.full_text, corrective_instruction(&msg));
                }
            }
        }
        unreachable!("the loop returns on its last attempt")
    }

    /// Classifies every article `k_runs` times with at most
    /// `concurrency_limit` requests in flight. Records come back in corpus
    /// order, then by run index, whatever the completion order.
    pub async fn classify_batch(&self, cb: &Codebook, corpus: &Corpus, k_runs: u32, opts: &PromptOptions, batch: u32) -> BatchOutcome {
        let jobs: Vec<(usize, &Article, u32)> = corpus
            .articles()
            .iter()
            .enumerate()
            .flat_map(|(pos, a)| (1..=k_runs).map(move |r| (pos, a, r)))
            .collect();
        // futures are built eagerly: a lazily mapped stream trips the
        // higher-ranked lifetime check once the batch is spawned on tokio
        let futures: Vec<_> = jobs
            .into_iter()
            .map(|(pos, a, r)| async move { (pos, r, self.classify_article(cb, a, r, opts).await) })
            .collect();
        let mut done: Vec<(usize, u32, Result<VerdictRecord, ClassifyError>)> =
            stream::iter(futures).buffer_unordered(self.cfg.concurrency_limit).collect().await;
        done.sort_by_key(|(pos, r, _)| (*pos, *r));
        let mut out = BatchOutcome::default();
        for (pos, run_index, result) in done {
            match result {
                Ok(mut rec) => {
                    rec.batch = batch;
                    out.records.push(rec);
                }
                Err(e) => out.failures.push(BatchFailure {
                    article_id: corpus.articles()[pos].id.clone(),
                    run_index,
                    error: e.to_string(),
                }),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchFailure {
    pub article_id: String,
    pub run_index: u32,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchOutcome {
    pub records: Vec<VerdictRecord>,
    pub failures: Vec<BatchFailure>,
}

impl BatchOutcome {
    /// Distinct article ids with at least one failed run, in order.
    pub fn failed_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = Vec::new();
        for f in &self.failures {
            if !ids.contains(&f.article_id.as_str()) {
                ids.push(&f.article_id);
            }
        }
        ids
    }
}
