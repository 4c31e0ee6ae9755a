//! The session directory: configuration, the append-only event log, the
//! verdict store, codebook versions with their ledger, and generated reports.
//!
//! ```text
//! <session>/
//!   config.json            session id, LLM and analysis settings
//!   session.json           snapshot of SessionState after the last event
//!   events.jsonl           control log, replayed on open
//!   verdicts.jsonl         every VerdictRecord, all batches
//!   exchanges.jsonl        LLM audit trail
//!   codebook.json          current codebook
//!   codebook_history/vN.json
//!   ledger.jsonl           RevisionEntry per line
//!   corpus.json, sample.json
//!   reports/               report.json, cases.json, exploration.txt, curation.json
//!   session.lock           held by the single writer
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions, TryLockError};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use framelab_core::analysis::{
    majority_labels, mine_disagreements, select_anchor_cases, summarize_rationales, AnchorSet, AnchorThresholds,
    DisagreementReport, RationaleSummary,
};
use framelab_core::codebook::{validate_codebook, Change, CodebookHistory, Disposition};
use framelab_core::corpus::{stratified_sample, ColumnMapping};
use framelab_core::eval::{nb_cross_validate, random_row, score_row, tfidf_rf_placeholder, ReportRow, NB_MODEL};
use framelab_core::prompting::{
    parse_curation_response, render_curation_prompt, render_exploration_prompt, ContextBudget, CurationPick, FeatureSet,
};
use framelab_core::session::{check_stabilization, Event, EventKind, SessionState, DEFAULT_EPSILON, DEFAULT_WINDOW};
use framelab_core::text::default_stop_words;
use framelab_core::{Codebook, Corpus, PromptOptions, RevisionEntry, SampleSpec, VerdictRecord};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::io::{append_jsonl, load_corpus, now_rfc3339, read_json, read_jsonl, write_json, FileFormat};
use crate::llm::{BatchFailure, BatchOutcome, LlmClient, LlmConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub session_id: String,
    pub created_at: String,
    pub initial_codebook_version: u32,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub prompt: PromptOptions,
    #[serde(default)]
    pub context_budget: ContextBudget,
    #[serde(default)]
    pub anchors: AnchorThresholds,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_window")]
    pub window: usize,
    /// Seed for the baseline rows.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_folds")]
    pub nb_folds: usize,
    #[serde(default = "default_terms")]
    pub rationale_terms: usize,
    /// Record STABILIZED as soon as the stopping rule holds after mining.
    #[serde(default = "default_true")]
    pub auto_stabilize: bool,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_window() -> usize {
    DEFAULT_WINDOW
}
fn default_folds() -> usize {
    5
}
fn default_terms() -> usize {
    10
}
fn default_true() -> bool {
    true
}

impl SessionConfig {
    pub fn new(initial_codebook_version: u32, llm: LlmConfig) -> Self {
        SessionConfig {
            session_id: uuid::Uuid::new_v4().to_string(),
            created_at: now_rfc3339(),
            initial_codebook_version,
            llm,
            prompt: PromptOptions::default(),
            context_budget: ContextBudget::default(),
            anchors: AnchorThresholds::default(),
            epsilon: DEFAULT_EPSILON,
            window: DEFAULT_WINDOW,
            seed: 0,
            nb_folds: default_folds(),
            rationale_terms: default_terms(),
            auto_stabilize: true,
        }
    }
}

/// Paths inside a session directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }
    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
    pub fn config(&self) -> PathBuf {
        self.p("config.json")
    }
    pub fn snapshot(&self) -> PathBuf {
        self.p("session.json")
    }
    pub fn events(&self) -> PathBuf {
        self.p("events.jsonl")
    }
    pub fn verdicts(&self) -> PathBuf {
        self.p("verdicts.jsonl")
    }
    pub fn exchanges(&self) -> PathBuf {
        self.p("exchanges.jsonl")
    }
    pub fn codebook(&self) -> PathBuf {
        self.p("codebook.json")
    }
    pub fn history_dir(&self) -> PathBuf {
        self.p("codebook_history")
    }
    pub fn codebook_version(&self, v: u32) -> PathBuf {
        self.history_dir().join(format!("v{v}.json"))
    }
    pub fn ledger(&self) -> PathBuf {
        self.p("ledger.jsonl")
    }
    pub fn corpus(&self) -> PathBuf {
        self.p("corpus.json")
    }
    pub fn sample(&self) -> PathBuf {
        self.p("sample.json")
    }
    pub fn reports(&self) -> PathBuf {
        self.p("reports")
    }
    pub fn report(&self, name: &str) -> PathBuf {
        self.reports().join(name)
    }
    pub fn lock(&self) -> PathBuf {
        self.p("session.lock")
    }
}

/// What `mine` stores for the review queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasesReport {
    pub batch: u32,
    pub codebook_version: u32,
    pub disagreements: Option<DisagreementReport>,
    pub anchors: Option<AnchorSet>,
    pub rationales: Option<RationaleSummary>,
    pub disagreement_rate: f64,
    /// `gold` when the rate compares against gold labels, `instability`
    /// when it falls back to the share of ambiguous (article, frame) pairs.
    pub rate_source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub batch: u32,
    pub codebook_version: u32,
    pub evaluated_articles: usize,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionRequest {
    pub candidate_criterion: String,
    pub disposition: Disposition,
    pub rationale: String,
    #[serde(default)]
    pub provenance_case_ids: Vec<String>,
    #[serde(default)]
    pub edits: Vec<Change>,
    /// When set, the codebook must still be at this version.
    #[serde(default)]
    pub base_version: Option<u32>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("session at {0} is locked by another writer")]
    Locked(PathBuf),
    #[error("revision targets version {expected} but the codebook is at version {current}")]
    VersionConflict { expected: u32, current: u32 },
    #[error("classification runs are only allowed in P5/P6, session is in {0}")]
    RunRejected(&'static str),
    #[error(transparent)]
    Revision(#[from] framelab_core::codebook::RevisionError),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

/// Everything a classification run needs, captured before the (long)
/// network phase so the session can stay unlocked meanwhile.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub batch: u32,
    pub k_runs: u32,
    pub codebook: Codebook,
    pub corpus: Corpus,
    pub options: PromptOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub batch: u32,
    pub k_runs: u32,
    pub codebook_version: u32,
    pub records: usize,
    pub failures: Vec<BatchFailure>,
}

/// An open session. Holding one means holding the writer lock, unless it
/// was opened read-only.
pub struct Session {
    layout: Layout,
    config: SessionConfig,
    state: SessionState,
    history: CodebookHistory,
    _lock: Option<File>,
}

fn base_state(layout: &Layout, config: &SessionConfig) -> SessionState {
    SessionState::new(config.session_id.clone(), layout.events().display().to_string(), config.initial_codebook_version)
}

impl Session {
    pub fn init(root: &Path, codebook: Codebook, llm: LlmConfig) -> anyhow::Result<Session> {
        let layout = Layout::new(root);
        if layout.config().exists() {
            bail!("{} already holds a session", root.display());
        }
        let history = CodebookHistory::new(codebook.clone()).map_err(|e| anyhow!("codebook rejected: {e}"))?;
        llm.validate()?;
        fs::create_dir_all(layout.history_dir())?;
        fs::create_dir_all(layout.reports())?;
        let config = SessionConfig::new(codebook.version, llm);
        write_json(&layout.config(), &config)?;
        write_json(&layout.codebook(), &codebook)?;
        write_json(&layout.codebook_version(codebook.version), &codebook)?;
        for p in [layout.events(), layout.ledger(), layout.verdicts()] {
            File::create(p)?;
        }
        let state = base_state(&layout, &config);
        write_json(&layout.snapshot(), &state)?;
        let lock = acquire_lock(&layout)?;
        Ok(Session { layout, config, state, history, _lock: Some(lock) })
    }

    /// Opens for writing; fails while another writer holds the lock.
    pub fn open(root: &Path) -> anyhow::Result<Session> {
        let layout = Layout::new(root);
        let lock = acquire_lock(&layout)?;
        let mut s = Session::load(layout)?;
        s._lock = Some(lock);
        Ok(s)
    }

    pub fn open_read_only(root: &Path) -> anyhow::Result<Session> {
        Session::load(Layout::new(root))
    }

    fn load(layout: Layout) -> anyhow::Result<Session> {
        let config: SessionConfig =
            read_json(&layout.config()).with_context(|| format!("no session at {}", layout.root.display()))?;
        let initial: Codebook = read_json(&layout.codebook_version(config.initial_codebook_version))?;
        let ledger: Vec<RevisionEntry> = read_jsonl(&layout.ledger())?;
        let history = CodebookHistory::replay(initial, ledger).map_err(|e| anyhow!("ledger replay failed: {e}"))?;
        let events: Vec<Event> = read_jsonl(&layout.events())?;
        let state = SessionState::replay(base_state(&layout, &config), &events)
            .map_err(|e| anyhow!("event log replay failed: {e}"))?;
        if state.codebook_version != history.current().version {
            bail!(
                "event log says codebook v{} but the ledger yields v{}",
                state.codebook_version,
                history.current().version
            );
        }
        Ok(Session { layout, config, state, history, _lock: None })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }
    pub fn config(&self) -> &SessionConfig {
        &self.config
    }
    pub fn state(&self) -> &SessionState {
        &self.state
    }
    pub fn history(&self) -> &CodebookHistory {
        &self.history
    }
    pub fn codebook(&self) -> &Codebook {
        self.history.current()
    }

    pub fn events(&self) -> anyhow::Result<Vec<Event>> {
        read_jsonl(&self.layout.events())
    }

    /// State rebuilt from the event log alone.
    pub fn replayed_state(&self) -> anyhow::Result<SessionState> {
        SessionState::replay(base_state(&self.layout, &self.config), &self.events()?).map_err(|e| anyhow!("{e}"))
    }

    /// Durably appends one event, then updates the in-memory state and snapshot.
    pub fn record(&mut self, kind: EventKind, payload: Value) -> anyhow::Result<Event> {
        let event = Event { seq: self.state.next_seq(), timestamp: now_rfc3339(), kind, payload };
        let mut next = self.state.clone();
        next.apply(&event).map_err(|e| anyhow!("{e}"))?;
        append_jsonl(&self.layout.events(), std::slice::from_ref(&event))?;
        self.state = next;
        write_json(&self.layout.snapshot(), &self.state)?;
        Ok(event)
    }

    pub fn corpus(&self) -> anyhow::Result<Corpus> {
        read_json(&self.layout.corpus()).context("no corpus ingested yet")
    }

    /// The sample when one was drawn, otherwise the full corpus.
    pub fn working_corpus(&self) -> anyhow::Result<Corpus> {
        if self.layout.sample().exists() {
            read_json(&self.layout.sample())
        } else {
            self.corpus()
        }
    }

    pub fn verdicts(&self) -> anyhow::Result<Vec<VerdictRecord>> {
        read_jsonl(&self.layout.verdicts())
    }

    /// Records of the most recent batch, with its number.
    pub fn latest_batch(&self) -> anyhow::Result<(u32, Vec<VerdictRecord>)> {
        let all = self.verdicts()?;
        let batch = all.iter().map(|r| r.batch).max().ok_or_else(|| anyhow!("no classification batch yet"))?;
        Ok((batch, all.into_iter().filter(|r| r.batch == batch).collect()))
    }

    pub fn ingest(&mut self, path: &Path, format: FileFormat, mapping: &ColumnMapping) -> anyhow::Result<Event> {
        let report = load_corpus(path, format, mapping)?;
        write_json(&self.layout.corpus(), &report.corpus)?;
        if self.layout.sample().exists() {
            fs::remove_file(self.layout.sample())?;
        }
        let rejected: Vec<Value> =
            report.rejected.iter().map(|r| json!({"row": r.row, "reason": r.reason.to_string()})).collect();
        self.record(
            EventKind::CorpusLoaded,
            json!({
                "corpus_ref": "corpus.json",
                "source": report.corpus.provenance.source,
                "articles": report.corpus.len(),
                "feature_set": report.corpus.feature_set,
                "rejected": rejected,
                "mapping": mapping,
            }),
        )
    }

    pub fn sample(&mut self, spec: &SampleSpec) -> anyhow::Result<Event> {
        let sample = stratified_sample(&self.corpus()?, spec)?;
        write_json(&self.layout.sample(), &sample)?;
        self.record(
            EventKind::Sampled,
            json!({
                "corpus_ref": "sample.json",
                "fraction": spec.fraction,
                "strata": spec.strata_keys,
                "seed": spec.seed,
                "articles": sample.len(),
            }),
        )
    }

    pub async fn explore(&mut self, client: &LlmClient) -> anyhow::Result<Event> {
        let prompt = render_exploration_prompt(self.codebook(), &self.working_corpus()?, self.config.context_budget)?;
        let (text, _) = client.complete(&prompt).await?;
        fs::write(self.layout.report("exploration.txt"), &text)?;
        self.record(
            EventKind::Explored,
            json!({"prompt_hash": prompt.content_hash, "response_ref": "reports/exploration.txt"}),
        )
    }

    pub async fn curate(&mut self, client: &LlmClient) -> anyhow::Result<(Vec<CurationPick>, Event)> {
        let slice = self.working_corpus()?;
        let prompt = render_curation_prompt(self.codebook(), &slice, self.config.context_budget)?;
        let (text, _) = client.complete(&prompt).await?;
        fs::write(self.layout.report("curation_raw.txt"), &text)?;
        let picks = parse_curation_response(&text, self.codebook(), &slice)?;
        write_json(&self.layout.report("curation.json"), &picks)?;
        let event = self.record(
            EventKind::Curated,
            json!({"prompt_hash": prompt.content_hash, "picks": picks.len(), "response_ref": "reports/curation.json"}),
        )?;
        Ok((picks, event))
    }

    pub fn plan_run(&self, k_runs: u32, features: Option<FeatureSet>) -> anyhow::Result<RunPlan> {
        if k_runs == 0 {
            bail!("k_runs must be at least 1");
        }
        let violations = validate_codebook(self.codebook());
        if !violations.is_empty() {
            bail!("current codebook is invalid: {violations:?}");
        }
        let mut options = self.config.prompt.clone();
        if let Some(f) = features {
            options.feature_set = f;
        }
        let batch = self.verdicts()?.iter().map(|r| r.batch).max().unwrap_or(0) + 1;
        Ok(RunPlan { batch, k_runs, codebook: self.codebook().clone(), corpus: self.working_corpus()?, options })
    }

    /// Like [`Session::plan_run`], but only from the interrogation/refinement loop.
    pub fn plan_rerun(&self, k_runs: u32, features: Option<FeatureSet>) -> Result<RunPlan, StoreError> {
        use framelab_core::session::Phase;
        if !matches!(self.state.phase, Phase::Interrogation | Phase::Refinement) {
            return Err(StoreError::RunRejected(self.state.phase.label()));
        }
        Ok(self.plan_run(k_runs, features)?)
    }

    pub async fn execute(plan: &RunPlan, client: &LlmClient) -> BatchOutcome {
        client.classify_batch(&plan.codebook, &plan.corpus, plan.k_runs, &plan.options, plan.batch).await
    }

    pub fn commit_run(&mut self, plan: &RunPlan, outcome: BatchOutcome) -> anyhow::Result<RunSummary> {
        if plan.codebook.version != self.codebook().version {
            bail!("codebook moved from v{} to v{} during the run", plan.codebook.version, self.codebook().version);
        }
        append_jsonl(&self.layout.verdicts(), &outcome.records)?;
        let summary = RunSummary {
            batch: plan.batch,
            k_runs: plan.k_runs,
            codebook_version: plan.codebook.version,
            records: outcome.records.len(),
            failures: outcome.failures,
        };
        self.record(
            EventKind::Classified,
            json!({
                "batch": summary.batch,
                "k_runs": summary.k_runs,
                "codebook_version": summary.codebook_version,
                "features": plan.options.feature_set,
                "records": summary.records,
                "failed": summary.failures.iter().map(|f| json!({"article_id": f.article_id, "run_index": f.run_index})).collect::<Vec<_>>(),
            }),
        )?;
        Ok(summary)
    }

    pub async fn classify(&mut self, client: &LlmClient, k_runs: u32, features: Option<FeatureSet>) -> anyhow::Result<RunSummary> {
        let plan = self.plan_run(k_runs, features)?;
        let outcome = Session::execute(&plan, client).await;
        self.commit_run(&plan, outcome)
    }

    /// Scores the latest batch (majority over its runs) and the baselines on
    /// the articles that have both gold labels and a verdict.
    pub fn evaluate(&mut self) -> anyhow::Result<EvaluationReport> {
        let (batch, records) = self.latest_batch()?;
        let majority = majority_labels(&records)?;
        let corpus = self.working_corpus()?;
        let classified: Vec<_> = corpus
            .articles()
            .iter()
            .filter(|a| !a.gold_labels.is_empty() && records.iter().any(|r| r.article_id == a.id))
            .cloned()
            .collect();
        if classified.is_empty() {
            bail!("no classified article carries gold labels");
        }
        let eval_corpus = Corpus::new(classified, corpus.provenance.clone(), corpus.feature_set.clone())?;
        let model = records.first().map(|r| r.model_id.clone()).unwrap_or_default();
        let mut rows = Vec::new();
        for frame in &self.codebook().frames {
            if eval_corpus.articles().iter().all(|a| a.gold(&frame.id).is_none()) {
                continue;
            }
            let pred: BTreeMap<String, u8> = eval_corpus
                .articles()
                .iter()
                .filter(|a| a.gold(&frame.id).is_some())
                .filter_map(|a| majority.get(&(a.id.clone(), frame.id.clone())).map(|&l| (a.id.clone(), l)))
                .collect();
            rows.push(score_row(&format!("LLM ({model})"), &frame.id, &pred, &eval_corpus)?);
            rows.push(random_row(&frame.id, &eval_corpus, self.config.seed)?);
            let labeled = eval_corpus.articles().iter().filter(|a| a.gold(&frame.id).is_some()).count();
            let folds = self.config.nb_folds.min(labeled);
            if folds >= 2 {
                let nb = nb_cross_validate(&eval_corpus, &frame.id, folds, self.config.seed)?;
                rows.push(score_row(NB_MODEL, &frame.id, &nb, &eval_corpus)?);
            }
            rows.push(tfidf_rf_placeholder(&frame.id));
        }
        if rows.is_empty() {
            bail!("gold labels do not cover any codebook frame");
        }
        let report = EvaluationReport {
            batch,
            codebook_version: self.codebook().version,
            evaluated_articles: eval_corpus.len(),
            rows,
        };
        write_json(&self.layout.report("report.json"), &report)?;
        write_json(&self.layout.report(&format!("report_b{batch}.json")), &report)?;
        self.record(
            EventKind::Evaluated,
            json!({"batch": batch, "report_ref": "reports/report.json", "articles": report.evaluated_articles}),
        )?;
        Ok(report)
    }

    /// Disagreements (when gold exists), anchor cases (when the batch has
    /// k ≥ 2) and rationale terms for the latest batch; opens a new cycle.
    pub fn mine(&mut self) -> anyhow::Result<CasesReport> {
        let (batch, records) = self.latest_batch()?;
        let corpus = self.working_corpus()?;
        let has_gold = corpus.articles().iter().any(|a| !a.gold_labels.is_empty());
        let disagreements = if has_gold { Some(mine_disagreements(&records, &corpus)?) } else { None };
        let anchors = select_anchor_cases(&records, &corpus, self.config.anchors).ok();
        let rationales = match &disagreements {
            Some(d) if d.total() > 0 => {
                let cases: Vec<_> = d.cases().cloned().collect();
                Some(summarize_rationales(&cases, self.config.rationale_terms, &default_stop_words())?)
            }
            _ => None,
        };
        let (rate, source) = match (&disagreements, &anchors) {
            (Some(d), _) => (d.rate(), "gold"),
            (None, Some(a)) => {
                let total: usize =
                    a.frames.values().map(|f| f.clear.len() + f.borderline.len() + f.ambiguous.len()).sum();
                let ambiguous: usize = a.frames.values().map(|f| f.ambiguous.len()).sum();
                (if total == 0 { 0.0 } else { ambiguous as f64 / total as f64 }, "instability")
            }
            (None, None) => bail!("mining needs gold labels or at least 2 runs per article"),
        };
        let report = CasesReport {
            batch,
            codebook_version: self.codebook().version,
            disagreements,
            anchors,
            rationales,
            disagreement_rate: rate,
            rate_source: source.into(),
        };
        write_json(&self.layout.report("cases.json"), &report)?;
        self.record(
            EventKind::Mined,
            json!({
                "batch": batch,
                "disagreement_rate": rate,
                "rate_source": source,
                "cases": report.disagreements.as_ref().map_or(0, DisagreementReport::total),
                "cases_ref": "reports/cases.json",
            }),
        )?;
        if self.config.auto_stabilize && self.is_stabilized() {
            self.record(
                EventKind::Stabilized,
                json!({"epsilon": self.config.epsilon, "window": self.config.window, "cycles": self.state.cycle_history.len()}),
            )?;
        }
        Ok(report)
    }

    pub fn is_stabilized(&self) -> bool {
        check_stabilization(&self.state.cycle_history, self.config.epsilon, self.config.window)
    }

    pub fn cases(&self) -> anyhow::Result<Option<CasesReport>> {
        let p = self.layout.report("cases.json");
        if p.exists() {
            Ok(Some(read_json(&p)?))
        } else {
            Ok(None)
        }
    }

    pub fn report(&self) -> anyhow::Result<Option<EvaluationReport>> {
        let p = self.layout.report("report.json");
        if p.exists() {
            Ok(Some(read_json(&p)?))
        } else {
            Ok(None)
        }
    }

    pub fn revise(&mut self, req: RevisionRequest) -> Result<RevisionEntry, StoreError> {
        let current = self.codebook().version;
        if let Some(expected) = req.base_version {
            if expected != current {
                return Err(StoreError::VersionConflict { expected, current });
            }
        }
        let entry = RevisionEntry::new(
            format!("rev-{:04}", self.history.ledger().len() + 1),
            now_rfc3339(),
            current,
            req.candidate_criterion,
            req.disposition,
            req.rationale,
            req.edits,
        )
        .with_cases(req.provenance_case_ids);
        let mut history = self.history.clone();
        history.apply(entry.clone())?;
        append_jsonl(&self.layout.ledger(), std::slice::from_ref(&entry))?;
        if entry.disposition.changes_codebook() {
            let cb = history.current();
            write_json(&self.layout.codebook_version(cb.version), cb)?;
            write_json(&self.layout.codebook(), cb)?;
        }
        self.history = history;
        self.record(
            EventKind::Revision,
            json!({
                "entry_id": entry.id,
                "disposition": entry.disposition,
                "version_before": entry.version_before,
                "version_after": entry.version_after,
            }),
        )?;
        Ok(entry)
    }

    pub fn status(&self) -> anyhow::Result<Value> {
        let verdicts = self.verdicts()?;
        Ok(json!({
            "session_id": self.state.session_id,
            "phase": self.state.phase,
            "codebook_version": self.state.codebook_version,
            "ledger_entries": self.history.ledger().len(),
            "events": self.state.last_seq,
            "corpus_articles": self.corpus().map(|c| c.len()).ok(),
            "sample_articles": if self.layout.sample().exists() { self.working_corpus().map(|c| c.len()).ok() } else { None },
            "verdicts": verdicts.len(),
            "latest_batch": verdicts.iter().map(|r| r.batch).max(),
            "cycle_history": self.state.cycle_history,
            "stabilized": self.is_stabilized(),
        }))
    }
}

fn acquire_lock(layout: &Layout) -> anyhow::Result<File> {
    let f = OpenOptions::new().create(true).truncate(false).write(true).open(layout.lock())?;
    match f.try_lock() {
        Ok(()) => Ok(f),
        Err(TryLockError::WouldBlock) => Err(StoreError::Locked(layout.root.clone()).into()),
        Err(TryLockError::Error(e)) => Err(e.into()),
    }
}
