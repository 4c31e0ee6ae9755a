//! Instability scoring over repeated runs, disagreement mining against gold
//! labels, anchor-case selection and rationale term statistics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::prompting::{escape_fenced, PromptText, SectionKind, ARTICLE_BEGIN, ARTICLE_END};
use crate::text::tokenize_filtered;
use crate::verdict::VerdictRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("no runs given")]
    NoRuns,
    #[error("runs mix codebook versions {0:?}")]
    MixedCodebookVersions(Vec<u32>),
    #[error("runs mix articles `{0}` and `{1}`")]
    MixedArticles(String, String),
    #[error("frame `{0}` missing from a run")]
    UnknownFrame(String),
    #[error("no gold labels to compare against")]
    NoGoldLabels,
    #[error("anchor selection needs at least 2 runs per article, found {0}")]
    InsufficientRuns(usize),
    #[error("clear_max ({clear_max}) must be below ambiguous_min ({ambiguous_min})")]
    InvalidThresholds { clear_max: f64, ambiguous_min: f64 },
    #[error("no disagreement cases to summarize")]
    EmptyCaseList,
}

/// Majority label; a tie goes to 0.
pub fn majority_label(labels: &[u8]) -> u8 {
    let ones = labels.iter().filter(|&&l| l == 1).count();
    u8::from(ones * 2 > labels.len())
}

/// `1 - (majority count / k)`.
pub fn instability_from_labels(labels: &[u8]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    let majority = ones.max(labels.len() - ones);
    1.0 - majority as f64 / labels.len() as f64
}

fn check_runs(runs: &[&VerdictRecord]) -> Result<(), AnalysisError> {
    let first = runs.first().ok_or(AnalysisError::NoRuns)?;
    let versions: BTreeSet<u32> = runs.iter().map(|r| r.codebook_version).collect();
    if versions.len() > 1 {
        return Err(AnalysisError::MixedCodebookVersions(versions.into_iter().collect()));
    }
    if let Some(other) = runs.iter().find(|r| r.article_id != first.article_id) {
        return Err(AnalysisError::MixedArticles(first.article_id.clone(), other.article_id.clone()));
    }
    Ok(())
}

fn labels_for(runs: &[&VerdictRecord], frame_id: &str) -> Result<Vec<u8>, AnalysisError> {
    runs.iter()
        .map(|r| r.presence(frame_id).ok_or_else(|| AnalysisError::UnknownFrame(frame_id.into())))
        .collect()
}

/// Instability of `frame_id` across repeated runs on one article.
pub fn instability_score(runs: &[VerdictRecord], frame_id: &str) -> Result<f64, AnalysisError> {
    let refs: Vec<&VerdictRecord> = runs.iter().collect();
    check_runs(&refs)?;
    Ok(instability_from_labels(&labels_for(&refs, frame_id)?))
}

/// Records grouped by article id, each group ordered by run index.
pub fn group_by_article(verdicts: &[VerdictRecord]) -> BTreeMap<&str, Vec<&VerdictRecord>> {
    let mut groups: BTreeMap<&str, Vec<&VerdictRecord>> = BTreeMap::new();
    for v in verdicts {
        groups.entry(v.article_id.as_str()).or_default().push(v);
    }
    for runs in groups.values_mut() {
        runs.sort_by_key(|r| r.run_index);
    }
    groups
}

/// Majority presence per (article, frame) across the runs of each article.
pub fn majority_labels(verdicts: &[VerdictRecord]) -> Result<BTreeMap<(String, String), u8>, AnalysisError> {
    let mut out = BTreeMap::new();
    for (article, runs) in group_by_article(verdicts) {
        check_runs(&runs)?;
        for fv in &runs[0].frame_verdicts {
            let labels = labels_for(&runs, &fv.frame_id)?;
            out.insert((String::from(article), fv.frame_id.clone()), majority_label(&labels));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// The model marks the frame present, the human coders did not.
    FalsePositive,
    /// The human coders mark the frame present, the model did not.
    FalseNegative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementCase {
    pub article_id: String,
    pub frame_id: String,
    pub llm_label: u8,
    pub human_label: u8,
    pub direction: Direction,
    pub justifications: Vec<String>,
    pub instability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DisagreementReport {
    /// Cases per frame, in corpus order.
    pub by_frame: BTreeMap<String, Vec<DisagreementCase>>,
    /// Number of (article, frame) pairs that had both a model and a gold label.
    pub compared: usize,
}

impl DisagreementReport {
    pub fn total(&self) -> usize {
        self.by_frame.values().map(Vec::len).sum()
    }

    pub fn rate(&self) -> f64 {
        if self.compared == 0 {
            0.0
        } else {
            self.total() as f64 / self.compared as f64
        }
    }

    pub fn cases(&self) -> impl Iterator<Item = &DisagreementCase> {
        self.by_frame.values().flatten()
    }
}

/// One case per (article, frame) where the majority model label differs
/// from the gold label.
pub fn mine_disagreements(verdicts: &[VerdictRecord], corpus: &Corpus) -> Result<DisagreementReport, AnalysisError> {
    if corpus.articles().iter().all(|a| a.gold_labels.is_empty()) {
        return Err(AnalysisError::NoGoldLabels);
    }
    let groups = group_by_article(verdicts);
    let mut report = DisagreementReport::default();
    for article in corpus.articles() {
        let Some(runs) = groups.get(article.id.as_str()) else { continue };
        check_runs(runs)?;
        for fv in &runs[0].frame_verdicts {
            let Some(human) = article.gold(&fv.frame_id) else { continue };
            let labels = labels_for(runs, &fv.frame_id)?;
            let llm = majority_label(&labels);
            report.compared += 1;
            if llm == human {
                continue;
            }
            let justifications = runs
                .iter()
                .filter_map(|r| r.frame(&fv.frame_id))
                .flat_map(|f| f.answers.iter().map(|a| a.justification.clone()))
                .collect();
            report.by_frame.entry(fv.frame_id.clone()).or_default().push(DisagreementCase {
                article_id: article.id.clone(),
                frame_id: fv.frame_id.clone(),
                llm_label: llm,
                human_label: human,
                direction: if llm == 1 { Direction::FalsePositive } else { Direction::FalseNegative },
                justifications,
                instability: instability_from_labels(&labels),
            });
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorThresholds {
    pub clear_max: f64,
    pub ambiguous_min: f64,
}

impl Default for AnchorThresholds {
    fn default() -> Self {
        AnchorThresholds { clear_max: 0.0, ambiguous_min: 0.34 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorCase {
    pub article_id: String,
    pub instability: f64,
    pub majority: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FrameAnchors {
    pub clear: Vec<AnchorCase>,
    pub borderline: Vec<AnchorCase>,
    pub ambiguous: Vec<AnchorCase>,
}

impl FrameAnchors {
    pub fn ids(list: &[AnchorCase]) -> Vec<&str> {
        list.iter().map(|c| c.article_id.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct AnchorSet {
    pub runs_per_article: usize,
    pub frames: BTreeMap<String, FrameAnchors>,
}

fn sort_cases(list: &mut [AnchorCase]) {
    list.sort_by(|a, b| {
        b.instability
            .partial_cmp(&a.instability)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then_with(|| a.article_id.cmp(&b.article_id))
    });
}

/// Partitions, per frame, every article with the full number of runs into
/// clear / borderline / ambiguous cases.
///
/// The run depth `k` is the largest run count seen; articles with fewer
/// runs are left out. Ambiguous: instability at least `ambiguous_min`.
/// Clear: instability at most `clear_max` and no gold label contradicting
/// the majority. Everything else is borderline.
pub fn select_anchor_cases(
    verdicts: &[VerdictRecord],
    corpus: &Corpus,
    thresholds: AnchorThresholds,
) -> Result<AnchorSet, AnalysisError> {
    if !(thresholds.clear_max < thresholds.ambiguous_min) {
        return Err(AnalysisError::InvalidThresholds {
            clear_max: thresholds.clear_max,
            ambiguous_min: thresholds.ambiguous_min,
        });
    }
    let groups = group_by_article(verdicts);
    let k = groups.values().map(Vec::len).max().unwrap_or(0);
    if k < 2 {
        return Err(AnalysisError::InsufficientRuns(k));
    }
    let mut set = AnchorSet { runs_per_article: k, frames: BTreeMap::new() };
    for (article_id, runs) in &groups {
        if runs.len() < k {
            continue;
        }
        check_runs(runs)?;
        let gold_source = corpus.get(article_id);
        for fv in &runs[0].frame_verdicts {
            let labels = labels_for(runs, &fv.frame_id)?;
            let instability = instability_from_labels(&labels);
            let majority = majority_label(&labels);
            let gold = gold_source.and_then(|a| a.gold(&fv.frame_id));
            let case = AnchorCase { article_id: String::from(*article_id), instability, majority, gold };
            let entry = set.frames.entry(fv.frame_id.clone()).or_default();
            if instability >= thresholds.ambiguous_min {
                entry.ambiguous.push(case);
            } else if instability <= thresholds.clear_max && gold.is_none_or(|g| g == majority) {
                entry.clear.push(case);
            } else {
                entry.borderline.push(case);
            }
        }
    }
    for anchors in set.frames.values_mut() {
        sort_cases(&mut anchors.clear);
        sort_cases(&mut anchors.borderline);
        sort_cases(&mut anchors.ambiguous);
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermScore {
    pub term: String,
    /// Smoothed log-odds of the term in this direction minus in all cases.
    pub score: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RationaleSummary {
    pub by_direction: BTreeMap<Direction, Vec<TermScore>>,
}

fn log_odds(count: usize, total: usize, vocab: usize) -> f64 {
    let p = (count as f64 + 1.0) / (total as f64 + vocab as f64);
    libm::log(p / (1.0 - p))
}

/// Top `n` terms per direction, ranked by add-one smoothed log-odds of
/// occurring in that direction's justifications versus all justifications
/// (ties: higher count, then alphabetical).
pub fn summarize_rationales(
    cases: &[DisagreementCase],
    n: usize,
    stop_words: &BTreeSet<String>,
) -> Result<RationaleSummary, AnalysisError> {
    if cases.is_empty() {
        return Err(AnalysisError::EmptyCaseList);
    }
    let mut per_dir: BTreeMap<Direction, BTreeMap<String, usize>> = BTreeMap::new();
    let mut all: BTreeMap<String, usize> = BTreeMap::new();
    for case in cases {
        let counts = per_dir.entry(case.direction).or_default();
        for j in &case.justifications {
            for tok in tokenize_filtered(j, stop_words) {
                *counts.entry(tok.clone()).or_default() += 1;
                *all.entry(tok).or_default() += 1;
            }
        }
    }
    let vocab = all.len();
    let total_all: usize = all.values().sum();
    let mut summary = RationaleSummary::default();
    for (dir, counts) in per_dir {
        let total_dir: usize = counts.values().sum();
        let mut terms: Vec<TermScore> = counts
            .iter()
            .map(|(term, &c)| TermScore {
                term: term.clone(),
                score: log_odds(c, total_dir, vocab) - log_odds(all[term], total_all, vocab),
                count: c,
            })
            .collect();
        terms.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(core::cmp::Ordering::Equal)
                .then(b.count.cmp(&a.count))
                .then_with(|| a.term.cmp(&b.term))
        });
        terms.truncate(n);
        summary.by_direction.insert(dir, terms);
    }
    Ok(summary)
}

/// Optional model-assisted summary of the same cases; rendered, never sent
/// automatically.
pub fn render_rationale_prompt(cases: &[DisagreementCase]) -> Result<PromptText, AnalysisError> {
    if cases.is_empty() {
        return Err(AnalysisError::EmptyCaseList);
    }
    let mut body = String::new();
    for c in cases {
        let dir = match c.direction {
            Direction::FalsePositive => "model=1, human=0",
            Direction::FalseNegative => "model=0, human=1",
        };
        body.push_str(&format!("[{} / {} / {}]\n", c.article_id, c.frame_id, dir));
        for j in &c.justifications {
            body.push_str(&format!("- {}\n", j.replace(['\r', '\n'], " ")));
        }
    }
    let sections = alloc::vec![
        (
            SectionKind::Task,
            String::from(
                "Below are model justifications for articles where the model's frame coding diverged from human coders. \
                 Summarize the recurring rationales separately for each direction of divergence, and point out any \
                 implicit decision rule or latent criterion they suggest. Do not propose final codebook changes; \
                 list candidate criteria for the researchers to accept, revise, or reject.\n\n",
            ),
        ),
        (SectionKind::Cases, format!("{ARTICLE_BEGIN}\n{}{ARTICLE_END}\n", escape_fenced(&body))),
    ];
    Ok(PromptText::from_sections(sections))
}
