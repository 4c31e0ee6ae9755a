//! Confusion matrices, macro-averaged metrics and the two reference
//! baselines (Bernoulli random, multinomial naive Bayes).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Article, Corpus};
use crate::text::tokenize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("prediction and gold id sets differ (only predicted: {only_pred:?}, only gold: {only_gold:?})")]
    IdSetMismatch { only_pred: Vec<String>, only_gold: Vec<String> },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("training data contains a single class")]
    SingleClassTraining,
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("need at least 2 folds and as many documents, got {folds} folds for {docs} documents")]
    InvalidFolds { folds: usize, docs: usize },
    #[error("no gold labels for frame `{0}`")]
    MissingGold(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn n(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, pred: u8, gold: u8) {
        match (pred, gold) {
            (1, 1) => self.tp += 1,
            (1, _) => self.fp += 1,
            (_, 1) => self.fn_ += 1,
            _ => self.tn += 1,
        }
    }

    /// The same matrix with "absent" as the positive class.
    pub fn complement(&self) -> Self {
        ConfusionMatrix { tp: self.tn, fp: self.fn_, fn_: self.fp, tn: self.tp }
    }
}

pub fn confusion_matrix(pred: &BTreeMap<String, u8>, gold: &BTreeMap<String, u8>) -> Result<ConfusionMatrix, EvalError> {
    if pred.len() != gold.len() || pred.keys().ne(gold.keys()) {
        return Err(EvalError::IdSetMismatch {
            only_pred: pred.keys().filter(|k| !gold.contains_key(*k)).cloned().collect(),
            only_gold: gold.keys().filter(|k| !pred.contains_key(*k)).cloned().collect(),
        });
    }
    let mut m = ConfusionMatrix::default();
    for (id, &p) in pred {
        m.record(p, gold[id]);
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub prevalence: f64,
    pub n: usize,
    /// Some per-class ratio had a zero denominator and was scored 0.
    pub zero_division: bool,
}

fn ratio(num: usize, den: usize, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_prf(m: &ConfusionMatrix, flag: &mut bool) -> (f64, f64, f64) {
    let p = ratio(m.tp, m.tp + m.fp, flag);
    let r = ratio(m.tp, m.tp + m.fn_, flag);
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Accuracy plus precision, recall and F1 macro-averaged over the
/// present and absent classes. Macro F1 is the mean of per-class F1.
pub fn frame_report(m: &ConfusionMatrix) -> Result<FrameReport, EvalError> {
    let n = m.n();
    if n == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let mut zero_division = false;
    let (p1, r1, f1) = class_prf(m, &mut zero_division);
    let (p0, r0, f0) = class_prf(&m.complement(), &mut zero_division);
    Ok(FrameReport {
        accuracy: (m.tp + m.tn) as f64 / n as f64,
        precision: (p1 + p0) / 2.0,
        recall: (r1 + r0) / 2.0,
        f1: (f1 + f0) / 2.0,
        prevalence: (m.tp + m.fn_) as f64 / n as f64,
        n,
        zero_division,
    })
}

/// Accuracy a Bernoulli(p) guesser reaches in expectation on labels of prevalence p.
pub fn expected_random_accuracy(p: f64) -> f64 {
    p * p + (1.0 - p) * (1.0 - p)
}

/// `n` independent Bernoulli(`p`) labels from a seeded ChaCha8 stream.
pub fn random_baseline(p: f64, n: usize, seed: u64) -> Result<Vec<u8>, EvalError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(EvalError::InvalidProbability(p));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| u8::from(rng.random::<f64>() < p)).collect())
}

/// Headline and lead tokens; the naive Bayes baseline sees nothing else.
pub fn nb_tokens(article: &Article) -> Vec<String> {
    let mut t = tokenize(&article.headline);
    t.extend(tokenize(&article.lead));
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbModel {
    /// Document counts per class.
    pub docs: [usize; 2],
    /// Token counts per class.
    pub counts: [BTreeMap<String, usize>; 2],
    pub totals: [usize; 2],
    pub vocab: BTreeSet<String>,
}

/// Multinomial naive Bayes with add-one smoothing.
pub fn train_nb(docs: &[(Vec<String>, u8)]) -> Result<NbModel, EvalError> {
    let mut model = NbModel { docs: [0; 2], counts: [BTreeMap::new(), BTreeMap::new()], totals: [0; 2], vocab: BTreeSet::new() };
    for (tokens, label) in docs {
        let c = usize::from(*label == 1);
        model.docs[c] += 1;
        for t in tokens {
            *model.counts[c].entry(t.clone()).or_default() += 1;
            model.totals[c] += 1;
            model.vocab.insert(t.clone());
        }
    }
    if model.docs[0] == 0 || model.docs[1] == 0 {
        return Err(EvalError::SingleClassTraining);
    }
    Ok(model)
}

impl NbModel {
    /// Log joint score per class; tokens outside the vocabulary are skipped.
    pub fn log_scores(&self, tokens: &[String]) -> [f64; 2] {
        let n = (self.docs[0] + self.docs[1]) as f64;
        let v = self.vocab.len() as f64;
        let mut s = [libm::log(self.docs[0] as f64 / n), libm::log(self.docs[1] as f64 / n)];
        for t in tokens.iter().filter(|t| self.vocab.contains(*t)) {
            for (c, score) in s.iter_mut().enumerate() {
                let count = self.counts[c].get(t).copied().unwrap_or(0) as f64;
                *score += libm::log((count + 1.0) / (self.totals[c] as f64 + v));
            }
        }
        s
    }

    /// Ties (within 1e-9 in log space) go to 0.
    pub fn predict(&self, tokens: &[String]) -> u8 {
        let [s0, s1] = self.log_scores(tokens);
        u8::from(s1 - s0 > 1e-9)
    }
}

/// Out-of-fold naive Bayes predictions for `frame_id`, keyed by article id.
///
/// Articles are shuffled with the seed and dealt round-robin into folds.
/// A training split holding only one class predicts that class.
pub fn nb_cross_validate(corpus: &Corpus, frame_id: &str, folds: usize, seed: u64) -> Result<BTreeMap<String, u8>, EvalError> {
    let labeled: Vec<(&Article, u8)> =
        corpus.articles().iter().filter_map(|a| a.gold(frame_id).map(|g| (a, g))).collect();
    if labeled.is_empty() {
        return Err(EvalError::MissingGold(frame_id.into()));
    }
    if folds < 2 || folds > labeled.len() {
        return Err(EvalError::InvalidFolds { folds, docs: labeled.len() });
    }
    let mut order: Vec<usize> = (0..labeled.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let fold_of: BTreeMap<usize, usize> = order.iter().enumerate().map(|(pos, &i)| (i, pos % folds)).collect();
    let tokens: Vec<Vec<String>> = labeled.iter().map(|(a, _)| nb_tokens(a)).collect();

    let mut out = BTreeMap::new();
    for fold in 0..folds {
        let train: Vec<(Vec<String>, u8)> = (0..labeled.len())
            .filter(|i| fold_of[i] != fold)
            .map(|i| (tokens[i].clone(), labeled[i].1))
            .collect();
        let model = train_nb(&train);
        let constant = train.first().map(|(_, l)| *l).unwrap_or(0);
        for i in (0..labeled.len()).filter(|i| fold_of[i] == fold) {
            let pred = match &model {
                Ok(m) => m.predict(&tokens[i]),
                Err(_) => constant,
            };
            out.insert(labeled[i].0.id.clone(), pred);
        }
    }
    Ok(out)
}

/// Gold labels for one frame, keyed by article id.
pub fn gold_map(corpus: &Corpus, frame_id: &str) -> BTreeMap<String, u8> {
    corpus.articles().iter().filter_map(|a| a.gold(frame_id).map(|g| (a.id.clone(), g))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub frame: String,
    /// `None` for reference rows without metrics.
    pub metrics: Option<FrameReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub const RANDOM_MODEL: &str = "Random (Bernoulli)";
pub const NB_MODEL: &str = "Naive Bayes";
pub const TFIDF_RF_MODEL: &str = "TF-IDF + RF";

/// Scores `pred` against the corpus gold for one frame.
pub fn score_row(model: &str, frame_id: &str, pred: &BTreeMap<String, u8>, corpus: &Corpus) -> Result<ReportRow, EvalError> {
    let gold = gold_map(corpus, frame_id);
    if gold.is_empty() {
        return Err(EvalError::MissingGold(frame_id.into()));
    }
    let m = confusion_matrix(pred, &gold)?;
    Ok(ReportRow { model: model.into(), frame: frame_id.into(), metrics: Some(frame_report(&m)?), note: None })
}

/// Random-baseline row, drawing with the frame's observed prevalence.
pub fn random_row(frame_id: &str, corpus: &Corpus, seed: u64) -> Result<ReportRow, EvalError> {
    let gold = gold_map(corpus, frame_id);
    if gold.is_empty() {
        return Err(EvalError::MissingGold(frame_id.into()));
    }
    let p = gold.values().filter(|&&g| g == 1).count() as f64 / gold.len() as f64;
    let draws = random_baseline(p, gold.len(), seed)?;
    let pred = gold.keys().cloned().zip(draws).collect();
    score_row(RANDOM_MODEL, frame_id, &pred, corpus)
}

pub fn tfidf_rf_placeholder(frame_id: &str) -> ReportRow {
    ReportRow {
        model: TFIDF_RF_MODEL.into(),
        frame: frame_id.into(),
        metrics: None,
        note: Some("external reference; not computed".into()),
    }
}
