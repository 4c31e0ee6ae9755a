//! News corpora: articles, column mappings, load-time row validation and the
//! seeded stratified sampler.
//!
//! File parsing lives in the std crate; this module decides what a valid row
//! is, which logical columns a corpus carries, and how a sample is drawn.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Metadata keys the loader recognizes (and the only valid strata keys).
pub const METADATA_KEYS: [&str; 3] = ["source", "country", "date"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("cannot read corpus file: {0}")]
    FileUnreadable(String),
    #[error("corpus is not valid UTF-8 (line {line})")]
    NotUtf8 { line: usize },
    #[error("malformed input at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("missing required column `{0}`")]
    MissingRequiredColumn(String),
    #[error("duplicate article id `{0}`")]
    DuplicateId(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid column mapping: {0}")]
    InvalidMapping(String),
    #[error("article `{article_id}` has no value for stratum key `{key}`")]
    MissingStratumKey { article_id: String, key: String },
    #[error("invalid sample spec: {0}")]
    InvalidSampleSpec(String),
    #[error("fraction {fraction} of {n} articles rounds to an empty sample")]
    EmptySample { fraction: f64, n: usize },
}

/// One news item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub headline: String,
    pub lead: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub gold_labels: BTreeMap<String, u8>,
}

impl Article {
    pub fn new(id: impl Into<String>, headline: impl Into<String>, lead: impl Into<String>) -> Self {
        Article {
            id: id.into(),
            headline: headline.into(),
            lead: lead.into(),
            body: None,
            metadata: BTreeMap::new(),
            gold_labels: BTreeMap::new(),
        }
    }

    pub fn with_body(mut self, body: impl Into<String>) -> Self {
        self.body = Some(body.into());
        self
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn with_gold(mut self, frame_id: impl Into<String>, label: u8) -> Self {
        self.gold_labels.insert(frame_id.into(), label);
        self
    }

    pub fn gold(&self, frame_id: &str) -> Option<u8> {
        self.gold_labels.get(frame_id).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub source: String,
    pub loaded_at: String,
}

/// Ordered, id-unique, non-empty collection of articles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    articles: Vec<Article>,
    pub provenance: Provenance,
    pub feature_set: BTreeSet<String>,
}

impl Corpus {
    pub fn new(
        articles: Vec<Article>,
        provenance: Provenance,
        feature_set: BTreeSet<String>,
    ) -> Result<Self, CorpusError> {
        if articles.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut seen = BTreeSet::new();
        for a in &articles {
            if !seen.insert(a.id.as_str()) {
                return Err(CorpusError::DuplicateId(a.id.clone()));
            }
        }
        Ok(Corpus { articles, provenance, feature_set })
    }

    /// Builds a corpus whose feature set is inferred from the populated fields.
    pub fn from_articles(articles: Vec<Article>) -> Result<Self, CorpusError> {
        let feature_set = infer_feature_set(&articles);
        Corpus::new(articles, Provenance::default(), feature_set)
    }

    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Article> {
        self.articles.iter().find(|a| a.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.articles.iter().map(|a| a.id.as_str())
    }

    /// Frame ids that carry a gold label on at least one article.
    pub fn gold_frames(&self) -> BTreeSet<String> {
        self.articles
            .iter()
            .flat_map(|a| a.gold_labels.keys().cloned())
            .collect()
    }

    /// The first `k` articles, same provenance and feature set.
    pub fn truncated(&self, k: usize) -> Result<Corpus, CorpusError> {
        let articles = self.articles.iter().take(k).cloned().collect();
        Corpus::new(articles, self.provenance.clone(), self.feature_set.clone())
    }
}

fn infer_feature_set(articles: &[Article]) -> BTreeSet<String> {
    let mut set: BTreeSet<String> = ["id", "headline", "lead"].iter().map(|s| s.to_string()).collect();
    if articles.iter().all(|a| a.body.is_some()) {
        set.insert("body".into());
    }
    for key in METADATA_KEYS {
        if articles.iter().all(|a| a.metadata.contains_key(key)) {
            set.insert(key.into());
        }
    }
    let gold: BTreeSet<&String> = articles.iter().flat_map(|a| a.gold_labels.keys()).collect();
    for frame in gold {
        if articles.iter().all(|a| a.gold_labels.contains_key(frame)) {
            set.insert(format!("gold:{frame}"));
        }
    }
    set
}

/// Maps logical columns onto the physical column (CSV header / JSON key)
/// names of an input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub id: String,
    pub headline: String,
    pub lead: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<String>,
    /// frame id -> physical column
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub gold: BTreeMap<String, String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping::three_column()
    }
}

/// Why a single input row was dropped at load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowRejection {
    EmptyId,
    EmptyHeadline,
    EmptyLead,
    MissingDeclaredColumn(String),
    InvalidGoldLabel { frame_id: String, value: String },
    InvalidDate(String),
}

impl fmt::Display for RowRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowRejection::EmptyId => f.write_str("empty id"),
            RowRejection::EmptyHeadline => f.write_str("empty headline"),
            RowRejection::EmptyLead => f.write_str("empty lead"),
            RowRejection::MissingDeclaredColumn(c) => write!(f, "missing value for declared column `{c}`"),
            RowRejection::InvalidGoldLabel { frame_id, value } => {
                write!(f, "gold label for `{frame_id}` must be 0/1/yes/no, got `{value}`")
            }
            RowRejection::InvalidDate(v) => write!(f, "date `{v}` is not an ISO-8601 calendar date"),
        }
    }
}

impl ColumnMapping {
    /// `id`, `headline`, `lead` mapped onto identically named columns.
    pub fn three_column() -> Self {
        ColumnMapping {
            id: "id".into(),
            headline: "headline".into(),
            lead: "lead".into(),
            body: None,
            source: None,
            country: None,
            date: None,
            gold: BTreeMap::new(),
        }
    }

    /// Parses an inline mapping such as
    /// `id=article_id,headline=titulo,lead=bajada,gold:moralidad=moral`.
    /// A bare logical name (`body`) maps onto a column of the same name.
    pub fn parse_inline(spec: &str) -> Result<Self, CorpusError> {
        let mut id = None;
        let mut headline = None;
        let mut lead = None;
        let mut m = ColumnMapping {
            id: String::new(),
            headline: String::new(),
            lead: String::new(),
            body: None,
            source: None,
            country: None,
            date: None,
            gold: BTreeMap::new(),
        };
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (logical, physical) = match part.split_once('=') {
                Some((l, p)) => (l.trim(), p.trim()),
                None => (part, part),
            };
            if physical.is_empty() {
                return Err(CorpusError::InvalidMapping(format!("empty column for `{logical}`")));
            }
            let physical = physical.to_string();
            match logical {
                "id" => id = Some(physical),
                "headline" => headline = Some(physical),
                "lead" => lead = Some(physical),
                "body" => m.body = Some(physical),
                "source" => m.source = Some(physical),
                "country" => m.country = Some(physical),
                "date" => m.date = Some(physical),
                other => match other.strip_prefix("gold:") {
                    Some(frame) if !frame.is_empty() => {
                        m.gold.insert(frame.to_string(), physical);
                    }
                    _ => return Err(CorpusError::InvalidMapping(format!("unknown logical column `{other}`"))),
                },
            }
        }
        m.id = id.ok_or_else(|| CorpusError::InvalidMapping("mapping must name `id`".into()))?;
        m.headline = headline.ok_or_else(|| CorpusError::InvalidMapping("mapping must name `headline`".into()))?;
        m.lead = lead.ok_or_else(|| CorpusError::InvalidMapping("mapping must name `lead`".into()))?;
        Ok(m)
    }

    /// Every declared (logical, physical) pair, required columns first.
    pub fn declared(&self) -> Vec<(String, &str)> {
        let mut out: Vec<(String, &str)> = vec_of(&[
            ("id", Some(&self.id)),
            ("headline", Some(&self.headline)),
            ("lead", Some(&self.lead)),
            ("body", self.body.as_ref()),
            ("source", self.source.as_ref()),
            ("country", self.country.as_ref()),
            ("date", self.date.as_ref()),
        ]);
        for (frame, col) in &self.gold {
            out.push((format!("gold:{frame}"), col.as_str()));
        }
        out
    }

    /// The logical feature set a corpus loaded through this mapping carries.
    pub fn feature_set(&self) -> BTreeSet<String> {
        self.declared().into_iter().map(|(l, _)| l).collect()
    }

    /// Fails with [`CorpusError::MissingRequiredColumn`] when a declared
    /// physical column is absent from the file header.
    pub fn check_header<S: AsRef<str>>(&self, header: &[S]) -> Result<(), CorpusError> {
        for (logical, physical) in self.declared() {
            if !header.iter().any(|h| h.as_ref() == physical) {
                return Err(CorpusError::MissingRequiredColumn(format!("{logical} (column `{physical}`)")));
            }
        }
        Ok(())
    }

    /// Builds an article from one row, given a lookup of physical column to
    /// raw value. Values are stored verbatim; emptiness checks trim.
    pub fn article_from_row<'a, F>(&self, lookup: F) -> Result<Article, RowRejection>
    where
        F: Fn(&str) -> Option<&'a str>,
    {
        let value = |physical: &str, logical: &str| -> Result<&'a str, RowRejection> {
            match lookup(physical) {
                Some(v) if !v.trim().is_empty() => Ok(v),
                _ => Err(match logical {
                    "id" => RowRejection::EmptyId,
                    "headline" => RowRejection::EmptyHeadline,
                    "lead" => RowRejection::EmptyLead,
                    other => RowRejection::MissingDeclaredColumn(other.to_string()),
                }),
            }
        };
        let mut article = Article::new(
            value(&self.id, "id")?,
            value(&self.headline, "headline")?,
            value(&self.lead, "lead")?,
        );
        if let Some(col) = &self.body {
            article.body = Some(value(col, "body")?.to_string());
        }
        for (key, col) in [("source", &self.source), ("country", &self.country), ("date", &self.date)] {
            if let Some(col) = col {
                let v = value(col, key)?;
                if key == "date" && !is_iso_calendar_date(v.trim()) {
                    return Err(RowRejection::InvalidDate(v.to_string()));
                }
                article.metadata.insert(key.to_string(), v.to_string());
            }
        }
        for (frame, col) in &self.gold {
            let raw = value(col, &format!("gold:{frame}"))?;
            let label = parse_gold_label(raw).ok_or_else(|| RowRejection::InvalidGoldLabel {
                frame_id: frame.clone(),
                value: raw.to_string(),
            })?;
            article.gold_labels.insert(frame.clone(), label);
        }
        Ok(article)
    }

    /// Physical (column, value) pairs for exporting `article` through this mapping.
    pub fn row_for(&self, article: &Article) -> Vec<(String, String)> {
        let mut row = Vec::new();
        for (logical, physical) in self.declared() {
            let v = match logical.as_str() {
                "id" => Some(article.id.clone()),
                "headline" => Some(article.headline.clone()),
                "lead" => Some(article.lead.clone()),
                "body" => article.body.clone(),
                "source" | "country" | "date" => article.metadata.get(logical.as_str()).cloned(),
                g => g
                    .strip_prefix("gold:")
                    .and_then(|f| article.gold(f))
                    .map(|l| l.to_string()),
            };
            row.push((physical.to_string(), v.unwrap_or_default()));
        }
        row
    }
}

fn vec_of<'a>(pairs: &[(&str, Option<&'a String>)]) -> Vec<(String, &'a str)> {
    pairs
        .iter()
        .filter_map(|(l, p)| p.map(|p| (l.to_string(), p.as_str())))
        .collect()
}

/// `0`/`1` or case-insensitive `yes`/`no`, surrounding whitespace ignored.
pub fn parse_gold_label(raw: &str) -> Option<u8> {
    let t = raw.trim();
    match t {
        "0" => Some(0),
        "1" => Some(1),
        _ if t.eq_ignore_ascii_case("yes") => Some(1),
        _ if t.eq_ignore_ascii_case("no") => Some(0),
        _ => None,
    }
}

/// `YYYY-MM-DD` with a real month/day (Gregorian leap years).
pub fn is_iso_calendar_date(s: &str) -> bool {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return false;
    }
    let digits = |r: core::ops::Range<usize>| -> Option<u32> {
        let part = &s[r];
        if part.bytes().all(|c| c.is_ascii_digit()) {
            part.parse().ok()
        } else {
            None
        }
    };
    let (Some(y), Some(m), Some(d)) = (digits(0..4), digits(5..7), digits(8..10)) else {
        return false;
    };
    let leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    let days = match m {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if leap => 29,
        2 => 28,
        _ => return false,
    };
    (1..=days).contains(&d)
}

/// Accumulates rows in file order into a [`LoadReport`].
#[derive(Debug)]
pub struct CorpusBuilder {
    mapping: ColumnMapping,
    articles: Vec<Article>,
    seen: BTreeSet<String>,
    rejected: Vec<RejectedRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 1-based record number in the input (header excluded).
    pub row: usize,
    pub reason: RowRejection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadReport {
    pub corpus: Corpus,
    pub rejected: Vec<RejectedRow>,
}

impl CorpusBuilder {
    pub fn new(mapping: ColumnMapping) -> Self {
        CorpusBuilder { mapping, articles: Vec::new(), seen: BTreeSet::new(), rejected: Vec::new() }
    }

    pub fn mapping(&self) -> &ColumnMapping {
        &self.mapping
    }

    /// Adds one row. A duplicate id aborts the whole load.
    pub fn push_row<'a, F>(&mut self, row: usize, lookup: F) -> Result<(), CorpusError>
    where
        F: Fn(&str) -> Option<&'a str>,
    {
        match self.mapping.article_from_row(lookup) {
            Ok(article) => {
                if !self.seen.insert(article.id.clone()) {
                    return Err(CorpusError::DuplicateId(article.id));
                }
                self.articles.push(article);
            }
            Err(reason) => self.rejected.push(RejectedRow { row, reason }),
        }
        Ok(())
    }

    pub fn finish(self, provenance: Provenance) -> Result<LoadReport, CorpusError> {
        let feature_set = self.mapping.feature_set();
        let corpus = Corpus::new(self.articles, provenance, feature_set)?;
        Ok(LoadReport { corpus, rejected: self.rejected })
    }
}

/// Parameters of a stratified sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub fraction: f64,
    #[serde(default)]
    pub strata_keys: Vec<String>,
    pub seed: u64,
}

impl SampleSpec {
    pub fn new(fraction: f64, strata_keys: Vec<String>, seed: u64) -> Result<Self, CorpusError> {
        let spec = SampleSpec { fraction, strata_keys, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(CorpusError::InvalidSampleSpec(format!("fraction {} outside (0, 1]", self.fraction)));
        }
        for key in &self.strata_keys {
            if !METADATA_KEYS.contains(&key.as_str()) {
                return Err(CorpusError::InvalidSampleSpec(format!("unknown stratum key `{key}`")));
            }
        }
        Ok(())
    }
}

/// Round half to even.
pub fn round_half_even(x: f64) -> f64 {
    libm::rint(x)
}

/// Per-stratum sample sizes for strata of the given sizes (in priority-free
/// input order).
///
/// Each stratum gets `round_half_even(fraction * size)`; the total is then
/// brought to `round_half_even(fraction * N)` by moving single units, taking
/// the largest eligible strata first (ties by input position). A stratum is
/// eligible for `+1` only if it was not rounded up and for `-1` only if it was
/// not rounded down, so every quota stays within 1 of `fraction * size`.
pub fn stratum_quotas(sizes: &[usize], fraction: f64) -> Vec<usize> {
    let total_n: usize = sizes.iter().sum();
    let target = round_half_even(fraction * total_n as f64) as i64;
    let exact: Vec<f64> = sizes.iter().map(|&s| fraction * s as f64).collect();
    let mut quotas: Vec<i64> = exact.iter().map(|&e| round_half_even(e) as i64).collect();
    let mut diff = target - quotas.iter().sum::<i64>();

    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    let mut adjusted = alloc::vec![false; sizes.len()];
    while diff != 0 {
        let step: i64 = if diff > 0 { 1 } else { -1 };
        let pick = order.iter().copied().find(|&i| {
            if adjusted[i] {
                return false;
            }
            let q = quotas[i] as f64;
            if step > 0 {
                q <= exact[i] && (quotas[i] as usize) < sizes[i]
            } else {
                q >= exact[i] && quotas[i] > 0
            }
        });
        match pick {
            Some(i) => {
                quotas[i] += step;
                adjusted[i] = true;
                diff -= step;
            }
            // Unreachable for fraction in (0, 1]; keep the rounded quotas.
            None => break,
        }
    }
    quotas.into_iter().map(|q| q as usize).collect()
}

/// Key of the stratum an article belongs to (values of `keys`, in order).
fn stratum_key(article: &Article, keys: &[String]) -> Result<Vec<String>, CorpusError> {
    keys.iter()
        .map(|k| {
            article.metadata.get(k).cloned().ok_or_else(|| CorpusError::MissingStratumKey {
                article_id: article.id.clone(),
                key: k.clone(),
            })
        })
        .collect()
}

/// Seeded stratified sample; strata are visited in sorted key order and the
/// sample keeps the corpus order.
pub fn stratified_sample(corpus: &Corpus, spec: &SampleSpec) -> Result<Corpus, CorpusError> {
    spec.validate()?;
    let mut strata: BTreeMap<Vec<String>, Vec<usize>> = BTreeMap::new();
    for (i, article) in corpus.articles().iter().enumerate() {
        strata.entry(stratum_key(article, &spec.strata_keys)?).or_default().push(i);
    }
    let members: Vec<&Vec<usize>> = strata.values().collect();
    let sizes: Vec<usize> = members.iter().map(|m| m.len()).collect();
    let quotas = stratum_quotas(&sizes, spec.fraction);
    if quotas.iter().sum::<usize>() == 0 {
        return Err(CorpusError::EmptySample { fraction: spec.fraction, n: corpus.len() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut chosen: Vec<usize> = Vec::new();
    for (idxs, &q) in members.iter().zip(&quotas) {
        let picks = rand::seq::index::sample(&mut rng, idxs.len(), q);
        chosen.extend(picks.into_iter().map(|p| idxs[p]));
    }
    chosen.sort_unstable();

    let articles = chosen.into_iter().map(|i| corpus.articles()[i].clone()).collect();
    let provenance = Provenance {
        source: format!(
            "{}#sample(fraction={},strata=[{}],seed={})",
            corpus.provenance.source,
            spec.fraction,
            spec.strata_keys.join(","),
            spec.seed
        ),
        loaded_at: corpus.provenance.loaded_at.clone(),
    };
    Corpus::new(articles, provenance, corpus.feature_set.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn corpus_with_sources(counts: &[(&str, usize)]) -> Corpus {
        let mut articles = Vec::new();
        for (src, n) in counts {
            for i in 0..*n {
                articles.push(
                    Article::new(format!("{src}{i}"), format!("headline {i}"), "lead").with_meta("source", *src),
                );
            }
        }
        Corpus::from_articles(articles).unwrap()
    }

    fn plain_corpus(n: usize) -> Corpus {
        Corpus::from_articles((1..=n).map(|i| Article::new(format!("a{i}"), "h", "l")).collect()).unwrap()
    }

    #[test]
    fn builder_maps_three_columns() {
        let mut b = CorpusBuilder::new(ColumnMapping::three_column());
        let rows = [("a1", "H1", "L1"), ("a2", "H2", "L2")];
        for (i, (id, h, l)) in rows.iter().enumerate() {
            b.push_row(i + 1, |c| match c {
                "id" => Some(*id),
                "headline" => Some(*h),
                "lead" => Some(*l),
                _ => None,
            })
            .unwrap();
        }
        let report = b.finish(Provenance::default()).unwrap();
        assert_eq!(report.corpus.len(), 2);
        assert_eq!(report.corpus.ids().collect::<Vec<_>>(), ["a1", "a2"]);
        let fs: Vec<&str> = report.corpus.feature_set.iter().map(String::as_str).collect();
        assert_eq!(fs, ["headline", "id", "lead"]);
    }

    #[test]
    fn duplicate_id_names_the_id() {
        let mut b = CorpusBuilder::new(ColumnMapping::three_column());
        let look = |c: &str| match c {
            "id" => Some("a1"),
            _ => Some("x"),
        };
        b.push_row(1, look).unwrap();
        assert_eq!(b.push_row(2, look), Err(CorpusError::DuplicateId("a1".into())));
    }

    #[test]
    fn empty_headline_or_lead_is_rejected_not_imputed() {
        let m = ColumnMapping::three_column();
        let r = m.article_from_row(|c| match c {
            "id" => Some("a"),
            "headline" => Some("   "),
            _ => Some("lead"),
        });
        assert_eq!(r, Err(RowRejection::EmptyHeadline));
        let r = m.article_from_row(|c| match c {
            "lead" => None,
            _ => Some("x"),
        });
        assert_eq!(r, Err(RowRejection::EmptyLead));
    }

    #[test]
    fn gold_labels_accept_binary_and_yes_no_only() {
        for (raw, want) in [("1", Some(1)), ("0", Some(0)), ("YES", Some(1)), ("no", Some(0)), (" yes ", Some(1))] {
            assert_eq!(parse_gold_label(raw), want, "{raw}");
        }
        for raw in ["2", "true", "sí", "", "0.0"] {
            assert_eq!(parse_gold_label(raw), None, "{raw}");
        }
    }

    #[test]
    fn dates_must_be_calendar_dates() {
        assert!(is_iso_calendar_date("2014-09-02"));
        assert!(is_iso_calendar_date("2024-02-29"));
        assert!(!is_iso_calendar_date("2023-02-29"));
        assert!(!is_iso_calendar_date("2014-13-01"));
        assert!(!is_iso_calendar_date("02/09/2014"));
    }

    #[test]
    fn inline_mapping_parses_gold_and_bare_names() {
        let m = ColumnMapping::parse_inline("id=ID,headline=titulo,lead=bajada,body,gold:moralidad=moral").unwrap();
        assert_eq!(m.id, "ID");
        assert_eq!(m.body.as_deref(), Some("body"));
        assert_eq!(m.gold["moralidad"], "moral");
        assert!(ColumnMapping::parse_inline("headline=h,lead=l").is_err());
        assert!(ColumnMapping::parse_inline("id,headline,lead,color=c").is_err());
    }

    #[test]
    fn header_must_contain_declared_columns() {
        let m = ColumnMapping::parse_inline("id,headline,lead,gold:conflicto=c").unwrap();
        assert!(m.check_header(&["id", "headline", "lead", "c"]).is_ok());
        assert!(matches!(m.check_header(&["id", "headline", "lead"]), Err(CorpusError::MissingRequiredColumn(_))));
    }

    #[test]
    fn sample_of_twenty_is_deterministic() {
        let c = plain_corpus(20);
        let spec = SampleSpec::new(0.3, vec![], 42).unwrap();
        let a = stratified_sample(&c, &spec).unwrap();
        let b = stratified_sample(&c, &spec).unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!(a.ids().collect::<Vec<_>>(), b.ids().collect::<Vec<_>>());
    }

    #[test]
    fn balanced_strata_split_exactly() {
        let c = corpus_with_sources(&[("A", 5), ("B", 5)]);
        let spec = SampleSpec::new(0.4, vec!["source".into()], 7).unwrap();
        let s = stratified_sample(&c, &spec).unwrap();
        let from_a = s.articles().iter().filter(|a| a.metadata["source"] == "A").count();
        assert_eq!((from_a, s.len() - from_a), (2, 2));
    }

    #[test]
    fn seventy_thirty_strata_at_half() {
        // Oracle: enumerate every quota pair within +-1 of the exact share
        // that sums to round(0.5 * 100).
        let mut admissible = Vec::new();
        for qa in 0..=70usize {
            for qb in 0..=30usize {
                if qa + qb == 50 && (qa as f64 - 35.0).abs() <= 1.0 && (qb as f64 - 15.0).abs() <= 1.0 {
                    admissible.push((qa, qb));
                }
            }
        }
        assert_eq!(admissible, vec![(34, 16), (35, 15), (36, 14)]);

        let c = corpus_with_sources(&[("A", 70), ("B", 30)]);
        let s = stratified_sample(&c, &SampleSpec::new(0.5, vec!["source".into()], 1).unwrap()).unwrap();
        let a = s.articles().iter().filter(|a| a.metadata["source"] == "A").count();
        assert!(admissible.contains(&(a, s.len() - a)));
        assert_eq!((a, s.len() - a), (35, 15));
    }

    #[test]
    fn sample_preserves_corpus_order() {
        let c = plain_corpus(50);
        let s = stratified_sample(&c, &SampleSpec::new(0.5, vec![], 3).unwrap()).unwrap();
        let pos: Vec<usize> = s.ids().map(|id| c.ids().position(|x| x == id).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn missing_stratum_key_is_reported() {
        let c = Corpus::from_articles(vec![
            Article::new("a", "h", "l").with_meta("source", "X"),
            Article::new("b", "h", "l"),
        ])
        .unwrap();
        let err = stratified_sample(&c, &SampleSpec::new(0.5, vec!["source".into()], 0).unwrap()).unwrap_err();
        assert_eq!(err, CorpusError::MissingStratumKey { article_id: "b".into(), key: "source".into() });
    }

    #[test]
    fn bad_sample_specs() {
        assert!(SampleSpec::new(0.0, vec![], 0).is_err());
        assert!(SampleSpec::new(1.5, vec![], 0).is_err());
        assert!(SampleSpec::new(0.5, vec!["outlet".into()], 0).is_err());
        assert!(SampleSpec::new(1.0, vec!["date".into()], 0).is_ok());
    }

    #[test]
    fn half_even_rounding() {
        assert_eq!(round_half_even(2.5), 2.0);
        assert_eq!(round_half_even(3.5), 4.0);
        assert_eq!(stratum_quotas(&[5], 0.5), vec![2]);
        // 2.5 + 2.5 rounds to 2 + 2, total round(5.0) = 5 -> one unit added to the first.
        assert_eq!(stratum_quotas(&[5, 5], 0.5), vec![3, 2]);
    }
}
