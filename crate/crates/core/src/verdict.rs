//! The structured verdict contract: strict parsing of a model's JSON answer
//! into per-frame binary answers with justifications, the inverse
//! serializer, and aggregation of answers into frame presence.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::codebook::{AggregationPolicy, Codebook};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    /// The whole response must be the JSON document.
    #[default]
    Strict,
    /// Leading/trailing prose is dropped and the first JSON object recovered.
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownKeyPolicy {
    #[default]
    Reject,
    Warn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParseOptions {
    #[serde(default)]
    pub mode: ParseMode,
    #[serde(default)]
    pub unknown_keys: UnknownKeyPolicy,
}

impl ParseOptions {
    pub fn lenient() -> Self {
        ParseOptions { mode: ParseMode::Lenient, unknown_keys: UnknownKeyPolicy::Warn }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerdictError {
    #[error("response is not JSON: {0}")]
    NotJson(String),
    #[error("response contains text outside the JSON document")]
    TextOutsideJson,
    #[error("unexpected JSON shape: {0}")]
    WrongShape(String),
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("key `{key}` must be 0 or 1, got {got}")]
    NonBinaryValue { key: String, got: String },
    #[error("justification `{0}` is empty")]
    EmptyJustification(String),
    #[error("unexpected key `{0}`")]
    UnknownKey(String),
}

impl VerdictError {
    /// Stable class name, used in summaries and audit records.
    pub fn class(&self) -> &'static str {
        match self {
            VerdictError::NotJson(_) => "NotJson",
            VerdictError::TextOutsideJson => "TextOutsideJson",
            VerdictError::WrongShape(_) => "WrongShape",
            VerdictError::MissingKey(_) => "MissingKey",
            VerdictError::NonBinaryValue { .. } => "NonBinaryValue",
            VerdictError::EmptyJustification(_) => "EmptyJustification",
            VerdictError::UnknownKey(_) => "UnknownKey",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionAnswer {
    pub question_key: String,
    pub value: u8,
    pub justification: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameVerdict {
    pub frame_id: String,
    pub answers: Vec<QuestionAnswer>,
    pub present: u8,
}

/// One model run's validated answers for one article.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub article_id: String,
    pub frame_verdicts: Vec<FrameVerdict>,
    #[serde(default)]
    pub run_index: u32,
    #[serde(default)]
    pub model_id: String,
    #[serde(default)]
    pub prompt_hash: String,
    #[serde(default)]
    pub timestamp: String,
    #[serde(default)]
    pub codebook_version: u32,
    /// Classification batch this record belongs to.
    #[serde(default)]
    pub batch: u32,
    #[serde(default)]
    pub parse_mode: ParseMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl VerdictRecord {
    pub fn frame(&self, frame_id: &str) -> Option<&FrameVerdict> {
        self.frame_verdicts.iter().find(|f| f.frame_id == frame_id)
    }

    pub fn presence(&self, frame_id: &str) -> Option<u8> {
        self.frame(frame_id).map(|f| f.present)
    }

    pub fn answer_count(&self) -> usize {
        self.frame_verdicts.iter().map(|f| f.answers.len()).sum()
    }
}

/// Frame presence from question answers.
///
/// `Any`: some answer is 1. `All`: every answer is 1. `Threshold(t)`: the
/// mean answer is at least `t`. An empty answer list is absent.
pub fn aggregate_presence(answers: &[QuestionAnswer], policy: AggregationPolicy) -> u8 {
    aggregate_values(answers.iter().map(|a| a.value), policy)
}

/// [`aggregate_presence`] over raw 0/1 values.
pub fn aggregate_values(values: impl IntoIterator<Item = u8>, policy: AggregationPolicy) -> u8 {
    let (mut n, mut ones) = (0usize, 0usize);
    for v in values {
        n += 1;
        ones += usize::from(v == 1);
    }
    if n == 0 {
        return 0;
    }
    let present = match policy {
        AggregationPolicy::Any => ones > 0,
        AggregationPolicy::All => ones == n,
        AggregationPolicy::Threshold(t) => (ones as f64) / (n as f64) >= t,
    };
    u8::from(present)
}

/// Slice of `raw` spanning the first balanced JSON value opened by `open`
/// (`{` or `[`), string-literal aware.
pub fn extract_json(raw: &str, open: char) -> Option<&str> {
    let close = if open == '{' { '}' } else { ']' };
    let start = raw.find(open)?;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, ch) in raw[start..].char_indices() {
        if in_str {
            match ch {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => in_str = true,
            c if c == open => depth += 1,
            c if c == close => {
                depth -= 1;
                if depth == 0 {
                    return Some(&raw[start..start + i + ch.len_utf8()]);
                }
            }
            _ => {}
        }
    }
    None
}

fn describe(v: &Value) -> String {
    match v {
        Value::String(s) => format!("\"{s}\""),
        other => other.to_string(),
    }
}

/// Parses and validates a raw model response against `cb`.
///
/// The document must be a single-key object whose value holds every
/// `<frame>_<question>` answer (0 or 1) and every non-empty
/// `<frame>_justificacion_<question>` string. Run metadata (run index,
/// model, hashes, batch) is left at defaults for the caller to fill in.
pub fn parse_verdict(
    raw: &str,
    cb: &Codebook,
    article_id: &str,
    opts: &ParseOptions,
) -> Result<VerdictRecord, VerdictError> {
    let mut warnings = Vec::new();
    let trimmed = raw.trim();
    let doc: Value = match serde_json::from_str(trimmed) {
        Ok(v) => v,
        Err(full_err) => {
            let recovered = extract_json(trimmed, '{').and_then(|s| serde_json::from_str::<Value>(s).ok());
            match (recovered, opts.mode) {
                (Some(v), ParseMode::Lenient) => {
                    warnings.push("text outside the JSON document was ignored".to_string());
                    v
                }
                (Some(_), ParseMode::Strict) => return Err(VerdictError::TextOutsideJson),
                (None, _) => return Err(VerdictError::NotJson(full_err.to_string())),
            }
        }
    };

    let Value::Object(top) = doc else {
        return Err(VerdictError::WrongShape("top level must be an object".into()));
    };
    if top.len() != 1 {
        return Err(VerdictError::WrongShape(format!(
            "top level must hold exactly one document, found {}",
            top.len()
        )));
    }
    let (_, inner) = top.into_iter().next().expect("length checked");
    let Value::Object(fields) = inner else {
        return Err(VerdictError::WrongShape("document value must be an object".into()));
    };

    let frame_verdicts = collect_answers(&fields, cb)?;

    let expected: Vec<String> = cb.output_keys();
    for key in fields.keys() {
        if !expected.iter().any(|k| k == key) {
            match opts.unknown_keys {
                UnknownKeyPolicy::Reject => return Err(VerdictError::UnknownKey(key.clone())),
                UnknownKeyPolicy::Warn => warnings.push(format!("ignored unknown key `{key}`")),
            }
        }
    }

    Ok(VerdictRecord {
        article_id: article_id.to_string(),
        frame_verdicts,
        run_index: 0,
        model_id: String::new(),
        prompt_hash: String::new(),
        timestamp: String::new(),
        codebook_version: cb.version,
        batch: 0,
        parse_mode: opts.mode,
        warnings,
    })
}

fn collect_answers(fields: &Map<String, Value>, cb: &Codebook) -> Result<Vec<FrameVerdict>, VerdictError> {
    let mut verdicts = Vec::with_capacity(cb.frames.len());
    for frame in &cb.frames {
        let mut answers = Vec::with_capacity(frame.questions.len());
        for q in &frame.questions {
            let key = frame.answer_key(&q.id);
            let value = match fields.get(&key) {
                None => return Err(VerdictError::MissingKey(key)),
                Some(Value::Number(n)) if n.as_u64() == Some(0) => 0,
                Some(Value::Number(n)) if n.as_u64() == Some(1) => 1,
                Some(other) => return Err(VerdictError::NonBinaryValue { key, got: describe(other) }),
            };
            let jkey = frame.justification_key(&q.id);
            let justification = match fields.get(&jkey) {
                None => return Err(VerdictError::MissingKey(jkey)),
                Some(Value::String(s)) if !s.trim().is_empty() => s.trim().to_string(),
                Some(Value::String(_)) => return Err(VerdictError::EmptyJustification(jkey)),
                Some(other) => {
                    return Err(VerdictError::WrongShape(format!("`{jkey}` must be a string, got {}", describe(other))))
                }
            };
            answers.push(QuestionAnswer { question_key: key, value, justification });
        }
        let present = aggregate_presence(&answers, cb.aggregation_policy);
        verdicts.push(FrameVerdict { frame_id: frame.id.clone(), answers, present });
    }
    Ok(verdicts)
}

/// The response document a model should have produced for `record`.
pub fn verdict_to_json(record: &VerdictRecord, cb: &Codebook, document: &str) -> String {
    let mut fields = Map::new();
    for frame in &cb.frames {
        let Some(fv) = record.frame(&frame.id) else { continue };
        for (q, a) in frame.questions.iter().zip(&fv.answers) {
            fields.insert(frame.answer_key(&q.id), Value::from(a.value));
            fields.insert(frame.justification_key(&q.id), Value::from(a.justification.clone()));
        }
    }
    let mut top = Map::new();
    top.insert(document.to_string(), Value::Object(fields));
    serde_json::to_string_pretty(&Value::Object(top)).expect("JSON values serialize")
}
