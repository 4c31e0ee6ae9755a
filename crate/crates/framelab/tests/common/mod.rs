#![allow(dead_code)]

use std::path::PathBuf;

use framelab_core::corpus::{Article, ColumnMapping, Corpus};
use framelab_core::Codebook;
use serde_json::{Map, Value};

pub const SYNTHETIC_MAPPING: &str = "id,headline,lead,source,date,\
    gold:conflicto=conflict,gold:economico=economic,gold:interes_humano=human_interest,gold:moralidad=morality";

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn case_study() -> Codebook {
    serde_json::from_str(&std::fs::read_to_string(fixture("case_study_codebook.json")).unwrap()).unwrap()
}

pub fn synthetic_mapping() -> ColumnMapping {
    ColumnMapping::parse_inline(SYNTHETIC_MAPPING).unwrap()
}

pub fn article_25801_mapping() -> ColumnMapping {
    ColumnMapping::parse_inline(
        "id,headline,lead,body,source,date,gold:conflicto=conflict,gold:economico=economic,\
         gold:interes_humano=human_interest,gold:moralidad=morality",
    )
    .unwrap()
}

/// `a1..an`, each with a distinct headline.
pub fn small_corpus(n: usize) -> Corpus {
    Corpus::from_articles((1..=n).map(|i| Article::new(format!("a{i}"), format!("Headline {i}"), format!("Lead {i}"))).collect())
        .unwrap()
}

/// A valid response answering every question of `cb` with `value`.
pub fn uniform_response(cb: &Codebook, document: &str, value: u8) -> String {
    let mut fields = Map::new();
    for f in &cb.frames {
        for q in &f.questions {
            fields.insert(f.answer_key(&q.id), Value::from(value));
            fields.insert(f.justification_key(&q.id), Value::from(format!("reason for {}", q.id)));
        }
    }
    let mut top = Map::new();
    top.insert(document.to_string(), Value::Object(fields));
    Value::Object(top).to_string()
}
