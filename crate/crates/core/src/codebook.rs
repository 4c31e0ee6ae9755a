//! Versioned codebooks, structural validation, change sets and the revision
//! ledger.
//!
//! A [`Codebook`] is an immutable value; every accepted or revised criterion
//! produces a new value with `version + 1`. Rejected criteria are logged with
//! an unchanged version. [`CodebookHistory`] keeps every version plus the
//! append-only ledger, and can rebuild any version from version 1.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CODEBOOK_SCHEMA_VERSION: u32 = 1;

/// Key fragment separating a frame id from a question id in justification keys.
pub const JUSTIFICATION_INFIX: &str = "justificacion";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameQuestion {
    pub id: String,
    pub text: String,
}

impl FrameQuestion {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        FrameQuestion { id: id.into(), text: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameDefinition {
    pub id: String,
    pub name: String,
    pub definition: String,
    #[serde(default)]
    pub citation: String,
    #[serde(default)]
    pub include_rules: Vec<String>,
    #[serde(default)]
    pub exclude_rules: Vec<String>,
    #[serde(default)]
    pub positive_examples: Vec<String>,
    #[serde(default)]
    pub negative_examples: Vec<String>,
    pub questions: Vec<FrameQuestion>,
}

impl FrameDefinition {
    /// Output key holding the binary answer to `question_id`.
    pub fn answer_key(&self, question_id: &str) -> String {
        answer_key(&self.id, question_id)
    }

    /// Output key holding the justification for `question_id`.
    pub fn justification_key(&self, question_id: &str) -> String {
        justification_key(&self.id, question_id)
    }

    pub fn question(&self, id: &str) -> Option<&FrameQuestion> {
        self.questions.iter().find(|q| q.id == id)
    }

    fn list(&self, list: FrameList) -> &Vec<String> {
        match list {
            FrameList::IncludeRules => &self.include_rules,
            FrameList::ExcludeRules => &self.exclude_rules,
            FrameList::PositiveExamples => &self.positive_examples,
            FrameList::NegativeExamples => &self.negative_examples,
        }
    }

    fn list_mut(&mut self, list: FrameList) -> &mut Vec<String> {
        match list {
            FrameList::IncludeRules => &mut self.include_rules,
            FrameList::ExcludeRules => &mut self.exclude_rules,
            FrameList::PositiveExamples => &mut self.positive_examples,
            FrameList::NegativeExamples => &mut self.negative_examples,
        }
    }

    fn text(&self, field: FrameTextField) -> &String {
        match field {
            FrameTextField::Name => &self.name,
            FrameTextField::Definition => &self.definition,
            FrameTextField::Citation => &self.citation,
        }
    }

    fn text_mut(&mut self, field: FrameTextField) -> &mut String {
        match field {
            FrameTextField::Name => &mut self.name,
            FrameTextField::Definition => &mut self.definition,
            FrameTextField::Citation => &mut self.citation,
        }
    }
}

pub fn answer_key(frame_id: &str, question_id: &str) -> String {
    format!("{frame_id}_{question_id}")
}

pub fn justification_key(frame_id: &str, question_id: &str) -> String {
    format!("{frame_id}_{JUSTIFICATION_INFIX}_{question_id}")
}

/// How a frame's binary question answers combine into frame presence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AggregationPolicy {
    #[default]
    Any,
    All,
    /// Present iff the mean answer is at least `t`, `t` in (0, 1].
    Threshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub framework_name: String,
    pub framework_citation: String,
    #[serde(default)]
    pub role_instruction: Option<String>,
    #[serde(default)]
    pub general_instructions: Vec<String>,
    pub frames: Vec<FrameDefinition>,
    #[serde(default)]
    pub aggregation_policy: AggregationPolicy,
    pub version: u32,
    #[serde(default)]
    pub parent_version: Option<u32>,
}

fn default_schema_version() -> u32 {
    CODEBOOK_SCHEMA_VERSION
}

impl Codebook {
    pub fn frame(&self, id: &str) -> Option<&FrameDefinition> {
        self.frames.iter().find(|f| f.id == id)
    }

    pub fn frame_ids(&self) -> impl Iterator<Item = &str> {
        self.frames.iter().map(|f| f.id.as_str())
    }

    /// Every answer key followed by its justification key, frame by frame.
    pub fn output_keys(&self) -> Vec<String> {
        let mut keys = Vec::new();
        for f in &self.frames {
            for q in &f.questions {
                keys.push(f.answer_key(&q.id));
            }
            for q in &f.questions {
                keys.push(f.justification_key(&q.id));
            }
        }
        keys
    }

    /// Equality ignoring `version` and `parent_version`.
    pub fn content_eq(&self, other: &Codebook) -> bool {
        self.framework_name == other.framework_name
            && self.framework_citation == other.framework_citation
            && self.role_instruction == other.role_instruction
            && self.general_instructions == other.general_instructions
            && self.frames == other.frames
            && self.aggregation_policy == other.aggregation_policy
    }

    fn frame_mut(&mut self, id: &str) -> Option<&mut FrameDefinition> {
        self.frames.iter_mut().find(|f| f.id == id)
    }
}

/// One structural problem, located by a path such as `frames[1].id`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

fn is_slug(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

/// Reports every invariant violation; an empty report means the codebook is valid.
pub fn validate_codebook(cb: &Codebook) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |path: String, message: &str| out.push(Violation { path, message: message.into() });

    if cb.framework_name.trim().is_empty() {
        push("framework_name".into(), "must not be empty");
    }
    if cb.version == 0 {
        push("version".into(), "must be at least 1");
    }
    match cb.parent_version {
        Some(p) if cb.version != p + 1 => push("version".into(), "must equal parent_version + 1"),
        None if cb.version != 1 => push("parent_version".into(), "required when version > 1"),
        _ => {}
    }
    if let AggregationPolicy::Threshold(t) = cb.aggregation_policy {
        if !(t > 0.0 && t <= 1.0) {
            push("aggregation_policy".into(), "threshold must lie in (0, 1]");
        }
    }
    for (i, instr) in cb.general_instructions.iter().enumerate() {
        if instr.trim().is_empty() {
            push(format!("general_instructions[{i}]"), "must not be empty");
        }
    }
    if cb.frames.is_empty() {
        push("frames".into(), "at least one frame is required");
    }

    let mut frame_ids = BTreeSet::new();
    let mut keys = BTreeSet::new();
    for (i, f) in cb.frames.iter().enumerate() {
        // a duplicated frame repeats every key; one violation covers it
        let mut duplicate = false;
        if !is_slug(&f.id) {
            push(format!("frames[{i}].id"), "must be a non-empty ASCII slug [a-z0-9_]");
        } else if !frame_ids.insert(f.id.as_str()) {
            push(format!("frames[{i}].id"), "duplicate frame id");
            duplicate = true;
        }
        if f.definition.trim().is_empty() {
            push(format!("frames[{i}].definition"), "must not be empty");
        }
        if f.questions.is_empty() {
            push(format!("frames[{i}].questions"), "at least one question is required");
        }
        let mut qids = BTreeSet::new();
        for (j, q) in f.questions.iter().enumerate() {
            if !is_slug(&q.id) {
                push(format!("frames[{i}].questions[{j}].id"), "must be a non-empty ASCII slug [a-z0-9_]");
            } else if !qids.insert(q.id.as_str()) {
                push(format!("frames[{i}].questions[{j}].id"), "duplicate question id");
            } else if !duplicate && (!keys.insert(f.answer_key(&q.id)) || !keys.insert(f.justification_key(&q.id))) {
                push(format!("frames[{i}].questions[{j}].id"), "output key collides with another question");
            }
            if q.text.trim().is_empty() {
                push(format!("frames[{i}].questions[{j}].text"), "must not be empty");
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameTextField {
    Name,
    Definition,
    Citation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameList {
    IncludeRules,
    ExcludeRules,
    PositiveExamples,
    NegativeExamples,
}

const FRAME_LISTS: [FrameList; 4] = [
    FrameList::IncludeRules,
    FrameList::ExcludeRules,
    FrameList::PositiveExamples,
    FrameList::NegativeExamples,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodebookTextField {
    FrameworkName,
    FrameworkCitation,
    RoleInstruction,
}

/// A list of strings inside a codebook.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "scope", rename_all = "snake_case")]
pub enum ListTarget {
    GeneralInstructions,
    Frame { frame_id: String, list: FrameList },
}

/// One atomic codebook edit. Indices are positions in the list at the moment
/// the change is applied (see [`apply_changes`] for the application order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Change {
    SetText { field: CodebookTextField, old: Option<String>, new: Option<String> },
    SetAggregation { old: AggregationPolicy, new: AggregationPolicy },
    RemoveItem { target: ListTarget, index: usize, item: String },
    InsertItem { target: ListTarget, index: usize, item: String },
    RemoveFrame { frame_id: String },
    SetFrameText { frame_id: String, field: FrameTextField, old: String, new: String },
    RemoveQuestion { frame_id: String, question_id: String },
    SetQuestionText { frame_id: String, question_id: String, old: String, new: String },
    InsertQuestion { frame_id: String, index: usize, question: FrameQuestion },
    ReorderQuestions { frame_id: String, order: Vec<String> },
    InsertFrame { index: usize, frame: FrameDefinition },
    ReorderFrames { order: Vec<String> },
}

impl Change {
    /// Adds `item` at the end of a frame list; `index` is filled in against `cb`.
    pub fn append_to_frame(cb: &Codebook, frame_id: &str, list: FrameList, item: impl Into<String>) -> Option<Change> {
        let frame = cb.frame(frame_id)?;
        Some(Change::InsertItem {
            target: ListTarget::Frame { frame_id: frame_id.into(), list },
            index: frame.list(list).len(),
            item: item.into(),
        })
    }

    /// Replaces a frame's definition text, recording the current value.
    pub fn set_definition(cb: &Codebook, frame_id: &str, new: impl Into<String>) -> Option<Change> {
        let frame = cb.frame(frame_id)?;
        Some(Change::SetFrameText {
            frame_id: frame_id.into(),
            field: FrameTextField::Definition,
            old: frame.definition.clone(),
            new: new.into(),
        })
    }

    /// Position of the change in the canonical application order.
    fn phase(&self) -> u8 {
        match self {
            Change::SetText { .. } | Change::SetAggregation { .. } => 0,
            Change::RemoveItem { .. } => 1,
            Change::InsertItem { .. } => 2,
            Change::RemoveFrame { .. } => 3,
            Change::SetFrameText { .. } => 4,
            Change::RemoveQuestion { .. } => 5,
            Change::SetQuestionText { .. } => 6,
            Change::InsertQuestion { .. } => 7,
            Change::ReorderQuestions { .. } => 8,
            Change::InsertFrame { .. } => 9,
            Change::ReorderFrames { .. } => 10,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChangeError {
    #[error("unknown frame `{0}`")]
    UnknownFrame(String),
    #[error("unknown question `{question_id}` in frame `{frame_id}`")]
    UnknownQuestion { frame_id: String, question_id: String },
    #[error("frame `{0}` already exists")]
    FrameExists(String),
    #[error("question `{question_id}` already exists in frame `{frame_id}`")]
    QuestionExists { frame_id: String, question_id: String },
    #[error("stale edit: {0}")]
    Stale(String),
    #[error("index {index} out of range for {what}")]
    OutOfRange { what: String, index: usize },
    #[error("reorder does not name exactly the current ids")]
    BadReorder,
}

fn list_mut<'a>(cb: &'a mut Codebook, target: &ListTarget) -> Result<&'a mut Vec<String>, ChangeError> {
    match target {
        ListTarget::GeneralInstructions => Ok(&mut cb.general_instructions),
        ListTarget::Frame { frame_id, list } => cb
            .frame_mut(frame_id)
            .map(|f| f.list_mut(*list))
            .ok_or_else(|| ChangeError::UnknownFrame(frame_id.clone())),
    }
}

fn reorder_by_id<T, F: Fn(&T) -> &str>(items: &mut Vec<T>, order: &[String], id: F) -> Result<(), ChangeError> {
    if order.len() != items.len() {
        return Err(ChangeError::BadReorder);
    }
    let mut pool: Vec<Option<T>> = items.drain(..).map(Some).collect();
    for want in order {
        let pos = pool
            .iter()
            .position(|slot| slot.as_ref().is_some_and(|t| id(t) == want))
            .ok_or(ChangeError::BadReorder)?;
        items.push(pool[pos].take().expect("slot checked above"));
    }
    Ok(())
}

/// Applies a change set. Changes are applied in canonical phase order
/// (codebook fields, list removals by descending index, list insertions by
/// ascending index, frame removals, frame edits, question removals / edits /
/// insertions / reorders, frame insertions, frame reorder); within a phase the
/// given order is kept apart from the index sorting of list edits.
pub fn apply_changes(cb: &Codebook, changes: &[Change]) -> Result<Codebook, ChangeError> {
    let mut out = cb.clone();
    let mut ordered: Vec<&Change> = changes.iter().collect();
    ordered.sort_by(|a, b| {
        a.phase().cmp(&b.phase()).then_with(|| match (a, b) {
            (Change::RemoveItem { target: ta, index: ia, .. }, Change::RemoveItem { target: tb, index: ib, .. }) => {
                ta.cmp(tb).then(ib.cmp(ia))
            }
            (Change::InsertItem { target: ta, index: ia, .. }, Change::InsertItem { target: tb, index: ib, .. }) => {
                ta.cmp(tb).then(ia.cmp(ib))
            }
            (Change::InsertQuestion { frame_id: fa, index: ia, .. }, Change::InsertQuestion { frame_id: fb, index: ib, .. })
                if fa == fb =>
            {
                ia.cmp(ib)
            }
            (Change::InsertFrame { index: ia, .. }, Change::InsertFrame { index: ib, .. }) => ia.cmp(ib),
            _ => core::cmp::Ordering::Equal,
        })
    });

    for change in ordered {
        match change {
            Change::SetText { field, old, new } => {
                let slot = match field {
                    CodebookTextField::FrameworkName => {
                        check_stale(Some(&out.framework_name), old.as_ref(), "framework_name")?;
                        out.framework_name = new.clone().unwrap_or_default();
                        continue;
                    }
                    CodebookTextField::FrameworkCitation => {
                        check_stale(Some(&out.framework_citation), old.as_ref(), "framework_citation")?;
                        out.framework_citation = new.clone().unwrap_or_default();
                        continue;
                    }
                    CodebookTextField::RoleInstruction => &mut out.role_instruction,
                };
                check_stale(slot.as_ref(), old.as_ref(), "role_instruction")?;
                *slot = new.clone();
            }
            Change::SetAggregation { old, new } => {
                if out.aggregation_policy != *old {
                    return Err(ChangeError::Stale("aggregation_policy".into()));
                }
                out.aggregation_policy = *new;
            }
            Change::RemoveItem { target, index, item } => {
                let list = list_mut(&mut out, target)?;
                match list.get(*index) {
                    Some(cur) if cur == item => {
                        list.remove(*index);
                    }
                    Some(_) => return Err(ChangeError::Stale(format!("{target:?}[{index}]"))),
                    None => return Err(ChangeError::OutOfRange { what: format!("{target:?}"), index: *index }),
                }
            }
            Change::InsertItem { target, index, item } => {
                let list = list_mut(&mut out, target)?;
                if *index > list.len() {
                    return Err(ChangeError::OutOfRange { what: format!("{target:?}"), index: *index });
                }
                list.insert(*index, item.clone());
            }
            Change::RemoveFrame { frame_id } => {
                let pos = out
                    .frames
                    .iter()
                    .position(|f| &f.id == frame_id)
                    .ok_or_else(|| ChangeError::UnknownFrame(frame_id.clone()))?;
                out.frames.remove(pos);
            }
            Change::SetFrameText { frame_id, field, old, new } => {
                let frame = out.frame_mut(frame_id).ok_or_else(|| ChangeError::UnknownFrame(frame_id.clone()))?;
                if frame.text(*field) != old {
                    return Err(ChangeError::Stale(format!("frames[{frame_id}].{field:?}")));
                }
                *frame.text_mut(*field) = new.clone();
            }
            Change::RemoveQuestion { frame_id, question_id } => {
                let frame = out.frame_mut(frame_id).ok_or_else(|| ChangeError::UnknownFrame(frame_id.clone()))?;
                let pos = frame.questions.iter().position(|q| &q.id == question_id).ok_or_else(|| {
                    ChangeError::UnknownQuestion { frame_id: frame_id.clone(), question_id: question_id.clone() }
                })?;
                frame.questions.remove(pos);
            }
            Change::SetQuestionText { frame_id, question_id, old, new } => {
                let frame = out.frame_mut(frame_id).ok_or_else(|| ChangeError::UnknownFrame(frame_id.clone()))?;
                let q = frame.questions.iter_mut().find(|q| &q.id == question_id).ok_or_else(|| {
                    ChangeError::UnknownQuestion { frame_id: frame_id.clone(), question_id: question_id.clone() }
                })?;
                if &q.text != old {
                    return Err(ChangeError::Stale(format!("frames[{frame_id}].questions[{question_id}]")));
                }
                q.text = new.clone();
            }
            Change::InsertQuestion { frame_id, index, question } => {
                let frame = out.frame_mut(frame_id).ok_or_else(|| ChangeError::UnknownFrame(frame_id.clone()))?;
                if frame.question(&question.id).is_some() {
                    return Err(ChangeError::QuestionExists {
                        frame_id: frame_id.clone(),
                        question_id: question.id.clone(),
                    });
                }
                if *index > frame.questions.len() {
                    return Err(ChangeError::OutOfRange { what: format!("frames[{frame_id}].questions"), index: *index });
                }
                frame.questions.insert(*index, question.clone());
            }
            Change::ReorderQuestions { frame_id, order } => {
                let frame = out.frame_mut(frame_id).ok_or_else(|| ChangeError::UnknownFrame(frame_id.clone()))?;
                reorder_by_id(&mut frame.questions, order, |q| q.id.as_str())?;
            }
            Change::InsertFrame { index, frame } => {
                if out.frame(&frame.id).is_some() {
                    return Err(ChangeError::FrameExists(frame.id.clone()));
                }
                if *index > out.frames.len() {
                    return Err(ChangeError::OutOfRange { what: "frames".into(), index: *index });
                }
                out.frames.insert(*index, frame.clone());
            }
            Change::ReorderFrames { order } => reorder_by_id(&mut out.frames, order, |f| f.id.as_str())?,
        }
    }
    Ok(out)
}

fn check_stale(current: Option<&String>, expected: Option<&String>, what: &str) -> Result<(), ChangeError> {
    let current = current.filter(|s| !s.is_empty());
    let expected = expected.filter(|s| !s.is_empty());
    if current == expected {
        Ok(())
    } else {
        Err(ChangeError::Stale(what.into()))
    }
}

/// Edit script between two string lists: removals (indices in `a`) and
/// insertions (indices in `b`), from a longest common subsequence.
fn diff_list(a: &[String], b: &[String], target: &ListTarget, out: &mut Vec<Change>) {
    let (n, m) = (a.len(), b.len());
    let mut lcs = alloc::vec![alloc::vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if a[i] == b[j] { lcs[i + 1][j + 1] + 1 } else { lcs[i + 1][j].max(lcs[i][j + 1]) };
        }
    }
    let (mut i, mut j) = (0, 0);
    let mut removed = Vec::new();
    let mut inserted = Vec::new();
    while i < n || j < m {
        if i < n && j < m && a[i] == b[j] {
            i += 1;
            j += 1;
        } else if j < m && (i == n || lcs[i][j + 1] >= lcs[i + 1][j]) {
            inserted.push(j);
            j += 1;
        } else {
            removed.push(i);
            i += 1;
        }
    }
    for &i in removed.iter().rev() {
        out.push(Change::RemoveItem { target: target.clone(), index: i, item: a[i].clone() });
    }
    for j in inserted {
        out.push(Change::InsertItem { target: target.clone(), index: j, item: b[j].clone() });
    }
}

/// Order the surviving common ids take after removals and insertions,
/// compared with their order in `b`.
fn needs_reorder(a_ids: &[&str], b_ids: &[&str]) -> bool {
    let common_a: Vec<&str> = a_ids.iter().copied().filter(|id| b_ids.contains(id)).collect();
    let common_b: Vec<&str> = b_ids.iter().copied().filter(|id| a_ids.contains(id)).collect();
    common_a != common_b
}

/// Inserting the `b`-only items at their `b` positions reproduces `b` only if
/// the common items are already in `b`'s relative order; otherwise a reorder
/// is emitted and the insert indices are still `b` positions.
fn diff_questions(a: &FrameDefinition, b: &FrameDefinition, out: &mut Vec<Change>) {
    let a_ids: Vec<&str> = a.questions.iter().map(|q| q.id.as_str()).collect();
    let b_ids: Vec<&str> = b.questions.iter().map(|q| q.id.as_str()).collect();
    for q in &a.questions {
        if !b_ids.contains(&q.id.as_str()) {
            out.push(Change::RemoveQuestion { frame_id: a.id.clone(), question_id: q.id.clone() });
        }
    }
    for q in &a.questions {
        if let Some(bq) = b.question(&q.id) {
            if bq.text != q.text {
                out.push(Change::SetQuestionText {
                    frame_id: a.id.clone(),
                    question_id: q.id.clone(),
                    old: q.text.clone(),
                    new: bq.text.clone(),
                });
            }
        }
    }
    let reorder = needs_reorder(&a_ids, &b_ids);
    if reorder {
        // Reorder runs after insertions in canonical order, so insert at the end
        // and let the reorder place everything.
        let mut len = a_ids.iter().filter(|id| b_ids.contains(id)).count();
        for q in &b.questions {
            if !a_ids.contains(&q.id.as_str()) {
                out.push(Change::InsertQuestion { frame_id: a.id.clone(), index: len, question: q.clone() });
                len += 1;
            }
        }
        out.push(Change::ReorderQuestions { frame_id: a.id.clone(), order: b_ids.iter().map(|s| String::from(*s)).collect() });
    } else {
        for (j, q) in b.questions.iter().enumerate() {
            if !a_ids.contains(&q.id.as_str()) {
                out.push(Change::InsertQuestion { frame_id: a.id.clone(), index: j, question: q.clone() });
            }
        }
    }
}

/// Change set turning `a` into `b` (version fields ignored). Empty iff the
/// two codebooks are content-equal.
pub fn diff_codebooks(a: &Codebook, b: &Codebook) -> Vec<Change> {
    let mut out = Vec::new();
    let text_pairs = [
        (CodebookTextField::FrameworkName, Some(&a.framework_name), Some(&b.framework_name)),
        (CodebookTextField::FrameworkCitation, Some(&a.framework_citation), Some(&b.framework_citation)),
        (CodebookTextField::RoleInstruction, a.role_instruction.as_ref(), b.role_instruction.as_ref()),
    ];
    for (field, old, new) in text_pairs {
        if old != new {
            out.push(Change::SetText { field, old: old.cloned(), new: new.cloned() });
        }
    }
    if a.aggregation_policy != b.aggregation_policy {
        out.push(Change::SetAggregation { old: a.aggregation_policy, new: b.aggregation_policy });
    }
    diff_list(&a.general_instructions, &b.general_instructions, &ListTarget::GeneralInstructions, &mut out);

    let a_ids: Vec<&str> = a.frame_ids().collect();
    let b_ids: Vec<&str> = b.frame_ids().collect();
    for fa in &a.frames {
        if let Some(fb) = b.frame(&fa.id) {
            for list in FRAME_LISTS {
                let target = ListTarget::Frame { frame_id: fa.id.clone(), list };
                diff_list(fa.list(list), fb.list(list), &target, &mut out);
            }
        }
    }
    for fa in &a.frames {
        if b.frame(&fa.id).is_none() {
            out.push(Change::RemoveFrame { frame_id: fa.id.clone() });
        }
    }
    for fa in &a.frames {
        let Some(fb) = b.frame(&fa.id) else { continue };
        for field in [FrameTextField::Name, FrameTextField::Definition, FrameTextField::Citation] {
            if fa.text(field) != fb.text(field) {
                out.push(Change::SetFrameText {
                    frame_id: fa.id.clone(),
                    field,
                    old: fa.text(field).clone(),
                    new: fb.text(field).clone(),
                });
            }
        }
        diff_questions(fa, fb, &mut out);
    }
    if needs_reorder(&a_ids, &b_ids) {
        let mut len = a_ids.iter().filter(|id| b_ids.contains(id)).count();
        for fb in &b.frames {
            if !a_ids.contains(&fb.id.as_str()) {
                out.push(Change::InsertFrame { index: len, frame: fb.clone() });
                len += 1;
            }
        }
        out.push(Change::ReorderFrames { order: b_ids.iter().map(|s| String::from(*s)).collect() });
    } else {
        for (j, fb) in b.frames.iter().enumerate() {
            if !a_ids.contains(&fb.id.as_str()) {
                out.push(Change::InsertFrame { index: j, frame: fb.clone() });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Disposition {
    Accepted,
    Revised,
    Rejected,
}

impl Disposition {
    pub fn changes_codebook(self) -> bool {
        !matches!(self, Disposition::Rejected)
    }
}

/// One candidate criterion and what the researcher decided about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionEntry {
    pub id: String,
    pub timestamp: String,
    pub version_before: u32,
    pub version_after: u32,
    pub candidate_criterion: String,
    pub disposition: Disposition,
    pub rationale: String,
    #[serde(default)]
    pub provenance_case_ids: Vec<String>,
    /// The change set; empty exactly when the criterion was rejected.
    #[serde(default)]
    pub edits: Vec<Change>,
}

impl RevisionEntry {
    /// Entry against `version_before` with `version_after` derived from the
    /// disposition.
    pub fn new(
        id: impl Into<String>,
        timestamp: impl Into<String>,
        version_before: u32,
        candidate_criterion: impl Into<String>,
        disposition: Disposition,
        rationale: impl Into<String>,
        edits: Vec<Change>,
    ) -> Self {
        RevisionEntry {
            id: id.into(),
            timestamp: timestamp.into(),
            version_before,
            version_after: if disposition.changes_codebook() { version_before + 1 } else { version_before },
            candidate_criterion: candidate_criterion.into(),
            disposition,
            rationale: rationale.into(),
            provenance_case_ids: Vec::new(),
            edits,
        }
    }

    pub fn with_cases(mut self, ids: Vec<String>) -> Self {
        self.provenance_case_ids = ids;
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RevisionError {
    #[error("revision targets version {entry} but the codebook is at version {current}")]
    VersionConflict { entry: u32, current: u32 },
    #[error("a rejected criterion cannot carry edits")]
    EditOnRejected,
    #[error("an accepted or revised criterion needs at least one edit")]
    MissingEdits,
    #[error("version_after {got} does not match disposition (expected {expected})")]
    InconsistentVersion { got: u32, expected: u32 },
    #[error("rationale must not be empty")]
    EmptyRationale,
    #[error("edit could not be applied: {0}")]
    Edit(#[from] ChangeError),
    #[error("revised codebook is invalid: {0:?}")]
    InvalidResult(Vec<Violation>),
    #[error("revision id `{0}` already in the ledger")]
    DuplicateEntry(String),
}

/// Applies one ledger entry. Rejected entries return the codebook unchanged.
pub fn apply_revision(cb: &Codebook, entry: &RevisionEntry) -> Result<Codebook, RevisionError> {
    if entry.version_before != cb.version {
        return Err(RevisionError::VersionConflict { entry: entry.version_before, current: cb.version });
    }
    if entry.rationale.trim().is_empty() {
        return Err(RevisionError::EmptyRationale);
    }
    let expected = if entry.disposition.changes_codebook() { cb.version + 1 } else { cb.version };
    if entry.version_after != expected {
        return Err(RevisionError::InconsistentVersion { got: entry.version_after, expected });
    }
    match (entry.disposition.changes_codebook(), entry.edits.is_empty()) {
        (false, false) => return Err(RevisionError::EditOnRejected),
        (false, true) => return Ok(cb.clone()),
        (true, true) => return Err(RevisionError::MissingEdits),
        (true, false) => {}
    }
    let mut next = apply_changes(cb, &entry.edits)?;
    next.parent_version = Some(cb.version);
    next.version = cb.version + 1;
    let violations = validate_codebook(&next);
    if !violations.is_empty() {
        return Err(RevisionError::InvalidResult(violations));
    }
    Ok(next)
}

/// Every codebook version plus the append-only revision ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookHistory {
    versions: Vec<Codebook>,
    ledger: Vec<RevisionEntry>,
}

impl CodebookHistory {
    /// Starts a history at `initial`, which must be a valid version-1 codebook.
    pub fn new(initial: Codebook) -> Result<Self, RevisionError> {
        let violations = validate_codebook(&initial);
        if !violations.is_empty() {
            return Err(RevisionError::InvalidResult(violations));
        }
        Ok(CodebookHistory { versions: alloc::vec![initial], ledger: Vec::new() })
    }

    /// Rebuilds a history by replaying `ledger` on top of `initial`.
    pub fn replay(initial: Codebook, ledger: impl IntoIterator<Item = RevisionEntry>) -> Result<Self, RevisionError> {
        let mut h = CodebookHistory::new(initial)?;
        for entry in ledger {
            h.apply(entry)?;
        }
        Ok(h)
    }

    pub fn current(&self) -> &Codebook {
        self.versions.last().expect("history is never empty")
    }

    pub fn version(&self, v: u32) -> Option<&Codebook> {
        self.versions.iter().find(|c| c.version == v)
    }

    pub fn versions(&self) -> &[Codebook] {
        &self.versions
    }

    pub fn ledger(&self) -> &[RevisionEntry] {
        &self.ledger
    }

    /// Applies and records `entry`; returns the (possibly unchanged) current codebook.
    pub fn apply(&mut self, entry: RevisionEntry) -> Result<&Codebook, RevisionError> {
        if self.ledger.iter().any(|e| e.id == entry.id) {
            return Err(RevisionError::DuplicateEntry(entry.id));
        }
        let next = apply_revision(self.current(), &entry)?;
        if entry.disposition.changes_codebook() {
            self.versions.push(next);
        }
        self.ledger.push(entry);
        Ok(self.current())
    }

    /// Diff between two stored versions.
    pub fn diff(&self, from: u32, to: u32) -> Option<Vec<Change>> {
        Some(diff_codebooks(self.version(from)?, self.version(to)?))
    }
}
