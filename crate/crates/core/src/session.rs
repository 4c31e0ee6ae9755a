//! Workflow phases, the replayable event stream and the stopping rule.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "P1_BOUNDARIES")]
    Boundaries,
    #[serde(rename = "P2_EXPLORATION")]
    Exploration,
    #[serde(rename = "P3_CURATION")]
    Curation,
    #[serde(rename = "P4_INITIAL_PROMPT")]
    InitialPrompt,
    #[serde(rename = "P5_INTERROGATION")]
    Interrogation,
    #[serde(rename = "P6_REFINEMENT")]
    Refinement,
    #[serde(rename = "P7_STABILIZED")]
    Stabilized,
}

impl Phase {
    pub const ALL: [Phase; 7] = [
        Phase::Boundaries,
        Phase::Exploration,
        Phase::Curation,
        Phase::InitialPrompt,
        Phase::Interrogation,
        Phase::Refinement,
        Phase::Stabilized,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Phase::Boundaries => "P1_BOUNDARIES",
            Phase::Exploration => "P2_EXPLORATION",
            Phase::Curation => "P3_CURATION",
            Phase::InitialPrompt => "P4_INITIAL_PROMPT",
            Phase::Interrogation => "P5_INTERROGATION",
            Phase::Refinement => "P6_REFINEMENT",
            Phase::Stabilized => "P7_STABILIZED",
        }
    }

    /// Single-step successors.
    pub fn successors(self) -> &'static [Phase] {
        match self {
            Phase::Boundaries => &[Phase::Exploration],
            Phase::Exploration => &[Phase::Curation],
            Phase::Curation => &[Phase::InitialPrompt],
            Phase::InitialPrompt => &[Phase::Interrogation],
            Phase::Interrogation => &[Phase::Refinement, Phase::Stabilized],
            Phase::Refinement => &[Phase::Interrogation],
            Phase::Stabilized => &[],
        }
    }

    pub fn can_transition(self, to: Phase) -> bool {
        self.successors().contains(&to)
    }

    /// Shortest chain of legal steps from `self` to `to`, excluding `self`.
    /// Empty when already there, `None` when unreachable.
    pub fn path_to(self, to: Phase) -> Option<Vec<Phase>> {
        if self == to {
            return Some(Vec::new());
        }
        let mut prev: [Option<Phase>; 7] = [None; 7];
        let mut queue = VecDeque::from([self]);
        while let Some(p) = queue.pop_front() {
            for &next in p.successors() {
                if next == self || prev[next as usize].is_some() {
                    continue;
                }
                prev[next as usize] = Some(p);
                if next == to {
                    let mut path = alloc::vec![to];
                    let mut cur = p;
                    while cur != self {
                        path.push(cur);
                        cur = prev[cur as usize].expect("visited");
                    }
                    path.reverse();
                    return Some(path);
                }
                queue.push_back(next);
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    CorpusLoaded,
    Sampled,
    Explored,
    Curated,
    Classified,
    Mined,
    Revision,
    Evaluated,
    Stabilized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub timestamp: String,
    pub kind: EventKind,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    pub cycle: u32,
    pub new_criteria_count: u32,
    pub disagreement_rate: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("expected event seq {expected}, got {got}")]
    SequenceGap { expected: u64, got: u64 },
    #[error("phase transition {} -> {} is not allowed", from.label(), to.label())]
    IllegalTransition { from: Phase, to: Phase },
    #[error("event payload: {0}")]
    BadPayload(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub phase: Phase,
    pub corpus_ref: Option<String>,
    pub codebook_version: u32,
    pub cycle_history: Vec<Cycle>,
    pub event_log_path: String,
    pub last_seq: u64,
}

impl SessionState {
    pub fn new(session_id: impl Into<String>, event_log_path: impl Into<String>, codebook_version: u32) -> Self {
        SessionState {
            session_id: session_id.into(),
            phase: Phase::Boundaries,
            corpus_ref: None,
            codebook_version,
            cycle_history: Vec::new(),
            event_log_path: event_log_path.into(),
            last_seq: 0,
        }
    }

    pub fn next_seq(&self) -> u64 {
        self.last_seq + 1
    }

    /// Walks forward along the phase graph to `target`.
    fn advance(&mut self, target: Phase) -> Result<(), SessionError> {
        match self.phase.path_to(target) {
            Some(path) => {
                if let Some(&last) = path.last() {
                    self.phase = last;
                }
                Ok(())
            }
            None => Err(SessionError::IllegalTransition { from: self.phase, to: target }),
        }
    }

    /// Folds one event into the state. The state is untouched on error.
    pub fn apply(&mut self, event: &Event) -> Result<(), SessionError> {
        let expected = self.next_seq();
        if event.seq != expected {
            return Err(SessionError::SequenceGap { expected, got: event.seq });
        }
        let mut next = self.clone();
        next.apply_kind(event)?;
        next.last_seq = event.seq;
        *self = next;
        Ok(())
    }

    fn apply_kind(&mut self, event: &Event) -> Result<(), SessionError> {
        let p = &event.payload;
        match event.kind {
            EventKind::CorpusLoaded | EventKind::Sampled => {
                if let Some(r) = p.get("corpus_ref").and_then(Value::as_str) {
                    self.corpus_ref = Some(r.into());
                }
            }
            EventKind::Explored => self.advance(Phase::Exploration)?,
            EventKind::Curated => self.advance(Phase::Curation)?,
            EventKind::Classified => {
                if self.phase < Phase::InitialPrompt {
                    self.advance(Phase::InitialPrompt)?;
                }
            }
            EventKind::Mined => {
                let rate = p
                    .get("disagreement_rate")
                    .and_then(Value::as_f64)
                    .ok_or_else(|| SessionError::BadPayload("MINED needs a numeric disagreement_rate".into()))?;
                self.advance(Phase::Interrogation)?;
                self.cycle_history.push(Cycle {
                    cycle: self.cycle_history.len() as u32 + 1,
                    new_criteria_count: 0,
                    disagreement_rate: rate,
                });
            }
            EventKind::Revision => {
                let version = p
                    .get("version_after")
                    .and_then(Value::as_u64)
                    .ok_or_else(|| SessionError::BadPayload("REVISION needs version_after".into()))?;
                let disposition = p.get("disposition").and_then(Value::as_str).unwrap_or_default();
                self.advance(Phase::Refinement)?;
                self.codebook_version = version as u32;
                if disposition != "REJECTED" {
                    if let Some(c) = self.cycle_history.last_mut() {
                        c.new_criteria_count += 1;
                    }
                }
            }
            EventKind::Evaluated => {}
            EventKind::Stabilized => self.advance(Phase::Stabilized)?,
        }
        Ok(())
    }

    pub fn replay<'a>(mut base: SessionState, events: impl IntoIterator<Item = &'a Event>) -> Result<Self, SessionError> {
        for e in events {
            base.apply(e)?;
        }
        Ok(base)
    }
}

pub const DEFAULT_EPSILON: f64 = 0.01;
pub const DEFAULT_WINDOW: usize = 2;

/// True iff the last `window` cycles each added no criteria and consecutive
/// disagreement rates inside the window differ by less than `epsilon`.
pub fn check_stabilization(history: &[Cycle], epsilon: f64, window: usize) -> bool {
    if window == 0 || history.len() < window {
        return false;
    }
    let tail = &history[history.len() - window..];
    tail.iter().all(|c| c.new_criteria_count == 0)
        && tail.windows(2).all(|w| (w[1].disagreement_rate - w[0].disagreement_rate).abs() < epsilon)
}
