//! The exploration loop as an event-sourced state machine.
//!
//! A session moves through critique, cue triage, threaded detailing,
//! combination and rewrite. Every decision is appended to the event log and
//! the log together with the stored responses rebuilds the session exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotation::{parse_annotation, to_graph};
use crate::graph::ConceptGraph;
use crate::prompt::{self, Category, Cue, CueStatus, PromptError, TemplateKind};
use crate::provider::{GenerationRequest, Provider, ProviderError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("empty-paragraph: paragraph text is empty")]
    EmptyParagraph,
    #[error("unknown-prompt: `{0}`")]
    UnknownPrompt(String),
    #[error("already-answered: prompt `{0}` already has a response")]
    AlreadyAnswered(String),
    #[error("unknown-cue: `{0}`")]
    UnknownCue(String),
    #[error("locked-cue: `{0}` is the root of a thread")]
    LockedCue(String),
    #[error("no-explorable-cues: every explore cue already has a thread")]
    NoExplorableCues,
    #[error("not-explorable: `{0}` is not an unopened explore cue")]
    NotExplorable(String),
    #[error("unknown-thread: `{0}`")]
    UnknownThread(String),
    #[error("thread-closed: `{0}`")]
    ThreadClosed(String),
    #[error("thread-busy: `{thread}` is waiting for a response to `{prompt}`")]
    ThreadBusy { thread: String, prompt: String },
    #[error("invalid-template: `{0}` is not a detailing template")]
    InvalidTemplate(TemplateKind),
    #[error("invalid-combination-kind: `{0}` does not combine two cues")]
    InvalidCombinationKind(TemplateKind),
    #[error("cue-not-in-thread: `{cue}` does not belong to `{thread}`")]
    CueNotInThread { cue: String, thread: String },
    #[error("empty-selection: select at least one cue")]
    EmptySelection,
    #[error("illegal-action: {action} is not allowed in state {state}")]
    IllegalAction { action: String, state: SessionState },
    #[error("pending-generation: prompts {} are still unanswered", .0.join(", "))]
    PendingGeneration(Vec<String>),
    #[error("trace-mismatch: event {seq}: {detail}")]
    TraceMismatch { seq: u64, detail: String },
    #[error("invalid-k: {0} (must be at least 1)")]
    InvalidK(usize),
    #[error("schema-version-unknown: {0}")]
    SchemaVersionUnknown(u32),
    #[error("integrity-violation: {0}")]
    IntegrityViolation(String),
    #[error("invalid-annotation: {0}")]
    InvalidAnnotation(String),
    #[error("unknown-revision: {0}")]
    UnknownRevision(usize),
    #[error("{0}")]
    Prompt(#[from] PromptError),
    #[error("{0}")]
    Provider(#[from] ProviderError),
}

impl EngineError {
    pub fn name(&self) -> &'static str {
        match self {
            EngineError::EmptyParagraph => "empty-paragraph",
            EngineError::UnknownPrompt(_) => "unknown-prompt",
            EngineError::AlreadyAnswered(_) => "already-answered",
            EngineError::UnknownCue(_) => "unknown-cue",
            EngineError::LockedCue(_) => "locked-cue",
            EngineError::NoExplorableCues => "no-explorable-cues",
            EngineError::NotExplorable(_) => "not-explorable",
            EngineError::UnknownThread(_) => "unknown-thread",
            EngineError::ThreadClosed(_) => "thread-closed",
            EngineError::ThreadBusy { .. } => "thread-busy",
            EngineError::InvalidTemplate(_) => "invalid-template",
            EngineError::InvalidCombinationKind(_) => "invalid-combination-kind",
            EngineError::CueNotInThread { .. } => "cue-not-in-thread",
            EngineError::EmptySelection => "empty-selection",
            EngineError::IllegalAction { .. } => "illegal-action",
            EngineError::PendingGeneration(_) => "pending-generation",
            EngineError::TraceMismatch { .. } => "trace-mismatch",
            EngineError::InvalidK(_) => "invalid-k",
            EngineError::SchemaVersionUnknown(_) => "schema-version-unknown",
            EngineError::IntegrityViolation(_) => "integrity-violation",
            EngineError::InvalidAnnotation(_) => "invalid-annotation",
            EngineError::UnknownRevision(_) => "unknown-revision",
            EngineError::Prompt(e) => e.name(),
            EngineError::Provider(e) => e.name(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SessionState {
    AwaitingCritique,
    TriagePending,
    ThreadOpen,
    RewritePending,
    Done,
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revision {
    pub index: usize,
    pub text: String,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub kind: TemplateKind,
    pub text: String,
    pub revision: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thread: Option<String>,
    /// Cues this prompt was built from.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub about: Vec<String>,
    pub issued_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub id: String,
    pub prompt_id: String,
    pub provider: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub broad_statement: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    pub received_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreadState {
    Open,
    Converging,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationThread {
    pub id: String,
    pub root_cue: String,
    pub selected_cues: Vec<String>,
    pub state: ThreadState,
    pub prompts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Actor {
    /// A person, optionally with a display name.
    Human(Option<String>),
    Policy(String),
}

impl Actor {
    pub fn human() -> Self {
        Actor::Human(None)
    }

    pub fn named(name: &str) -> Self {
        Actor::Human(Some(name.to_string()))
    }

    pub fn policy(name: &str) -> Self {
        Actor::Policy(name.to_string())
    }
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Actor::Human(None) => f.write_str("human"),
            Actor::Human(Some(name)) => write!(f, "human:{name}"),
            Actor::Policy(name) => write!(f, "policy:{name}"),
        }
    }
}

impl FromStr for Actor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "human" => Ok(Actor::Human(None)),
            Some(("human", name)) if !name.is_empty() => Ok(Actor::Human(Some(name.to_string()))),
            Some(("policy", name)) if !name.is_empty() => Ok(Actor::Policy(name.to_string())),
            _ => Err(format!("unknown actor `{s}`")),
        }
    }
}

impl Serialize for Actor {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Actor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// One side of a combination; `text` overrides the cue label in the prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Operand {
    pub cue: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl Operand {
    pub fn cue(id: &str) -> Self {
        Self {
            cue: id.to_string(),
            text: None,
        }
    }

    pub fn with_text(id: &str, text: &str) -> Self {
        Self {
            cue: id.to_string(),
            text: Some(text.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Triage {
        cue: String,
        category: Category,
    },
    SelectThread {
        /// None picks the highest-priority unopened explore cue.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        root: Option<String>,
    },
    RequestDetailing {
        thread: String,
        kind: TemplateKind,
        /// Defaults to the thread root.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        about: Option<String>,
        /// Slot text; defaults to the cue label.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        text: Option<String>,
    },
    SelectCues {
        thread: String,
        cues: Vec<String>,
    },
    Combine {
        first: Operand,
        second: Operand,
        kind: TemplateKind,
    },
    Rewrite {
        text: String,
    },
    Terminate,
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::Triage { .. } => "triage",
            Action::SelectThread { .. } => "select_thread",
            Action::RequestDetailing { .. } => "request_detailing",
            Action::SelectCues { .. } => "select_cues",
            Action::Combine { .. } => "combine",
            Action::Rewrite { .. } => "rewrite",
            Action::Terminate => "terminate",
        }
    }

    /// Cue ids the action refers to.
    pub fn cue_refs(&self) -> Vec<&str> {
        match self {
            Action::Triage { cue, .. } => vec![cue],
            Action::SelectThread { root } => root.iter().map(String::as_str).collect(),
            Action::RequestDetailing { about, .. } => about.iter().map(String::as_str).collect(),
            Action::SelectCues { cues, .. } => cues.iter().map(String::as_str).collect(),
            Action::Combine { first, second, .. } => vec![&first.cue, &second.cue],
            Action::Rewrite { .. } | Action::Terminate => vec![],
        }
    }
}

/// Identifiers the engine assigned while applying an action.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thread: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

impl Outcome {
    pub fn is_empty(&self) -> bool {
        self.thread.is_none() && self.prompt.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionEvent {
    pub seq: u64,
    pub actor: Actor,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Outcome::is_empty")]
    pub outcome: Outcome,
}

/// Deterministic session id derived from the opening paragraph.
pub fn session_id_for(paragraph: &str) -> String {
    let digest = hex::encode(Sha256::digest(paragraph.trim().as_bytes()));
    format!("s-{}", &digest[..12])
}

fn prompt_number(prompt_id: &str) -> Option<u64> {
    prompt_id.strip_prefix("PROMPT")?.parse().ok()
}

/// Numeric sort key for ids like `PROMPT12.3`.
fn cue_key(cue_id: &str) -> (u64, u64) {
    let (p, k) = cue_id.split_once('.').unwrap_or((cue_id, "0"));
    (prompt_number(p).unwrap_or(u64::MAX), k.parse().unwrap_or(u64::MAX))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSession {
    schema_version: u32,
    id: String,
    state: SessionState,
    paragraphs: Vec<Revision>,
    prompts: Vec<PromptRecord>,
    responses: Vec<ResponseRecord>,
    cues: Vec<Cue>,
    threads: Vec<ExplorationThread>,
    events: Vec<DecisionEvent>,
    /// Annotation documents attached to revisions, by revision index.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    annotations: BTreeMap<usize, String>,
}

impl ExplorationSession {
    pub fn start(paragraph: &str) -> Result<Self, EngineError> {
        Self::start_with_id(&format!("s-{}", uuid::Uuid::new_v4().simple()), paragraph)
    }

    pub fn start_with_id(id: &str, paragraph: &str) -> Result<Self, EngineError> {
        if paragraph.trim().is_empty() {
            return Err(EngineError::EmptyParagraph);
        }
        let mut session = Self {
            schema_version: SCHEMA_VERSION,
            id: id.to_string(),
            state: SessionState::AwaitingCritique,
            paragraphs: Vec::new(),
            prompts: Vec::new(),
            responses: Vec::new(),
            cues: Vec::new(),
            threads: Vec::new(),
            events: Vec::new(),
            annotations: BTreeMap::new(),
        };
        session.add_revision(paragraph)?;
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn paragraphs(&self) -> &[Revision] {
        &self.paragraphs
    }

    pub fn current_revision(&self) -> &Revision {
        self.paragraphs.last().expect("a session always has revision 0")
    }

    pub fn prompts(&self) -> &[PromptRecord] {
        &self.prompts
    }

    pub fn responses(&self) -> &[ResponseRecord] {
        &self.responses
    }

    pub fn cues(&self) -> &[Cue] {
        &self.cues
    }

    pub fn threads(&self) -> &[ExplorationThread] {
        &self.threads
    }

    pub fn events(&self) -> &[DecisionEvent] {
        &self.events
    }

    pub fn prompt(&self, id: &str) -> Option<&PromptRecord> {
        self.prompts.iter().find(|p| p.id == id)
    }

    pub fn response_for(&self, prompt_id: &str) -> Option<&ResponseRecord> {
        self.responses.iter().find(|r| r.prompt_id == prompt_id)
    }

    pub fn cue(&self, id: &str) -> Option<&Cue> {
        self.cues.iter().find(|c| c.id == id)
    }

    pub fn thread(&self, id: &str) -> Option<&ExplorationThread> {
        self.threads.iter().find(|t| t.id == id)
    }

    /// Prompts still waiting for a response, oldest first.
    pub fn unanswered(&self) -> Vec<&PromptRecord> {
        self.prompts
            .iter()
            .filter(|p| self.response_for(&p.id).is_none())
            .collect()
    }

    pub fn latest_response(&self) -> Option<&ResponseRecord> {
        self.responses.iter().max_by_key(|r| (r.received_at, prompt_number(&r.prompt_id)))
    }

    /// Union of every thread's selections, in thread then selection order.
    pub fn selected_cues(&self) -> Vec<&str> {
        self.threads
            .iter()
            .flat_map(|t| t.selected_cues.iter().map(String::as_str))
            .collect()
    }

    /// Labels of cues the author pursued: thread roots, selections and
    /// combination operands.
    pub fn explored_cue_labels(&self) -> BTreeSet<String> {
        let mut ids: BTreeSet<&str> = self.selected_cues().into_iter().collect();
        ids.extend(self.threads.iter().map(|t| t.root_cue.as_str()));
        ids.extend(
            self.cues
                .iter()
                .filter(|c| c.status == CueStatus::Combined)
                .map(|c| c.id.as_str()),
        );
        ids.into_iter()
            .filter_map(|id| self.cue(id))
            .map(|c| c.label.clone())
            .collect()
    }

    pub fn annotation(&self, revision: usize) -> Option<&str> {
        self.annotations.get(&revision).map(String::as_str)
    }

    /// Attaches an annotation document to a revision. The document must
    /// parse, build a valid graph, and cite only this session's responses.
    pub fn attach_annotation(&mut self, revision: usize, text: &str) -> Result<ConceptGraph, EngineError> {
        if revision >= self.paragraphs.len() {
            return Err(EngineError::UnknownRevision(revision));
        }
        let graph = self.graph_from(text)?;
        self.annotations.insert(revision, text.to_string());
        Ok(graph)
    }

    pub fn graph(&self, revision: usize) -> Result<Option<ConceptGraph>, EngineError> {
        if revision >= self.paragraphs.len() {
            return Err(EngineError::UnknownRevision(revision));
        }
        self.annotations
            .get(&revision)
            .map(|text| self.graph_from(text))
            .transpose()
    }

    fn graph_from(&self, text: &str) -> Result<ConceptGraph, EngineError> {
        let doc = parse_annotation(text).map_err(|d| EngineError::InvalidAnnotation(d.to_string()))?;
        let graph = to_graph(&doc).map_err(|e| EngineError::InvalidAnnotation(e.to_string()))?;
        let responses = self.responses.iter().map(|r| r.id.clone()).collect();
        graph
            .check_origins(&responses)
            .map_err(|e| EngineError::InvalidAnnotation(e.to_string()))?;
        Ok(graph)
    }

    fn now(&self) -> u64 {
        self.events.len() as u64
    }

    fn add_revision(&mut self, text: &str) -> Result<String, EngineError> {
        let index = self.paragraphs.len();
        self.paragraphs.push(Revision {
            index,
            text: text.to_string(),
            timestamp: self.now(),
        });
        let body = prompt::instantiate(TemplateKind::Critique, &[("Paragraph", text)])?;
        Ok(self.add_prompt(TemplateKind::Critique, body, None, Vec::new()))
    }

    fn add_prompt(&mut self, kind: TemplateKind, text: String, thread: Option<String>, about: Vec<String>) -> String {
        let id = format!("PROMPT{}", self.prompts.len() + 1);
        self.prompts.push(PromptRecord {
            id: id.clone(),
            kind,
            text,
            revision: self.paragraphs.len() - 1,
            thread,
            about,
            issued_at: self.now(),
        });
        id
    }

    /// Stores a response and adds its list items to the cue pool.
    pub fn ingest_response(&mut self, prompt_id: &str, text: &str, provider: &str) -> Result<&ResponseRecord, EngineError> {
        if self.state == SessionState::Done {
            return Err(self.illegal("ingest_response"));
        }
        let prompt = self
            .prompt(prompt_id)
            .ok_or_else(|| EngineError::UnknownPrompt(prompt_id.to_string()))?;
        if self.response_for(prompt_id).is_some() {
            return Err(EngineError::AlreadyAnswered(prompt_id.to_string()));
        }
        let kind = prompt.kind;
        let number = prompt_number(prompt_id).expect("engine-issued prompt id");
        let response_id = format!("R{number}");
        let parsed = prompt::extract_cues(text);
        let cue_count = parsed.items.len();
        for (k, item) in parsed.items.iter().enumerate() {
            let cue = Cue::new(&format!("{prompt_id}.{}", k + 1), &item.label, &item.body, &response_id);
            let at = self.cues.partition_point(|c| cue_key(&c.id) < cue_key(&cue.id));
            self.cues.insert(at, cue);
        }
        let record = ResponseRecord {
            id: response_id,
            prompt_id: prompt_id.to_string(),
            provider: provider.to_string(),
            text: text.to_string(),
            broad_statement: parsed.broad_statement,
            summary: parsed.summary,
            received_at: self.now(),
        };
        let at = self
            .responses
            .partition_point(|r| prompt_number(&r.prompt_id) < Some(number));
        self.responses.insert(at, record);

        if kind == TemplateKind::Critique && self.state == SessionState::AwaitingCritique {
            self.state = if cue_count == 0 {
                SessionState::RewritePending
            } else {
                SessionState::TriagePending
            };
        }
        Ok(&self.responses[at])
    }

    fn illegal(&self, action: &str) -> EngineError {
        EngineError::IllegalAction {
            action: action.to_string(),
            state: self.state,
        }
    }

    fn require_state(&self, action: &Action, allowed: &[SessionState]) -> Result<(), EngineError> {
        if allowed.contains(&self.state) {
            Ok(())
        } else {
            Err(self.illegal(action.name()))
        }
    }

    fn cue_index(&self, id: &str) -> Result<usize, EngineError> {
        self.cues
            .iter()
            .position(|c| c.id == id)
            .ok_or_else(|| EngineError::UnknownCue(id.to_string()))
    }

    fn thread_index(&self, id: &str) -> Result<usize, EngineError> {
        self.threads
            .iter()
            .position(|t| t.id == id)
            .ok_or_else(|| EngineError::UnknownThread(id.to_string()))
    }

    fn is_root(&self, cue: &str) -> bool {
        self.threads.iter().any(|t| t.root_cue == cue)
    }

    /// Sequence number of the latest triage decision per cue.
    fn triage_order(&self) -> BTreeMap<&str, u64> {
        let mut order = BTreeMap::new();
        for e in &self.events {
            if let Action::Triage { cue, .. } = &e.action {
                order.insert(cue.as_str(), e.seq);
            }
        }
        order
    }

    /// Unopened explore cues by priority: score against the evaluation cues,
    /// then earlier triage first.
    pub fn explore_candidates(&self) -> Vec<Cue> {
        let open: Vec<Cue> = self
            .cues
            .iter()
            .filter(|c| c.category == Category::Explore && !self.is_root(&c.id))
            .cloned()
            .collect();
        let evaluation: Vec<Cue> = self
            .cues
            .iter()
            .filter(|c| c.category == Category::Evaluate)
            .cloned()
            .collect();
        let mut scored = if evaluation.is_empty() {
            open
        } else {
            prompt::score_against(&open, &evaluation).expect("evaluation set is non-empty")
        };
        let order = self.triage_order();
        scored.sort_by(|a, b| {
            let (sa, sb) = (a.score.unwrap_or(0.0), b.score.unwrap_or(0.0));
            sb.partial_cmp(&sa)
                .expect("scores are finite")
                .then_with(|| order.get(a.id.as_str()).cmp(&order.get(b.id.as_str())))
                .then_with(|| cue_key(&a.id).cmp(&cue_key(&b.id)))
        });
        scored
    }

    /// Applies one decision and logs it.
    pub fn apply(&mut self, actor: Actor, action: Action) -> Result<Outcome, EngineError> {
        use SessionState::*;
        if self.state == Done {
            return Err(self.illegal(action.name()));
        }
        let mut recorded = action.clone();
        let outcome = match &action {
            Action::Triage { cue, category } => {
                let i = self.cue_index(cue)?;
                self.require_state(&action, &[TriagePending, ThreadOpen])?;
                if self.is_root(cue) {
                    return Err(EngineError::LockedCue(cue.clone()));
                }
                self.cues[i].category = *category;
                Outcome::default()
            }
            Action::SelectThread { root } => {
                self.require_state(&action, &[TriagePending, ThreadOpen])?;
                let candidates = self.explore_candidates();
                let chosen = match root {
                    Some(id) => {
                        self.cue_index(id)?;
                        candidates
                            .into_iter()
                            .find(|c| &c.id == id)
                            .ok_or_else(|| EngineError::NotExplorable(id.clone()))?
                    }
                    None => candidates.into_iter().next().ok_or(EngineError::NoExplorableCues)?,
                };
                let i = self.cue_index(&chosen.id)?;
                self.cues[i].score = chosen.score;
                self.cues[i].status = CueStatus::Detailing;
                let id = format!("T{}", self.threads.len() + 1);
                self.threads.push(ExplorationThread {
                    id: id.clone(),
                    root_cue: chosen.id.clone(),
                    selected_cues: Vec::new(),
                    state: ThreadState::Open,
                    prompts: Vec::new(),
                });
                self.state = ThreadOpen;
                recorded = Action::SelectThread {
                    root: Some(chosen.id),
                };
                Outcome {
                    thread: Some(id),
                    prompt: None,
                }
            }
            Action::RequestDetailing {
                thread,
                kind,
                about,
                text,
            } => {
                self.require_state(&action, &[ThreadOpen])?;
                let t = self.thread_index(thread)?;
                if self.threads[t].state == ThreadState::Closed {
                    return Err(EngineError::ThreadClosed(thread.clone()));
                }
                if !kind.is_detailing() {
                    return Err(EngineError::InvalidTemplate(*kind));
                }
                let about = about.clone().unwrap_or_else(|| self.threads[t].root_cue.clone());
                let c = self.cue_index(&about)?;
                let th = &self.threads[t];
                if th.root_cue != about && !th.selected_cues.contains(&about) {
                    return Err(EngineError::CueNotInThread {
                        cue: about,
                        thread: thread.clone(),
                    });
                }
                if let Some(busy) = th.prompts.iter().find(|p| self.response_for(p).is_none()) {
                    return Err(EngineError::ThreadBusy {
                        thread: thread.clone(),
                        prompt: busy.clone(),
                    });
                }
                let slot_text = text.clone().unwrap_or_else(|| self.cues[c].label.clone());
                let slot = kind.cue_slot().expect("detailing kinds take one cue");
                let body = prompt::instantiate(*kind, &[(slot, &slot_text)])?;
                let id = self.add_prompt(*kind, body, Some(thread.clone()), vec![about.clone()]);
                self.threads[t].prompts.push(id.clone());
                self.cues[c].status = CueStatus::Detailing;
                recorded = Action::RequestDetailing {
                    thread: thread.clone(),
                    kind: *kind,
                    about: Some(about),
                    text: text.clone(),
                };
                Outcome {
                    thread: Some(thread.clone()),
                    prompt: Some(id),
                }
            }
            Action::SelectCues { thread, cues } => {
                self.require_state(&action, &[ThreadOpen])?;
                let t = self.thread_index(thread)?;
                if self.threads[t].state == ThreadState::Closed {
                    return Err(EngineError::ThreadClosed(thread.clone()));
                }
                if cues.is_empty() {
                    return Err(EngineError::EmptySelection);
                }
                for cue in cues {
                    let c = self.cue_index(cue)?;
                    let prompt_id = format!("PROMPT{}", self.cues[c].source_response.trim_start_matches('R'));
                    let p = self.prompt(&prompt_id).expect("cue source exists");
                    let belongs = p.thread.as_deref() == Some(thread.as_str())
                        || (p.thread.is_none() && p.kind.combination_slots().is_some());
                    if !belongs {
                        return Err(EngineError::CueNotInThread {
                            cue: cue.clone(),
                            thread: thread.clone(),
                        });
                    }
                }
                let selected = &mut self.threads[t].selected_cues;
                for cue in cues {
                    if !selected.contains(cue) {
                        selected.push(cue.clone());
                    }
                }
                Outcome::default()
            }
            Action::Combine { first, second, kind } => {
                self.require_state(&action, &[ThreadOpen])?;
                let (slot_a, slot_b) = kind
                    .combination_slots()
                    .ok_or(EngineError::InvalidCombinationKind(*kind))?;
                let a = self.cue_index(&first.cue)?;
                let b = self.cue_index(&second.cue)?;
                let text_a = first.text.clone().unwrap_or_else(|| self.cues[a].label.clone());
                let text_b = second.text.clone().unwrap_or_else(|| self.cues[b].label.clone());
                let body = prompt::instantiate(*kind, &[(slot_a, &text_a), (slot_b, &text_b)])?;
                let id = self.add_prompt(*kind, body, None, vec![first.cue.clone(), second.cue.clone()]);
                self.cues[a].status = CueStatus::Combined;
                self.cues[b].status = CueStatus::Combined;
                Outcome {
                    thread: None,
                    prompt: Some(id),
                }
            }
            Action::Rewrite { text } => {
                self.require_state(&action, &[ThreadOpen, RewritePending])?;
                if text.trim().is_empty() {
                    return Err(EngineError::EmptyParagraph);
                }
                let pending: Vec<String> = self.unanswered().iter().map(|p| p.id.clone()).collect();
                if !pending.is_empty() {
                    return Err(EngineError::PendingGeneration(pending));
                }
                for t in 0..self.threads.len() {
                    let thread = &mut self.threads[t];
                    thread.state = match thread.state {
                        ThreadState::Open => ThreadState::Converging,
                        ThreadState::Converging | ThreadState::Closed => ThreadState::Closed,
                    };
                    if thread.state == ThreadState::Closed {
                        let root = thread.root_cue.clone();
                        let c = self.cue_index(&root)?;
                        self.cues[c].status = CueStatus::Exhausted;
                    }
                }
                let id = self.add_revision(text)?;
                self.state = AwaitingCritique;
                Outcome {
                    thread: None,
                    prompt: Some(id),
                }
            }
            Action::Terminate => {
                self.state = Done;
                Outcome::default()
            }
        };
        self.events.push(DecisionEvent {
            seq: self.events.len() as u64,
            actor,
            action: recorded,
            outcome: outcome.clone(),
        });
        // revision and prompt timestamps taken before the push stay at the
        // event's own sequence number
        Ok(outcome)
    }

    /// Asks `provider` for every unanswered prompt and ingests the answers.
    pub fn fulfill(&mut self, provider: &dyn Provider) -> Result<Vec<String>, EngineError> {
        let pending: Vec<(String, String)> = self
            .unanswered()
            .iter()
            .map(|p| (p.id.clone(), p.text.clone()))
            .collect();
        let mut done = Vec::new();
        for (id, text) in pending {
            let response = provider.generate(&GenerationRequest::new(&text))?;
            self.ingest_response(&id, &response, &provider.id())?;
            done.push(id);
        }
        Ok(done)
    }

    /// Re-derives the session from revision 0, the event log and the stored
    /// responses, each ingested at the logical time it originally arrived.
    pub fn rebuild(&self) -> Result<ExplorationSession, EngineError> {
        let first = self
            .paragraphs
            .first()
            .ok_or_else(|| EngineError::IntegrityViolation("no paragraph revisions".into()))?;
        let mut fresh = ExplorationSession::start_with_id(&self.id, &first.text)?;
        let ingest_at = |fresh: &mut ExplorationSession, time: u64| -> Result<(), EngineError> {
            for r in self.responses.iter().filter(|r| r.received_at == time) {
                fresh.ingest_response(&r.prompt_id, &r.text, &r.provider)?;
            }
            Ok(())
        };
        for event in &self.events {
            ingest_at(&mut fresh, event.seq)?;
            let outcome = fresh.apply(event.actor.clone(), event.action.clone())?;
            if outcome != event.outcome {
                return Err(EngineError::IntegrityViolation(format!(
                    "event {} produced {:?}, log records {:?}",
                    event.seq, outcome, event.outcome
                )));
            }
        }
        ingest_at(&mut fresh, self.now())?;
        fresh.annotations = self.annotations.clone();
        Ok(fresh)
    }

    /// Versioned JSON document with stable key order.
    pub fn export(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes") + "\n"
    }

    /// The events section alone, replayable as a trace.
    pub fn export_trace(&self) -> String {
        serde_json::to_string_pretty(&self.events).expect("events serialize") + "\n"
    }

    pub fn import(document: &str) -> Result<ExplorationSession, EngineError> {
        #[derive(Deserialize)]
        struct Version {
            schema_version: u32,
        }
        let version: Version = serde_json::from_str(document)
            .map_err(|e| EngineError::IntegrityViolation(format!("malformed document: {e}")))?;
        if version.schema_version != SCHEMA_VERSION {
            return Err(EngineError::SchemaVersionUnknown(version.schema_version));
        }
        let session: ExplorationSession = serde_json::from_str(document)
            .map_err(|e| EngineError::IntegrityViolation(format!("malformed document: {e}")))?;
        session.check_references()?;
        let rebuilt = session
            .rebuild()
            .map_err(|e| EngineError::IntegrityViolation(format!("event log does not replay: {e}")))?;
        if rebuilt != session {
            return Err(EngineError::IntegrityViolation(
                "document state differs from its replayed event log".into(),
            ));
        }
        for (&revision, text) in &session.annotations {
            if revision >= session.paragraphs.len() {
                return Err(EngineError::IntegrityViolation(format!(
                    "annotation for missing revision {revision}"
                )));
            }
            session.graph_from(text)?;
        }
        Ok(session)
    }

    fn check_references(&self) -> Result<(), EngineError> {
        let violation = |m: String| Err(EngineError::IntegrityViolation(m));
        for r in &self.responses {
            if self.prompt(&r.prompt_id).is_none() {
                return violation(format!("response {} references missing prompt {}", r.id, r.prompt_id));
            }
        }
        let response_ids: BTreeSet<&str> = self.responses.iter().map(|r| r.id.as_str()).collect();
        for c in &self.cues {
            if !response_ids.contains(c.source_response.as_str()) {
                return violation(format!("cue {} references missing response {}", c.id, c.source_response));
            }
        }
        for t in &self.threads {
            if self.cue(&t.root_cue).is_none() {
                return violation(format!("thread {} has missing root {}", t.id, t.root_cue));
            }
        }
        for (i, e) in self.events.iter().enumerate() {
            if e.seq != i as u64 {
                return violation(format!("event sequence numbers are not dense at {i}"));
            }
        }
        Ok(())
    }
}
