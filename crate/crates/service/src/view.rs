//! Client-facing projections of a session.

use cuegraph_core::engine::{ExplorationSession, ExplorationThread, SessionState};
use cuegraph_core::prompt::{Category, CueStatus, TemplateKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueCard {
    pub id: String,
    pub label: String,
    pub body: String,
    pub category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub status: CueStatus,
    pub source_prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingPrompt {
    pub id: String,
    pub kind: TemplateKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedResponseView {
    pub id: String,
    pub prompt_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub broad_statement: Option<String>,
    pub cues: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Links {
    pub graph: String,
    pub metrics: String,
    pub document: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiSessionView {
    pub id: String,
    pub state: SessionState,
    pub revision: usize,
    pub paragraph: String,
    pub cues: Vec<CueCard>,
    pub threads: Vec<ExplorationThread>,
    pub pending_prompts: Vec<PendingPrompt>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latest_response: Option<ParsedResponseView>,
    pub links: Links,
}

impl ApiSessionView {
    pub fn of(session: &ExplorationSession) -> Self {
        let id = session.id().to_string();
        let revision = session.current_revision();
        let cues = session
            .cues()
            .iter()
            .map(|c| CueCard {
                id: c.id.clone(),
                label: c.label.clone(),
                body: c.body.clone(),
                category: c.category,
                score: c.score,
                status: c.status,
                source_prompt: c.id.split_once('.').map(|(p, _)| p.to_string()).unwrap_or_default(),
            })
            .collect();
        let latest_response = session.latest_response().map(|r| ParsedResponseView {
            id: r.id.clone(),
            prompt_id: r.prompt_id.clone(),
            broad_statement: r.broad_statement.clone(),
            cues: session
                .cues()
                .iter()
                .filter(|c| c.source_response == r.id)
                .map(|c| c.id.clone())
                .collect(),
            summary: r.summary.clone(),
        });
        Self {
            state: session.state(),
            revision: revision.index,
            paragraph: revision.text.clone(),
            cues,
            threads: session.threads().to_vec(),
            pending_prompts: session
                .unanswered()
                .into_iter()
                .map(|p| PendingPrompt {
                    id: p.id.clone(),
                    kind: p.kind,
                    text: p.text.clone(),
                })
                .collect(),
            latest_response,
            links: Links {
                graph: format!("/sessions/{id}/graph?revision={}", revision.index),
                metrics: format!("/sessions/{id}/metrics?revision={}", revision.index),
                document: format!("/sessions/{id}/document"),
            },
            id,
        }
    }
}
