//! Stream frames: one JSON document per WebSocket message.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use trafficops_agent::agent::{AgentError, AgentEvent, TurnOutcome};
use trafficops_core::ArtifactStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    Thought,
    Action,
    Observation,
    /// Reserved; artifacts are listed on observation and terminal frames.
    Artifact,
    Final,
    AskHuman,
    Error,
}

impl FrameKind {
    pub fn is_terminal(self) -> bool {
        matches!(self, FrameKind::Final | FrameKind::AskHuman | FrameKind::Error)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventFrame {
    pub turn: u64,
    /// Gapless from 1 within a turn.
    pub seq: u64,
    pub kind: FrameKind,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub artifact_id: String,
    pub kind: String,
    pub media_type: String,
    pub title: String,
    pub url: String,
}

pub fn artifact_url(id: &str) -> String {
    format!("/api/artifacts/{id}")
}

/// Resolves ids against the store; unknown ids are dropped.
pub fn artifact_refs(store: &ArtifactStore, ids: &[String]) -> Vec<ArtifactRef> {
    ids.iter()
        .filter_map(|id| store.get(id).ok())
        .map(|a| ArtifactRef {
            url: artifact_url(&a.artifact_id),
            artifact_id: a.artifact_id,
            kind: a.kind.as_str().into(),
            media_type: a.kind.media_type().into(),
            title: a.title,
        })
        .collect()
}

/// Numbers the frames of one turn.
pub struct FrameBuilder<'a> {
    turn: u64,
    next: u64,
    store: &'a ArtifactStore,
}

impl<'a> FrameBuilder<'a> {
    pub fn new(turn: u64, store: &'a ArtifactStore) -> Self {
        Self { turn, next: 1, store }
    }

    fn frame(&mut self, kind: FrameKind, payload: Value) -> EventFrame {
        let seq = self.next;
        self.next += 1;
        EventFrame {
            turn: self.turn,
            seq,
            kind,
            payload,
        }
    }

    pub fn event(&mut self, ev: AgentEvent) -> EventFrame {
        match ev {
            AgentEvent::Thought { step, text } => self.frame(FrameKind::Thought, json!({ "step": step, "text": text })),
            AgentEvent::Action { step, tool, input } => {
                self.frame(FrameKind::Action, json!({ "step": step, "tool": tool, "input": input }))
            }
            AgentEvent::Observation { step, observation } => {
                let artifacts = artifact_refs(self.store, &observation.artifacts);
                self.frame(
                    FrameKind::Observation,
                    json!({
                        "step": step,
                        "text": observation.text,
                        "is_error": observation.is_error,
                        "artifacts": artifacts,
                    }),
                )
            }
        }
    }

    pub fn outcome(&mut self, out: &TurnOutcome) -> EventFrame {
        let artifacts = artifact_refs(self.store, &out.artifacts);
        if out.needs_human_input {
            self.frame(
                FrameKind::AskHuman,
                json!({ "question": out.final_text, "artifacts": artifacts }),
            )
        } else {
            self.frame(FrameKind::Final, json!({ "text": out.final_text, "artifacts": artifacts }))
        }
    }

    pub fn error(&mut self, err: &AgentError) -> EventFrame {
        self.frame(FrameKind::Error, json!({ "message": err.to_string() }))
    }

    pub fn internal_error(&mut self, message: &str) -> EventFrame {
        self.frame(FrameKind::Error, json!({ "message": message }))
    }
}
