//! Sessions, turn execution, frame buffering and JSONL persistence.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::panic::AssertUnwindSafe;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use chrono::{DateTime, Local, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::broadcast;
use trafficops_agent::agent::{run_turn, AgentConfig, DialogueHistory, Turn};
use trafficops_agent::llm::CompletionBackend;
use trafficops_agent::registry::ToolDescriptor;
use trafficops_agent::suite::{registry_for, BotKind, ToolContext};
use trafficops_core::geometry::NetworkGeometry;
use trafficops_core::trips::{load_trips, read_trip_rows, TripDataset};
use trafficops_core::ArtifactStore;

use crate::config::ServiceConfig;
use crate::frames::{EventFrame, FrameBuilder};

const CHANNEL_CAPACITY: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServiceError {
    #[error("unknown bot kind `{0}` (expected data_processing or simulation_control)")]
    UnknownBotKind(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("session `{0}` is already running a turn")]
    SessionBusy(String),
    #[error("artifact `{0}` not found")]
    NotFound(String),
    #[error("message text is empty")]
    EmptyMessage,
    #[error("{0}")]
    Storage(String),
}

fn storage(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Storage(e.to_string())
}

/// One completed turn as persisted and served by the history endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: u64,
    pub user_text: String,
    pub final_text: String,
    pub needs_input: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub artifact_ids: Vec<String>,
    pub frames: Vec<EventFrame>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

impl TurnRecord {
    fn dialogue_turn(&self) -> Option<Turn> {
        self.error.is_none().then(|| Turn {
            user_text: self.user_text.clone(),
            final_answer: self.final_text.clone(),
            artifact_ids: self.artifact_ids.clone(),
            needs_human_input: self.needs_input,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LogLine {
    Session {
        session_id: String,
        bot_kind: BotKind,
        created_at: DateTime<Utc>,
    },
    Turn(TurnRecord),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Idle,
    Running,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub bot_kind: BotKind,
    pub state: SessionState,
    pub turns: Vec<TurnRecord>,
}

/// Data shared by every session.
pub struct Resources {
    pub artifacts: Arc<ArtifactStore>,
    pub dataset: Option<Arc<TripDataset>>,
    pub geometry: Option<Arc<NetworkGeometry>>,
    pub network_template: Option<PathBuf>,
}

impl Resources {
    pub fn load(cfg: &ServiceConfig) -> Result<Self, String> {
        let artifacts = Arc::new(ArtifactStore::open(cfg.artifact_dir()).map_err(|e| e.to_string())?);
        let dataset = match (&cfg.trips, &cfg.zones) {
            (Some(t), Some(z)) => Some(load_trips(t, z).map_err(|e| e.to_string())?),
            (Some(t), None) => Some(
                read_trip_rows(t, None)
                    .and_then(|rows| TripDataset::from_records(rows, Vec::new()))
                    .map_err(|e| e.to_string())?,
            ),
            (None, Some(_)) => return Err("a zones file was given without a trips file".into()),
            (None, None) => None,
        };
        let geometry = cfg
            .geometry
            .as_deref()
            .map(NetworkGeometry::load)
            .transpose()
            .map_err(|e| e.to_string())?;
        if let Some(net) = &cfg.network {
            trafficops_core::RoadNetwork::load(net).map_err(|e| format!("{}: {e}", net.display()))?;
        }
        Ok(Self {
            artifacts,
            dataset: dataset.map(Arc::new),
            geometry: geometry.map(Arc::new),
            network_template: cfg.network.clone(),
        })
    }
}

struct Inner {
    history: DialogueHistory,
    records: Vec<TurnRecord>,
    /// Taken by the running turn.
    ctx: Option<ToolContext>,
    running: bool,
    turn: u64,
    /// Frames of the current or most recent turn, kept until the next turn starts.
    frames: Vec<EventFrame>,
    deleted: bool,
}

pub struct Session {
    pub id: String,
    pub kind: BotKind,
    log_path: PathBuf,
    network_path: Option<PathBuf>,
    inner: Mutex<Inner>,
    tx: broadcast::Sender<EventFrame>,
}

impl Session {
    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn state(&self) -> SessionState {
        if self.lock().running {
            SessionState::Running
        } else {
            SessionState::Idle
        }
    }

    pub fn summary(&self) -> SessionSummary {
        let inner = self.lock();
        SessionSummary {
            session_id: self.id.clone(),
            bot_kind: self.kind,
            state: if inner.running { SessionState::Running } else { SessionState::Idle },
            turns: inner.records.clone(),
        }
    }

    /// Buffered frames of the current turn plus a receiver for everything after them.
    pub fn subscribe(&self) -> (Vec<EventFrame>, broadcast::Receiver<EventFrame>) {
        let inner = self.lock();
        (inner.frames.clone(), self.tx.subscribe())
    }

    pub fn network_path(&self) -> Option<&Path> {
        self.network_path.as_deref()
    }

    fn publish(&self, frame: EventFrame) {
        let mut inner = self.lock();
        inner.frames.push(frame.clone());
        let _ = self.tx.send(frame);
    }
}

pub struct SessionManager {
    resources: Resources,
    backend: Arc<dyn CompletionBackend>,
    agent: AgentConfig,
    clock: Option<NaiveDateTime>,
    sessions_dir: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

impl SessionManager {
    /// Opens the data directory and reloads every persisted session.
    pub fn open(cfg: &ServiceConfig, backend: Arc<dyn CompletionBackend>) -> Result<Self, String> {
        let resources = Resources::load(cfg)?;
        let sessions_dir = cfg.sessions_dir();
        std::fs::create_dir_all(&sessions_dir).map_err(|e| format!("{}: {e}", sessions_dir.display()))?;
        let mgr = Self {
            resources,
            backend,
            agent: AgentConfig::default(),
            clock: cfg.fixed_clock()?,
            sessions_dir,
            sessions: RwLock::new(HashMap::new()),
        };
        mgr.reload()?;
        Ok(mgr)
    }

    pub fn artifacts(&self) -> &Arc<ArtifactStore> {
        &self.resources.artifacts
    }

    fn reload(&self) -> Result<(), String> {
        let entries = std::fs::read_dir(&self.sessions_dir).map_err(|e| e.to_string())?;
        let mut map = self.sessions.write().expect("session map poisoned");
        for entry in entries {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                continue;
            }
            match self.read_log(&path) {
                Ok(Some(s)) => {
                    map.insert(s.id.clone(), Arc::new(s));
                }
                Ok(None) => {}
                Err(e) => tracing::warn!("skipping session log {}: {e}", path.display()),
            }
        }
        Ok(())
    }

    fn read_log(&self, path: &Path) -> Result<Option<Session>, String> {
        let file = std::fs::File::open(path).map_err(|e| e.to_string())?;
        let mut header = None;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<LogLine>(&line) {
                Ok(LogLine::Session { session_id, bot_kind, .. }) => header = Some((session_id, bot_kind)),
                Ok(LogLine::Turn(r)) => records.push(r),
                Err(e) => tracing::warn!("{} line {}: {e}", path.display(), i + 1),
            }
        }
        let Some((id, kind)) = header else {
            return Ok(None);
        };
        let session = self.build(id, kind, records)?;
        Ok(Some(session))
    }

    fn build(&self, id: String, kind: BotKind, records: Vec<TurnRecord>) -> Result<Session, String> {
        let network_path = match &self.resources.network_template {
            Some(template) => {
                let copy = self.sessions_dir.join(format!("{id}.network.json"));
                if !copy.exists() {
                    std::fs::copy(template, &copy).map_err(|e| format!("{}: {e}", template.display()))?;
                }
                Some(copy)
            }
            None => None,
        };
        let mut ctx = ToolContext::new(self.now(), self.resources.artifacts.clone());
        ctx.dataset = self.resources.dataset.clone();
        ctx.geometry = self.resources.geometry.clone();
        ctx.network_path = network_path.clone();
        let mut history = DialogueHistory::default();
        for t in records.iter().filter_map(TurnRecord::dialogue_turn) {
            history.push(t);
        }
        let turn = records.last().map_or(0, |r| r.turn);
        let frames = records.last().map(|r| r.frames.clone()).unwrap_or_default();
        let (tx, _) = broadcast::channel(CHANNEL_CAPACITY);
        Ok(Session {
            log_path: self.sessions_dir.join(format!("{id}.jsonl")),
            id,
            kind,
            network_path,
            inner: Mutex::new(Inner {
                history,
                records,
                ctx: Some(ctx),
                running: false,
                turn,
                frames,
                deleted: false,
            }),
            tx,
        })
    }

    fn now(&self) -> NaiveDateTime {
        self.clock.unwrap_or_else(|| Local::now().naive_local())
    }

    pub fn create(&self, bot_kind: &str) -> Result<Arc<Session>, ServiceError> {
        let kind: BotKind = bot_kind
            .parse()
            .map_err(|_| ServiceError::UnknownBotKind(bot_kind.to_string()))?;
        let id = format!("s{}", uuid::Uuid::new_v4().simple());
        let session = Arc::new(self.build(id.clone(), kind, Vec::new()).map_err(ServiceError::Storage)?);
        let header = LogLine::Session {
            session_id: id.clone(),
            bot_kind: kind,
            created_at: Utc::now(),
        };
        append_line(&session.log_path, &header).map_err(storage)?;
        self.sessions.write().expect("session map poisoned").insert(id, session.clone());
        Ok(session)
    }

    pub fn get(&self, id: &str) -> Result<Arc<Session>, ServiceError> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("session map poisoned").keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Removes the session and its files. A running turn finishes but is not persisted.
    pub fn delete(&self, id: &str) -> Result<(), ServiceError> {
        let session = self
            .sessions
            .write()
            .expect("session map poisoned")
            .remove(id)
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))?;
        session.lock().deleted = true;
        let _ = std::fs::remove_file(&session.log_path);
        if let Some(p) = &session.network_path {
            let _ = std::fs::remove_file(p);
        }
        Ok(())
    }

    pub fn tools(&self, id: &str) -> Result<Vec<ToolDescriptor>, ServiceError> {
        let session = self.get(id)?;
        Ok(registry_for(session.kind).descriptors().into_iter().cloned().collect())
    }

    /// Starts a turn on a background thread and returns its number.
    pub fn post(self: &Arc<Self>, id: &str, text: &str) -> Result<u64, ServiceError> {
        let text = text.trim().to_string();
        if text.is_empty() {
            return Err(ServiceError::EmptyMessage);
        }
        let session = self.get(id)?;
        let (turn, mut ctx, history) = {
            let mut inner = session.lock();
            if inner.running {
                return Err(ServiceError::SessionBusy(id.to_string()));
            }
            let ctx = inner.ctx.take().ok_or_else(|| ServiceError::SessionBusy(id.to_string()))?;
            inner.running = true;
            inner.turn += 1;
            inner.frames.clear();
            (inner.turn, ctx, inner.history.clone())
        };
        let mgr = self.clone();
        std::thread::Builder::new()
            .name(format!("turn-{id}-{turn}"))
            .spawn(move || {
                ctx.clock = mgr.now();
                mgr.execute(&session, turn, ctx, &history, text);
            })
            .map_err(storage)?;
        Ok(turn)
    }

    fn execute(&self, session: &Session, turn: u64, mut ctx: ToolContext, history: &DialogueHistory, text: String) {
        let started_at = Utc::now();
        let store = self.resources.artifacts.clone();
        let mut builder = FrameBuilder::new(turn, &store);
        let reg = registry_for(session.kind);
        let result = std::panic::catch_unwind(AssertUnwindSafe(|| {
            run_turn(&self.agent, self.backend.as_ref(), &reg, &mut ctx, history, &text, &mut |ev| {
                session.publish(builder.event(ev))
            })
        }));
        let (terminal, record) = match result {
            Ok(Ok(out)) => (
                builder.outcome(&out),
                TurnRecord {
                    turn,
                    user_text: text,
                    final_text: out.final_text.clone(),
                    needs_input: out.needs_human_input,
                    error: None,
                    artifact_ids: out.artifacts.clone(),
                    frames: Vec::new(),
                    started_at,
                    finished_at: Utc::now(),
                },
            ),
            Ok(Err(e)) => (builder.error(&e), failed(turn, text, e.to_string(), started_at)),
            Err(_) => {
                let msg = "internal error while running the turn";
                (builder.internal_error(msg), failed(turn, text, msg.into(), started_at))
            }
        };

        let mut inner = session.lock();
        let mut record = record;
        record.frames = inner.frames.clone();
        record.frames.push(terminal.clone());
        if !inner.deleted {
            if let Err(e) = append_line(&session.log_path, &LogLine::Turn(record.clone())) {
                tracing::error!("persisting turn {turn} of {}: {e}", session.id);
            }
        }
        if let Some(t) = record.dialogue_turn() {
            inner.history.push(t);
        }
        inner.records.push(record);
        inner.ctx = Some(ctx);
        inner.frames.push(terminal.clone());
        inner.running = false;
        let _ = session.tx.send(terminal);
    }
}

fn failed(turn: u64, user_text: String, error: String, started_at: DateTime<Utc>) -> TurnRecord {
    TurnRecord {
        turn,
        user_text,
        final_text: String::new(),
        needs_input: false,
        error: Some(error),
        artifact_ids: Vec::new(),
        frames: Vec::new(),
        started_at,
        finished_at: Utc::now(),
    }
}

fn append_line<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut line = serde_json::to_string(value).map_err(std::io::Error::other)?;
    line.push('\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(line.as_bytes())?;
    f.sync_data()
}
