#![allow(dead_code)]

use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::Value;
use tempfile::TempDir;
use trafficops_agent::llm::{CompletionBackend, CompletionRequest, LlmError, ScriptedBackend};
use trafficops_core::fixtures;
use trafficops_service::api::{router, AppState};
use trafficops_service::commands::gen_data;
use trafficops_service::config::ServiceConfig;
use trafficops_service::frames::EventFrame;
use trafficops_service::session::SessionManager;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

pub const CLOCK: &str = "2019-08-13 08:00:00";

/// Data directory with synthetic trips, their geometry and the starved corridor.
pub fn workspace() -> (TempDir, ServiceConfig) {
    let dir = tempfile::tempdir().unwrap();
    let trips = dir.path().join("trips.csv");
    gen_data(3000, 9, 7, &trips).unwrap();
    let net = dir.path().join("network.json");
    fixtures::starved_corridor().save_atomic(&net).unwrap();
    let cfg = ServiceConfig {
        data_dir: dir.path().join("data"),
        trips: Some(trips.clone()),
        zones: Some(trips.with_extension("zones.csv")),
        geometry: Some(trips.with_extension("geometry.json")),
        network: Some(net),
        clock: Some(CLOCK.into()),
        ..Default::default()
    };
    (dir, cfg)
}

/// Holds each model call until the test releases it.
pub struct Gated {
    inner: ScriptedBackend,
    permits: Mutex<Receiver<()>>,
}

impl Gated {
    pub fn new(responses: &[&str]) -> (Arc<Self>, Sender<()>) {
        let (tx, rx) = channel();
        let g = Arc::new(Self {
            inner: ScriptedBackend::from_responses(responses.iter().copied()),
            permits: Mutex::new(rx),
        });
        (g, tx)
    }
}

impl CompletionBackend for Gated {
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        self.permits
            .lock()
            .unwrap()
            .recv_timeout(Duration::from_secs(20))
            .map_err(|_| LlmError::Unavailable("gate closed".into()))?;
        self.inner.complete(req)
    }
}

pub struct Server {
    pub base: String,
    pub sessions: Arc<SessionManager>,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

pub fn start(cfg: &ServiceConfig, backend: Arc<dyn CompletionBackend>) -> Server {
    let sessions = Arc::new(SessionManager::open(cfg, backend).unwrap());
    let app = router(AppState {
        sessions: sessions.clone(),
        token: cfg.token.clone(),
    });
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
                .unwrap();
        });
    });
    Server {
        base,
        sessions,
        stop: Some(tx),
        thread: Some(thread),
    }
}

pub fn scripted(responses: &[&str]) -> Arc<ScriptedBackend> {
    Arc::new(ScriptedBackend::from_responses(responses.iter().copied()))
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(20)))
        .build()
        .into()
}

fn json_of(mut resp: ureq::http::Response<ureq::Body>) -> (u16, Value) {
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap_or_default();
    (status, serde_json::from_str(&text).unwrap_or(Value::Null))
}

impl Server {
    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub fn post(&self, path: &str, body: Value) -> (u16, Value) {
        json_of(agent().post(self.url(path)).send_json(&body).unwrap())
    }

    pub fn post_auth(&self, path: &str, body: Value, token: &str) -> (u16, Value) {
        json_of(
            agent()
                .post(self.url(path))
                .header("Authorization", format!("Bearer {token}"))
                .send_json(&body)
                .unwrap(),
        )
    }

    pub fn get(&self, path: &str) -> (u16, Value) {
        json_of(agent().get(self.url(path)).call().unwrap())
    }

    pub fn delete(&self, path: &str) -> u16 {
        agent().delete(self.url(path)).call().unwrap().status().as_u16()
    }

    /// Status, content type and body bytes.
    pub fn get_bytes(&self, path: &str) -> (u16, String, Vec<u8>) {
        let mut resp = agent().get(self.url(path)).call().unwrap();
        let ct = resp
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .unwrap_or_default()
            .to_string();
        let status = resp.status().as_u16();
        (status, ct, resp.body_mut().read_to_vec().unwrap())
    }

    pub fn session(&self, kind: &str) -> String {
        let (status, body) = self.post("/api/sessions", serde_json::json!({ "bot_kind": kind }));
        assert_eq!(status, 201, "{body}");
        body["session_id"].as_str().unwrap().to_string()
    }

    pub fn say(&self, session: &str, text: &str) -> u64 {
        let (status, body) = self.post(
            &format!("/api/sessions/{session}/messages"),
            serde_json::json!({ "text": text }),
        );
        assert_eq!(status, 202, "{body}");
        body["turn"].as_u64().unwrap()
    }

    pub fn connect(&self, session: &str) -> Stream {
        self.connect_path(&format!("/api/sessions/{session}/stream"))
    }

    pub fn connect_path(&self, path: &str) -> Stream {
        let url = format!("{}{path}", self.base.replacen("http", "ws", 1));
        let (ws, _) = tungstenite::connect(url).unwrap();
        if let MaybeTlsStream::Plain(s) = ws.get_ref() {
            s.set_read_timeout(Some(Duration::from_secs(20))).unwrap();
        }
        Stream { ws }
    }

    /// Posts `text` on a fresh stream and collects that turn's frames.
    pub fn turn(&self, session: &str, text: &str) -> Vec<EventFrame> {
        let mut s = self.connect(session);
        let turn = self.say(session, text);
        s.until_terminal(turn)
    }
}

pub struct Stream {
    pub ws: WebSocket<MaybeTlsStream<TcpStream>>,
}

impl Stream {
    pub fn next(&mut self) -> EventFrame {
        loop {
            match self.ws.read().expect("stream frame") {
                Message::Text(t) => return serde_json::from_str(&t).expect("frame json"),
                Message::Close(_) => panic!("stream closed"),
                _ => {}
            }
        }
    }

    /// Frames of `turn` up to and including its terminal frame.
    pub fn until_terminal(&mut self, turn: u64) -> Vec<EventFrame> {
        let mut out = Vec::new();
        loop {
            let f = self.next();
            if f.turn != turn {
                continue;
            }
            let done = f.kind.is_terminal();
            out.push(f);
            if done {
                return out;
            }
        }
    }
}

pub fn kinds(frames: &[EventFrame]) -> Vec<String> {
    frames
        .iter()
        .map(|f| serde_json::to_value(f.kind).unwrap().as_str().unwrap().to_string())
        .collect()
}

pub fn gapless(frames: &[EventFrame]) -> bool {
    frames.iter().enumerate().all(|(i, f)| f.seq == i as u64 + 1)
        && frames.iter().filter(|f| f.kind.is_terminal()).count() == 1
        && frames.last().is_some_and(|f| f.kind.is_terminal())
}

pub fn network_copy(cfg: &ServiceConfig, session: &str) -> PathBuf {
    cfg.sessions_dir().join(format!("{session}.network.json"))
}

pub fn write_fixture(dir: &Path, name: &str, responses: &[&str]) -> PathBuf {
    let p = dir.join(name);
    let f = trafficops_agent::llm::ScriptFixture::from_responses(responses.iter().copied());
    std::fs::write(&p, serde_json::to_string_pretty(&f).unwrap()).unwrap();
    p
}
