//! Session service for the traffic-operations agent.
//!
//! - [`session`]: sessions, background turns, frame buffers, JSONL logs
//! - [`api`]: axum routes (`/api/...`) including the WebSocket stream
//! - [`frames`]: the stream frame format
//! - [`config`]: TOML/env settings and backend selection
//! - [`commands`]: the `trafficops` command implementations

pub mod api;
pub mod commands;
pub mod config;
pub mod frames;
pub mod session;

use std::net::SocketAddr;
use std::sync::Arc;

use config::ServiceConfig;
use session::SessionManager;

/// Builds the session manager and router for `cfg`.
pub fn app(cfg: &ServiceConfig) -> Result<(Arc<SessionManager>, axum::Router), String> {
    let sessions = Arc::new(SessionManager::open(cfg, cfg.backend()?)?);
    let router = api::router(api::AppState {
        sessions: sessions.clone(),
        token: cfg.token.clone(),
    });
    Ok((sessions, router))
}

/// Serves until ctrl-c.
pub async fn serve(cfg: ServiceConfig) -> Result<(), String> {
    let (_, router) = app(&cfg)?;
    let listener = tokio::net::TcpListener::bind(&cfg.listen)
        .await
        .map_err(|e| format!("{}: {e}", cfg.listen))?;
    let addr: SocketAddr = listener.local_addr().map_err(|e| e.to_string())?;
    tracing::info!("listening on http://{addr}");
    axum::serve(listener, router)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| e.to_string())
}
