//! Service settings: TOML file, then environment, then command-line flags.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::NaiveDateTime;
use serde::Deserialize;
use trafficops_agent::llm::{
    CompletionBackend, CompletionRequest, HttpBackend, HttpBackendConfig, LlmError, ScriptFixture, ScriptedBackend,
};
use trafficops_agent::registry::parse_timestamp;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    pub base_url: Option<String>,
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub timeout_s: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    /// Session logs and per-session network copies live under `sessions/`.
    pub data_dir: PathBuf,
    /// Defaults to `<data_dir>/artifacts`.
    pub artifact_dir: Option<PathBuf>,
    pub trips: Option<PathBuf>,
    pub zones: Option<PathBuf>,
    pub geometry: Option<PathBuf>,
    /// Template network copied into each new session.
    pub network: Option<PathBuf>,
    /// Scripted replies instead of a live model (test mode).
    pub fixture: Option<PathBuf>,
    /// Fixed `YYYY-MM-DD HH:MM:SS` clock for reproducible runs.
    pub clock: Option<String>,
    /// Shared bearer token required on every API request when set.
    pub token: Option<String>,
    pub llm: LlmSettings,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: DEFAULT_LISTEN.into(),
            data_dir: PathBuf::from("data"),
            artifact_dir: None,
            trips: None,
            zones: None,
            geometry: None,
            network: None,
            fixture: None,
            clock: None,
            token: None,
            llm: LlmSettings::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, String> {
        toml::from_str(s).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Applies `TRAFFICOPS_*` and `LLM_*` overrides. Empty values are ignored.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        let get = |k: &str| lookup(k).filter(|v| !v.is_empty());
        let path = |k: &str| get(k).map(PathBuf::from);
        if let Some(v) = get("TRAFFICOPS_LISTEN") {
            self.listen = v;
        }
        if let Some(v) = path("TRAFFICOPS_DATA_DIR") {
            self.data_dir = v;
        }
        set(&mut self.artifact_dir, path("TRAFFICOPS_ARTIFACT_DIR"));
        set(&mut self.trips, path("TRAFFICOPS_TRIPS"));
        set(&mut self.zones, path("TRAFFICOPS_ZONES"));
        set(&mut self.geometry, path("TRAFFICOPS_GEOMETRY"));
        set(&mut self.network, path("TRAFFICOPS_NETWORK"));
        set(&mut self.fixture, path("TRAFFICOPS_FIXTURE"));
        set(&mut self.clock, get("TRAFFICOPS_CLOCK"));
        set(&mut self.token, get("TRAFFICOPS_TOKEN"));
        set(&mut self.llm.base_url, get("LLM_BASE_URL"));
        set(&mut self.llm.api_key, get("LLM_API_KEY"));
        set(&mut self.llm.model, get("LLM_MODEL"));
    }

    pub fn artifact_dir(&self) -> PathBuf {
        self.artifact_dir.clone().unwrap_or_else(|| self.data_dir.join("artifacts"))
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.data_dir.join("sessions")
    }

    pub fn fixed_clock(&self) -> Result<Option<NaiveDateTime>, String> {
        self.clock
            .as_deref()
            .map(|c| parse_timestamp(c).ok_or_else(|| format!("clock `{c}` is not YYYY-MM-DD HH:MM:SS")))
            .transpose()
    }

    /// Fixture backend when a fixture is configured, else the HTTP client, else
    /// a backend that reports the missing configuration on every call.
    pub fn backend(&self) -> Result<Arc<dyn CompletionBackend>, String> {
        if let Some(path) = &self.fixture {
            return Ok(Arc::new(ScriptedBackend::new(ScriptFixture::load(path)?)));
        }
        let Some(base) = &self.llm.base_url else {
            return Ok(Arc::new(Unconfigured));
        };
        let mut cfg = HttpBackendConfig::new(base, self.llm.model.as_deref().unwrap_or("gpt-3.5-turbo"));
        cfg.api_key = self.llm.api_key.clone();
        if let Some(t) = self.llm.timeout_s {
            cfg.timeout = Duration::from_secs(t);
        }
        Ok(Arc::new(HttpBackend::new(cfg)))
    }
}

fn set<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

struct Unconfigured;

impl CompletionBackend for Unconfigured {
    fn complete(&self, _: &CompletionRequest) -> Result<String, LlmError> {
        Err(LlmError::Unavailable(
            "no language model configured: set LLM_BASE_URL or a fixture".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn toml_then_env() {
        let mut cfg = ServiceConfig::from_toml_str(
            "listen = \"0.0.0.0:9000\"\ndata_dir = \"/srv/t\"\n[llm]\nmodel = \"m1\"\n",
        )
        .unwrap();
        assert_eq!(cfg.listen, "0.0.0.0:9000");
        assert_eq!(cfg.artifact_dir(), PathBuf::from("/srv/t/artifacts"));
        let env: HashMap<&str, &str> = [("LLM_MODEL", "m2"), ("TRAFFICOPS_LISTEN", ""), ("TRAFFICOPS_TOKEN", "s3")].into();
        cfg.apply_env(|k| env.get(k).map(|v| v.to_string()));
        assert_eq!(cfg.llm.model.as_deref(), Some("m2"));
        assert_eq!(cfg.listen, "0.0.0.0:9000");
        assert_eq!(cfg.token.as_deref(), Some("s3"));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ServiceConfig::from_toml_str("lisen = \"x\"").is_err());
    }

    #[test]
    fn bad_clock_rejected() {
        let cfg = ServiceConfig {
            clock: Some("yesterday".into()),
            ..Default::default()
        };
        assert!(cfg.fixed_clock().is_err());
    }

    #[test]
    fn unconfigured_backend_reports_itself() {
        let b = ServiceConfig::default().backend().unwrap();
        let req = CompletionRequest::new(vec![]);
        assert!(matches!(b.complete(&req), Err(LlmError::Unavailable(m)) if m.contains("LLM_BASE_URL")));
    }
}
