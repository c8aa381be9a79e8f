//! Tool descriptors, input validation, prompt rendering and dispatch.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Mutex;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use trafficops_core::trips::TimeWindow;

pub const TIMESTAMP_HINT: &str = "YYYY-MM-DD HH:MM:SS";
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";
pub const WINDOW_HINT: &str = "YYYY-MM-DD HH:MM:SS/YYYY-MM-DD HH:MM:SS";
/// Timestamp keyword resolved to the context clock.
pub const NOW: &str = "now";
/// Window keyword resolved to the hour ending at the context clock.
pub const LAST_HOUR: &str = "last_hour";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgKind {
    Timestamp,
    TimeWindow,
    NodeId,
    RoadId,
    Integer,
    Number,
    String,
}

impl ArgKind {
    pub fn label(self) -> &'static str {
        match self {
            ArgKind::Timestamp => "timestamp",
            ArgKind::TimeWindow => "time window",
            ArgKind::NodeId => "node id",
            ArgKind::RoadId => "road id",
            ArgKind::Integer => "integer",
            ArgKind::Number => "number",
            ArgKind::String => "string",
        }
    }

    fn default_hint(self) -> &'static str {
        match self {
            ArgKind::Timestamp => TIMESTAMP_HINT,
            ArgKind::TimeWindow => WINDOW_HINT,
            ArgKind::NodeId => "intersection id, e.g. J2",
            ArgKind::RoadId => "road id",
            ArgKind::Integer => "whole number",
            ArgKind::Number => "decimal number",
            ArgKind::String => "text",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgSpec {
    pub arg_name: String,
    pub kind: ArgKind,
    pub required: bool,
    pub default: Option<String>,
    pub format_hint: String,
}

impl ArgSpec {
    pub fn required(name: &str, kind: ArgKind) -> Self {
        Self {
            arg_name: name.to_string(),
            kind,
            required: true,
            default: None,
            format_hint: kind.default_hint().to_string(),
        }
    }

    pub fn optional(name: &str, kind: ArgKind, default: &str) -> Self {
        Self {
            arg_name: name.to_string(),
            kind,
            required: false,
            default: Some(default.to_string()),
            format_hint: kind.default_hint().to_string(),
        }
    }

    pub fn hint(mut self, hint: &str) -> Self {
        self.format_hint = hint.to_string();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    pub usage: String,
    pub input_spec: Vec<ArgSpec>,
    pub output_desc: String,
    pub priority: i32,
}

impl ToolDescriptor {
    pub fn new(name: &str, usage: &str, output_desc: &str) -> Self {
        Self {
            name: name.to_string(),
            usage: usage.to_string(),
            input_spec: Vec::new(),
            output_desc: output_desc.to_string(),
            priority: 0,
        }
    }

    pub fn arg(mut self, spec: ArgSpec) -> Self {
        self.input_spec.push(spec);
        self
    }

    pub fn priority(mut self, p: i32) -> Self {
        self.priority = p;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub text: String,
    pub artifacts: Vec<String>,
    pub is_error: bool,
}

impl Observation {
    pub fn ok(text: impl Into<String>) -> Self {
        Self::build(text.into(), false)
    }

    pub fn error(text: impl Into<String>) -> Self {
        Self::build(text.into(), true)
    }

    fn build(text: String, is_error: bool) -> Self {
        let text = if text.trim().is_empty() { "(no output)".to_string() } else { text };
        Self {
            text,
            artifacts: Vec::new(),
            is_error,
        }
    }

    pub fn with_artifact(mut self, id: impl Into<String>) -> Self {
        self.artifacts.push(id.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArgValue {
    Timestamp(NaiveDateTime),
    Window(TimeWindow),
    Id(String),
    Integer(i64),
    Number(f64),
    Text(String),
}

/// Validated arguments, every declared arg present.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Args(BTreeMap<String, ArgValue>);

impl Args {
    pub fn get(&self, name: &str) -> Option<&ArgValue> {
        self.0.get(name)
    }

    pub fn timestamp(&self, name: &str) -> Result<NaiveDateTime, String> {
        match self.0.get(name) {
            Some(ArgValue::Timestamp(t)) => Ok(*t),
            _ => Err(format!("argument {name} is not a timestamp")),
        }
    }

    pub fn window(&self, name: &str) -> Result<TimeWindow, String> {
        match self.0.get(name) {
            Some(ArgValue::Window(w)) => Ok(*w),
            _ => Err(format!("argument {name} is not a time window")),
        }
    }

    pub fn integer(&self, name: &str) -> Result<i64, String> {
        match self.0.get(name) {
            Some(ArgValue::Integer(v)) => Ok(*v),
            _ => Err(format!("argument {name} is not an integer")),
        }
    }

    pub fn number(&self, name: &str) -> Result<f64, String> {
        match self.0.get(name) {
            Some(ArgValue::Number(v)) => Ok(*v),
            _ => Err(format!("argument {name} is not a number")),
        }
    }

    pub fn text(&self, name: &str) -> Result<&str, String> {
        match self.0.get(name) {
            Some(ArgValue::Id(s) | ArgValue::Text(s)) => Ok(s),
            _ => Err(format!("argument {name} is not text")),
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct ValidationFailure {
    pub arg: Option<String>,
    pub message: String,
}

impl ValidationFailure {
    fn new(arg: Option<&str>, message: String) -> Self {
        Self {
            arg: arg.map(str::to_string),
            message,
        }
    }
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    for q in ['"', '\'', '`'] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            return s[1..s.len() - 1].trim();
        }
    }
    s
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT).ok()
}

pub fn format_timestamp(t: NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

pub fn format_window(w: &TimeWindow) -> String {
    format!("{}/{}", format_timestamp(w.start()), format_timestamp(w.end()))
}

fn parse_value(spec: &ArgSpec, raw: &str, clock: NaiveDateTime) -> Result<ArgValue, ValidationFailure> {
    let name = spec.arg_name.as_str();
    let bad = |why: &str| {
        ValidationFailure::new(
            Some(name),
            format!(
                "Invalid value for `{name}`: got `{raw}`{why}. Expected format: {}.",
                spec.format_hint
            ),
        )
    };
    match spec.kind {
        ArgKind::Timestamp => {
            if raw == NOW {
                return Ok(ArgValue::Timestamp(clock));
            }
            parse_timestamp(raw).map(ArgValue::Timestamp).ok_or_else(|| bad(""))
        }
        ArgKind::TimeWindow => {
            if raw == LAST_HOUR {
                return Ok(ArgValue::Window(TimeWindow::hour_ending(clock)));
            }
            let (a, b) = raw.split_once('/').ok_or_else(|| bad(""))?;
            let (a, b) = (parse_timestamp(a).ok_or_else(|| bad(""))?, parse_timestamp(b).ok_or_else(|| bad(""))?);
            TimeWindow::new(a, b)
                .map(ArgValue::Window)
                .map_err(|_| bad(" (start must be before end)"))
        }
        ArgKind::NodeId | ArgKind::RoadId => {
            if raw.is_empty() || raw.chars().any(char::is_whitespace) {
                Err(bad(" (ids contain no spaces)"))
            } else {
                Ok(ArgValue::Id(raw.to_string()))
            }
        }
        ArgKind::Integer => raw.parse().map(ArgValue::Integer).map_err(|_| bad("")),
        ArgKind::Number => raw
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(ArgValue::Number)
            .ok_or_else(|| bad("")),
        ArgKind::String => Ok(ArgValue::Text(raw.to_string())),
    }
}

fn missing(spec: &ArgSpec) -> ValidationFailure {
    let name = &spec.arg_name;
    ValidationFailure::new(
        Some(name),
        format!(
            "Missing required input `{name}` ({}; format: {}). Do not guess a value: if the user has not \
             given it, stop and ask them for it with `Ask Human:`.",
            spec.kind.label(),
            spec.format_hint
        ),
    )
}

/// Parses raw model input against `desc`.
///
/// A tool with exactly one argument takes a bare value (`name=value` also
/// works); otherwise the input is `key=value` pairs separated by `;`.
/// Omitted optional arguments take their defaults. `now` and `last_hour`
/// resolve against `clock`.
pub fn validate_input(desc: &ToolDescriptor, raw: &str, clock: NaiveDateTime) -> Result<Args, ValidationFailure> {
    let raw = unquote(raw);
    let mut given: BTreeMap<&str, &str> = BTreeMap::new();
    match desc.input_spec.as_slice() {
        [] => {}
        [only] => {
            let prefix = format!("{}=", only.arg_name);
            let value = raw.strip_prefix(prefix.as_str()).unwrap_or(raw);
            let value = unquote(value);
            if !value.is_empty() {
                given.insert(&only.arg_name, value);
            }
        }
        specs => {
            for part in raw.split(';').map(str::trim).filter(|p| !p.is_empty()) {
                let (k, v) = part.split_once('=').ok_or_else(|| {
                    ValidationFailure::new(
                        None,
                        format!(
                            "Could not read `{part}`: {} takes key=value pairs separated by ';' (arguments: {}).",
                            desc.name,
                            specs.iter().map(|s| s.arg_name.as_str()).collect::<Vec<_>>().join(", ")
                        ),
                    )
                })?;
                let k = k.trim();
                let Some(spec) = specs.iter().find(|s| s.arg_name == k) else {
                    return Err(ValidationFailure::new(
                        Some(k),
                        format!(
                            "Unknown argument `{k}` for {}. Arguments: {}.",
                            desc.name,
                            specs.iter().map(|s| s.arg_name.as_str()).collect::<Vec<_>>().join(", ")
                        ),
                    ));
                };
                if given.insert(&spec.arg_name, unquote(v)).is_some() {
                    return Err(ValidationFailure::new(Some(k), format!("Argument `{k}` given more than once.")));
                }
            }
        }
    }

    let mut out = BTreeMap::new();
    for spec in &desc.input_spec {
        let value = match (given.get(spec.arg_name.as_str()), &spec.default) {
            (Some(v), _) if !v.is_empty() => *v,
            (_, Some(d)) => d.as_str(),
            (_, None) => return Err(missing(spec)),
        };
        out.insert(spec.arg_name.clone(), parse_value(spec, value, clock)?);
    }
    Ok(Args(out))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("tool {0} is already registered")]
    DuplicateName(String),
    #[error("invalid descriptor for {name}: {reason}")]
    InvalidDescriptor { name: String, reason: String },
    #[error("no tools registered")]
    EmptyRegistry,
}

/// Gives validation access to the reference clock for `now`/`last_hour`.
pub trait Clocked {
    fn clock(&self) -> NaiveDateTime;
}

pub type Handler<C> = Box<dyn Fn(&Args, &mut C) -> Result<Observation, String> + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchRecord {
    pub name: String,
    pub raw: String,
    pub observation: Observation,
}

pub struct ToolRegistry<C> {
    tools: Vec<(ToolDescriptor, Handler<C>)>,
    index: HashMap<String, usize>,
    log: Option<Mutex<Vec<DispatchRecord>>>,
}

impl<C> Default for ToolRegistry<C> {
    fn default() -> Self {
        Self {
            tools: Vec::new(),
            index: HashMap::new(),
            log: None,
        }
    }
}

impl<C: Clocked> ToolRegistry<C> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records every dispatch from now on; see [`ToolRegistry::dispatch_log`].
    pub fn with_call_log(mut self) -> Self {
        self.log = Some(Mutex::new(Vec::new()));
        self
    }

    pub fn register<F>(&mut self, desc: ToolDescriptor, handler: F) -> Result<(), RegistryError>
    where
        F: Fn(&Args, &mut C) -> Result<Observation, String> + Send + Sync + 'static,
    {
        check_descriptor(&desc)?;
        if self.index.contains_key(&desc.name) {
            return Err(RegistryError::DuplicateName(desc.name));
        }
        self.index.insert(desc.name.clone(), self.tools.len());
        self.tools.push((desc, Box::new(handler)));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&ToolDescriptor> {
        self.index.get(name).map(|&i| &self.tools[i].0)
    }

    /// Descriptors ordered by priority descending, then name.
    pub fn descriptors(&self) -> Vec<&ToolDescriptor> {
        let mut d: Vec<&ToolDescriptor> = self.tools.iter().map(|(d, _)| d).collect();
        d.sort_by(|a, b| b.priority.cmp(&a.priority).then_with(|| a.name.cmp(&b.name)));
        d
    }

    pub fn names(&self) -> Vec<&str> {
        self.descriptors().into_iter().map(|d| d.name.as_str()).collect()
    }

    pub fn render_tool_prompt(&self) -> Result<String, RegistryError> {
        if self.tools.is_empty() {
            return Err(RegistryError::EmptyRegistry);
        }
        let blocks: Vec<String> = self.descriptors().into_iter().map(render_descriptor).collect();
        Ok(blocks.join("\n"))
    }

    /// Never panics: unknown names, bad input and handler failures (including
    /// panics) all come back as error observations.
    pub fn dispatch(&self, name: &str, raw: &str, ctx: &mut C) -> Observation {
        let obs = self.dispatch_inner(name, raw, ctx);
        if let Some(log) = &self.log {
            log.lock().unwrap_or_else(|p| p.into_inner()).push(DispatchRecord {
                name: name.to_string(),
                raw: raw.to_string(),
                observation: obs.clone(),
            });
        }
        obs
    }

    fn dispatch_inner(&self, name: &str, raw: &str, ctx: &mut C) -> Observation {
        let Some(&i) = self.index.get(name) else {
            return Observation::error(format!(
                "Tool `{name}` does not exist. Available tools: {}. Use one of these names exactly.",
                self.names().join(", ")
            ));
        };
        let (desc, handler) = &self.tools[i];
        let args = match validate_input(desc, raw, ctx.clock()) {
            Ok(a) => a,
            Err(f) => return Observation::error(f.message),
        };
        match catch_unwind(AssertUnwindSafe(|| handler(&args, ctx))) {
            Ok(Ok(obs)) => obs,
            Ok(Err(msg)) => Observation::error(format!("{name} failed: {msg}")),
            Err(_) => Observation::error(format!("{name} failed with an internal error.")),
        }
    }

    pub fn dispatch_log(&self) -> Vec<DispatchRecord> {
        self.log
            .as_ref()
            .map(|l| l.lock().unwrap_or_else(|p| p.into_inner()).clone())
            .unwrap_or_default()
    }
}

fn check_descriptor(d: &ToolDescriptor) -> Result<(), RegistryError> {
    let invalid = |reason: String| RegistryError::InvalidDescriptor {
        name: d.name.clone(),
        reason,
    };
    if d.name.is_empty() || d.name.chars().any(char::is_whitespace) {
        return Err(invalid("name must be non-empty without whitespace".into()));
    }
    let mut seen = BTreeSet::new();
    for a in &d.input_spec {
        if !seen.insert(a.arg_name.as_str()) {
            return Err(invalid(format!("argument {} declared twice", a.arg_name)));
        }
        if a.required && a.default.is_some() {
            return Err(invalid(format!("required argument {} has a default", a.arg_name)));
        }
        if !a.required && a.default.is_none() {
            return Err(invalid(format!("optional argument {} needs a default", a.arg_name)));
        }
        if a.kind == ArgKind::Timestamp && a.format_hint != TIMESTAMP_HINT {
            return Err(invalid(format!("timestamp argument {} must use hint {TIMESTAMP_HINT}", a.arg_name)));
        }
        if let Some(def) = &a.default {
            let probe = chrono::NaiveDate::from_ymd_opt(2000, 1, 1)
                .and_then(|d| d.and_hms_opt(12, 0, 0))
                .expect("valid probe time");
            parse_value(a, def, probe).map_err(|e| invalid(format!("default rejected: {}", e.message)))?;
        }
    }
    Ok(())
}

fn render_descriptor(d: &ToolDescriptor) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Tool: {}", d.name);
    if d.priority > 0 {
        let _ = writeln!(out, "Priority: {} (prefer this tool for its task)", d.priority);
    }
    let _ = writeln!(out, "Usage: {}", d.usage);
    match d.input_spec.len() {
        0 => out.push_str("Input: none (leave Action Input empty)\n"),
        1 => out.push_str("Input (give the value directly):\n"),
        _ => out.push_str("Input (key=value pairs separated by ';'):\n"),
    }
    for a in &d.input_spec {
        let _ = write!(out, "  - {} ({}, ", a.arg_name, a.kind.label());
        match &a.default {
            Some(def) => {
                let _ = write!(out, "optional, default: {def}");
                if def == NOW {
                    out.push_str(" = the current time");
                } else if def == LAST_HOUR {
                    out.push_str(" = the hour ending at the current time");
                }
            }
            None => out.push_str("required"),
        }
        let _ = writeln!(out, "): {}", a.format_hint);
    }
    let _ = writeln!(out, "Output: {}", d.output_desc);
    out
}
