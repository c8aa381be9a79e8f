//! The reasoning loop: prompt assembly, output parsing, guardrails, tool
//! execution and dialogue memory.

use std::collections::VecDeque;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{self, ChatMessage, CompletionBackend, CompletionRequest, LlmError, Role, OBSERVATION_STOP};
use crate::registry::{Clocked, Observation, RegistryError, ToolRegistry};

pub const SYSTEM_PREFIX_V1: &str = include_str!("../resources/system_prefix_v1.txt");
pub const DEFAULT_ITERATION_CAP: usize = 8;
pub const DEFAULT_HISTORY_WINDOW: usize = 10;

const GRAMMAR: &str = "\
Reply in exactly one of these forms, with each marker at the start of a line.

To call a tool:
Thought: <your reasoning>
Action: <tool name>
Action Input: <input as described for the tool>

Then stop. The tool result comes back to you as an Observation.

When you can answer:
Thought: <your reasoning>
Final Answer: <answer for the user>

When you need information only the user can give:
Thought: <your reasoning>
Ask Human: <your question>";

const SCRATCHPAD_HEADER: &str = "Your work so far on this request (continue with the next Thought):";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub thought: String,
    /// Empty for a reply that could not be parsed; `thought` then holds the raw reply.
    pub action: String,
    pub action_input: String,
    pub observation: Observation,
    /// False when a guardrail answered instead of the tool.
    pub executed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub steps: Vec<AgentStep>,
    pub started_at: DateTime<Utc>,
    pub iteration_cap: usize,
}

impl ReasoningTrace {
    pub fn new(iteration_cap: usize) -> Self {
        Self {
            steps: Vec::new(),
            started_at: Utc::now(),
            iteration_cap,
        }
    }

    pub fn executed(&self) -> impl Iterator<Item = &AgentStep> {
        self.steps.iter().filter(|s| s.executed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub user_text: String,
    pub final_answer: String,
    pub artifact_ids: Vec<String>,
    #[serde(default)]
    pub needs_human_input: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueHistory {
    turns: VecDeque<Turn>,
    window: usize,
}

impl Default for DialogueHistory {
    fn default() -> Self {
        Self::new(DEFAULT_HISTORY_WINDOW)
    }
}

impl DialogueHistory {
    pub fn new(window: usize) -> Self {
        Self {
            turns: VecDeque::new(),
            window,
        }
    }

    pub fn turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter()
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn push(&mut self, turn: Turn) {
        self.turns.push_back(turn);
        while self.turns.len() > self.window {
            self.turns.pop_front();
        }
    }
}

/// Appends `turn`, evicting the oldest turns beyond the window.
pub fn remember(mut history: DialogueHistory, turn: Turn) -> DialogueHistory {
    history.push(turn);
    history
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Parsed {
    Act {
        thought: String,
        action: String,
        action_input: String,
    },
    Final {
        thought: String,
        answer: String,
    },
    AskHuman {
        thought: String,
        question: String,
    },
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Marker {
    Thought,
    Action,
    Input,
    Final,
    Ask,
    Observation,
}

const MARKERS: [(&str, Marker); 6] = [
    ("Thought:", Marker::Thought),
    ("Action Input:", Marker::Input),
    ("Action:", Marker::Action),
    ("Final Answer:", Marker::Final),
    ("Ask Human:", Marker::Ask),
    ("Observation:", Marker::Observation),
];

fn marker_at(line: &str) -> Option<(Marker, usize)> {
    MARKERS
        .iter()
        .find(|(m, _)| line.starts_with(m))
        .map(|(m, kind)| (*kind, m.len()))
}

struct Section {
    marker: Marker,
    start: usize,
    body: usize,
}

/// Parses one model reply. Markers count only at the start of a line and are
/// case-sensitive; an `Observation:` line ends the reply.
pub fn parse_llm_output(text: &str) -> Parsed {
    let mut sections: Vec<Section> = Vec::new();
    let mut end = text.len();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if let Some((marker, len)) = marker_at(line) {
            if marker == Marker::Observation {
                end = offset;
                break;
            }
            sections.push(Section {
                marker,
                start: offset,
                body: offset + len,
            });
        }
        offset += line.len();
    }
    let content = |i: usize| -> &str {
        let stop = sections.get(i + 1).map_or(end, |s| s.start);
        text[sections[i].body..stop].trim()
    };
    let thought_before = |limit: usize| -> String {
        let parts: Vec<&str> = (0..limit)
            .filter(|&i| sections[i].marker == Marker::Thought)
            .map(content)
            .collect();
        if parts.is_empty() {
            text[..sections.get(limit).map_or(end, |s| s.start).min(end)].trim().to_string()
        } else {
            parts.join("\n")
        }
    };

    if sections.is_empty() {
        return Parsed::Malformed(if text[..end].trim().is_empty() {
            "empty reply".into()
        } else {
            "no Thought/Action/Final Answer marker found".into()
        });
    }
    let find = |m: Marker| sections.iter().position(|s| s.marker == m);
    let count = |m: Marker| sections.iter().filter(|s| s.marker == m).count();
    let terminal = match (find(Marker::Final), find(Marker::Ask)) {
        (Some(_), Some(_)) => return Parsed::Malformed("both a final answer and a question for the user".into()),
        (Some(i), None) | (None, Some(i)) => Some(i),
        (None, None) => None,
    };
    let has_action = find(Marker::Action).is_some() || find(Marker::Input).is_some();

    if let Some(t) = terminal {
        if has_action {
            return Parsed::Malformed("both action and final answer".into());
        }
        let answer = text[sections[t].body..end].trim().to_string();
        if answer.is_empty() {
            return Parsed::Malformed("empty final answer".into());
        }
        let thought = thought_before(t);
        return match sections[t].marker {
            Marker::Final => Parsed::Final { thought, answer },
            _ => Parsed::AskHuman {
                thought,
                question: answer,
            },
        };
    }
    if !has_action {
        return Parsed::Malformed("a thought without an Action or Final Answer".into());
    }
    if count(Marker::Action) != 1 || count(Marker::Input) != 1 {
        return Parsed::Malformed("expected exactly one Action followed by one Action Input".into());
    }
    let a = find(Marker::Action).expect("counted");
    let i = find(Marker::Input).expect("counted");
    if i != a + 1 {
        return Parsed::Malformed("Action Input must directly follow Action".into());
    }
    if i + 1 != sections.len() {
        return Parsed::Malformed("nothing may follow Action Input".into());
    }
    let action = content(a);
    if action.is_empty() {
        return Parsed::Malformed("empty Action".into());
    }
    if action.contains('\n') {
        return Parsed::Malformed("Action must be a single tool name".into());
    }
    Parsed::Act {
        thought: thought_before(a),
        action: action.to_string(),
        action_input: content(i).to_string(),
    }
}

/// Inverse of [`parse_llm_output`] for well-formed replies.
pub fn render_output(p: &Parsed) -> String {
    match p {
        Parsed::Act {
            thought,
            action,
            action_input,
        } => format!("Thought: {thought}\nAction: {action}\nAction Input: {action_input}"),
        Parsed::Final { thought, answer } => format!("Thought: {thought}\nFinal Answer: {answer}"),
        Parsed::AskHuman { thought, question } => format!("Thought: {thought}\nAsk Human: {question}"),
        Parsed::Malformed(reason) => reason.clone(),
    }
}

pub fn render_step(step: &AgentStep) -> String {
    let head = if step.action.is_empty() {
        step.thought.clone()
    } else {
        render_output(&Parsed::Act {
            thought: step.thought.clone(),
            action: step.action.clone(),
            action_input: step.action_input.clone(),
        })
    };
    format!("{head}\nObservation: {}", step.observation.text)
}

pub fn render_scratchpad(trace: &ReasoningTrace) -> String {
    trace.steps.iter().map(render_step).collect::<Vec<_>>().join("\n")
}

/// System message, prior turns, the current request, then the scratchpad
/// when the turn already has steps.
pub fn assemble_prompt<C: Clocked>(
    system_prefix: &str,
    reg: &ToolRegistry<C>,
    history: &DialogueHistory,
    user_text: &str,
    trace: &ReasoningTrace,
) -> Result<Vec<ChatMessage>, RegistryError> {
    let tools = reg.render_tool_prompt()?;
    let system = format!("{}\n\nAvailable tools:\n\n{}\n{GRAMMAR}", system_prefix.trim_end(), tools);
    let mut msgs = vec![ChatMessage::new(Role::System, system)];
    for t in history.turns() {
        msgs.push(ChatMessage::new(Role::User, t.user_text.clone()));
        msgs.push(ChatMessage::new(Role::Assistant, t.final_answer.clone()));
    }
    msgs.push(ChatMessage::new(Role::User, user_text));
    if !trace.steps.is_empty() {
        msgs.push(ChatMessage::new(
            Role::User,
            format!("{SCRATCHPAD_HEADER}\n\n{}", render_scratchpad(trace)),
        ));
    }
    Ok(msgs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Repetition {
    Ok,
    Warn,
    Abort,
}

/// Looks at the run of identical (action, input) pairs ending the trace:
/// two in a row warns, three aborts.
pub fn check_repetition(steps: &[AgentStep]) -> Repetition {
    let Some(last) = steps.last().filter(|s| !s.action.is_empty()) else {
        return Repetition::Ok;
    };
    let run = steps
        .iter()
        .rev()
        .take_while(|s| s.action == last.action && s.action_input == last.action_input)
        .count();
    match run {
        0 | 1 => Repetition::Ok,
        2 => Repetition::Warn,
        _ => Repetition::Abort,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentEvent {
    Thought { step: usize, text: String },
    Action { step: usize, tool: String, input: String },
    Observation { step: usize, observation: Observation },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnOutcome {
    pub final_text: String,
    pub needs_human_input: bool,
    pub trace: ReasoningTrace,
    pub artifacts: Vec<String>,
}

impl TurnOutcome {
    pub fn to_turn(&self, user_text: &str) -> Turn {
        Turn {
            user_text: user_text.to_string(),
            final_answer: self.final_text.clone(),
            artifact_ids: self.artifacts.clone(),
            needs_human_input: self.needs_human_input,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub system_prefix: String,
    pub iteration_cap: usize,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            system_prefix: SYSTEM_PREFIX_V1.to_string(),
            iteration_cap: DEFAULT_ITERATION_CAP,
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

fn outcome(trace: ReasoningTrace, text: String, needs_human_input: bool) -> TurnOutcome {
    let mut artifacts: Vec<String> = Vec::new();
    for s in trace.executed() {
        for a in &s.observation.artifacts {
            if !artifacts.contains(a) {
                artifacts.push(a.clone());
            }
        }
    }
    TurnOutcome {
        final_text: text,
        needs_human_input,
        trace,
        artifacts,
    }
}

/// Runs one user request to a final answer, a question for the user, or a
/// guardrail stop. Events are emitted in order from the calling thread.
pub fn run_turn<C: Clocked>(
    cfg: &AgentConfig,
    backend: &dyn CompletionBackend,
    reg: &ToolRegistry<C>,
    ctx: &mut C,
    history: &DialogueHistory,
    user_text: &str,
    emit: &mut dyn FnMut(AgentEvent),
) -> Result<TurnOutcome, AgentError> {
    let mut trace = ReasoningTrace::new(cfg.iteration_cap);
    for _ in 0..cfg.iteration_cap {
        let messages = assemble_prompt(&cfg.system_prefix, reg, history, user_text, &trace)?;
        let req = CompletionRequest {
            messages,
            stop: vec![OBSERVATION_STOP.to_string()],
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
        };
        let reply = llm::complete(backend, &req)?;
        let step_no = trace.steps.len() + 1;
        match parse_llm_output(&reply) {
            Parsed::Final { answer, .. } => return Ok(outcome(trace, answer, false)),
            Parsed::AskHuman { question, .. } => return Ok(outcome(trace, question, true)),
            Parsed::Malformed(reason) => {
                let observation = Observation::error(format!(
                    "Could not read your reply: {reason}. Use exactly one of the forms Thought/Action/Action Input, \
                     Thought/Final Answer or Thought/Ask Human."
                ));
                emit(AgentEvent::Thought {
                    step: step_no,
                    text: reply.trim().to_string(),
                });
                emit(AgentEvent::Observation {
                    step: step_no,
                    observation: observation.clone(),
                });
                trace.steps.push(AgentStep {
                    thought: reply.trim().to_string(),
                    action: String::new(),
                    action_input: String::new(),
                    observation,
                    executed: false,
                });
            }
            Parsed::Act {
                thought,
                action,
                action_input,
            } => {
                let mut step = AgentStep {
                    thought,
                    action,
                    action_input,
                    observation: Observation::ok("pending"),
                    executed: false,
                };
                trace.steps.push(step.clone());
                let verdict = check_repetition(&trace.steps);
                trace.steps.pop();
                if verdict == Repetition::Abort {
                    let text = format!(
                        "I stopped because I kept calling {} with the same input (`{}`) without making progress. \
                         Please check the request or tell me how you would like to proceed.",
                        step.action, step.action_input
                    );
                    return Ok(outcome(trace, text, true));
                }
                emit(AgentEvent::Thought {
                    step: step_no,
                    text: step.thought.clone(),
                });
                emit(AgentEvent::Action {
                    step: step_no,
                    tool: step.action.clone(),
                    input: step.action_input.clone(),
                });
                step.observation = if verdict == Repetition::Warn {
                    Observation::error(format!(
                        "You just called {} with this same input and its result is above. Do not repeat the call: \
                         use that result, change the input, or give your Final Answer.",
                        step.action
                    ))
                } else {
                    step.executed = true;
                    reg.dispatch(&step.action, &step.action_input, ctx)
                };
                emit(AgentEvent::Observation {
                    step: step_no,
                    observation: step.observation.clone(),
                });
                trace.steps.push(step);
            }
        }
    }
    let used: Vec<&str> = trace.executed().map(|s| s.action.as_str()).collect();
    let text = format!(
        "I could not finish this request within {} reasoning steps{}. Please give me more specific guidance \
         or tell me how you would like to proceed.",
        cfg.iteration_cap,
        if used.is_empty() {
            String::new()
        } else {
            format!(" (tools used: {})", used.join(", "))
        }
    );
    Ok(outcome(trace, text, true))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn act(a: &str, i: &str) -> AgentStep {
        AgentStep {
            thought: String::new(),
            action: a.into(),
            action_input: i.into(),
            observation: Observation::ok("o"),
            executed: true,
        }
    }

    #[test]
    fn parses_action_with_empty_input() {
        assert_eq!(
            parse_llm_output("Thought: need the time\nAction: GetCurrentTime\nAction Input:"),
            Parsed::Act {
                thought: "need the time".into(),
                action: "GetCurrentTime".into(),
                action_input: String::new()
            }
        );
    }

    #[test]
    fn parses_final_and_ask() {
        assert_eq!(
            parse_llm_output("Thought: done\nFinal Answer: The heatmap is at a1.\nSecond line."),
            Parsed::Final {
                thought: "done".into(),
                answer: "The heatmap is at a1.\nSecond line.".into()
            }
        );
        assert_eq!(
            parse_llm_output("Ask Human: Which intersection should be optimized?"),
            Parsed::AskHuman {
                thought: String::new(),
                question: "Which intersection should be optimized?".into()
            }
        );
    }

    #[test]
    fn malformed_cases() {
        assert_eq!(
            parse_llm_output("Action: X\nFinal Answer: Y"),
            Parsed::Malformed("both action and final answer".into())
        );
        for bad in [
            "",
            "just chatting",
            "Thought: hmm",
            "Action: X",
            "Action Input: 1\nAction: X",
            "Action: X\nAction Input: 1\nAction: Y\nAction Input: 2",
            "Final Answer: a\nAsk Human: b",
            "Final Answer:   ",
            "thought: lower case\naction: X\naction input: 1",
            " Action: X\n Action Input: indented",
            "Action: \nAction Input: 1",
        ] {
            assert!(matches!(parse_llm_output(bad), Parsed::Malformed(_)), "{bad:?}");
        }
    }

    #[test]
    fn observation_line_ends_reply() {
        assert_eq!(
            parse_llm_output("Thought: t\nAction: A\nAction Input: x\nObservation: invented\nFinal Answer: no"),
            Parsed::Act {
                thought: "t".into(),
                action: "A".into(),
                action_input: "x".into()
            }
        );
    }

    #[test]
    fn unmarked_preamble_is_the_thought() {
        assert_eq!(
            parse_llm_output("I should look.\nAction: A\nAction Input: 1"),
            Parsed::Act {
                thought: "I should look.".into(),
                action: "A".into(),
                action_input: "1".into()
            }
        );
    }

    #[test]
    fn repetition_rules() {
        assert_eq!(check_repetition(&[act("A", "1"), act("B", ""), act("A", "1")]), Repetition::Ok);
        assert_eq!(check_repetition(&[act("A", "1"), act("A", "1")]), Repetition::Warn);
        assert_eq!(check_repetition(&[act("A", "1"), act("A", "1"), act("A", "1")]), Repetition::Abort);
        assert_eq!(check_repetition(&[act("A", "1"), act("A", "2")]), Repetition::Ok);
        assert_eq!(check_repetition(&[]), Repetition::Ok);
    }

    #[test]
    fn history_window() {
        let turn = |i: usize| Turn {
            user_text: format!("q{i}"),
            final_answer: format!("a{i}"),
            artifact_ids: vec![],
            needs_human_input: false,
        };
        let mut h = remember(DialogueHistory::default(), turn(0));
        assert_eq!(h.len(), 1);
        for i in 1..11 {
            h = remember(h, turn(i));
        }
        assert_eq!(h.len(), 10);
        assert_eq!(h.turns().next().unwrap().user_text, "q1");
    }

    #[test]
    fn step_rendering_parses_back() {
        let s = AgentStep {
            thought: "look it up".into(),
            action: "QueryTripCount".into(),
            action_input: "window=last_hour".into(),
            observation: Observation::ok("12 trips"),
            executed: true,
        };
        let text = render_step(&s);
        assert!(text.ends_with("\nObservation: 12 trips"));
        assert_eq!(
            parse_llm_output(&text),
            Parsed::Act {
                thought: s.thought.clone(),
                action: s.action.clone(),
                action_input: s.action_input.clone()
            }
        );
    }
}
