mod common;

use trafficops_agent::agent::{
    assemble_prompt, run_turn, AgentConfig, AgentStep, AgentError, AgentEvent, DialogueHistory, ReasoningTrace, Turn,
};
use trafficops_agent::llm::{LlmError, ScriptedBackend};
use trafficops_agent::registry::Observation;
use trafficops_agent::suite::{full_registry, registry_for, BotKind};

fn run(
    backend: &ScriptedBackend,
    e: &mut common::Env,
    kind: BotKind,
    history: &DialogueHistory,
    text: &str,
) -> (Result<trafficops_agent::agent::TurnOutcome, AgentError>, Vec<AgentEvent>) {
    let reg = registry_for(kind).with_call_log();
    let mut events = Vec::new();
    let out = run_turn(&AgentConfig::default(), backend, &reg, &mut e.ctx, history, text, &mut |ev| events.push(ev));
    if let Ok(o) = &out {
        let log = reg.dispatch_log();
        let executed: Vec<_> = o.trace.executed().collect();
        assert_eq!(log.len(), executed.len());
        for (rec, step) in log.iter().zip(executed) {
            assert_eq!((&rec.name, &rec.raw, &rec.observation), (&step.action, &step.action_input, &step.observation));
        }
    }
    (out, events)
}

fn kinds(events: &[AgentEvent]) -> Vec<&'static str> {
    events
        .iter()
        .map(|e| match e {
            AgentEvent::Thought { .. } => "thought",
            AgentEvent::Action { .. } => "action",
            AgentEvent::Observation { .. } => "observation",
        })
        .collect()
}

#[test]
fn time_then_heatmap_then_final() {
    let mut e = common::env();
    let backend = ScriptedBackend::from_responses([
        "Thought: I need the current time.\nAction: GetCurrentTime\nAction Input:",
        "Thought: Now plot it.\nAction: PlotHeatmap\nAction Input: 2019-08-13 08:00:00",
        "Thought: Done.\nFinal Answer: The heatmap is ready.",
    ]);
    let (out, events) = run(&backend, &mut e, BotKind::DataProcessing, &DialogueHistory::default(), "Show me the current network heatmap");
    let out = out.unwrap();
    assert_eq!(out.trace.steps.len(), 2);
    assert!(!out.needs_human_input);
    assert_eq!(out.final_text, "The heatmap is ready.");
    assert_eq!(out.artifacts.len(), 1);
    assert_eq!(kinds(&events), ["thought", "action", "observation", "thought", "action", "observation"]);
    let reqs = backend.requests();
    assert_eq!(reqs.len(), 3);
    assert!(reqs.iter().all(|r| r.stop == ["\nObservation:"]));
    assert!(reqs[2].last_user_content().contains("The current time is 2019-08-13 08:00:00."));
}

#[test]
fn ask_human_without_tools() {
    let mut e = common::env();
    let backend = ScriptedBackend::from_responses(["Ask Human: Which intersection should be optimized?"]);
    let (out, events) = run(&backend, &mut e, BotKind::SimulationControl, &DialogueHistory::default(), "Optimize the signals");
    let out = out.unwrap();
    assert!(out.needs_human_input);
    assert_eq!(out.final_text, "Which intersection should be optimized?");
    assert!(out.trace.steps.is_empty() && events.is_empty());
}

#[test]
fn repeated_action_aborts_within_three_steps() {
    let mut e = common::env();
    let same = "Thought: again\nAction: GetCurrentTime\nAction Input:";
    let backend = ScriptedBackend::from_responses(vec![same; 20]);
    let (out, _) = run(&backend, &mut e, BotKind::DataProcessing, &DialogueHistory::default(), "time?");
    let out = out.unwrap();
    assert!(out.needs_human_input);
    assert!(out.trace.steps.len() <= 3);
    assert_eq!(out.trace.executed().count(), 1);
    assert!(out.trace.steps[1].observation.text.contains("Do not repeat"));
    assert!(out.final_text.contains("GetCurrentTime"));
    assert_eq!(backend.calls(), 3);
}

#[test]
fn iteration_cap_forces_intervention() {
    let mut e = common::env();
    let replies: Vec<String> = (0..30)
        .map(|i| format!("Thought: try {i}\nAction: QueryTripCount\nAction Input: 2019-08-13 0{}:00:00/2019-08-13 09:00:00", i % 8))
        .collect();
    let backend = ScriptedBackend::from_responses(replies);
    let (out, _) = run(&backend, &mut e, BotKind::DataProcessing, &DialogueHistory::default(), "count");
    let out = out.unwrap();
    assert!(out.needs_human_input);
    assert_eq!(out.trace.steps.len(), 8);
    assert_eq!(backend.calls(), 8);
    assert!(out.final_text.contains("8 reasoning steps"));
}

#[test]
fn unknown_tool_and_bad_format_are_corrected() {
    let mut e = common::env();
    let backend = ScriptedBackend::from_responses([
        "Thought: hmm\nAction: GetTime\nAction Input:",
        "I will just answer freely.",
        "Thought: ok\nAction: GetCurrentTime\nAction Input:",
        "Thought: fine\nFinal Answer: It is 08:00.",
    ]);
    let (out, events) = run(&backend, &mut e, BotKind::DataProcessing, &DialogueHistory::default(), "time?");
    let out = out.unwrap();
    assert_eq!(out.final_text, "It is 08:00.");
    let s = &out.trace.steps;
    assert!(s[0].executed && s[0].observation.is_error && s[0].observation.text.contains("GetCurrentTime"));
    assert!(!s[1].executed && s[1].observation.text.contains("Could not read"));
    assert!(s[2].executed && !s[2].observation.is_error);
    assert_eq!(kinds(&events)[3..5], ["thought", "observation"]);
}

#[test]
fn llm_failure_is_an_error() {
    let mut e = common::env();
    let backend = ScriptedBackend::from_responses(["Thought: a\nAction: GetCurrentTime\nAction Input:"]);
    let (out, events) = run(&backend, &mut e, BotKind::DataProcessing, &DialogueHistory::default(), "x");
    assert_eq!(out.unwrap_err(), AgentError::Llm(LlmError::FixtureExhausted(1)));
    assert_eq!(events.len(), 3);
}

#[test]
fn events_follow_step_order() {
    let mut e = common::env();
    let backend = ScriptedBackend::from_responses([
        "Thought: a\nAction: RunSimulation\nAction Input: horizon_s=600",
        "Thought: b\nAction: AssessPerformance\nAction Input:",
        "Thought: c\nAction: RankWorstIntersections\nAction Input: 2",
        "Final Answer: done",
    ]);
    let (out, events) = run(&backend, &mut e, BotKind::SimulationControl, &DialogueHistory::default(), "go");
    out.unwrap();
    let steps: Vec<usize> = events
        .iter()
        .map(|e| match e {
            AgentEvent::Thought { step, .. } | AgentEvent::Action { step, .. } | AgentEvent::Observation { step, .. } => *step,
        })
        .collect();
    assert_eq!(steps, [1, 1, 1, 2, 2, 2, 3, 3, 3]);
    assert_eq!(kinds(&events).chunks(3).filter(|c| *c == ["thought", "action", "observation"]).count(), 3);
}

#[test]
fn prompt_shapes() {
    let reg = full_registry();
    let mut h = DialogueHistory::default();
    let trace = ReasoningTrace::new(8);
    let m = assemble_prompt("prefix", &reg, &h, "hi", &trace).unwrap();
    assert_eq!(m.len(), 2);
    assert!(m[0].content.starts_with("prefix") && m[0].content.contains("Tool: PlotHeatmap"));
    h.push(Turn {
        user_text: "How many trips left zone Z001 between 8 and 9?".into(),
        final_answer: "42".into(),
        artifact_ids: vec![],
        needs_human_input: false,
    });
    let mut trace = ReasoningTrace::new(8);
    let m = assemble_prompt("prefix", &reg, &h, "And for the same time period yesterday?", &trace).unwrap();
    assert_eq!(m.len(), 4);
    assert!(m[1].content.contains("between 8 and 9"));
    for i in 0..2 {
        trace.steps.push(AgentStep {
            thought: format!("t{i}"),
            action: "GetCurrentTime".into(),
            action_input: String::new(),
            observation: Observation::ok("multi\nline"),
            executed: true,
        });
    }
    let m = assemble_prompt("prefix", &reg, &h, "x", &trace).unwrap();
    assert_eq!(m.len(), 5);
    let pad = &m[4].content;
    assert_eq!(pad.lines().filter(|l| l.starts_with("Observation:")).count(), 2);
    assert_eq!(assemble_prompt("prefix", &reg, &h, "x", &trace).unwrap(), m);
}

#[test]
fn follow_up_sees_prior_turn() {
    let mut e = common::env();
    let backend = ScriptedBackend::from_responses([
        "Thought: count\nAction: QueryTripCount\nAction Input: 2019-08-13 07:00:00/2019-08-13 08:00:00",
        "Final Answer: There were many trips.",
        "Final Answer: Same period, shown above.",
    ]);
    let mut h = DialogueHistory::default();
    let (out, _) = run(&backend, &mut e, BotKind::DataProcessing, &h, "How many trips between 7 and 8 today?");
    h.push(out.unwrap().to_turn("How many trips between 7 and 8 today?"));
    let (out, _) = run(&backend, &mut e, BotKind::DataProcessing, &h, "Plot the same time period");
    out.unwrap();
    let last = backend.requests().pop().unwrap();
    assert!(last.messages.iter().any(|m| m.content.contains("between 7 and 8 today")));
    assert!(last.messages.iter().any(|m| m.content == "There were many trips."));
}
