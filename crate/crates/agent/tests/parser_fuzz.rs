use proptest::prelude::*;
use trafficops_agent::agent::{parse_llm_output, render_output, Parsed};

const MARKERS: [&str; 6] = ["Thought:", "Action:", "Action Input:", "Final Answer:", "Ask Human:", "Observation:"];

fn clean(s: &str) -> bool {
    s == s.trim() && !s.lines().any(|l| MARKERS.iter().any(|m| l.starts_with(m)))
}

fn body() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 ,.:=;/_\\-\n\u{e9}\u{4e2d}]{0,60}".prop_filter("no markers", |s| clean(s))
}

fn non_empty() -> impl Strategy<Value = String> {
    body().prop_filter("non-empty", |s| !s.is_empty())
}

fn parsed() -> impl Strategy<Value = Parsed> {
    prop_oneof![
        (body(), "[A-Za-z][A-Za-z0-9_]{0,20}", body().prop_filter("single line", |s| !s.contains('\n'))).prop_map(
            |(thought, action, action_input)| Parsed::Act {
                thought,
                action,
                action_input
            }
        ),
        (body(), non_empty()).prop_map(|(thought, answer)| Parsed::Final { thought, answer }),
        (body(), non_empty()).prop_map(|(thought, question)| Parsed::AskHuman { thought, question }),
    ]
}

#[derive(Debug, Clone)]
enum Mutation {
    Truncate(usize),
    Delete(usize, usize),
    Insert(usize, usize),
    Lowercase,
    Duplicate,
    Observation(String),
}

fn mutation() -> impl Strategy<Value = Mutation> {
    prop_oneof![
        any::<usize>().prop_map(Mutation::Truncate),
        (any::<usize>(), 0usize..12).prop_map(|(a, b)| Mutation::Delete(a, b)),
        (any::<usize>(), 0usize..MARKERS.len()).prop_map(|(a, b)| Mutation::Insert(a, b)),
        Just(Mutation::Lowercase),
        Just(Mutation::Duplicate),
        ".{0,20}".prop_map(Mutation::Observation),
    ]
}

fn boundary(s: &str, at: usize) -> usize {
    let mut i = at % (s.len() + 1);
    while !s.is_char_boundary(i) {
        i -= 1;
    }
    i
}

fn apply(mut s: String, m: &Mutation) -> String {
    match m {
        Mutation::Truncate(a) => {
            let i = boundary(&s, *a);
            s.truncate(i);
        }
        Mutation::Delete(a, n) => {
            let i = boundary(&s, *a);
            let j = boundary(&s, i + n).max(i);
            s.replace_range(i..j, "");
        }
        Mutation::Insert(a, k) => {
            let i = boundary(&s, *a);
            s.insert_str(i, &format!("\n{} ", MARKERS[*k]));
        }
        Mutation::Lowercase => s = s.to_lowercase(),
        Mutation::Duplicate => s = format!("{s}\n{s}"),
        Mutation::Observation(tail) => s.push_str(&format!("\nObservation: {tail}")),
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn render_then_parse_round_trips(p in parsed()) {
        prop_assert_eq!(parse_llm_output(&render_output(&p)), p);
    }

    #[test]
    fn trailing_observation_is_ignored(p in parsed(), tail in ".{0,40}") {
        let text = format!("{}\nObservation: {tail}", render_output(&p));
        prop_assert_eq!(parse_llm_output(&text), p);
    }

    #[test]
    fn mutated_replies_never_panic(p in parsed(), ms in prop::collection::vec(mutation(), 1..4)) {
        let text = ms.iter().fold(render_output(&p), apply);
        let _ = parse_llm_output(&text);
    }

    #[test]
    fn arbitrary_text_never_panics(s in any::<String>()) {
        let _ = parse_llm_output(&s);
    }
}

#[test]
fn lowercase_markers_are_not_markers() {
    assert!(matches!(parse_llm_output("thought: x\naction: GetCurrentTime\naction input:"), Parsed::Malformed(_)));
}

#[test]
fn markers_only_count_at_line_start() {
    let p = parse_llm_output("Thought: the word Action: appears here\nFinal Answer: ok");
    assert_eq!(
        p,
        Parsed::Final {
            thought: "the word Action: appears here".into(),
            answer: "ok".into()
        }
    );
}
