use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::Value;
use trafficops_agent::llm::{
    complete, ChatMessage, CompletionBackend, CompletionRequest, HttpBackend, HttpBackendConfig, LlmError, Role,
};

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    auth: Option<String>,
    body: Value,
}

/// Serves one scripted `(status, body)` per connection, then stops.
fn mock(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let path = line.split_whitespace().nth(1).unwrap_or_default().to_string();
            let (mut len, mut auth) = (0usize, None);
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                let h = h.trim_end();
                if h.is_empty() {
                    break;
                }
                let (k, v) = h.split_once(':').unwrap();
                match k.to_ascii_lowercase().as_str() {
                    "content-length" => len = v.trim().parse().unwrap(),
                    "authorization" => auth = Some(v.trim().to_string()),
                    _ => {}
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                path,
                auth,
                body: serde_json::from_slice(&buf).unwrap_or(Value::Null),
            });
            let mut out = stream;
            write!(
                out,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (addr, seen)
}

fn config(base: &str) -> HttpBackendConfig {
    let mut cfg = HttpBackendConfig::new(base, "test-model");
    cfg.api_key = Some("sk-test".into());
    cfg.timeout = Duration::from_secs(5);
    cfg.initial_backoff = Duration::from_millis(10);
    cfg
}

fn request() -> CompletionRequest {
    CompletionRequest::new(vec![
        ChatMessage::new(Role::System, "rules"),
        ChatMessage::new(Role::User, "What time is it?"),
    ])
}

fn ok_body(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

#[test]
fn posts_chat_completion_and_truncates_at_stop() {
    let (base, seen) = mock(vec![(200, ok_body("Thought: t\nFinal Answer: noon\nObservation: extra"))]);
    let backend = HttpBackend::new(config(&format!("{base}/")));
    let text = complete(&backend, &request()).unwrap();
    assert_eq!(text, "Thought: t\nFinal Answer: noon");
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].path, "/v1/chat/completions");
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer sk-test"));
    let b = &seen[0].body;
    assert_eq!(b["model"], "test-model");
    assert_eq!(b["stop"][0], "\nObservation:");
    assert_eq!(b["temperature"], 0.0);
    assert_eq!(b["messages"][0]["role"], "system");
    assert_eq!(b["messages"][1]["content"], "What time is it?");
}

#[test]
fn auth_failure_is_not_retried() {
    let (base, seen) = mock(vec![(401, "{}".into()), (200, ok_body("late"))]);
    let err = HttpBackend::new(config(&base)).complete(&request()).unwrap_err();
    assert_eq!(err, LlmError::AuthFailure(401));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn server_errors_are_retried() {
    let (base, seen) = mock(vec![(500, "{}".into()), (429, "{}".into()), (200, ok_body("ok"))]);
    assert_eq!(HttpBackend::new(config(&base)).complete(&request()).unwrap(), "ok");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn retries_give_up() {
    let (base, _) = mock(vec![(503, "{}".into()); 3]);
    let err = HttpBackend::new(config(&base)).complete(&request()).unwrap_err();
    assert!(matches!(err, LlmError::Unavailable(m) if m.contains("503")));
}

#[test]
fn client_errors_are_unavailable() {
    let (base, _) = mock(vec![(400, r#"{"error":"bad"}"#.into())]);
    let err = HttpBackend::new(config(&base)).complete(&request()).unwrap_err();
    assert!(matches!(err, LlmError::Unavailable(m) if m.contains("400")));
}

#[test]
fn unreachable_endpoint_is_unavailable() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = HttpBackend::new(config(&format!("http://127.0.0.1:{port}"))).complete(&request()).unwrap_err();
    assert!(matches!(err, LlmError::Unavailable(_)));
}
