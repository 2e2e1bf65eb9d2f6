use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use uniaudit_core::llmclient::{complete, RetryPolicy, TransportError};
use uniaudit_core::{HttpChatBackend, ModelEndpointConfig};

struct Captured {
    head: String,
    body: serde_json::Value,
}

/// Serves one scripted (status, body) reply per connection.
fn stub_server(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Captured>>>, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    let handle = thread::spawn(move || {
        for (status, reply) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut head = String::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                head.push_str(&line);
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push(Captured { head, body: serde_json::from_slice(&body).unwrap() });
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
        }
    });
    (url, seen, handle)
}

fn config(url: String, key_env: Option<&str>) -> ModelEndpointConfig {
    ModelEndpointConfig {
        base_url: url,
        model_id: "stub-model".into(),
        api_key_env: key_env.map(str::to_owned),
        retry: RetryPolicy { max_attempts: 3, initial_backoff_ms: 1, max_backoff_ms: 5 },
        timeout_secs: 10,
        ..Default::default()
    }
}

#[test]
fn retries_transient_errors_and_sends_decode_params() {
    let ok = r#"{"choices":[{"message":{"role":"assistant","content":"1. University of Oxford - MSc Physics"}}],"usage":{"total_tokens":42}}"#;
    let (url, seen, handle) = stub_server(vec![(503, "busy".into()), (200, ok.into())]);
    std::env::set_var("UNIAUDIT_TEST_KEY", "sk-test");
    let cfg = config(url, Some("UNIAUDIT_TEST_KEY"));
    let backend = HttpChatBackend::from_config(&cfg).unwrap();
    let out = complete(&backend, "Recommend three universities.", &cfg).unwrap();
    handle.join().unwrap();
    assert_eq!(out.attempts, 2);
    assert_eq!(out.completion.text, "1. University of Oxford - MSc Physics");
    assert_eq!(out.completion.usage.unwrap()["total_tokens"], 42);

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    let req = &seen[1];
    assert!(req.head.starts_with("POST /v1/chat/completions"));
    assert!(req.head.to_ascii_lowercase().contains("authorization: bearer sk-test"));
    assert_eq!(req.body["model"], "stub-model");
    assert_eq!(req.body["temperature"], 0.75);
    assert_eq!(req.body["top_p"], 0.95);
    assert_eq!(req.body["max_tokens"], 300);
    assert_eq!(req.body["messages"][0]["content"], "Recommend three universities.");
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen, handle) = stub_server(vec![(400, "bad request".into())]);
    let cfg = config(url, None);
    let backend = HttpChatBackend::from_config(&cfg).unwrap();
    let err = complete(&backend, "hi", &cfg).unwrap_err();
    handle.join().unwrap();
    assert_eq!(err.attempts, 1);
    assert!(matches!(err.error, TransportError::Http { status: 400, .. }));
    assert!(!seen.lock().unwrap()[0].head.to_ascii_lowercase().contains("authorization"));
}

#[test]
fn malformed_body_is_a_protocol_error() {
    let (url, _seen, handle) = stub_server(vec![(200, r#"{"choices":[]}"#.into())]);
    let cfg = config(url, None);
    let backend = HttpChatBackend::from_config(&cfg).unwrap();
    let err = complete(&backend, "hi", &cfg).unwrap_err();
    handle.join().unwrap();
    assert!(matches!(err.error, TransportError::Protocol(_)));
}

#[test]
fn missing_key_variable_is_a_config_error() {
    let cfg = config("http://127.0.0.1:9".into(), Some("UNIAUDIT_TEST_KEY_THAT_IS_NOT_SET"));
    let err = HttpChatBackend::from_config(&cfg).err().unwrap();
    assert!(err.to_string().contains("UNIAUDIT_TEST_KEY_THAT_IS_NOT_SET"));
}
