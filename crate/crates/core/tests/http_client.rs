use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use multistep_ast::predictors::{
    ClientError, CompletionClient, HttpClientConfig, HttpCompletionClient,
};
use serde_json::Value;

struct Recorded {
    auth: Option<String>,
    body: Value,
}

/// Serves the scripted `(status, body)` responses in order, one per
/// connection, and records each request.
fn serve(
    script: Vec<(u16, String)>,
) -> (String, Arc<Mutex<Vec<Recorded>>>, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!(
        "http://{}/v1/chat/completions",
        listener.local_addr().unwrap()
    );
    let log = Arc::new(Mutex::new(Vec::new()));
    let seen = log.clone();
    let handle = thread::spawn(move || {
        for (status, body) in script {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let (mut len, mut auth) = (0, None);
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (k, v) = line.split_once(':').unwrap_or((line, ""));
                match k.to_ascii_lowercase().as_str() {
                    "content-length" => len = v.trim().parse().unwrap(),
                    "authorization" => auth = Some(v.trim().to_string()),
                    _ => {}
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            seen.lock().unwrap().push(Recorded {
                auth,
                body: serde_json::from_slice(&buf).unwrap(),
            });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, log, handle)
}

fn config(url: String) -> HttpClientConfig {
    HttpClientConfig {
        url,
        model: "m".into(),
        api_key: Some("secret".into()),
        seed: Some(7),
        initial_backoff_ms: 1,
        timeout_secs: 10,
        ..HttpClientConfig::default()
    }
}

fn choices(texts: &[&str]) -> String {
    let cs: Vec<Value> = texts
        .iter()
        .map(|t| serde_json::json!({"message": {"role": "assistant", "content": t}}))
        .collect();
    serde_json::json!({ "choices": cs }).to_string()
}

#[test]
fn sends_request_and_parses_choices() {
    let (url, log, h) = serve(vec![(200, choices(&["a; b", "c"]))]);
    let client = HttpCompletionClient::new(config(url)).unwrap();
    assert_eq!(client.complete("prompt text", 2).unwrap(), ["a; b", "c"]);
    h.join().unwrap();
    let log = log.lock().unwrap();
    assert_eq!(log[0].auth.as_deref(), Some("Bearer secret"));
    let b = &log[0].body;
    assert_eq!(b["model"], "m");
    assert_eq!(b["n"], 2);
    assert_eq!(b["temperature"], 1.0);
    assert_eq!(b["seed"], 7);
    assert_eq!(b["messages"][0]["role"], "user");
    assert_eq!(b["messages"][0]["content"], "prompt text");
}

#[test]
fn retries_server_errors_then_succeeds() {
    let (url, log, h) = serve(vec![
        (503, "{}".into()),
        (429, "{}".into()),
        (200, choices(&["a"])),
    ]);
    let client = HttpCompletionClient::new(config(url)).unwrap();
    assert_eq!(client.complete("p", 1).unwrap(), ["a"]);
    h.join().unwrap();
    assert_eq!(log.lock().unwrap().len(), 3);
}

#[test]
fn gives_up_after_max_attempts() {
    let (url, _, h) = serve(vec![(500, "oops".into()); 3]);
    let client = HttpCompletionClient::new(config(url)).unwrap();
    let err = client.complete("p", 1).unwrap_err();
    h.join().unwrap();
    assert!(
        matches!(err, ClientError::Exhausted { attempts: 3, .. }),
        "{err}"
    );
}

#[test]
fn client_errors_are_not_retried() {
    let (url, log, h) = serve(vec![(400, "bad".into())]);
    let client = HttpCompletionClient::new(config(url)).unwrap();
    let err = client.complete("p", 1).unwrap_err();
    h.join().unwrap();
    assert!(
        matches!(err, ClientError::Status { status: 400, .. }),
        "{err}"
    );
    assert_eq!(log.lock().unwrap().len(), 1);
}

#[test]
fn wrong_choice_count_is_an_error() {
    let (url, _, h) = serve(vec![(200, choices(&["a"]))]);
    let client = HttpCompletionClient::new(config(url)).unwrap();
    let err = client.complete("p", 2).unwrap_err();
    h.join().unwrap();
    assert!(matches!(err, ClientError::Response(_)), "{err}");
}
