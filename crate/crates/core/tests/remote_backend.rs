use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use mlm_audit::probe::{probe, FillMaskRequest, ProbabilityQuery, RemoteBackend, RetryPolicy};
use mlm_audit::Error;

struct MockServer {
    endpoint: String,
    requests: Arc<Mutex<Vec<FillMaskRequest>>>,
}

/// Serves the scripted `(status, body)` replies in order, one per connection,
/// then repeats the last reply.
fn serve(replies: Vec<(u16, String)>) -> MockServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let seen = Arc::clone(&requests);
    thread::spawn(move || {
        let mut replies: VecDeque<_> = replies.into();
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut content_length = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((name, value)) = line.split_once(':') {
                    if name.eq_ignore_ascii_case("content-length") {
                        content_length = value.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0; content_length];
            reader.read_exact(&mut body).unwrap();
            seen.lock()
                .unwrap()
                .push(serde_json::from_slice(&body).unwrap());
            let (status, reply) = if replies.len() > 1 {
                replies.pop_front().unwrap()
            } else {
                replies.front().cloned().unwrap()
            };
            let head = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                reply.len()
            );
            stream.write_all(head.as_bytes()).unwrap();
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    MockServer { endpoint, requests }
}

fn fast_retry(attempts: u32) -> RetryPolicy {
    RetryPolicy {
        attempts,
        initial_backoff: Duration::from_millis(1),
        multiplier: 2.0,
    }
}

fn targets() -> Vec<String> {
    ["he", "she"].iter().map(|s| s.to_string()).collect()
}

const OK_BODY: &str = r#"{"model":"bert-base-uncased","predictions":[],"target_scores":{"he":0.6,"she":0.3},"oov":[]}"#;

#[test]
fn scores_targets_over_http() {
    let server = serve(vec![(200, OK_BODY.into())]);
    let backend = RemoteBackend::new(&server.endpoint, "bert-base-uncased", "[MASK]").unwrap();
    let query = ProbabilityQuery::with_targets("[MASK] is an engineer.", &targets());
    let response = probe(&query, &backend).unwrap();
    assert_eq!(response.target_score("he"), 0.6);
    assert_eq!(response.target_score("she"), 0.3);
    assert_eq!(response.query_digest, query.digest("bert-base-uncased"));
    let requests = server.requests.lock().unwrap();
    assert_eq!(requests.len(), 1);
    assert_eq!(requests[0].model, "bert-base-uncased");
    assert_eq!(requests[0].text, "[MASK] is an engineer.");
}

#[test]
fn out_of_vocabulary_targets_score_zero() {
    let body = r#"{"model":"m","target_scores":{"he":0.5},"oov":["hers"]}"#;
    let server = serve(vec![(200, body.into())]);
    let backend = RemoteBackend::new(&server.endpoint, "m", "[MASK]").unwrap();
    let query = ProbabilityQuery::with_targets("[MASK] ran.", &["he".into(), "hers".into()]);
    let response = probe(&query, &backend).unwrap();
    assert_eq!(response.target_score("hers"), 0.0);
    assert_eq!(response.oov, vec!["hers".to_string()]);
}

#[test]
fn bad_request_is_a_protocol_error() {
    let server = serve(vec![(400, r#"{"error":"expected one mask"}"#.into())]);
    let backend = RemoteBackend::new(&server.endpoint, "m", "[MASK]")
        .unwrap()
        .with_retry(fast_retry(3));
    let query = ProbabilityQuery::with_top_k("[MASK] ran.", 3);
    let err = probe(&query, &backend).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
    assert!(err.is_backend());
    assert_eq!(server.requests.lock().unwrap().len(), 1);
}

#[test]
fn unknown_model_is_not_retried() {
    let server = serve(vec![(404, r#"{"error":"no such model"}"#.into())]);
    let backend = RemoteBackend::new(&server.endpoint, "missing", "[MASK]")
        .unwrap()
        .with_retry(fast_retry(3));
    let query = ProbabilityQuery::with_top_k("[MASK] ran.", 3);
    let err = probe(&query, &backend).unwrap_err();
    assert!(
        matches!(err, Error::UnknownModel(ref m) if m == "missing"),
        "{err}"
    );
    assert_eq!(server.requests.lock().unwrap().len(), 1);
}

#[test]
fn loading_model_is_retried_until_ready() {
    let server = serve(vec![
        (503, r#"{"error":"loading"}"#.into()),
        (503, r#"{"error":"loading"}"#.into()),
        (200, OK_BODY.into()),
    ]);
    let backend = RemoteBackend::new(&server.endpoint, "bert-base-uncased", "[MASK]")
        .unwrap()
        .with_retry(fast_retry(3));
    let query = ProbabilityQuery::with_targets("[MASK] is a nurse.", &targets());
    let response = probe(&query, &backend).unwrap();
    assert_eq!(response.target_score("he"), 0.6);
    assert_eq!(server.requests.lock().unwrap().len(), 3);
}

#[test]
fn retries_are_bounded() {
    let server = serve(vec![(503, r#"{"error":"loading"}"#.into())]);
    let backend = RemoteBackend::new(&server.endpoint, "m", "[MASK]")
        .unwrap()
        .with_retry(fast_retry(2));
    let query = ProbabilityQuery::with_top_k("[MASK] ran.", 3);
    let err = probe(&query, &backend).unwrap_err();
    assert!(matches!(err, Error::Transport { attempts: 2, .. }), "{err}");
    assert_eq!(server.requests.lock().unwrap().len(), 2);
}

#[test]
fn response_for_another_model_is_rejected() {
    let server = serve(vec![(200, OK_BODY.into())]);
    let backend = RemoteBackend::new(&server.endpoint, "roberta-base", "<mask>").unwrap();
    let query = ProbabilityQuery::with_targets("<mask> is a nurse.", &targets());
    assert!(matches!(probe(&query, &backend), Err(Error::Protocol(_))));
}

#[test]
fn invalid_scores_fail_postconditions() {
    let body = r#"{"model":"m","predictions":[{"token":"ran","score":0.2,"rank":1},{"token":"sat","score":0.4,"rank":2}]}"#;
    let server = serve(vec![(200, body.into())]);
    let backend = RemoteBackend::new(&server.endpoint, "m", "[MASK]").unwrap();
    let query = ProbabilityQuery::with_top_k("She [MASK] home.", 2);
    assert!(matches!(probe(&query, &backend), Err(Error::Protocol(_))));
}
