use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use nl2sql_eval::gateway::{
    extract_sql, Backend, BackendError, Gateway, GenerationRequest, MockBackend, MockEntry, MockFixture,
    RemoteBackend, RemoteConfig,
};
use proptest::prelude::*;
use serde_json::Value;

/// A request seen by the test server.
#[derive(Debug, Clone)]
struct Seen {
    path: String,
    auth: Option<String>,
    body: String,
}

/// Serves one scripted `(status, body)` response per connection, in order.
fn serve(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    std::thread::spawn(move || {
        for (status, reply) in script {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
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
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push(Seen {
                path,
                auth,
                body: String::from_utf8(body).unwrap(),
            });
            let mut s = stream;
            let _ = write!(
                s,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                reply.len()
            );
        }
    });
    (url, seen)
}

fn ok_body(text: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 50, "completion_tokens": 12, "total_tokens": 62}
    })
    .to_string()
}

fn remote(url: &str) -> RemoteBackend {
    let mut cfg = RemoteConfig::new(url, "dlm-test");
    cfg.api_key = Some("sekret".into());
    cfg.backoff = Duration::from_millis(5);
    cfg.timeout_seconds = 5.0;
    RemoteBackend::new(cfg).unwrap()
}

#[test]
fn wire_format_and_param_passthrough() {
    let (url, seen) = serve(vec![(200, ok_body("```sql\nSELECT 1\n```"))]);
    let gw = Gateway::new(Box::new(remote(&url)), 2);
    let mut req = GenerationRequest::new("Question: how many?", 0.8, 1);
    req.max_new_tokens = 256;
    req.seed = Some(41);
    req.backend_params = vec![
        ("block_length".into(), "32".into()),
        ("steps".into(), "{\"a\": [1, 2.50]}".into()),
        ("mode".into(), "fast".into()),
    ];
    let out = gw.generate(&req).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].extracted_sql.as_deref(), Some("SELECT 1"));
    assert_eq!(out[0].token_count, 62);
    assert!(!out[0].tokens_approximate);

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].path, "/v1/chat/completions");
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer sekret"));
    let body = &seen[0].body;
    // the raw value reaches the wire untouched, trailing zero included
    assert!(body.contains("\"steps\":{\"a\": [1, 2.50]}"), "{body}");
    let v: Value = serde_json::from_str(body).unwrap();
    assert_eq!(v["model"], "dlm-test");
    assert_eq!(v["messages"][0]["role"], "user");
    assert_eq!(v["messages"][0]["content"], "Question: how many?");
    assert_eq!(v["temperature"], 0.8);
    assert_eq!(v["n"], 1);
    assert_eq!(v["max_tokens"], 256);
    assert_eq!(v["seed"], 41);
    assert_eq!(v["block_length"], 32);
    assert_eq!(v["mode"], "fast");
}

#[test]
fn server_errors_are_retried_twice() {
    let (url, seen) = serve(vec![
        (503, "busy".into()),
        (429, "slow down".into()),
        (200, ok_body("SELECT 2")),
    ]);
    let gw = Gateway::new(Box::new(remote(&url)), 1);
    let out = gw.generate(&GenerationRequest::greedy("p")).unwrap();
    assert_eq!(out[0].extracted_sql.as_deref(), Some("SELECT 2"));
    assert_eq!(seen.lock().unwrap().len(), 3);

    let (url, seen) = serve(vec![(500, "a".into()), (502, "b".into()), (503, "c".into()), (200, ok_body("x"))]);
    let err = remote(&url)
        .complete(&nl2sql_eval::gateway::CallSpec {
            prompt: "p",
            temperature: 0.0,
            max_new_tokens: 8,
            backend_params: &[],
            seed: None,
            trajectory_id: 0,
        })
        .unwrap_err();
    assert!(matches!(err, BackendError::Transport(_)), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = serve(vec![(400, "bad request".into()), (200, ok_body("x"))]);
    let gw = Gateway::new(Box::new(remote(&url)), 1);
    let err = gw.generate(&GenerationRequest::greedy("p")).unwrap_err();
    assert!(matches!(err, BackendError::Http { status: 400, .. }), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn unreachable_backend_reports_transport_failure() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let gw = Gateway::new(Box::new(remote(&format!("http://127.0.0.1:{port}"))), 1);
    let err = gw.generate(&GenerationRequest::greedy("p")).unwrap_err();
    assert!(matches!(err, BackendError::Transport(_)), "{err:?}");
}

#[test]
fn eight_trajectories_get_their_own_ids_and_replies() {
    let entries = (0..8)
        .map(|i| MockEntry::substring("Question", format!("```sql\nSELECT {i}\n```")).for_trajectory(i))
        .collect();
    let backend = Arc::new(MockBackend::new(MockFixture {
        default_reply: String::new(),
        entries,
    }));
    let gw = Gateway::new(Box::new(backend.clone()), 3);
    let req = GenerationRequest::new("Question: q", 0.8, 8);
    let a = gw.generate(&req).unwrap();
    let b = gw.generate(&req).unwrap();
    assert_eq!(a.iter().map(|c| c.trajectory_id).collect::<Vec<_>>(), (0..8).collect::<Vec<_>>());
    for c in &a {
        assert_eq!(c.extracted_sql.as_deref(), Some(format!("SELECT {}", c.trajectory_id).as_str()));
    }
    let text = |v: &[nl2sql_eval::gateway::Candidate]| v.iter().map(|c| c.raw_text.clone()).collect::<Vec<_>>();
    assert_eq!(text(&a), text(&b));
    assert_eq!(backend.invocations(), 16);
    assert!(gw.generate(&GenerationRequest::new("q", 0.8, 0)).is_err());
    assert!(gw.generate(&GenerationRequest::new("q", 2.5, 1)).is_err());
    assert_eq!(backend.invocations(), 16);
}

proptest! {
    #[test]
    fn extraction_is_idempotent_when_refenced(reply in "[ -~\n]{0,80}", sql in "SELECT [a-z0-9 ,*=]{1,30}") {
        for raw in [reply.clone(), format!("{reply}\n```sql\n{sql}\n```\n"), format!("<answer>{sql}</answer>")] {
            if let Some(once) = extract_sql(&raw) {
                let again = extract_sql(&format!("```sql\n{once}\n```"));
                prop_assert_eq!(again.as_deref(), Some(once.as_str()));
            }
        }
    }
}
