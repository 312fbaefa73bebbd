//! Eval against a local chat-completions server that fails part-way through.

mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use common::{bird_json, fenced, item, Fixture};
use nl2sql_eval::cli::{run_args, EXIT_BACKEND_FAILURE};
use nl2sql_eval::corpus::Difficulty;

/// Answers each connection with the next scripted status; 200 carries `SELECT 1`.
fn serve(script: Vec<u16>) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let count = Arc::new(AtomicUsize::new(0));
    let hits = count.clone();
    std::thread::spawn(move || {
        for status in script {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                if h.trim_end().is_empty() {
                    break;
                }
                if let Some((k, v)) = h.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            hits.fetch_add(1, Ordering::SeqCst);
            let reply = if status == 200 {
                serde_json::json!({"choices": [{"message": {"content": fenced("SELECT 1")}}]}).to_string()
            } else {
                "overloaded".to_string()
            };
            let mut s = stream;
            let _ = write!(
                s,
                "HTTP/1.1 {status} X\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                reply.len()
            );
        }
    });
    (url, count)
}

#[test]
fn backend_failure_keeps_finished_records_and_resumes() {
    let fx = Fixture::new();
    let items: Vec<_> = (1..=5)
        .map(|i| item(&i.to_string(), "codebase_community", &format!("question {i}"), "SELECT 1", Difficulty::Simple))
        .collect();
    let bench = fx.write("remote_bench.json", &bird_json(&items));
    // two good items, then three failed attempts for the third, then recovery
    let (url, hits) = serve(vec![200, 200, 503, 503, 503, 200, 200, 200]);
    std::env::set_var("BACKEND_URL", &url);
    std::env::set_var("BACKEND_MODEL", "test-model");
    let out = fx.root().join("remote_run");
    let args = |resume: bool| {
        let mut a = vec![
            "nl2sql-eval".to_string(),
            "eval".into(),
            "--benchmark".into(),
            bench.to_str().unwrap().into(),
            "--db-root".into(),
            fx.root().to_str().unwrap().into(),
            "--workers".into(),
            "1".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ];
        if resume {
            a.push("--resume".into());
        }
        a
    };

    assert_eq!(run_args(args(false)).unwrap(), EXIT_BACKEND_FAILURE);
    assert_eq!(hits.load(Ordering::SeqCst), 5);
    let records = std::fs::read_to_string(out.join("records.jsonl")).unwrap();
    let rows: Vec<serde_json::Value> = records.lines().skip(1).map(|l| serde_json::from_str(l).unwrap()).collect();
    let done: Vec<_> = rows.iter().filter(|r| r.get("backend_failure").is_none()).collect();
    assert_eq!(done.len(), 2, "{records}");
    assert!(done.iter().all(|r| r["correct"] == true));
    assert!(rows.len() <= 3);
    assert!(!out.join("report.json").exists(), "no report after a failed run");

    assert_eq!(run_args(args(true)).unwrap(), 0);
    assert_eq!(hits.load(Ordering::SeqCst), 8);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["n_items"], 5);
    assert_eq!(report["ex_overall"], 100.0);
    assert_eq!(report["tokens_approximate"], true);
}
