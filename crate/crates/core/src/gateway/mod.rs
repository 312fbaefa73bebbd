//! Generation backends (remote chat-completions service or scripted mock) and
//! candidate assembly.

mod extract;
mod mock;
mod remote;

use std::sync::{Condvar, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use extract::extract_sql;
pub use mock::{MockBackend, MockEntry, MockFixture, PromptMatch};
pub use remote::{RemoteBackend, RemoteConfig};

pub const DEFAULT_CONCURRENCY: usize = 8;
pub const SAMPLING_TEMPERATURE: f64 = 0.8;
pub const DEFAULT_MAX_NEW_TOKENS: u32 = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_new_tokens: u32,
    pub num_candidates: usize,
    /// Opaque extra request fields, forwarded in order and never interpreted.
    pub backend_params: Vec<(String, String)>,
    pub seed: Option<u64>,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, temperature: f64, num_candidates: usize) -> Self {
        GenerationRequest {
            prompt: prompt.into(),
            temperature,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            num_candidates,
            backend_params: Vec::new(),
            seed: None,
        }
    }

    pub fn greedy(prompt: impl Into<String>) -> Self {
        Self::new(prompt, 0.0, 1)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.num_candidates == 0 {
            return Err(BackendError::Request("num_candidates must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::Request(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub trajectory_id: usize,
    pub raw_text: String,
    pub extracted_sql: Option<String>,
    pub latency_seconds: f64,
    pub token_count: u64,
    /// Token count is a whitespace estimate rather than backend usage.
    pub tokens_approximate: bool,
    /// Why the trajectory produced nothing, when it failed (e.g. timeout).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl Candidate {
    pub fn from_reply(trajectory_id: usize, reply: BackendReply) -> Self {
        Candidate {
            trajectory_id,
            extracted_sql: extract_sql(&reply.text),
            token_count: count_tokens(&reply.text, reply.usage),
            tokens_approximate: reply.usage.is_none(),
            latency_seconds: reply.latency_seconds.unwrap_or(0.0),
            raw_text: reply.text,
            failure: None,
        }
    }

    pub fn failed(trajectory_id: usize, reason: impl Into<String>, latency_seconds: f64) -> Self {
        Candidate {
            trajectory_id,
            raw_text: String::new(),
            extracted_sql: None,
            latency_seconds,
            token_count: 0,
            tokens_approximate: true,
            failure: Some(reason.into()),
        }
    }
}

/// Backend-reported usage when present, otherwise whitespace tokens.
pub fn count_tokens(raw_text: &str, backend_usage: Option<u64>) -> u64 {
    backend_usage.unwrap_or_else(|| raw_text.split_whitespace().count() as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub text: String,
    pub usage: Option<u64>,
    /// Latency claimed by the backend; measured by the gateway when absent.
    pub latency_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    Request(String),
    #[error("backend unreachable after retries: {0}")]
    Transport(String),
    #[error("backend timed out: {0}")]
    Timeout(String),
    #[error("backend returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

/// One completion call for one trajectory.
pub struct CallSpec<'a> {
    pub prompt: &'a str,
    pub temperature: f64,
    pub max_new_tokens: u32,
    pub backend_params: &'a [(String, String)],
    pub seed: Option<u64>,
    pub trajectory_id: usize,
}

pub trait Backend: Send + Sync {
    /// Stable description recorded in run manifests.
    fn identity(&self) -> String;
    fn complete(&self, call: &CallSpec<'_>) -> Result<BackendReply, BackendError>;
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn identity(&self) -> String {
        (**self).identity()
    }

    fn complete(&self, call: &CallSpec<'_>) -> Result<BackendReply, BackendError> {
        (**self).complete(call)
    }
}

/// Counting semaphore bounding in-flight backend calls.
pub struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub fn new(n: usize) -> Self {
        Semaphore {
            permits: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut p = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *p == 0 {
            p = self.cv.wait(p).unwrap_or_else(|e| e.into_inner());
        }
        *p -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct Gateway {
    backend: Box<dyn Backend>,
    limit: Semaphore,
}

impl Gateway {
    pub fn new(backend: Box<dyn Backend>, max_in_flight: usize) -> Self {
        Gateway {
            backend,
            limit: Semaphore::new(max_in_flight),
        }
    }

    pub fn backend(&self) -> &dyn Backend {
        self.backend.as_ref()
    }

    /// One call per trajectory, fetched in parallel under the in-flight cap.
    /// Trajectory `i` uses seed `seed + i`. A timed-out trajectory becomes a
    /// failed candidate; any other backend error fails the whole request.
    pub fn generate(&self, req: &GenerationRequest) -> Result<Vec<Candidate>, BackendError> {
        req.validate()?;
        let results: Vec<Result<Candidate, BackendError>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..req.num_candidates)
                .map(|tid| s.spawn(move || self.one(req, tid)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(BackendError::Protocol("worker panicked".into()))))
                .collect()
        });
        results.into_iter().collect()
    }

    /// A single call on behalf of an existing trajectory (used for repairs).
    pub fn generate_for(&self, req: &GenerationRequest, trajectory_id: usize) -> Result<Candidate, BackendError> {
        req.validate()?;
        self.one(req, trajectory_id)
    }

    fn one(&self, req: &GenerationRequest, trajectory_id: usize) -> Result<Candidate, BackendError> {
        let _permit = self.limit.acquire();
        let call = CallSpec {
            prompt: &req.prompt,
            temperature: req.temperature,
            max_new_tokens: req.max_new_tokens,
            backend_params: &req.backend_params,
            seed: req.seed.map(|s| s.wrapping_add(trajectory_id as u64)),
            trajectory_id,
        };
        let start = Instant::now();
        match self.backend.complete(&call) {
            Ok(mut reply) => {
                if reply.latency_seconds.is_none() {
                    reply.latency_seconds = Some(start.elapsed().as_secs_f64());
                }
                Ok(Candidate::from_reply(trajectory_id, reply))
            }
            Err(BackendError::Timeout(msg)) => Ok(Candidate::failed(
                trajectory_id,
                format!("timeout: {msg}"),
                start.elapsed().as_secs_f64(),
            )),
            Err(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    #[test]
    fn token_counts() {
        assert_eq!(count_tokens("anything", Some(2200)), 2200);
        assert_eq!(count_tokens("", None), 0);
        assert_eq!(count_tokens("SELECT 1 FROM t", None), 4);
    }

    struct Slow {
        live: Arc<AtomicUsize>,
        peak: Arc<AtomicUsize>,
    }

    impl Backend for Slow {
        fn identity(&self) -> String {
            "slow".into()
        }
        fn complete(&self, call: &CallSpec<'_>) -> Result<BackendReply, BackendError> {
            let now = self.live.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(std::time::Duration::from_millis(20));
            self.live.fetch_sub(1, Ordering::SeqCst);
            if call.trajectory_id == 1 {
                return Err(BackendError::Timeout("slow".into()));
            }
            Ok(BackendReply {
                text: format!("```sql\nSELECT {}\n```", call.seed.unwrap()),
                usage: None,
                latency_seconds: Some(0.5),
            })
        }
    }

    #[test]
    fn cap_seeds_and_timeouts() {
        let peak = Arc::new(AtomicUsize::new(0));
        let gw = Gateway::new(
            Box::new(Slow {
                live: Arc::new(AtomicUsize::new(0)),
                peak: peak.clone(),
            }),
            2,
        );
        let mut req = GenerationRequest::new("p", 0.8, 6);
        req.seed = Some(100);
        let cands = gw.generate(&req).unwrap();
        assert_eq!(cands.len(), 6);
        assert!(peak.load(Ordering::SeqCst) <= 2);
        assert_eq!(cands[0].extracted_sql.as_deref(), Some("SELECT 100"));
        assert_eq!(cands[5].extracted_sql.as_deref(), Some("SELECT 105"));
        assert!(cands[1].failure.as_deref().unwrap().starts_with("timeout"));
        assert_eq!(cands[1].extracted_sql, None);
        assert!(cands.iter().enumerate().all(|(i, c)| c.trajectory_id == i));
    }

    #[test]
    fn rejects_bad_requests() {
        let gw = Gateway::new(Box::new(MockBackend::new(MockFixture::default())), 1);
        assert!(gw.generate(&GenerationRequest::new("p", 0.5, 0)).is_err());
        assert!(gw.generate(&GenerationRequest::new("p", 2.5, 1)).is_err());
    }
}
