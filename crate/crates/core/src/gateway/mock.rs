//! Table-driven backend for hermetic runs.
//!
//! Fixture file: a JSON array of entries, or an object
//! `{"default_reply": "...", "entries": [...]}`. Each entry:
//!
//! ```json
//! {"prompt_match": "exact" | "substring" | "sha256", "pattern": "...",
//!  "trajectory_id": 0, "reply": "...", "usage": 120, "latency_seconds": 0.2}
//! ```
//!
//! `trajectory_id`, `usage` and `latency_seconds` are optional. Exact and
//! sha256 matches beat substring matches; an entry naming the trajectory beats
//! one that does not; remaining ties go to file order.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, BackendReply, CallSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMatch {
    Exact,
    Substring,
    Sha256,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockEntry {
    pub prompt_match: PromptMatch,
    pub pattern: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory_id: Option<usize>,
    pub reply: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_seconds: Option<f64>,
}

impl MockEntry {
    pub fn substring(pattern: impl Into<String>, reply: impl Into<String>) -> Self {
        MockEntry {
            prompt_match: PromptMatch::Substring,
            pattern: pattern.into(),
            trajectory_id: None,
            reply: reply.into(),
            usage: None,
            latency_seconds: None,
        }
    }

    pub fn for_trajectory(mut self, id: usize) -> Self {
        self.trajectory_id = Some(id);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockFixture {
    #[serde(default)]
    pub default_reply: String,
    pub entries: Vec<MockEntry>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FixtureFile {
    List(Vec<MockEntry>),
    Full(MockFixture),
}

impl MockFixture {
    pub fn parse(text: &str) -> Result<Self, BackendError> {
        let file: FixtureFile =
            serde_json::from_str(text).map_err(|e| BackendError::Config(format!("mock fixture: {e}")))?;
        Ok(match file {
            FixtureFile::List(entries) => MockFixture {
                default_reply: String::new(),
                entries,
            },
            FixtureFile::Full(f) => f,
        })
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

pub struct MockBackend {
    fixture: MockFixture,
    calls: AtomicUsize,
    prompts: Mutex<Vec<String>>,
}

impl MockBackend {
    pub fn new(fixture: MockFixture) -> Self {
        MockBackend {
            fixture,
            calls: AtomicUsize::new(0),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn invocations(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Every prompt received so far, in arrival order.
    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn lookup(&self, prompt: &str, trajectory_id: usize) -> Option<&MockEntry> {
        let digest = hex::encode(Sha256::digest(prompt.as_bytes()));
        let rank = |e: &MockEntry| -> Option<u8> {
            let matched = match e.prompt_match {
                PromptMatch::Exact => e.pattern == prompt,
                PromptMatch::Sha256 => e.pattern.eq_ignore_ascii_case(&digest),
                PromptMatch::Substring => prompt.contains(&e.pattern),
            };
            let traj_ok = e.trajectory_id.is_none_or(|t| t == trajectory_id);
            if !matched || !traj_ok {
                return None;
            }
            let tier = if e.prompt_match == PromptMatch::Substring { 2 } else { 0 };
            Some(tier + u8::from(e.trajectory_id.is_none()))
        };
        self.fixture
            .entries
            .iter()
            .filter_map(|e| rank(e).map(|r| (r, e)))
            .min_by_key(|(r, _)| *r)
            .map(|(_, e)| e)
    }
}

impl Backend for MockBackend {
    fn identity(&self) -> String {
        let bytes = serde_json::to_vec(&self.fixture).unwrap_or_default();
        format!("mock:{}", &hex::encode(Sha256::digest(bytes))[..16])
    }

    fn complete(&self, call: &CallSpec<'_>) -> Result<BackendReply, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.prompts
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(call.prompt.to_string());
        Ok(match self.lookup(call.prompt, call.trajectory_id) {
            Some(e) => BackendReply {
                text: e.reply.clone(),
                usage: e.usage,
                latency_seconds: Some(e.latency_seconds.unwrap_or(0.0)),
            },
            None => BackendReply {
                text: self.fixture.default_reply.clone(),
                usage: None,
                latency_seconds: Some(0.0),
            },
        })
    }
}
