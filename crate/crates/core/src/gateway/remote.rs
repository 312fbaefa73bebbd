//! Chat-completions client.

use std::time::Duration;

use serde_json::value::RawValue;
use serde_json::Value;

use super::{Backend, BackendError, BackendReply, CallSpec};

pub const DEFAULT_REQUEST_TIMEOUT_SECONDS: f64 = 120.0;
pub const DEFAULT_RETRIES: u32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout_seconds: f64,
    pub retries: u32,
    /// First retry delay; doubles on each further attempt.
    pub backoff: Duration,
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteConfig {
            url: url.into(),
            api_key: None,
            model: model.into(),
            timeout_seconds: DEFAULT_REQUEST_TIMEOUT_SECONDS,
            retries: DEFAULT_RETRIES,
            backoff: Duration::from_millis(500),
        }
    }

    /// Reads BACKEND_URL, BACKEND_API_KEY and BACKEND_MODEL.
    pub fn from_env() -> Result<Self, BackendError> {
        let url = std::env::var("BACKEND_URL").map_err(|_| BackendError::Config("BACKEND_URL is not set".into()))?;
        let model = std::env::var("BACKEND_MODEL").unwrap_or_default();
        let mut cfg = RemoteConfig::new(url, model);
        cfg.api_key = std::env::var("BACKEND_API_KEY").ok().filter(|k| !k.is_empty());
        Ok(cfg)
    }

    pub fn endpoint(&self) -> String {
        let base = self.url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_seconds))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(RemoteBackend { config, client })
    }

    pub fn from_env() -> Result<Self, BackendError> {
        Self::new(RemoteConfig::from_env()?)
    }
}

/// Serializes the request body. Extra parameters are spliced in verbatim when
/// they are valid JSON and as JSON strings otherwise; they replace any
/// same-named base field.
pub fn request_body(model: &str, call: &CallSpec<'_>) -> String {
    let overridden = |k: &str| call.backend_params.iter().any(|(p, _)| p == k);
    let mut fields: Vec<(String, String)> = Vec::new();
    let mut push = |k: &str, v: Value| {
        if !overridden(k) {
            fields.push((k.to_string(), v.to_string()));
        }
    };
    push("model", Value::from(model));
    push(
        "messages",
        serde_json::json!([{"role": "user", "content": call.prompt}]),
    );
    push("temperature", Value::from(call.temperature));
    push("n", Value::from(1));
    push("max_tokens", Value::from(call.max_new_tokens));
    if let Some(seed) = call.seed {
        push("seed", Value::from(seed));
    }
    for (k, v) in call.backend_params {
        let raw = match serde_json::from_str::<Box<RawValue>>(v) {
            Ok(raw) => raw.get().to_string(),
            Err(_) => Value::from(v.as_str()).to_string(),
        };
        fields.push((k.clone(), raw));
    }
    let parts: Vec<String> = fields
        .into_iter()
        .map(|(k, v)| format!("{}:{}", Value::from(k), v))
        .collect();
    format!("{{{}}}", parts.join(","))
}

/// Reply text and token usage (total, else completion) from a response body.
pub fn parse_response(body: &str) -> Result<BackendReply, BackendError> {
    let v: Value = serde_json::from_str(body).map_err(|e| BackendError::Protocol(e.to_string()))?;
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Protocol("missing choices[0].message.content".into()))?
        .to_string();
    let usage = v.get("usage").and_then(|u| {
        u.get("total_tokens")
            .and_then(Value::as_u64)
            .or_else(|| u.get("completion_tokens").and_then(Value::as_u64))
    });
    Ok(BackendReply {
        text,
        usage,
        latency_seconds: None,
    })
}

enum Attempt {
    Done(Result<BackendReply, BackendError>),
    Retry(BackendError),
}

impl RemoteBackend {
    fn attempt(&self, body: &str) -> Attempt {
        let mut req = self
            .client
            .post(self.config.endpoint())
            .header("content-type", "application/json")
            .body(body.to_string());
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::Done(Err(BackendError::Timeout(e.to_string()))),
            Err(e) => return Attempt::Retry(BackendError::Transport(e.to_string())),
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) if e.is_timeout() => return Attempt::Done(Err(BackendError::Timeout(e.to_string()))),
            Err(e) => return Attempt::Retry(BackendError::Transport(e.to_string())),
        };
        if status.is_success() {
            return Attempt::Done(parse_response(&text));
        }
        let err = BackendError::Http {
            status: status.as_u16(),
            body: text.chars().take(500).collect(),
        };
        if status.is_server_error() || status.as_u16() == 429 {
            Attempt::Retry(err)
        } else {
            Attempt::Done(Err(err))
        }
    }
}

impl Backend for RemoteBackend {
    fn identity(&self) -> String {
        format!("remote:{}:{}", self.config.endpoint(), self.config.model)
    }

    fn complete(&self, call: &CallSpec<'_>) -> Result<BackendReply, BackendError> {
        let body = request_body(&self.config.model, call);
        let mut delay = self.config.backoff;
        let mut last = None;
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(&body) {
                Attempt::Done(r) => return r,
                Attempt::Retry(e) => {
                    log::warn!("backend attempt {} failed: {e}", attempt + 1);
                    last = Some(e);
                }
            }
        }
        Err(match last {
            Some(BackendError::Transport(m)) => BackendError::Transport(m),
            Some(other) => BackendError::Transport(other.to_string()),
            None => BackendError::Transport("no attempt made".into()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call<'a>(params: &'a [(String, String)]) -> CallSpec<'a> {
        CallSpec {
            prompt: "hi \"there\"",
            temperature: 0.8,
            max_new_tokens: 64,
            backend_params: params,
            seed: Some(7),
            trajectory_id: 0,
        }
    }

    #[test]
    fn body_shape_and_param_passthrough() {
        let params = vec![
            ("block_length".to_string(), "32".to_string()),
            ("extra".to_string(), "{\"a\": [1, 2.50]}".to_string()),
            ("mode".to_string(), "fast".to_string()),
            ("temperature".to_string(), "0.0".to_string()),
        ];
        let body = request_body("m", &call(&params));
        let v: Value = serde_json::from_str(&body).unwrap();
        assert_eq!(v["model"], "m");
        assert_eq!(v["messages"][0]["content"], "hi \"there\"");
        assert_eq!(v["n"], 1);
        assert_eq!(v["seed"], 7);
        assert_eq!(v["mode"], "fast");
        // verbatim bytes, including the unusual number spelling
        assert!(body.contains("\"extra\":{\"a\": [1, 2.50]}"));
        assert!(body.contains("\"block_length\":32"));
        assert!(body.contains("\"temperature\":0.0") && body.matches("temperature").count() == 1);
    }

    #[test]
    fn response_usage() {
        let r = parse_response(r#"{"choices":[{"message":{"content":"x"}}],"usage":{"total_tokens":2200,"completion_tokens":900}}"#).unwrap();
        assert_eq!((r.text.as_str(), r.usage), ("x", Some(2200)));
        let r = parse_response(r#"{"choices":[{"message":{"content":"x"}}],"usage":{"completion_tokens":900}}"#).unwrap();
        assert_eq!(r.usage, Some(900));
        assert!(parse_response(r#"{"choices":[]}"#).is_err());
    }

    #[test]
    fn endpoint_suffix() {
        assert_eq!(RemoteConfig::new("http://h/v1/", "m").endpoint(), "http://h/v1/chat/completions");
        assert_eq!(RemoteConfig::new("http://h/v1/chat/completions", "m").endpoint(), "http://h/v1/chat/completions");
    }
}
