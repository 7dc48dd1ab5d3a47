use std::sync::Mutex;
use std::time::Duration;

use log::{debug, warn};
use rand::Rng;
use reconf_core::DecodeConfig;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::{ClientError, CompletionBackend, CompletionRequest};

pub const ENV_BASE_URL: &str = "RECONF_BASE_URL";
pub const ENV_API_KEY: &str = "RECONF_API_KEY";
pub const ENV_MODEL: &str = "RECONF_MODEL";
pub const DEFAULT_PATH: &str = "/v1/chat/completions";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub multiplier: f64,
    /// Scale each wait by a uniform factor in `[0.5, 1.5)`.
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
            multiplier: 2.0,
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// Wait before attempt `attempt + 1`, for `attempt >= 1`.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let base = self.initial_backoff.as_secs_f64() * self.multiplier.powi(attempt.saturating_sub(1) as i32);
        let factor = if self.jitter {
            rand::thread_rng().gen_range(0.5..1.5)
        } else {
            1.0
        };
        Duration::from_secs_f64(base * factor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub base_url: String,
    pub path: String,
    pub model: String,
    pub api_key: Option<String>,
    pub headers: Vec<(String, String)>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            path: DEFAULT_PATH.into(),
            model: model.into(),
            api_key: None,
            headers: Vec::new(),
            timeout: Duration::from_secs(60),
            retry: RetryPolicy::default(),
        }
    }

    /// Reads `RECONF_BASE_URL`, `RECONF_API_KEY` and `RECONF_MODEL`; explicit
    /// arguments win over the environment.
    pub fn from_env(base_url: Option<&str>, model: Option<&str>) -> Result<Self, ClientError> {
        let base_url = base_url
            .map(String::from)
            .or_else(|| std::env::var(ENV_BASE_URL).ok())
            .ok_or_else(|| ClientError::Config(format!("no base URL given and {ENV_BASE_URL} is unset")))?;
        let model = model
            .map(String::from)
            .or_else(|| std::env::var(ENV_MODEL).ok())
            .unwrap_or_else(|| "default".into());
        let mut cfg = Self::new(base_url, model);
        cfg.api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        Ok(cfg)
    }

    pub fn url(&self) -> String {
        format!("{}{}", self.base_url.trim_end_matches('/'), self.path)
    }
}

/// Chat-completions request body for one prompt.
///
/// Greedy decoding is sent as `temperature: 0`, top-k as `top_k: k` and
/// temperature sampling as the temperature itself.
pub fn build_request_body(model: &str, req: &CompletionRequest) -> Value {
    let mut body = json!({
        "model": model,
        "messages": [{ "role": "user", "content": req.prompt }],
        "max_tokens": req.max_tokens,
    });
    match req.decode {
        DecodeConfig::Top1 => body["temperature"] = json!(0.0),
        DecodeConfig::TopK { k } => body["top_k"] = json!(k),
        DecodeConfig::Temperature { temperature } => body["temperature"] = json!(temperature),
    }
    if let Some(seed) = req.seed {
        body["seed"] = json!(seed);
    }
    body
}

/// Text of the first choice's message.
pub fn parse_response(body: &str) -> Result<String, ClientError> {
    let value: Value = serde_json::from_str(body).map_err(|e| ClientError::MalformedResponse(e.to_string()))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(String::from)
        .ok_or_else(|| ClientError::MalformedResponse("missing choices[0].message.content".into()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptLog {
    pub attempt: u32,
    pub status: Option<u16>,
    pub error: Option<String>,
}

/// Blocking client for an OpenAI-style chat-completions endpoint.
#[derive(Debug)]
pub struct RemoteBackend {
    config: EndpointConfig,
    http: reqwest::blocking::Client,
    attempts: Mutex<Vec<AttemptLog>>,
}

impl RemoteBackend {
    pub fn new(config: EndpointConfig) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(RemoteBackend {
            config,
            http,
            attempts: Mutex::new(Vec::new()),
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// Every HTTP attempt made so far, in order.
    pub fn attempt_log(&self) -> Vec<AttemptLog> {
        self.attempts.lock().expect("attempt log poisoned").clone()
    }

    fn record(&self, entry: AttemptLog) {
        self.attempts.lock().expect("attempt log poisoned").push(entry);
    }

    fn send_once(&self, body: &Value) -> Result<String, ClientError> {
        let mut request = self.http.post(self.config.url()).json(body);
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        for (name, value) in &self.config.headers {
            request = request.header(name, value);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                ClientError::Timeout
            } else {
                ClientError::Transport(e.to_string())
            }
        })?;
        let status = response.status();
        let text = response.text().map_err(|e| ClientError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ClientError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        parse_response(&text)
    }
}

impl CompletionBackend for RemoteBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ClientError> {
        let body = build_request_body(&self.config.model, req);
        let policy = &self.config.retry;
        let max_attempts = policy.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match self.send_once(&body) {
                Ok(text) => {
                    debug!("attempt {attempt} succeeded");
                    self.record(AttemptLog {
                        attempt,
                        status: Some(200),
                        error: None,
                    });
                    return Ok(text);
                }
                Err(err) => {
                    let status = match &err {
                        ClientError::Status { status, .. } => Some(*status),
                        _ => None,
                    };
                    warn!(
                        "attempt {attempt}/{max_attempts} to {} failed: {err}",
                        self.config.url()
                    );
                    self.record(AttemptLog {
                        attempt,
                        status,
                        error: Some(err.to_string()),
                    });
                    if !err.is_retryable() {
                        return Err(err);
                    }
                    if attempt >= max_attempts {
                        return Err(ClientError::RetriesExhausted {
                            attempts: attempt,
                            last: Box::new(err),
                        });
                    }
                    std::thread::sleep(policy.backoff(attempt));
                    attempt += 1;
                }
            }
        }
    }

    fn describe(&self) -> String {
        format!("remote({} model={})", self.config.url(), self.config.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_mapping() {
        let top1 = build_request_body("m", &CompletionRequest::new("hi", DecodeConfig::Top1));
        assert_eq!(top1["temperature"], 0.0);
        assert!(top1.get("top_k").is_none());

        let topk = build_request_body("m", &CompletionRequest::new("hi", DecodeConfig::TopK { k: 40 }));
        assert_eq!(topk["top_k"], 40);

        let temp = build_request_body(
            "m",
            &CompletionRequest::new("hi", DecodeConfig::Temperature { temperature: 1.5 }).with_seed(9),
        );
        assert_eq!(temp["temperature"], 1.5);
        assert_eq!(temp["seed"], 9);
        assert_eq!(temp["messages"][0]["content"], "hi");
        assert_eq!(temp["model"], "m");
    }

    #[test]
    fn response_parsing() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"B"}}]}"#;
        assert_eq!(parse_response(ok).unwrap(), "B");
        assert!(matches!(parse_response("{}"), Err(ClientError::MalformedResponse(_))));
        assert!(matches!(
            parse_response("not json"),
            Err(ClientError::MalformedResponse(_))
        ));
    }

    #[test]
    fn backoff_doubles_without_jitter() {
        let p = RetryPolicy {
            jitter: false,
            ..RetryPolicy::default()
        };
        assert_eq!(p.backoff(1), Duration::from_millis(500));
        assert_eq!(p.backoff(2), Duration::from_millis(1000));
        assert_eq!(p.backoff(3), Duration::from_millis(2000));
    }

    #[test]
    fn retryable_classification() {
        assert!(ClientError::Timeout.is_retryable());
        assert!(ClientError::Status {
            status: 429,
            body: String::new()
        }
        .is_retryable());
        assert!(ClientError::Status {
            status: 503,
            body: String::new()
        }
        .is_retryable());
        assert!(!ClientError::Status {
            status: 400,
            body: String::new()
        }
        .is_retryable());
        assert!(!ClientError::MalformedResponse(String::new()).is_retryable());
    }

    #[test]
    fn url_joining() {
        let cfg = EndpointConfig::new("http://localhost:8000/", "m");
        assert_eq!(cfg.url(), "http://localhost:8000/v1/chat/completions");
    }
}
