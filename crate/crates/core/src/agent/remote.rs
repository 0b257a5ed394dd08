//! HTTP text-completion backend.
//!
//! Request body `{"prompt", "max_tokens", "temperature", "seed"}`, response
//! `{"text"}`. The reply must contain a line `ACTION: <name>`; the lines after
//! it of the form `key: value` become the payload.

use std::collections::BTreeMap;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::decision::{
    check_response, DecisionBackend, DecisionError, DecisionFailure, DecisionRequest, DecisionResponse, FallbackPolicy,
};
use super::prompt::render_prompt;
use crate::value::{Value, ValueMap};

pub const ENDPOINT_ENV: &str = "ONESIM_ENDPOINT";
pub const TOKEN_ENV: &str = "ONESIM_API_TOKEN";

pub const DEFAULT_TEMPLATE: &str = "You are agent {self.id} of type {self.type}, currently at `{node}`.\n\
Choose exactly one next action from: {actions} (or skip).\n\
Reply with a line `ACTION: <name>` followed by optional `key: value` lines.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub timeout: Duration,
    pub retries: u32,
    pub initial_backoff: Duration,
    pub max_in_flight: usize,
    pub fallback: FallbackPolicy,
    /// Per-node prompt templates; nodes without one use [`DEFAULT_TEMPLATE`].
    pub templates: BTreeMap<String, String>,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        RemoteConfig {
            base_url: base_url.into(),
            token_env: TOKEN_ENV.to_string(),
            max_tokens: 256,
            temperature: 0.0,
            timeout: Duration::from_secs(30),
            retries: 2,
            initial_backoff: Duration::from_millis(500),
            max_in_flight: 32,
            fallback: FallbackPolicy::AbortReplicate,
            templates: BTreeMap::new(),
        }
    }

    /// Endpoint from [`ENDPOINT_ENV`], if set.
    pub fn from_env() -> Option<Self> {
        std::env::var(ENDPOINT_ENV).ok().filter(|s| !s.is_empty()).map(Self::new)
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct CompletionReply {
    text: String,
}

fn parse_scalar(raw: &str) -> Value {
    let raw = raw.trim();
    if let Ok(i) = raw.parse::<i64>() {
        Value::Int(i)
    } else if let Ok(f) = raw.parse::<f64>() {
        Value::Real(f)
    } else if raw == "true" || raw == "false" {
        Value::Bool(raw == "true")
    } else {
        Value::Text(raw.to_string())
    }
}

/// Parse the `ACTION:` reply contract. Returns `None` when no action line exists.
pub fn parse_action_text(text: &str) -> Option<DecisionResponse> {
    let mut lines = text.lines();
    let action = lines.by_ref().find_map(|l| {
        l.trim()
            .strip_prefix("ACTION:")
            .map(|rest| rest.trim().to_string())
            .filter(|name| !name.is_empty())
    })?;
    let mut payload = ValueMap::new();
    for line in lines {
        if let Some((k, v)) = line.split_once(':') {
            let k = k.trim();
            if !k.is_empty() && k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                payload.insert(k.to_string(), parse_scalar(v));
            }
        }
    }
    Some(DecisionResponse { action_name: action, payload, raw_text: Some(text.to_string()) })
}

struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore { permits: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut p = self.permits.lock().unwrap();
        while *p == 0 {
            p = self.cv.wait(p).unwrap();
        }
        *p -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    http: ureq::Agent,
    in_flight: Semaphore,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let http: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(true)
            .build()
            .into();
        let in_flight = Semaphore::new(config.max_in_flight);
        RemoteBackend { config, http, in_flight }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    pub fn render(&self, request: &DecisionRequest) -> Result<String, DecisionError> {
        let template = self.config.templates.get(&request.node).map_or(DEFAULT_TEMPLATE, String::as_str);
        render_prompt(template, request)
            .map_err(|e| DecisionError::new(DecisionFailure::Parse, e.to_string(), self.config.fallback))
    }

    fn post_once(&self, prompt: &str, seed: u64) -> Result<String, DecisionError> {
        let body = CompletionRequest {
            prompt,
            max_tokens: self.config.max_tokens,
            temperature: self.config.temperature,
            seed: Some(seed),
        };
        let mut req = self.http.post(&self.config.base_url);
        if let Ok(token) = std::env::var(&self.config.token_env) {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let fallback = self.config.fallback;
        let resp = req.send_json(&body).map_err(|e| {
            let failure = match e {
                ureq::Error::Timeout(_) => DecisionFailure::Timeout,
                _ => DecisionFailure::Transport,
            };
            DecisionError::new(failure, e.to_string(), fallback)
        })?;
        let reply: CompletionReply = resp
            .into_body()
            .read_json()
            .map_err(|e| DecisionError::new(DecisionFailure::Parse, e.to_string(), fallback))?;
        Ok(reply.text)
    }

    /// POST `prompt`, retrying transport failures with exponential backoff.
    pub fn complete(&self, prompt: &str, seed: u64) -> Result<String, DecisionError> {
        let _permit = self.in_flight.acquire();
        let mut backoff = self.config.initial_backoff;
        let mut attempt = 0;
        loop {
            match self.post_once(prompt, seed) {
                Ok(text) => return Ok(text),
                Err(e) if e.failure != DecisionFailure::Parse && attempt < self.config.retries => {
                    attempt += 1;
                    std::thread::sleep(backoff);
                    backoff *= 2;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

impl DecisionBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn decide(&self, request: &DecisionRequest) -> Result<DecisionResponse, DecisionError> {
        let prompt = self.render(request)?;
        let text = self.complete(&prompt, request.seed)?;
        let response = parse_action_text(&text).ok_or_else(|| {
            DecisionError::new(DecisionFailure::Parse, "reply has no `ACTION:` line", self.config.fallback)
        })?;
        check_response(request, &response, self.config.fallback)?;
        Ok(response)
    }
}
