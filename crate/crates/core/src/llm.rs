//! Generative model clients.
//!
//! Every prompt this crate builds starts with a `### task: <name>` line so
//! that replay fixtures and the offline model can tell call classes apart.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClientError {
    #[error("model unavailable: {0}")]
    Unavailable(String),
    #[error("no recorded response for prompt {0}")]
    NoFixture(String),
    #[error("malformed model response: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub temperature: f32,
    pub max_output_tokens: u32,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, temperature: f32, max_output_tokens: u32) -> Self {
        GenerationRequest {
            prompt: prompt.into(),
            temperature,
            max_output_tokens,
        }
    }

    pub fn task(&self) -> Option<&str> {
        task_of(&self.prompt)
    }
}

pub trait GenerativeModelClient: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<String, ClientError>;
}

impl<T: GenerativeModelClient + ?Sized> GenerativeModelClient for Arc<T> {
    fn generate(&self, request: &GenerationRequest) -> Result<String, ClientError> {
        (**self).generate(request)
    }
}

impl<T: GenerativeModelClient + ?Sized> GenerativeModelClient for &T {
    fn generate(&self, request: &GenerationRequest) -> Result<String, ClientError> {
        (**self).generate(request)
    }
}

/// Task marker line prefix.
pub const TASK_MARKER: &str = "### task: ";

/// Reads the task name from a prompt's first line.
pub fn task_of(prompt: &str) -> Option<&str> {
    prompt
        .lines()
        .next()
        .and_then(|l| l.strip_prefix(TASK_MARKER))
        .map(str::trim)
}

/// Hex SHA-256 of a prompt; the replay fixture key.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Replays recorded responses keyed by prompt hash.
#[derive(Default)]
pub struct ReplayClient {
    fixtures: HashMap<String, String>,
    fallback: Option<Arc<dyn GenerativeModelClient>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureLine {
    #[serde(default)]
    prompt_hash: Option<String>,
    #[serde(default)]
    prompt: Option<String>,
    response: String,
}

impl ReplayClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fallback(mut self, fallback: Arc<dyn GenerativeModelClient>) -> Self {
        self.fallback = Some(fallback);
        self
    }

    pub fn record(&mut self, prompt: &str, response: impl Into<String>) {
        self.fixtures.insert(prompt_hash(prompt), response.into());
    }

    pub fn record_hash(&mut self, hash: impl Into<String>, response: impl Into<String>) {
        self.fixtures.insert(hash.into(), response.into());
    }

    /// Loads JSONL lines of `{"prompt_hash"|"prompt": …, "response": …}`.
    pub fn load_jsonl(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let mut client = Self::new();
        for line in std::fs::read_to_string(path)?.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let fx: FixtureLine = serde_json::from_str(line)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            let key = match (fx.prompt_hash, fx.prompt) {
                (Some(h), _) => h,
                (None, Some(p)) => prompt_hash(&p),
                (None, None) => {
                    return Err(std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        "fixture line needs prompt_hash or prompt",
                    ))
                }
            };
            client.fixtures.insert(key, fx.response);
        }
        Ok(client)
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }
}

impl GenerativeModelClient for ReplayClient {
    fn generate(&self, request: &GenerationRequest) -> Result<String, ClientError> {
        let key = prompt_hash(&request.prompt);
        match self.fixtures.get(&key) {
            Some(r) => Ok(r.clone()),
            None => match &self.fallback {
                Some(f) => f.generate(request),
                None => Err(ClientError::NoFixture(key)),
            },
        }
    }
}

/// Answers by the first rule whose task matches and whose needle occurs in the prompt.
#[derive(Default)]
pub struct ScriptedClient {
    rules: Vec<(Option<String>, String, String)>,
    fallback: Option<Arc<dyn GenerativeModelClient>>,
}

impl ScriptedClient {
    pub fn new() -> Self {
        Self::default()
    }

    /// Responds with `response` to any `task` prompt containing `needle`.
    pub fn on(mut self, task: &str, needle: &str, response: impl Into<String>) -> Self {
        self.rules
            .push((Some(task.to_owned()), needle.to_owned(), response.into()));
        self
    }

    /// Responds with `response` to any prompt containing `needle`.
    pub fn on_any(mut self, needle: &str, response: impl Into<String>) -> Self {
        self.rules.push((None, needle.to_owned(), response.into()));
        self
    }

    pub fn with_fallback(mut self, fallback: Arc<dyn GenerativeModelClient>) -> Self {
        self.fallback = Some(fallback);
        self
    }
}

impl GenerativeModelClient for ScriptedClient {
    fn generate(&self, request: &GenerationRequest) -> Result<String, ClientError> {
        let task = request.task();
        for (rule_task, needle, response) in &self.rules {
            let task_ok = rule_task.as_deref().is_none_or(|t| Some(t) == task);
            if task_ok && request.prompt.contains(needle.as_str()) {
                return Ok(response.clone());
            }
        }
        match &self.fallback {
            Some(f) => f.generate(request),
            None => Err(ClientError::NoFixture(prompt_hash(&request.prompt))),
        }
    }
}

/// Wraps a client and records every request it sees.
pub struct RecordingClient<C> {
    inner: C,
    calls: Mutex<Vec<GenerationRequest>>,
}

impl<C: GenerativeModelClient> RecordingClient<C> {
    pub fn new(inner: C) -> Self {
        RecordingClient {
            inner,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> Vec<GenerationRequest> {
        self.calls.lock().unwrap().clone()
    }

    pub fn tasks(&self) -> Vec<String> {
        self.calls()
            .iter()
            .map(|c| c.task().unwrap_or("").to_owned())
            .collect()
    }

    pub fn clear(&self) {
        self.calls.lock().unwrap().clear();
    }
}

impl<C: GenerativeModelClient> GenerativeModelClient for RecordingClient<C> {
    fn generate(&self, request: &GenerationRequest) -> Result<String, ClientError> {
        self.calls.lock().unwrap().push(request.clone());
        self.inner.generate(request)
    }
}

/// Always fails; exercises degradation paths.
pub struct FailingClient;

impl GenerativeModelClient for FailingClient {
    fn generate(&self, _request: &GenerationRequest) -> Result<String, ClientError> {
        Err(ClientError::Unavailable("failing client".into()))
    }
}

/// OpenAI-compatible chat-completions client.
pub struct HttpChatClient {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpChatClient {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .expect("http client");
        HttpChatClient {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            http,
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl GenerativeModelClient for HttpChatClient {
    fn generate(&self, request: &GenerationRequest) -> Result<String, ClientError> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let mut req = self.http.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| ClientError::Unavailable(e.to_string()))?;
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| ClientError::Malformed(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ClientError::Malformed("no choices".into()))
    }
}
