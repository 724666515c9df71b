//! Text-completion providers.
//!
//! [`ScriptedProvider`] replays queued responses per pipeline stage and makes
//! every pipeline run reproducible. [`HttpProvider`] speaks a minimal JSON
//! contract:
//!
//! ```text
//! POST {"prompt": str, "max_tokens": int, "temperature": num}
//!   -> 200 {"text": str}
//! ```

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pipeline stage a request belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestTag {
    Schema,
    Answer,
    Hypothesis,
    PathScore,
}

impl fmt::Display for RequestTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RequestTag::Schema => "schema",
            RequestTag::Answer => "answer",
            RequestTag::Hypothesis => "hypothesis",
            RequestTag::PathScore => "path_score",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub tag: RequestTag,
}

impl CompletionRequest {
    /// Deterministic request (temperature 0).
    pub fn new(tag: RequestTag, prompt: impl Into<String>, max_tokens: u32) -> Self {
        Self {
            prompt: prompt.into(),
            max_tokens,
            temperature: 0.0,
            tag,
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.prompt.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("prompt is empty"));
        }
        if self.max_tokens == 0 {
            return Err(ProviderError::InvalidRequest("max_tokens must be positive"));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(ProviderError::InvalidRequest(
                "temperature must be a non-negative number",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub provider_name: String,
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("invalid completion request: {0}")]
    InvalidRequest(&'static str),
    #[error("script has no response left for tag `{tag}` and no default")]
    ScriptExhausted { tag: RequestTag },
    #[error("could not load script: {0}")]
    Script(String),
    #[error("transport failure after {retries} retries: {message}")]
    Transport { retries: u32, message: String },
    #[error("endpoint returned HTTP {status} after {retries} retries")]
    Status { retries: u32, status: u16 },
    #[error("malformed response body after {retries} retries: {message}")]
    MalformedBody { retries: u32, message: String },
    #[error("invalid provider spec {0:?}; expected `scripted:<file>` or `http:<url>`")]
    InvalidSpec(String),
}

pub trait CompletionProvider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError>;
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        (**self).complete(request)
    }
}

/// Prompt condition of a script entry: one substring, or several that must
/// all occur.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum When {
    One(String),
    All(Vec<String>),
}

impl When {
    pub fn matches(&self, prompt: &str) -> bool {
        match self {
            When::One(needle) => prompt.contains(needle.as_str()),
            When::All(needles) => needles.iter().all(|n| prompt.contains(n.as_str())),
        }
    }
}

/// One queued response, eligible only when its `when` condition holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub tag: RequestTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<When>,
    pub text: String,
}

/// Serializable script: ordered responses plus an optional fallback text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
    #[serde(default)]
    pub responses: Vec<ScriptEntry>,
}

impl Script {
    pub fn from_json(text: &str) -> Result<Self, ProviderError> {
        serde_json::from_str(text).map_err(|e| ProviderError::Script(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Script(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Replays a [`Script`]: each request consumes the first queued entry with a
/// matching tag and `when` condition, falling back to the default text.
#[derive(Debug)]
pub struct ScriptedProvider {
    queue: Mutex<VecDeque<ScriptEntry>>,
    default: Option<String>,
}

impl ScriptedProvider {
    pub fn new(script: Script) -> Self {
        Self {
            queue: Mutex::new(script.responses.into()),
            default: script.default,
        }
    }

    pub fn empty() -> Self {
        Self::new(Script::default())
    }

    pub fn with_default(mut self, text: impl Into<String>) -> Self {
        self.default = Some(text.into());
        self
    }

    pub fn push(self, tag: RequestTag, text: impl Into<String>) -> Self {
        self.queue.lock().unwrap().push_back(ScriptEntry {
            tag,
            when: None,
            text: text.into(),
        });
        self
    }

    pub fn push_when(self, tag: RequestTag, when: impl Into<String>, text: impl Into<String>) -> Self {
        self.queue.lock().unwrap().push_back(ScriptEntry {
            tag,
            when: Some(When::One(when.into())),
            text: text.into(),
        });
        self
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap().len()
    }
}

impl CompletionProvider for ScriptedProvider {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        request.validate()?;
        let mut queue = self.queue.lock().unwrap();
        let hit = queue.iter().position(|e| {
            e.tag == request.tag
                && e.when.as_ref().is_none_or(|w| w.matches(&request.prompt))
        });
        let text = match hit {
            Some(i) => queue.remove(i).expect("index in range").text,
            None => self
                .default
                .clone()
                .ok_or(ProviderError::ScriptExhausted { tag: request.tag })?,
        };
        Ok(CompletionResponse {
            text,
            provider_name: self.name().to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub url: String,
    pub bearer_token: Option<String>,
    pub max_retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff: Duration,
    pub timeout: Duration,
}

impl HttpConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            bearer_token: None,
            max_retries: 2,
            backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
}

#[derive(Deserialize)]
struct WireResponse {
    text: String,
}

enum AttemptError {
    Transport(String),
    Status(u16),
    Malformed(String),
}

pub struct HttpProvider {
    config: HttpConfig,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(config: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<String, AttemptError> {
        let mut builder = self.agent.post(&self.config.url);
        if let Some(token) = &self.config.bearer_token {
            builder = builder.header("Authorization", format!("Bearer {token}"));
        }
        let mut response = builder
            .send_json(WireRequest {
                prompt: &request.prompt,
                max_tokens: request.max_tokens,
                temperature: request.temperature,
            })
            .map_err(|e| AttemptError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(AttemptError::Status(status));
        }
        let body: WireResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| AttemptError::Malformed(e.to_string()))?;
        Ok(body.text)
    }
}

impl CompletionProvider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        request.validate()?;
        let mut retries = 0;
        loop {
            match self.attempt(request) {
                Ok(text) => {
                    return Ok(CompletionResponse {
                        text,
                        provider_name: self.name().to_string(),
                    })
                }
                Err(err) if retries >= self.config.max_retries => {
                    return Err(match err {
                        AttemptError::Transport(message) => {
                            ProviderError::Transport { retries, message }
                        }
                        AttemptError::Status(status) => ProviderError::Status { retries, status },
                        AttemptError::Malformed(message) => {
                            ProviderError::MalformedBody { retries, message }
                        }
                    })
                }
                Err(_) => {
                    thread::sleep(self.config.backoff * 2u32.saturating_pow(retries));
                    retries += 1;
                }
            }
        }
    }
}

/// Provider selection as written on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum ProviderSpec {
    Scripted(Script),
    Http(HttpConfig),
}

impl ProviderSpec {
    /// Parses `scripted:<file>` (loading the file) or `http:<url>`.
    pub fn parse(spec: &str) -> Result<Self, ProviderError> {
        if let Some(path) = spec.strip_prefix("scripted:") {
            Ok(ProviderSpec::Scripted(Script::from_path(Path::new(path))?))
        } else if let Some(url) = spec.strip_prefix("http:") {
            // `http:http://host/...` and `http:https://...` keep the scheme;
            // bare `http://host` is accepted as-is.
            let url = if url.starts_with("//") {
                format!("http:{url}")
            } else {
                url.to_string()
            };
            Ok(ProviderSpec::Http(HttpConfig::new(url)))
        } else if spec.starts_with("https:") {
            Ok(ProviderSpec::Http(HttpConfig::new(spec)))
        } else {
            Err(ProviderError::InvalidSpec(spec.to_string()))
        }
    }

    pub fn build(&self) -> Box<dyn CompletionProvider> {
        match self {
            ProviderSpec::Scripted(script) => Box::new(ScriptedProvider::new(script.clone())),
            ProviderSpec::Http(config) => Box::new(HttpProvider::new(config.clone())),
        }
    }
}

impl FromStr for ProviderSpec {
    type Err = ProviderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}
