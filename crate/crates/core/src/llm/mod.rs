//! Chat-completion access with tiered models, retries, rate limiting,
//! structured output and image questions.

mod http_backend;
mod limiter;
pub mod mock;
mod schema;
mod vision;

use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::http::HttpClient;
use crate::prompt::{Message, RenderedPrompt, Role};
use crate::retry::{backoff_delay, Sleeper, ThreadSleeper};

pub use http_backend::HttpChatBackend;
pub use limiter::RateLimiter;
pub use mock::{FaultInjector, MockConfig, MockProvider, RecordingBackend, Responder};
pub use schema::{extract_json_object, FieldKind, FieldSpec, Schema, SCHEMA_MARKER};
pub use vision::{prepare_image, PreparedImage, MAX_IMAGE_BYTES, MAX_LONG_EDGE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Fast,
    Standard,
    Vision,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Fast, Tier::Standard, Tier::Vision];

    fn index(self) -> usize {
        self as usize
    }
}

/// A credential that never appears in logs or serialized output.
#[derive(Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(transparent)]
pub struct Secret(String);

impl Secret {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.0.is_empty() {
            "Secret(<empty>)"
        } else {
            "Secret(<redacted>)"
        })
    }
}

impl Serialize for Secret {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("<redacted>")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTiers {
    pub fast: String,
    pub standard: String,
    pub vision: String,
}

impl Default for ModelTiers {
    fn default() -> Self {
        Self {
            fast: "gpt-4o-mini".into(),
            standard: "gpt-4o".into(),
            vision: "gpt-4o".into(),
        }
    }
}

impl ModelTiers {
    pub fn model(&self, tier: Tier) -> &str {
        match tier {
            Tier::Fast => &self.fast,
            Tier::Standard => &self.standard,
            Tier::Vision => &self.vision,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub api_key: Secret,
    pub model_tiers: ModelTiers,
    pub temperature: f32,
    pub max_output_tokens: u32,
    pub timeout_s: u64,
    pub max_retries: u32,
    pub requests_per_minute: u32,
    /// Rules for the offline provider; when present no network is used.
    pub mock: Option<MockConfig>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1".into(),
            api_key: Secret::default(),
            model_tiers: ModelTiers::default(),
            temperature: 0.2,
            max_output_tokens: 1024,
            timeout_s: 120,
            max_retries: 3,
            requests_per_minute: 60,
            mock: None,
        }
    }
}

impl ProviderConfig {
    /// Defaults with `LLM_ENDPOINT` and `LLM_API_KEY` applied.
    pub fn from_env() -> Self {
        let mut config = Self::default();
        config.apply_env(|k| std::env::var(k).ok());
        config
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(endpoint) = get("LLM_ENDPOINT").filter(|v| !v.is_empty()) {
            self.endpoint = endpoint;
        }
        if let Some(key) = get("LLM_API_KEY").filter(|v| !v.is_empty()) {
            self.api_key = Secret::new(key);
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |m: &str| Err(LlmError::Config(m.to_string()));
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad("temperature must be within [0, 2]");
        }
        if Tier::ALL
            .iter()
            .any(|t| self.model_tiers.model(*t).trim().is_empty())
        {
            return bad("all three model tiers must be configured");
        }
        if self.mock.is_none() && self.endpoint.trim().is_empty() {
            return bad("endpoint is empty");
        }
        if self.timeout_s == 0 {
            return bad("timeout_s must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl std::ops::AddAssign for Usage {
    fn add_assign(&mut self, rhs: Self) {
        self.input_tokens += rhs.input_tokens;
        self.output_tokens += rhs.output_tokens;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    pub usage: Usage,
    pub model: String,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredResult {
    pub value: Map<String, Value>,
    pub raw: String,
    pub usage: Usage,
    pub model: String,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageUrl {
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Content {
    Text(String),
    Parts(Vec<ContentPart>),
}

impl Content {
    /// Text of the message, with image parts left out.
    pub fn text(&self) -> String {
        match self {
            Content::Text(t) => t.clone(),
            Content::Parts(parts) => parts
                .iter()
                .filter_map(|p| match p {
                    ContentPart::Text { text } => Some(text.as_str()),
                    ContentPart::ImageUrl { .. } => None,
                })
                .collect::<Vec<_>>()
                .join("\n"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: Content,
}

impl From<&Message> for ChatMessage {
    fn from(m: &Message) -> Self {
        Self {
            role: m.role,
            content: Content::Text(m.content.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f32,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub text: String,
    pub usage: Option<Usage>,
    pub model: Option<String>,
}

/// Outcome of one failed attempt.
#[derive(Debug, Clone, PartialEq)]
pub enum AttemptError {
    Status { code: u16, body: String },
    Timeout,
    Transport(String),
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, tier: Tier, request: &ChatRequest) -> Result<BackendReply, AttemptError>;
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("provider returned HTTP {status}: {message}")]
    Provider { status: u16, message: String },
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("structured output invalid after re-ask: {message}")]
    StructuredOutput { message: String, raw: String },
    #[error("image is {bytes} bytes after downscaling, limit is {limit}")]
    ImageTooLarge { bytes: usize, limit: usize },
    #[error("unusable image: {0}")]
    InvalidImage(String),
    #[error("no messages to send")]
    EmptyMessages,
    #[error("provider configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CallOptions {
    pub tier: Tier,
    pub temperature: Option<f32>,
}

impl CallOptions {
    pub fn tier(tier: Tier) -> Self {
        Self {
            tier,
            temperature: None,
        }
    }

    pub fn temperature(mut self, t: f32) -> Self {
        self.temperature = Some(t);
        self
    }
}

impl From<Tier> for CallOptions {
    fn from(tier: Tier) -> Self {
        Self::tier(tier)
    }
}

/// Per-tier counters of logical calls and of HTTP attempts.
#[derive(Debug, Default)]
pub struct CallStats {
    calls: [AtomicU64; 3],
    attempts: [AtomicU64; 3],
}

impl CallStats {
    pub fn calls(&self, tier: Tier) -> u64 {
        self.calls[tier.index()].load(Ordering::SeqCst)
    }

    pub fn attempts(&self, tier: Tier) -> u64 {
        self.attempts[tier.index()].load(Ordering::SeqCst)
    }

    pub fn total_calls(&self) -> u64 {
        Tier::ALL.iter().map(|t| self.calls(*t)).sum()
    }
}

pub struct LlmGateway {
    config: ProviderConfig,
    backend: Arc<dyn ChatBackend>,
    sleeper: Arc<dyn Sleeper>,
    limiter: Option<RateLimiter>,
    stats: CallStats,
}

impl fmt::Debug for LlmGateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmGateway")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl LlmGateway {
    pub fn new(
        config: ProviderConfig,
        backend: Arc<dyn ChatBackend>,
        sleeper: Arc<dyn Sleeper>,
    ) -> Result<Self, LlmError> {
        config.validate()?;
        let limiter = (config.requests_per_minute > 0)
            .then(|| RateLimiter::per_minute(config.requests_per_minute));
        Ok(Self {
            config,
            backend,
            sleeper,
            limiter,
            stats: CallStats::default(),
        })
    }

    /// Mock provider when `config.mock` is set, HTTP otherwise.
    pub fn from_config(
        config: ProviderConfig,
        http: Arc<dyn HttpClient>,
    ) -> Result<Self, LlmError> {
        let backend: Arc<dyn ChatBackend> = match &config.mock {
            Some(mock) => Arc::new(MockProvider::from_config(mock)?),
            None => Arc::new(HttpChatBackend::new(&config, http)),
        };
        let mut gateway = Self::new(config, backend, Arc::new(ThreadSleeper))?;
        if gateway.config.mock.is_some() {
            gateway.limiter = None;
        }
        Ok(gateway)
    }

    /// Offline gateway driven by `provider`, without rate limiting or delays.
    pub fn mock(provider: MockProvider) -> Self {
        let config = ProviderConfig {
            mock: Some(MockConfig::default()),
            requests_per_minute: 0,
            ..Default::default()
        };
        Self::new(
            config,
            Arc::new(provider),
            Arc::new(crate::retry::RecordingSleeper::default()),
        )
        .expect("default config is valid")
    }

    pub fn without_rate_limit(mut self) -> Self {
        self.limiter = None;
        self
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn stats(&self) -> &CallStats {
        &self.stats
    }

    pub fn complete(
        &self,
        prompt: &RenderedPrompt,
        opts: impl Into<CallOptions>,
    ) -> Result<CompletionResult, LlmError> {
        let messages = prompt.messages.iter().map(ChatMessage::from).collect();
        self.complete_messages(messages, opts.into())
    }

    pub fn complete_messages(
        &self,
        messages: Vec<ChatMessage>,
        opts: CallOptions,
    ) -> Result<CompletionResult, LlmError> {
        if messages.is_empty() {
            return Err(LlmError::EmptyMessages);
        }
        let tier = opts.tier;
        let request = ChatRequest {
            model: self.config.model_tiers.model(tier).to_string(),
            messages,
            temperature: opts.temperature.unwrap_or(self.config.temperature),
            max_tokens: self.config.max_output_tokens,
        };
        self.stats.calls[tier.index()].fetch_add(1, Ordering::SeqCst);
        log::debug!(
            "chat call tier={tier:?} model={} messages={}",
            request.model,
            request.messages.len()
        );

        let max_attempts = self.config.max_retries + 1;
        let mut attempts = 0;
        loop {
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            attempts += 1;
            self.stats.attempts[tier.index()].fetch_add(1, Ordering::SeqCst);
            let err = match self.backend.chat(tier, &request) {
                Ok(reply) => {
                    let usage = reply
                        .usage
                        .unwrap_or_else(|| estimate_usage(&request, &reply.text));
                    return Ok(CompletionResult {
                        text: reply.text,
                        usage,
                        model: reply.model.unwrap_or_else(|| request.model.clone()),
                        attempts,
                    });
                }
                Err(e) => e,
            };
            match err {
                AttemptError::Status { code, .. } if code == 429 || (500..600).contains(&code) => {
                    if attempts >= max_attempts {
                        return Err(if code == 429 {
                            LlmError::RateLimited { attempts }
                        } else {
                            LlmError::Provider {
                                status: code,
                                message: format!("server error after {attempts} attempts"),
                            }
                        });
                    }
                    log::warn!(
                        "provider returned {code}, retrying (attempt {attempts} of {max_attempts})"
                    );
                    self.sleeper.sleep(backoff_delay(attempts - 1));
                }
                AttemptError::Status { code, body } => {
                    return Err(LlmError::Provider {
                        status: code,
                        message: body.chars().take(500).collect(),
                    })
                }
                AttemptError::Timeout => return Err(LlmError::Timeout),
                AttemptError::Transport(m) => return Err(LlmError::Transport(m)),
            }
        }
    }

    /// Asks for a single JSON object matching `schema`, re-asking once with
    /// the validation error when the first reply does not conform.
    pub fn complete_structured(
        &self,
        prompt: &RenderedPrompt,
        schema: &Schema,
        opts: impl Into<CallOptions>,
    ) -> Result<StructuredResult, LlmError> {
        let opts = opts.into();
        let mut messages: Vec<ChatMessage> =
            prompt.messages.iter().map(ChatMessage::from).collect();
        let instruction = schema.instruction();
        match messages.iter_mut().rev().find(|m| m.role == Role::System) {
            Some(ChatMessage {
                content: Content::Text(text),
                ..
            }) => {
                text.push_str("\n\n");
                text.push_str(&instruction);
            }
            _ => messages.push(ChatMessage {
                role: Role::System,
                content: Content::Text(instruction),
            }),
        }

        let first = self.complete_messages(messages.clone(), opts)?;
        let error = match schema.parse(&first.text) {
            Ok(value) => {
                return Ok(StructuredResult {
                    value,
                    raw: first.text,
                    usage: first.usage,
                    model: first.model,
                    attempts: first.attempts,
                })
            }
            Err(e) => e,
        };
        log::info!("structured output rejected, re-asking: {error}");
        messages.push(ChatMessage {
            role: Role::Assistant,
            content: Content::Text(first.text.clone()),
        });
        messages.push(ChatMessage {
            role: Role::User,
            content: Content::Text(format!(
                "That reply was not valid: {error}. Respond again with only the JSON object."
            )),
        });
        let second = self.complete_messages(messages, opts)?;
        let mut usage = first.usage;
        usage += second.usage;
        match schema.parse(&second.text) {
            Ok(value) => Ok(StructuredResult {
                value,
                raw: second.text,
                usage,
                model: second.model,
                attempts: first.attempts + second.attempts,
            }),
            Err(message) => Err(LlmError::StructuredOutput {
                message,
                raw: second.text,
            }),
        }
    }

    /// Sends the prompt with `image` attached to its user message, on the
    /// vision tier. The image is checked and downscaled before any request.
    pub fn complete_vision(
        &self,
        prompt: &RenderedPrompt,
        image: &Path,
    ) -> Result<CompletionResult, LlmError> {
        let prepared = prepare_image(image)?;
        let mut messages: Vec<ChatMessage> =
            prompt.messages.iter().map(ChatMessage::from).collect();
        let user = messages
            .iter_mut()
            .find(|m| m.role == Role::User)
            .ok_or(LlmError::EmptyMessages)?;
        user.content = Content::Parts(vec![
            ContentPart::Text {
                text: user.content.text(),
            },
            ContentPart::ImageUrl {
                image_url: ImageUrl {
                    url: prepared.data_url(),
                },
            },
        ]);
        self.complete_messages(messages, CallOptions::tier(Tier::Vision))
    }
}

fn estimate_usage(request: &ChatRequest, reply: &str) -> Usage {
    let input: usize = request
        .messages
        .iter()
        .map(|m| crate::text::estimate_tokens(&m.content.text()))
        .sum();
    Usage {
        input_tokens: input as u64,
        output_tokens: crate::text::estimate_tokens(reply) as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::Message;
    use crate::retry::RecordingSleeper;
    use std::sync::Mutex;
    use std::time::Duration;

    struct Scripted {
        replies: Mutex<Vec<Result<BackendReply, AttemptError>>>,
        seen: Mutex<Vec<ChatRequest>>,
    }

    impl Scripted {
        fn new(mut replies: Vec<Result<BackendReply, AttemptError>>) -> Arc<Self> {
            replies.reverse();
            Arc::new(Self {
                replies: Mutex::new(replies),
                seen: Mutex::new(Vec::new()),
            })
        }
    }

    impl ChatBackend for Scripted {
        fn chat(&self, _tier: Tier, request: &ChatRequest) -> Result<BackendReply, AttemptError> {
            self.seen.lock().unwrap().push(request.clone());
            self.replies
                .lock()
                .unwrap()
                .pop()
                .expect("script exhausted")
        }
    }

    fn ok(text: &str) -> Result<BackendReply, AttemptError> {
        Ok(BackendReply {
            text: text.into(),
            usage: None,
            model: None,
        })
    }

    fn status(code: u16) -> Result<BackendReply, AttemptError> {
        Err(AttemptError::Status {
            code,
            body: "nope".into(),
        })
    }

    fn gateway(backend: Arc<dyn ChatBackend>) -> (LlmGateway, Arc<RecordingSleeper>) {
        let sleeper = Arc::new(RecordingSleeper::default());
        let config = ProviderConfig {
            requests_per_minute: 0,
            ..Default::default()
        };
        (
            LlmGateway::new(config, backend, sleeper.clone()).unwrap(),
            sleeper,
        )
    }

    fn prompt(user: &str) -> RenderedPrompt {
        RenderedPrompt {
            messages: vec![
                Message::system("task"),
                Message::user(user),
                Message::system("format"),
            ],
            token_estimate: 0,
        }
    }

    #[test]
    fn reverse_rule() {
        let provider = MockProvider::from_config(&MockConfig::rules(&["reverse"])).unwrap();
        let gw = LlmGateway::mock(provider);
        let r = gw.complete(&prompt("abc"), Tier::Fast).unwrap();
        assert_eq!((r.text.as_str(), r.attempts), ("cba", 1));
    }

    #[test]
    fn retries_429_with_backoff() {
        let backend = Scripted::new(vec![status(429), status(429), ok("fine")]);
        let (gw, sleeper) = gateway(backend);
        let r = gw.complete(&prompt("q"), Tier::Standard).unwrap();
        assert_eq!(r.attempts, 3);
        assert_eq!(
            sleeper.delays(),
            vec![Duration::from_secs(1), Duration::from_secs(2)]
        );
        assert_eq!(gw.stats().attempts(Tier::Standard), 3);
        assert_eq!(gw.stats().calls(Tier::Standard), 1);
    }

    #[test]
    fn auth_error_is_not_retried() {
        let backend = Scripted::new(vec![status(401)]);
        let (gw, sleeper) = gateway(backend.clone());
        let err = gw.complete(&prompt("q"), Tier::Fast).unwrap_err();
        assert!(matches!(err, LlmError::Provider { status: 401, .. }));
        assert_eq!(backend.seen.lock().unwrap().len(), 1);
        assert!(sleeper.delays().is_empty());
    }

    #[test]
    fn exhausted_retries() {
        let backend = Scripted::new(vec![status(429); 4]);
        let (gw, sleeper) = gateway(backend);
        assert_eq!(
            gw.complete(&prompt("q"), Tier::Fast).unwrap_err(),
            LlmError::RateLimited { attempts: 4 }
        );
        let secs: Vec<u64> = sleeper.delays().iter().map(|d| d.as_secs()).collect();
        assert_eq!(secs, vec![1, 2, 4]);

        let backend = Scripted::new(vec![status(503); 4]);
        let (gw, _) = gateway(backend);
        assert!(matches!(
            gw.complete(&prompt("q"), Tier::Fast),
            Err(LlmError::Provider { status: 503, .. })
        ));
    }

    #[test]
    fn empty_messages_rejected() {
        let (gw, _) = gateway(Scripted::new(vec![]));
        assert_eq!(
            gw.complete_messages(vec![], Tier::Fast.into()).unwrap_err(),
            LlmError::EmptyMessages
        );
    }

    fn locator_schema() -> Schema {
        Schema::new(vec![
            FieldSpec::required("section", FieldKind::Text),
            FieldSpec::required(
                "index",
                FieldKind::Integer {
                    min: Some(1),
                    max: None,
                },
            ),
        ])
    }

    #[test]
    fn structured_parses_locator() {
        let backend = Scripted::new(vec![ok(r#"{"section":"Introduction","index":1}"#)]);
        let (gw, _) = gateway(backend.clone());
        let r = gw
            .complete_structured(&prompt("q"), &locator_schema(), Tier::Fast)
            .unwrap();
        assert_eq!(r.value["section"], "Introduction");
        assert_eq!(r.value["index"], 1);
        assert_eq!(r.attempts, 1);
        let sent = &backend.seen.lock().unwrap()[0];
        let last = sent.messages.last().unwrap();
        assert_eq!(last.role, Role::System);
        assert!(last.content.text().contains(SCHEMA_MARKER));
    }

    #[test]
    fn structured_reasks_once() {
        let backend = Scripted::new(vec![
            ok("Sure! The section is the intro."),
            ok(r#"{"section":"Intro","index":2}"#),
        ]);
        let (gw, _) = gateway(backend.clone());
        let r = gw
            .complete_structured(&prompt("q"), &locator_schema(), Tier::Fast)
            .unwrap();
        assert_eq!(r.attempts, 2);
        let seen = backend.seen.lock().unwrap();
        let reask = &seen[1].messages;
        assert_eq!(reask[reask.len() - 2].role, Role::Assistant);
        assert!(reask.last().unwrap().content.text().contains("not valid"));
    }

    #[test]
    fn structured_fails_after_second_invalid_reply() {
        let backend = Scripted::new(vec![
            ok(r#"{"section":"a","index":0}"#),
            ok(r#"{"section":"a","index":0}"#),
        ]);
        let (gw, _) = gateway(backend);
        assert!(matches!(
            gw.complete_structured(&prompt("q"), &locator_schema(), Tier::Fast),
            Err(LlmError::StructuredOutput { .. })
        ));
    }

    #[test]
    fn secret_never_printed() {
        let config = ProviderConfig {
            api_key: Secret::new("sk-very-secret-123"),
            ..Default::default()
        };
        assert!(!format!("{config:?}").contains("sk-very-secret-123"));
        assert!(!serde_json::to_string(&config)
            .unwrap()
            .contains("sk-very-secret-123"));
        let parsed: ProviderConfig = serde_json::from_str(r#"{"api_key":"k1"}"#).unwrap();
        assert_eq!(parsed.api_key.expose(), "k1");
    }

    #[test]
    fn env_overrides_defaults() {
        let mut c = ProviderConfig::default();
        c.apply_env(|k| match k {
            "LLM_ENDPOINT" => Some("http://localhost:9/v1".into()),
            "LLM_API_KEY" => Some("key".into()),
            _ => None,
        });
        assert_eq!(c.endpoint, "http://localhost:9/v1");
        assert_eq!(c.api_key.expose(), "key");
    }

    #[test]
    fn invalid_config() {
        let c = ProviderConfig {
            temperature: 2.5,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let mut c = ProviderConfig::default();
        c.model_tiers.vision.clear();
        assert!(c.validate().is_err());
    }
}
