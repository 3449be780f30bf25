//! Offline chat provider: a pure function of the request, configured by
//! fixtures and ordered rules.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, LazyLock, Mutex};

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::{
    AttemptError, BackendReply, ChatBackend, ChatMessage, ChatRequest, LlmError, Tier,
    SCHEMA_MARKER,
};
use crate::prompt::Role;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Responder {
    Echo,
    Reverse,
    Uppercase,
    Fixed(String),
    /// `{{last_user}}`, `{{last_user:N}}` (first N words), `{{model}}`.
    Template(String),
    /// Fills the JSON schema embedded in the request.
    Schema,
    /// Reads a figure/table reference out of the question.
    Locator,
}

impl std::str::FromStr for Responder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "echo" => Responder::Echo,
            "reverse" => Responder::Reverse,
            "uppercase" => Responder::Uppercase,
            "schema" => Responder::Schema,
            "locator" => Responder::Locator,
            _ => {
                if let Some(text) = s.strip_prefix("fixed:") {
                    Responder::Fixed(text.to_string())
                } else if let Some(pattern) = s.strip_prefix("template:") {
                    Responder::Template(pattern.to_string())
                } else {
                    return Err(format!("unknown mock responder {s:?}"));
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRuleConfig {
    #[serde(default)]
    pub tier: Option<Tier>,
    /// Substring that must occur somewhere in the request's message text.
    #[serde(default)]
    pub contains: Option<String>,
    pub respond: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockConfig {
    #[serde(default)]
    pub rules: Vec<MockRuleConfig>,
    /// Replies keyed by [`MockProvider::fixture_key`].
    #[serde(default)]
    pub fixtures: BTreeMap<String, String>,
    #[serde(default)]
    pub fixtures_file: Option<PathBuf>,
}

impl MockConfig {
    pub fn rules(responders: &[&str]) -> Self {
        Self {
            rules: responders
                .iter()
                .map(|r| MockRuleConfig {
                    tier: None,
                    contains: None,
                    respond: r.to_string(),
                })
                .collect(),
            ..Default::default()
        }
    }

    /// Rules used by `--mock` runs: locator extraction, schema filling,
    /// canned vision answers and a truncating echo for everything else.
    pub fn offline() -> Self {
        let rule = |tier, contains: Option<&str>, respond: &str| MockRuleConfig {
            tier,
            contains: contains.map(str::to_string),
            respond: respond.to_string(),
        };
        Self {
            rules: vec![
                rule(None, Some("\"is_visual\""), "locator"),
                rule(None, Some(SCHEMA_MARKER), "schema"),
                rule(
                    Some(Tier::Vision),
                    None,
                    "template:The image accompanies this passage: {{last_user:40}}",
                ),
                rule(None, None, "template:{{last_user:40}}"),
            ],
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Rule {
    tier: Option<Tier>,
    contains: Option<String>,
    respond: Responder,
}

#[derive(Debug, Clone, Default)]
pub struct MockProvider {
    rules: Vec<Rule>,
    fixtures: BTreeMap<String, String>,
}

impl MockProvider {
    pub fn from_config(config: &MockConfig) -> Result<Self, LlmError> {
        let mut fixtures = config.fixtures.clone();
        if let Some(path) = &config.fixtures_file {
            let text = fs::read_to_string(path)
                .map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
            let file: BTreeMap<String, String> = serde_json::from_str(&text)
                .map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
            fixtures.extend(file);
        }
        let rules = config
            .rules
            .iter()
            .map(|r| {
                Ok(Rule {
                    tier: r.tier,
                    contains: r.contains.clone(),
                    respond: r.respond.parse().map_err(LlmError::Config)?,
                })
            })
            .collect::<Result<_, LlmError>>()?;
        Ok(Self { rules, fixtures })
    }

    pub fn offline() -> Self {
        Self::from_config(&MockConfig::offline()).expect("offline rules parse")
    }

    pub fn with_rule(
        mut self,
        tier: Option<Tier>,
        contains: Option<&str>,
        respond: Responder,
    ) -> Self {
        self.rules.push(Rule {
            tier,
            contains: contains.map(str::to_string),
            respond,
        });
        self
    }

    /// Puts a rule ahead of all existing ones.
    pub fn with_priority_rule(
        mut self,
        tier: Option<Tier>,
        contains: Option<&str>,
        respond: Responder,
    ) -> Self {
        self.rules.insert(
            0,
            Rule {
                tier,
                contains: contains.map(str::to_string),
                respond,
            },
        );
        self
    }

    pub fn with_fixture(mut self, messages: &[ChatMessage], reply: impl Into<String>) -> Self {
        self.fixtures
            .insert(Self::fixture_key(messages), reply.into());
        self
    }

    /// SHA-256 (hex) of the JSON-serialized message array.
    pub fn fixture_key(messages: &[ChatMessage]) -> String {
        let json = serde_json::to_string(messages).expect("messages serialize");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn reply(&self, tier: Tier, request: &ChatRequest) -> String {
        if let Some(fixed) = self.fixtures.get(&Self::fixture_key(&request.messages)) {
            return fixed.clone();
        }
        let all_text: String = request
            .messages
            .iter()
            .map(|m| m.content.text())
            .collect::<Vec<_>>()
            .join("\n");
        let rule = self.rules.iter().find(|r| {
            r.tier.is_none_or(|t| t == tier)
                && r.contains
                    .as_ref()
                    .is_none_or(|c| all_text.contains(c.as_str()))
        });
        let last_user = last_user(&request.messages);
        match rule.map_or(&Responder::Echo, |r| &r.respond) {
            Responder::Echo => last_user,
            Responder::Reverse => last_user.chars().rev().collect(),
            Responder::Uppercase => last_user.to_uppercase(),
            Responder::Fixed(text) => text.clone(),
            Responder::Template(pattern) => fill_template(pattern, &last_user, &request.model),
            Responder::Schema => fill_schema(request),
            Responder::Locator => locate(&last_user),
        }
    }
}

impl ChatBackend for MockProvider {
    fn chat(&self, tier: Tier, request: &ChatRequest) -> Result<BackendReply, AttemptError> {
        Ok(BackendReply {
            text: self.reply(tier, request),
            usage: None,
            model: Some(request.model.clone()),
        })
    }
}

fn last_user(messages: &[ChatMessage]) -> String {
    messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .map(|m| m.content.text())
        .unwrap_or_default()
}

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{\{\s*(last_user|model)(?::(\d+))?\s*\}\}").unwrap());

fn fill_template(pattern: &str, last_user: &str, model: &str) -> String {
    PLACEHOLDER
        .replace_all(pattern, |caps: &regex::Captures| match &caps[1] {
            "model" => model.to_string(),
            _ => match caps.get(2).and_then(|n| n.as_str().parse::<usize>().ok()) {
                Some(n) => last_user
                    .split_whitespace()
                    .take(n)
                    .collect::<Vec<_>>()
                    .join(" "),
                None => last_user.to_string(),
            },
        })
        .into_owned()
}

fn embedded_schema(request: &ChatRequest) -> Option<Value> {
    request.messages.iter().rev().find_map(|m| {
        let text = m.content.text();
        let (_, rest) = text.split_once(SCHEMA_MARKER)?;
        serde_json::Deserializer::from_str(rest.trim_start())
            .into_iter::<Value>()
            .next()?
            .ok()
    })
}

fn fill_schema(request: &ChatRequest) -> String {
    let Some(schema) = embedded_schema(request) else {
        return "{}".into();
    };
    let seed = serde_json::to_string(&request.messages).unwrap_or_default();
    let mut out = Map::new();
    if let Some(props) = schema["properties"].as_object() {
        for (name, spec) in props {
            let digest = Sha256::digest(format!("{seed}\u{0}{name}").as_bytes());
            let frac = u64::from_be_bytes(digest[..8].try_into().unwrap()) as f64 / u64::MAX as f64;
            let value = match spec["type"].as_str() {
                Some("boolean") => Value::Bool(false),
                Some("integer") => {
                    let min = spec["minimum"].as_i64().unwrap_or(1);
                    Value::from(spec["maximum"].as_i64().map_or(min, |max| min.min(max)))
                }
                Some("number") => {
                    let min = spec["minimum"].as_f64().unwrap_or(0.0);
                    let max = spec["maximum"].as_f64().unwrap_or(min + 10.0);
                    let x = min + (max - min) * (0.55 + 0.4 * frac);
                    Value::from(((x * 10.0).round() / 10.0).clamp(min, max))
                }
                _ => match spec["enum"].as_array().and_then(|v| v.first()) {
                    Some(first) => first.clone(),
                    None => Value::from(format!("Offline assessment for {name}.")),
                },
            };
            out.insert(name.clone(), value);
        }
    }
    Value::Object(out).to_string()
}

static ASSET_REF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(figure|fig\.?|table|tab\.?)\s*(\d+)").unwrap());
static SECTION_REF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:in|of|from)\s+(?:the\s+)?([a-z][a-z -]*)").unwrap());

static SECTION_WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\s+section\b").unwrap());

fn locate(question: &str) -> String {
    let Some(asset) = ASSET_REF.captures(question) else {
        return r#"{"is_visual": false}"#.into();
    };
    let kind = if asset[1].to_lowercase().starts_with("tab") {
        "table"
    } else {
        "figure"
    };
    let index: u32 = asset[2].parse().unwrap_or(1);
    let section = SECTION_REF
        .captures(&question[asset.get(0).unwrap().end()..])
        .map(|c| {
            let phrase = &c[1];
            let end = SECTION_WORD
                .find(phrase)
                .map_or(phrase.len(), |m| m.start());
            phrase[..end].trim().to_string()
        })
        .unwrap_or_default();
    serde_json::json!({"is_visual": true, "kind": kind, "index": index, "section": section})
        .to_string()
}

/// Wraps a backend and keeps every request it sees.
pub struct RecordingBackend {
    inner: Arc<dyn ChatBackend>,
    requests: Mutex<Vec<(Tier, ChatRequest)>>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn ChatBackend>) -> Self {
        Self {
            inner,
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<(Tier, ChatRequest)> {
        self.requests.lock().unwrap().clone()
    }
}

impl ChatBackend for RecordingBackend {
    fn chat(&self, tier: Tier, request: &ChatRequest) -> Result<BackendReply, AttemptError> {
        self.requests.lock().unwrap().push((tier, request.clone()));
        self.inner.chat(tier, request)
    }
}

/// Fails the first `count` attempts with HTTP `status`, then delegates.
pub struct FaultInjector {
    inner: Arc<dyn ChatBackend>,
    remaining: AtomicU32,
    status: u16,
}

impl FaultInjector {
    pub fn new(inner: Arc<dyn ChatBackend>, status: u16, count: u32) -> Self {
        Self {
            inner,
            remaining: AtomicU32::new(count),
            status,
        }
    }
}

impl ChatBackend for FaultInjector {
    fn chat(&self, tier: Tier, request: &ChatRequest) -> Result<BackendReply, AttemptError> {
        let failing = self
            .remaining
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok();
        if failing {
            Err(AttemptError::Status {
                code: self.status,
                body: "injected fault".into(),
            })
        } else {
            self.inner.chat(tier, request)
        }
    }
}
