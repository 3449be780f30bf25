use std::sync::Arc;
use std::time::Duration;

use serde_json::Value;

use super::{
    AttemptError, BackendReply, ChatBackend, ChatRequest, ProviderConfig, Secret, Tier, Usage,
};
use crate::http::{HttpClient, HttpRequest, TransportFailure};

/// Chat-completions client for any endpoint speaking the common JSON shape.
pub struct HttpChatBackend {
    url: String,
    api_key: Secret,
    timeout: Duration,
    http: Arc<dyn HttpClient>,
}

impl HttpChatBackend {
    pub fn new(config: &ProviderConfig, http: Arc<dyn HttpClient>) -> Self {
        Self {
            url: format!("{}/chat/completions", config.endpoint.trim_end_matches('/')),
            api_key: config.api_key.clone(),
            timeout: Duration::from_secs(config.timeout_s),
            http,
        }
    }
}

impl ChatBackend for HttpChatBackend {
    fn chat(&self, _tier: Tier, request: &ChatRequest) -> Result<BackendReply, AttemptError> {
        let body = serde_json::to_vec(request).expect("request serializes");
        let mut http = HttpRequest::post(&self.url, body)
            .header("Content-Type", "application/json")
            .timeout(self.timeout);
        if !self.api_key.is_empty() {
            http = http.header("Authorization", format!("Bearer {}", self.api_key.expose()));
        }
        let response = self.http.send(http).map_err(|e| match e {
            TransportFailure::Timeout => AttemptError::Timeout,
            TransportFailure::Other(m) => AttemptError::Transport(m),
        })?;
        if !response.is_success() {
            return Err(AttemptError::Status {
                code: response.status,
                body: response.text_lossy(),
            });
        }
        parse_reply(&response.body).map_err(AttemptError::Transport)
    }
}

fn parse_reply(body: &[u8]) -> Result<BackendReply, String> {
    let value: Value =
        serde_json::from_slice(body).map_err(|e| format!("malformed completion body: {e}"))?;
    let message = &value["choices"][0]["message"]["content"];
    let text = match message {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join(""),
        _ => return Err("completion has no message content".into()),
    };
    if value["choices"].as_array().is_none_or(Vec::is_empty) {
        return Err("completion has no choices".into());
    }
    let usage = value["usage"].as_object().map(|u| Usage {
        input_tokens: u.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        output_tokens: u
            .get("completion_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
    });
    Ok(BackendReply {
        text,
        usage,
        model: value["model"].as_str().map(str::to_string),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::HttpResponse;
    use crate::llm::{ChatMessage, Content};
    use crate::prompt::Role;
    use std::sync::Mutex;

    struct Canned {
        status: u16,
        body: &'static str,
        seen: Mutex<Vec<HttpRequest>>,
    }

    impl HttpClient for Canned {
        fn send(&self, request: HttpRequest) -> Result<HttpResponse, TransportFailure> {
            self.seen.lock().unwrap().push(request);
            Ok(HttpResponse {
                status: self.status,
                body: self.body.as_bytes().to_vec(),
            })
        }
    }

    fn request() -> ChatRequest {
        ChatRequest {
            model: "m-1".into(),
            messages: vec![ChatMessage {
                role: Role::User,
                content: Content::Text("hi".into()),
            }],
            temperature: 0.2,
            max_tokens: 64,
        }
    }

    #[test]
    fn wire_format() {
        let http = Arc::new(Canned {
            status: 200,
            body: r#"{"model":"m-1-2024","choices":[{"message":{"role":"assistant","content":"hello"}}],"usage":{"prompt_tokens":5,"completion_tokens":1}}"#,
            seen: Mutex::new(Vec::new()),
        });
        let config = ProviderConfig {
            endpoint: "http://llm.local/v1/".into(),
            api_key: Secret::new("k"),
            ..Default::default()
        };
        let reply = HttpChatBackend::new(&config, http.clone())
            .chat(Tier::Fast, &request())
            .unwrap();
        assert_eq!(reply.text, "hello");
        assert_eq!(
            reply.usage,
            Some(Usage {
                input_tokens: 5,
                output_tokens: 1
            })
        );
        let seen = http.seen.lock().unwrap();
        assert_eq!(seen[0].url, "http://llm.local/v1/chat/completions");
        assert!(seen[0]
            .headers
            .contains(&("Authorization".into(), "Bearer k".into())));
        let sent: Value = serde_json::from_slice(seen[0].body.as_ref().unwrap()).unwrap();
        assert_eq!(sent["model"], "m-1");
        assert_eq!(sent["max_tokens"], 64);
        assert_eq!(
            sent["messages"][0],
            serde_json::json!({"role":"user","content":"hi"})
        );
        assert!(!format!("{:?}", seen[0]).contains("Bearer"));
    }

    #[test]
    fn error_status_is_reported() {
        let http = Arc::new(Canned {
            status: 401,
            body: "bad key",
            seen: Mutex::new(Vec::new()),
        });
        let err = HttpChatBackend::new(&ProviderConfig::default(), http)
            .chat(Tier::Fast, &request())
            .unwrap_err();
        assert_eq!(
            err,
            AttemptError::Status {
                code: 401,
                body: "bad key".into()
            }
        );
    }

    #[test]
    fn image_parts_serialize_in_wire_shape() {
        let m = ChatMessage {
            role: Role::User,
            content: Content::Parts(vec![
                crate::llm::ContentPart::Text { text: "q".into() },
                crate::llm::ContentPart::ImageUrl {
                    image_url: crate::llm::ImageUrl {
                        url: "data:image/png;base64,AA==".into(),
                    },
                },
            ]),
        };
        assert_eq!(
            serde_json::to_value(&m).unwrap(),
            serde_json::json!({"role":"user","content":[
                {"type":"text","text":"q"},
                {"type":"image_url","image_url":{"url":"data:image/png;base64,AA=="}}
            ]})
        );
    }
}
