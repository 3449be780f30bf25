#![allow(dead_code)]

pub mod markup;
pub mod synth;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use paperlens_core::config::AppConfig;
use paperlens_core::http::{HttpClient, HttpRequest, HttpResponse, TransportFailure};
use paperlens_core::ingestion::SourceRef;
use paperlens_core::llm::{LlmGateway, MockProvider, RecordingBackend};
use paperlens_core::pipeline::Engine;
use paperlens_core::retry::RecordingSleeper;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/demo")
}

pub fn demo_pdf() -> SourceRef {
    SourceRef::local(fixture_dir().join("demo.pdf"))
}

/// Offline configuration: recorded converter outputs, mock model and speech.
pub fn mock_config() -> AppConfig {
    let mut config = AppConfig::default();
    config.tools.fixtures_dir = Some(fixture_dir().join("tools"));
    config.enable_mock();
    config
}

/// Any request reaching the network is a test bug.
pub struct NoNetwork;

impl HttpClient for NoNetwork {
    fn send(&self, request: HttpRequest) -> Result<HttpResponse, TransportFailure> {
        panic!("unexpected network request to {}", request.url)
    }
}

pub fn engine(root: &Path, config: AppConfig) -> Engine {
    Engine::with_http(config, root, Arc::new(NoNetwork)).unwrap()
}

/// Engine whose offline model records every request it receives.
pub fn recording_engine(root: &Path, config: AppConfig) -> (Engine, Arc<RecordingBackend>) {
    let backend = Arc::new(RecordingBackend::new(Arc::new(MockProvider::offline())));
    let gateway = LlmGateway::new(
        config.provider.clone(),
        backend.clone(),
        Arc::new(RecordingSleeper::default()),
    )
    .unwrap()
    .without_rate_limit();
    let engine = Engine::with_gateway(config, root, Arc::new(NoNetwork), gateway).unwrap();
    (engine, backend)
}

/// Gateway over `provider` that records every request; retries do not sleep.
pub fn recording_gateway(provider: MockProvider) -> (LlmGateway, Arc<RecordingBackend>) {
    let backend = Arc::new(RecordingBackend::new(Arc::new(provider)));
    let gateway = LlmGateway::new(
        mock_config().provider,
        backend.clone(),
        Arc::new(RecordingSleeper::default()),
    )
    .unwrap()
    .without_rate_limit();
    (gateway, backend)
}

/// Text of the user turn of a recorded request.
pub fn user_text(request: &paperlens_core::llm::ChatRequest) -> String {
    request
        .messages
        .iter()
        .filter(|m| m.role == paperlens_core::prompt::Role::User)
        .map(|m| m.content.text())
        .collect::<Vec<_>>()
        .join("\n")
}
