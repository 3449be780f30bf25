use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine as _;
use paperlens::server::{router, AppState};
use paperlens_core::config::AppConfig;
use paperlens_core::http::{HttpClient, HttpRequest, HttpResponse, TransportFailure};
use paperlens_core::llm::{
    AttemptError, BackendReply, ChatBackend, ChatRequest, LlmGateway, MockProvider, Tier,
};
use paperlens_core::pipeline::Engine;
use paperlens_core::retry::RecordingSleeper;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/demo")
}

fn demo_bytes() -> Vec<u8> {
    std::fs::read(fixture_dir().join("demo.pdf")).unwrap()
}

fn mock_config() -> AppConfig {
    let mut config = AppConfig::default();
    config.tools.fixtures_dir = Some(fixture_dir().join("tools"));
    config.enable_mock();
    config
}

/// Serves the demo PDF for any arXiv download and nothing else.
struct ArxivStub;

impl HttpClient for ArxivStub {
    fn send(&self, request: HttpRequest) -> Result<HttpResponse, TransportFailure> {
        if request.url.starts_with("https://arxiv.org/pdf/") {
            Ok(HttpResponse {
                status: 200,
                body: demo_bytes(),
            })
        } else {
            panic!("unexpected request to {}", request.url)
        }
    }
}

/// Holds every model call until opened.
#[derive(Default)]
struct Gate {
    open: Mutex<bool>,
    changed: Condvar,
}

impl Gate {
    fn open(&self) {
        *self.open.lock().unwrap() = true;
        self.changed.notify_all();
    }
}

struct GatedBackend {
    gate: Arc<Gate>,
    inner: MockProvider,
}

impl ChatBackend for GatedBackend {
    fn chat(&self, tier: Tier, request: &ChatRequest) -> Result<BackendReply, AttemptError> {
        let mut open = self.gate.open.lock().unwrap();
        while !*open {
            open = self.gate.changed.wait(open).unwrap();
        }
        drop(open);
        self.inner.chat(tier, request)
    }
}

fn start(engine: Engine, ui_dir: Option<PathBuf>) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let runtime = tokio::runtime::Runtime::new().unwrap();
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router(AppState::new(engine), ui_dir))
                .await
                .unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

fn engine(root: &Path) -> Engine {
    Engine::with_http(mock_config(), root, Arc::new(ArxivStub)).unwrap()
}

fn upload_body() -> Value {
    json!({ "upload": base64::engine::general_purpose::STANDARD.encode(demo_bytes()), "filename": "demo.pdf" })
}

fn wait_for(client: &Client, base: &str, id: &str, status: &str) -> Value {
    let deadline = Instant::now() + Duration::from_secs(30);
    loop {
        let record: Value = client
            .get(format!("{base}/papers/{id}"))
            .send()
            .unwrap()
            .json()
            .unwrap();
        if record["status"] == status {
            return record;
        }
        assert!(Instant::now() < deadline, "stuck at {record}");
        std::thread::sleep(Duration::from_millis(20));
    }
}

#[test]
fn submit_poll_and_read_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let base = start(engine(dir.path()), None);
    let client = Client::new();

    let resp = client
        .post(format!("{base}/papers"))
        .json(&json!({ "arxiv_id": "1706.03762" }))
        .send()
        .unwrap();
    assert_eq!(resp.status(), StatusCode::ACCEPTED);
    let body: Value = resp.json().unwrap();
    let id = body["paper_id"].as_str().unwrap().to_string();
    assert_eq!(body["status_url"], format!("/papers/{id}"));
    wait_for(&client, &base, &id, "summarized");

    // the same bytes uploaded directly are the same paper
    let again: Value = client
        .post(format!("{base}/papers"))
        .json(&upload_body())
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(again["paper_id"], id.as_str());

    let list: Vec<Value> = client
        .get(format!("{base}/papers"))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(list.len(), 1);

    let summary: Value = client
        .get(format!("{base}/papers/{id}/summary"))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert!(!summary["text"].as_str().unwrap().is_empty());
    let score = client
        .get(format!("{base}/papers/{id}/score"))
        .send()
        .unwrap();
    assert_eq!(score.status(), StatusCode::OK);

    let blog = client
        .get(format!("{base}/papers/{id}/blog"))
        .send()
        .unwrap();
    assert!(blog.headers()["content-type"]
        .to_str()
        .unwrap()
        .starts_with("text/markdown"));
    let blog = blog.text().unwrap();
    let image = blog
        .split("](")
        .nth(1)
        .and_then(|s| s.split(')').next())
        .expect("blog embeds an image");
    let file = image.rsplit('/').next().unwrap();
    let asset = client
        .get(format!("{base}/papers/{id}/assets/{file}"))
        .send()
        .unwrap();
    assert_eq!(asset.status(), StatusCode::OK);
    assert_eq!(asset.headers()["content-type"], "image/png");
    assert_eq!(
        client
            .get(format!("{base}/papers/{id}/assets/..secret"))
            .send()
            .unwrap()
            .status(),
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        client
            .get(format!("{base}/papers/{id}/assets/figure-99.png"))
            .send()
            .unwrap()
            .status(),
        StatusCode::NOT_FOUND
    );

    let audio = client
        .get(format!("{base}/papers/{id}/broadcast.mp3"))
        .send()
        .unwrap();
    assert_eq!(audio.headers()["content-type"], "audio/mpeg");
    assert!(!audio.bytes().unwrap().is_empty());
}

#[test]
fn outputs_wait_for_processing() {
    let dir = tempfile::tempdir().unwrap();
    let gate = Arc::new(Gate::default());
    let backend = Arc::new(GatedBackend {
        gate: gate.clone(),
        inner: MockProvider::offline(),
    });
    let config = mock_config();
    let gateway = LlmGateway::new(
        config.provider.clone(),
        backend,
        Arc::new(RecordingSleeper::default()),
    )
    .unwrap()
    .without_rate_limit();
    let engine = Engine::with_gateway(config, dir.path(), Arc::new(ArxivStub), gateway).unwrap();
    let base = start(engine, None);
    let client = Client::new();

    let body: Value = client
        .post(format!("{base}/papers"))
        .json(&upload_body())
        .send()
        .unwrap()
        .json()
        .unwrap();
    let id = body["paper_id"].as_str().unwrap().to_string();
    // summarization is blocked on its first model call
    wait_for(&client, &base, &id, "aligned");
    for path in ["summary", "score", "blog", "broadcast.mp3"] {
        let resp = client
            .get(format!("{base}/papers/{id}/{path}"))
            .send()
            .unwrap();
        assert_eq!(resp.status(), StatusCode::CONFLICT, "{path}");
        let err: Value = resp.json().unwrap();
        assert_eq!(err["status"], "aligned");
    }
    let qa = client
        .post(format!("{base}/papers/{id}/qa"))
        .json(&json!({ "question": "Why?" }))
        .send()
        .unwrap();
    assert_eq!(qa.status(), StatusCode::CONFLICT);

    gate.open();
    wait_for(&client, &base, &id, "summarized");
    assert_eq!(
        client
            .get(format!("{base}/papers/{id}/summary"))
            .send()
            .unwrap()
            .status(),
        StatusCode::OK
    );
}

#[test]
fn questions_are_answered_repeatably() {
    let dir = tempfile::tempdir().unwrap();
    let base = start(engine(dir.path()), None);
    let client = Client::new();
    let body: Value = client
        .post(format!("{base}/papers"))
        .json(&upload_body())
        .send()
        .unwrap()
        .json()
        .unwrap();
    let id = body["paper_id"].as_str().unwrap().to_string();
    wait_for(&client, &base, &id, "summarized");

    let ask = |history: &str, question: &str| {
        let resp = client
            .post(format!("{base}/papers/{id}/qa"))
            .json(&json!({ "question": question, "history_id": history }))
            .send()
            .unwrap();
        (resp.status(), resp.bytes().unwrap())
    };
    let (status, first) = ask("a", "Explain figure 1 in the model architecture section");
    assert_eq!(status, StatusCode::OK);
    let (_, second) = ask("b", "Explain figure 1 in the model architecture section");
    assert_eq!(first, second);
    let turn: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(turn["route"], "visual");
    assert!(turn["asset_shown"]["file"].is_string());

    let (status, _) = ask("a", "What is the main contribution?");
    assert_eq!(status, StatusCode::OK);
    let history = std::fs::read(dir.path().join("papers").join(&id).join("qa/a.json")).unwrap();
    assert_eq!(
        serde_json::from_slice::<Vec<Value>>(&history)
            .unwrap()
            .len(),
        2
    );

    assert_eq!(ask("../escape", "Why?").0, StatusCode::BAD_REQUEST);
    assert_eq!(ask("a", "   ").0, StatusCode::BAD_REQUEST);
}

#[test]
fn bad_requests_and_unknown_papers() {
    let dir = tempfile::tempdir().unwrap();
    let base = start(engine(dir.path()), None);
    let client = Client::new();
    let post = |body: Value| {
        client
            .post(format!("{base}/papers"))
            .json(&body)
            .send()
            .unwrap()
            .status()
    };
    assert_eq!(
        post(json!({ "arxiv_id": "not an id" })),
        StatusCode::BAD_REQUEST
    );
    assert_eq!(post(json!({})), StatusCode::BAD_REQUEST);
    assert_eq!(post(json!({ "upload": "!!!" })), StatusCode::BAD_REQUEST);
    assert_eq!(
        post(json!({ "upload": base64::engine::general_purpose::STANDARD.encode(b"plain text") })),
        StatusCode::BAD_REQUEST
    );
    // rejected uploads never reach the cache
    let cached = std::fs::read_dir(dir.path().join("cache/pdf"))
        .map(|d| d.count())
        .unwrap_or(0);
    assert_eq!(cached, 0);
    assert_eq!(
        client
            .post(format!("{base}/papers"))
            .body("{")
            .send()
            .unwrap()
            .status(),
        StatusCode::BAD_REQUEST
    );
    for path in [
        "",
        "/summary",
        "/blog",
        "/broadcast.mp3",
        "/assets/figure-1.png",
    ] {
        let status = client
            .get(format!("{base}/papers/0123456789abcdef{path}"))
            .send()
            .unwrap()
            .status();
        assert_eq!(status, StatusCode::NOT_FOUND, "{path}");
    }
    assert_eq!(
        client
            .get(format!("{base}/eval/report"))
            .send()
            .unwrap()
            .status(),
        StatusCode::NOT_FOUND
    );
}

/// Fails every model call as an upstream outage.
struct Outage;

impl ChatBackend for Outage {
    fn chat(&self, _: Tier, _: &ChatRequest) -> Result<BackendReply, AttemptError> {
        Err(AttemptError::Status {
            code: 401,
            body: "bad key".into(),
        })
    }
}

#[test]
fn provider_failures_are_bad_gateway() {
    let dir = tempfile::tempdir().unwrap();
    // process with a healthy model, then serve with a broken one
    let ready = engine(dir.path());
    let id = ready
        .process(
            &paperlens_core::ingestion::SourceRef::local(fixture_dir().join("demo.pdf")),
            Default::default(),
        )
        .unwrap()
        .paper_id;
    drop(ready);
    let config = mock_config();
    let gateway = LlmGateway::new(
        config.provider.clone(),
        Arc::new(Outage),
        Arc::new(RecordingSleeper::default()),
    )
    .unwrap()
    .without_rate_limit();
    let base = start(
        Engine::with_gateway(config, dir.path(), Arc::new(ArxivStub), gateway).unwrap(),
        None,
    );
    let resp = Client::new()
        .post(format!("{base}/papers/{id}/qa"))
        .json(&json!({ "question": "What is new here?" }))
        .send()
        .unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_GATEWAY);
}

#[test]
fn evaluation_runs_in_the_background() {
    let dir = tempfile::tempdir().unwrap();
    let base = start(engine(dir.path()), None);
    let client = Client::new();
    let manifest = format!("{}\n", fixture_dir().join("demo.pdf").display());
    let resp = client
        .post(format!("{base}/eval/run"))
        .json(&json!({ "manifest": manifest, "dataset": "demo", "n_trials": 2 }))
        .send()
        .unwrap();
    assert_eq!(resp.status(), StatusCode::ACCEPTED);
    let deadline = Instant::now() + Duration::from_secs(30);
    let report: Value = loop {
        let resp = client.get(format!("{base}/eval/report")).send().unwrap();
        if resp.status() == StatusCode::OK {
            break resp.json().unwrap();
        }
        assert_eq!(resp.status(), StatusCode::CONFLICT);
        assert!(Instant::now() < deadline);
        std::thread::sleep(Duration::from_millis(20));
    };
    assert_eq!(report["dataset"], "demo");
    assert_eq!(report["corpus"]["n_documents"], 1);
    let zero = client
        .post(format!("{base}/eval/run"))
        .json(&json!({ "manifest": manifest, "n_trials": 0 }))
        .send()
        .unwrap();
    assert_eq!(zero.status(), StatusCode::BAD_REQUEST);
}

#[test]
fn static_client_is_served_under_ui() {
    let dir = tempfile::tempdir().unwrap();
    let ui = dir.path().join("ui");
    std::fs::create_dir_all(&ui).unwrap();
    std::fs::write(
        ui.join("index.html"),
        "<!doctype html><title>paperlens</title>",
    )
    .unwrap();
    std::fs::write(ui.join("app.js"), "console.log('ok');").unwrap();
    let base = start(engine(&dir.path().join("ws")), Some(ui));
    let client = Client::new();

    let index = client.get(format!("{base}/ui/")).send().unwrap();
    assert_eq!(index.status(), StatusCode::OK);
    assert!(index.headers()["content-type"]
        .to_str()
        .unwrap()
        .starts_with("text/html"));
    assert!(index.text().unwrap().contains("<title>paperlens</title>"));
    let script = client.get(format!("{base}/ui/app.js")).send().unwrap();
    assert!(script.headers()["content-type"]
        .to_str()
        .unwrap()
        .contains("javascript"));
    assert_eq!(
        client
            .get(format!("{base}/ui/missing.css"))
            .send()
            .unwrap()
            .status(),
        StatusCode::NOT_FOUND
    );
}
