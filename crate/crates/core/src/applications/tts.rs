use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::AppError;
use crate::http::{HttpClient, HttpRequest, TransportFailure};
use crate::llm::Secret;
use crate::retry::{backoff_delay, Sleeper, ThreadSleeper};
use crate::text::pack_sentences;

pub const DEFAULT_TTS_CHAR_LIMIT: usize = 3000;

/// Offline speech: `fixed` bytes for every chunk when set, else a fixture
/// file `<sha256 of chunk>.mp3` from `fixtures_dir` when present, else
/// generated silence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TtsMock {
    pub fixed: Option<String>,
    pub fixtures_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TtsConfig {
    pub endpoint: String,
    pub api_key: Secret,
    pub voice: String,
    pub char_limit: usize,
    pub timeout_s: u64,
    pub max_retries: u32,
    pub mock: Option<TtsMock>,
}

impl Default for TtsConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            api_key: Secret::default(),
            voice: "alloy".into(),
            char_limit: DEFAULT_TTS_CHAR_LIMIT,
            timeout_s: 120,
            max_retries: 3,
            mock: None,
        }
    }
}

impl TtsConfig {
    pub fn mock() -> Self {
        Self {
            mock: Some(TtsMock::default()),
            ..Self::default()
        }
    }

    /// Applies `TTS_ENDPOINT` and `TTS_API_KEY`.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(endpoint) = get("TTS_ENDPOINT").filter(|v| !v.is_empty()) {
            self.endpoint = endpoint;
        }
        if let Some(key) = get("TTS_API_KEY").filter(|v| !v.is_empty()) {
            self.api_key = Secret::new(key);
        }
    }
}

// MPEG-1 layer III, 128 kbit/s, 44.1 kHz, mono: 417-byte frames whose
// all-zero side information and payload decode to silence.
const FRAME_HEADER: [u8; 4] = [0xFF, 0xFB, 0x90, 0xC0];
const FRAME_LEN: usize = 417;

/// Valid MP3 silence, one frame per two characters of `text`.
pub fn silent_mp3(text: &str) -> Vec<u8> {
    let frames = text.chars().count().div_ceil(2).max(1);
    let mut out = Vec::with_capacity(frames * FRAME_LEN);
    for _ in 0..frames {
        out.extend_from_slice(&FRAME_HEADER);
        out.resize(out.len() + FRAME_LEN - FRAME_HEADER.len(), 0);
    }
    out
}

pub struct TtsClient {
    config: TtsConfig,
    http: Arc<dyn HttpClient>,
    sleeper: Arc<dyn Sleeper>,
}

impl TtsClient {
    pub fn new(config: TtsConfig, http: Arc<dyn HttpClient>) -> Self {
        Self {
            config,
            http,
            sleeper: Arc::new(ThreadSleeper),
        }
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn config(&self) -> &TtsConfig {
        &self.config
    }

    fn mock_chunk(mock: &TtsMock, text: &str) -> Result<Vec<u8>, AppError> {
        if let Some(fixed) = &mock.fixed {
            return Ok(fixed.as_bytes().to_vec());
        }
        if let Some(dir) = &mock.fixtures_dir {
            let path = dir.join(format!(
                "{}.mp3",
                hex::encode(Sha256::digest(text.as_bytes()))
            ));
            if path.is_file() {
                return std::fs::read(&path)
                    .map_err(|e| AppError::Tts(format!("{}: {e}", path.display())));
            }
        }
        Ok(silent_mp3(text))
    }

    /// Synthesizes one chunk, retrying 429 and 5xx responses.
    pub fn synthesize_chunk(&self, text: &str) -> Result<Vec<u8>, AppError> {
        if let Some(mock) = &self.config.mock {
            return Self::mock_chunk(mock, text);
        }
        if self.config.endpoint.trim().is_empty() {
            return Err(AppError::Tts("no speech endpoint configured".into()));
        }
        let body = serde_json::json!({"text": text, "voice": self.config.voice, "format": "mp3"});
        let mut request = HttpRequest::post(&self.config.endpoint, body.to_string().into_bytes())
            .header("Content-Type", "application/json")
            .timeout(Duration::from_secs(self.config.timeout_s));
        if !self.config.api_key.is_empty() {
            request = request.header(
                "Authorization",
                format!("Bearer {}", self.config.api_key.expose()),
            );
        }
        let mut retry = 0;
        loop {
            let failure = match self.http.send(request.clone()) {
                Ok(resp) if resp.is_success() => return Ok(resp.body),
                Ok(resp) if resp.status == 429 || resp.status >= 500 => {
                    format!("HTTP {}", resp.status)
                }
                Ok(resp) => {
                    return Err(AppError::Tts(format!(
                        "HTTP {}: {}",
                        resp.status,
                        resp.text_lossy()
                    )))
                }
                Err(TransportFailure::Timeout) => {
                    return Err(AppError::Tts("request timed out".into()))
                }
                Err(e) => return Err(AppError::Tts(e.to_string())),
            };
            if retry >= self.config.max_retries {
                return Err(AppError::Tts(format!(
                    "{failure} after {} attempts",
                    retry + 1
                )));
            }
            log::warn!("speech request failed with {failure}, retrying");
            self.sleeper.sleep(backoff_delay(retry));
            retry += 1;
        }
    }
}

/// Splits the script into sentence-aligned chunks within the character
/// limit, synthesizes them in order and concatenates the MP3 frames.
pub fn synthesize_speech(script: &str, tts: &TtsClient) -> Result<Vec<u8>, AppError> {
    if script.trim().is_empty() {
        return Err(AppError::EmptyScript);
    }
    let mut audio = Vec::new();
    for chunk in pack_sentences(script, tts.config.char_limit.max(1)) {
        let chunk = chunk.trim();
        if !chunk.is_empty() {
            audio.extend(tts.synthesize_chunk(chunk)?);
        }
    }
    Ok(audio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::{HttpResponse, Method};
    use crate::retry::RecordingSleeper;
    use std::sync::Mutex;

    struct Scripted {
        statuses: Mutex<Vec<u16>>,
        seen: Mutex<Vec<HttpRequest>>,
    }

    impl HttpClient for Scripted {
        fn send(&self, request: HttpRequest) -> Result<HttpResponse, TransportFailure> {
            self.seen.lock().unwrap().push(request);
            let status = self.statuses.lock().unwrap().remove(0);
            Ok(HttpResponse {
                status,
                body: b"ID3".to_vec(),
            })
        }
    }

    fn scripted(statuses: &[u16]) -> Arc<Scripted> {
        Arc::new(Scripted {
            statuses: Mutex::new(statuses.to_vec()),
            seen: Mutex::new(Vec::new()),
        })
    }

    fn http_config() -> TtsConfig {
        TtsConfig {
            endpoint: "http://tts.test/speak".into(),
            api_key: Secret::new("tts-secret"),
            ..TtsConfig::default()
        }
    }

    #[test]
    fn fixed_mock_per_chunk() {
        let mut config = TtsConfig::mock();
        config.mock.as_mut().unwrap().fixed = Some("SEG".into());
        config.char_limit = 25;
        let tts = TtsClient::new(config, scripted(&[]));
        let audio = synthesize_speech("First sentence here. Second one too.", &tts).unwrap();
        assert_eq!(audio, b"SEGSEG");
    }

    #[test]
    fn empty_script() {
        let tts = TtsClient::new(TtsConfig::mock(), scripted(&[]));
        assert_eq!(synthesize_speech(" \n ", &tts), Err(AppError::EmptyScript));
    }

    #[test]
    fn wire_format_and_retry() {
        let http = scripted(&[503, 200]);
        let sleeper = Arc::new(RecordingSleeper::default());
        let tts = TtsClient::new(http_config(), http.clone()).with_sleeper(sleeper.clone());
        assert_eq!(synthesize_speech("Hello there.", &tts).unwrap(), b"ID3");
        let seen = http.seen.lock().unwrap();
        assert_eq!(seen.len(), 2);
        assert_eq!(seen[0].method, Method::Post);
        let body: serde_json::Value =
            serde_json::from_slice(seen[0].body.as_ref().unwrap()).unwrap();
        assert_eq!(
            body,
            serde_json::json!({"text": "Hello there.", "voice": "alloy", "format": "mp3"})
        );
        assert!(seen[0]
            .headers
            .contains(&("Authorization".into(), "Bearer tts-secret".into())));
        assert_eq!(sleeper.delays(), [Duration::from_secs(1)]);
    }

    #[test]
    fn gives_up_after_retries() {
        let http = scripted(&[500, 500, 500, 500]);
        let tts =
            TtsClient::new(http_config(), http).with_sleeper(Arc::new(RecordingSleeper::default()));
        assert!(matches!(
            synthesize_speech("Hi.", &tts),
            Err(AppError::Tts(_))
        ));
    }

    #[test]
    fn client_error_not_retried() {
        let http = scripted(&[400]);
        let tts = TtsClient::new(http_config(), http.clone());
        assert!(matches!(
            synthesize_speech("Hi.", &tts),
            Err(AppError::Tts(_))
        ));
        assert_eq!(http.seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn config_hides_key() {
        let json = serde_json::to_string(&http_config()).unwrap();
        assert!(!json.contains("tts-secret"));
        assert!(!format!("{:?}", http_config()).contains("tts-secret"));
    }

    #[test]
    fn silence_frames() {
        let mp3 = silent_mp3("abcd");
        assert_eq!(mp3.len(), 2 * FRAME_LEN);
        assert_eq!(&mp3[FRAME_LEN..FRAME_LEN + 4], FRAME_HEADER);
    }
}
