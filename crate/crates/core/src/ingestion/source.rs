use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, LazyLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::IngestError;
use crate::http::{HttpClient, HttpRequest};
use crate::retry::{backoff_delay, Sleeper};
use crate::workspace::write_atomic;

static NEW_STYLE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d{4}\.\d{4,5})(?:v(\d+))?$").unwrap());
static LEGACY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([a-z][a-z\-]*(?:\.[A-Z]{2})?/\d{7})(?:v(\d+))?$").unwrap());

/// Where a paper comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceRef {
    ArxivId {
        id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        version: Option<u32>,
    },
    LocalFile {
        path: PathBuf,
    },
}

impl SourceRef {
    /// Parses an arXiv identifier, accepting `arXiv:` prefixes and abs/pdf
    /// URLs. The version suffix is split off.
    pub fn arxiv(raw: &str) -> Result<Self, IngestError> {
        let mut s = raw.trim();
        for prefix in [
            "https://arxiv.org/abs/",
            "https://arxiv.org/pdf/",
            "http://arxiv.org/abs/",
            "http://arxiv.org/pdf/",
        ] {
            if let Some(rest) = s.strip_prefix(prefix) {
                s = rest.trim_end_matches(".pdf");
            }
        }
        if s.len() > 6 && s[..6].eq_ignore_ascii_case("arxiv:") {
            s = &s[6..];
        }
        let caps = NEW_STYLE
            .captures(s)
            .or_else(|| LEGACY.captures(s))
            .ok_or_else(|| IngestError::InvalidSource(raw.to_string()))?;
        let version = match caps.get(2) {
            Some(v) => Some(
                v.as_str()
                    .parse()
                    .map_err(|_| IngestError::InvalidSource(raw.to_string()))?,
            ),
            None => None,
        };
        Ok(SourceRef::ArxivId {
            id: caps[1].to_string(),
            version,
        })
    }

    pub fn local(path: impl AsRef<Path>) -> Self {
        let path = path.as_ref();
        SourceRef::LocalFile {
            path: std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf()),
        }
    }

    /// arXiv id when the text looks like one, otherwise a local path.
    pub fn parse(raw: &str) -> Self {
        Self::arxiv(raw).unwrap_or_else(|_| Self::local(raw.trim()))
    }

    /// Alias key in the cache: the id plus version tag when present.
    fn alias_key(&self) -> Option<String> {
        match self {
            SourceRef::ArxivId { id, version } => {
                let base = id.replace('/', "_");
                Some(match version {
                    Some(v) => format!("{base}v{v}"),
                    None => base,
                })
            }
            SourceRef::LocalFile { .. } => None,
        }
    }
}

impl fmt::Display for SourceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceRef::ArxivId {
                id,
                version: Some(v),
            } => write!(f, "arXiv:{id}v{v}"),
            SourceRef::ArxivId { id, version: None } => write!(f, "arXiv:{id}"),
            SourceRef::LocalFile { path } => write!(f, "{}", path.display()),
        }
    }
}

/// Content-addressed PDF store with an alias index for arXiv ids.
#[derive(Debug, Clone)]
pub struct PdfCache {
    root: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchedPdf {
    pub path: PathBuf,
    pub sha256: String,
}

impl PdfCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn pdf_path(&self, sha: &str) -> PathBuf {
        self.root.join("pdf").join(format!("{sha}.pdf"))
    }

    fn alias_path(&self, key: &str) -> PathBuf {
        self.root.join("alias").join("arxiv").join(key)
    }

    pub fn store(&self, bytes: &[u8]) -> Result<FetchedPdf, IngestError> {
        let sha256 = hex::encode(Sha256::digest(bytes));
        let path = self.pdf_path(&sha256);
        if !path.exists() {
            write_atomic(&path, bytes)?;
        }
        Ok(FetchedPdf { path, sha256 })
    }

    fn lookup(&self, key: &str) -> Option<FetchedPdf> {
        let sha256 = fs::read_to_string(self.alias_path(key))
            .ok()?
            .trim()
            .to_string();
        let path = self.pdf_path(&sha256);
        path.exists().then_some(FetchedPdf { path, sha256 })
    }

    fn alias(&self, key: &str, sha: &str) -> Result<(), IngestError> {
        write_atomic(&self.alias_path(key), sha.as_bytes())?;
        Ok(())
    }
}

pub fn looks_like_pdf(bytes: &[u8]) -> bool {
    bytes[..bytes.len().min(1024)]
        .windows(5)
        .any(|w| w == b"%PDF-")
}

/// Downloads or imports PDFs into a [`PdfCache`].
pub struct Fetcher {
    http: Arc<dyn HttpClient>,
    sleeper: Arc<dyn Sleeper>,
    base_url: String,
    max_retries: u32,
    timeout: Duration,
}

impl Fetcher {
    pub fn new(http: Arc<dyn HttpClient>, sleeper: Arc<dyn Sleeper>) -> Self {
        Self {
            http,
            sleeper,
            base_url: "https://arxiv.org".to_string(),
            max_retries: 3,
            timeout: Duration::from_secs(120),
        }
    }

    pub fn with_base_url(mut self, base_url: impl Into<String>) -> Self {
        self.base_url = base_url.into().trim_end_matches('/').to_string();
        self
    }

    pub fn fetch(&self, source: &SourceRef, cache: &PdfCache) -> Result<FetchedPdf, IngestError> {
        match source {
            SourceRef::LocalFile { path } => {
                let bytes = fs::read(path).map_err(|e| match e.kind() {
                    std::io::ErrorKind::NotFound => {
                        IngestError::NotFound(path.display().to_string())
                    }
                    _ => IngestError::Io(e),
                })?;
                if !looks_like_pdf(&bytes) {
                    return Err(IngestError::InvalidPdf(path.display().to_string()));
                }
                cache.store(&bytes)
            }
            SourceRef::ArxivId { id, version } => {
                let key = source.alias_key().expect("arxiv source has a key");
                if let Some(hit) = cache.lookup(&key) {
                    log::debug!("cache hit for {source}");
                    return Ok(hit);
                }
                if !plausible_arxiv_id(id) {
                    return Err(IngestError::NotFound(source.to_string()));
                }
                let versioned = match version {
                    Some(v) => format!("{id}v{v}"),
                    None => id.clone(),
                };
                let bytes = self.download(&format!("{}/pdf/{versioned}", self.base_url), source)?;
                if !looks_like_pdf(&bytes) {
                    return Err(IngestError::InvalidPdf(source.to_string()));
                }
                let fetched = cache.store(&bytes)?;
                cache.alias(&key, &fetched.sha256)?;
                Ok(fetched)
            }
        }
    }

    fn download(&self, url: &str, source: &SourceRef) -> Result<Vec<u8>, IngestError> {
        let mut last_error = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                self.sleeper.sleep(backoff_delay(attempt - 1));
            }
            match self.http.send(HttpRequest::get(url).timeout(self.timeout)) {
                Ok(resp) if resp.is_success() => return Ok(resp.body),
                Ok(resp) if resp.status == 404 || resp.status == 410 => {
                    return Err(IngestError::NotFound(source.to_string()))
                }
                Ok(resp) if resp.status == 429 || resp.status >= 500 => {
                    last_error = format!("HTTP {}", resp.status);
                }
                Ok(resp) => return Err(IngestError::Network(format!("HTTP {}", resp.status))),
                Err(e) => last_error = e.to_string(),
            }
            log::warn!(
                "fetch of {source} failed (attempt {}): {last_error}",
                attempt + 1
            );
        }
        Err(IngestError::Network(last_error))
    }
}

/// New-style ids encode YYMM; a month outside 01..=12 cannot exist.
fn plausible_arxiv_id(id: &str) -> bool {
    match id.split_once('.') {
        Some((yymm, _)) if yymm.len() == 4 && yymm.bytes().all(|b| b.is_ascii_digit()) => {
            let month: u32 = yymm[2..].parse().unwrap_or(0);
            (1..=12).contains(&month)
        }
        _ => true,
    }
}
