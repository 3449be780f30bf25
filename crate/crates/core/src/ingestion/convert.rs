use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{parse_figure_manifest, Asset, ConversionBundle, IngestError, SourceRef};
use crate::doc_model::split_pages;
use crate::http::{HttpClient, HttpRequest, TransportFailure};

const STDERR_TAIL: usize = 2000;

/// How to reach the two external converters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolConfig {
    #[serde(default)]
    pub text_converter: Option<ToolSpec>,
    #[serde(default)]
    pub figure_extractor: Option<ToolSpec>,
    /// Recorded outputs keyed by PDF hash; replaces both tools when set.
    #[serde(default)]
    pub fixtures_dir: Option<PathBuf>,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
}

fn default_timeout() -> u64 {
    600
}

impl Default for ToolConfig {
    fn default() -> Self {
        Self {
            text_converter: None,
            figure_extractor: None,
            fixtures_dir: None,
            timeout_s: default_timeout(),
        }
    }
}

/// A tool is either a subprocess or an HTTP endpoint.
///
/// Command arguments may use `{pdf}`, `{out}`, `{out_dir}` and `{stem}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ToolSpec {
    Command {
        program: PathBuf,
        #[serde(default)]
        args: Vec<String>,
        #[serde(default)]
        version: Option<String>,
    },
    Http {
        endpoint: String,
        #[serde(default)]
        version: Option<String>,
    },
}

impl ToolSpec {
    fn version(&self) -> String {
        match self {
            ToolSpec::Command { version, .. } | ToolSpec::Http { version, .. } => {
                version.clone().unwrap_or_else(|| "unknown".into())
            }
        }
    }
}

#[derive(Debug, Deserialize)]
struct HttpFigures {
    manifest: serde_json::Value,
    #[serde(default)]
    images: BTreeMap<String, String>,
}

/// Runs the text converter and the figure extractor on `pdf` and merges
/// their outputs. Tool outputs land under `work_dir`.
pub fn convert_pdf(
    pdf: &Path,
    source: &SourceRef,
    tools: &ToolConfig,
    work_dir: &Path,
    http: &dyn HttpClient,
) -> Result<ConversionBundle, IngestError> {
    let bytes = fs::read(pdf)?;
    let timeout = Duration::from_secs(tools.timeout_s);
    let mut versions = BTreeMap::new();

    let (raw_markup, assets) = if let Some(fixtures) = &tools.fixtures_dir {
        let dir = fixtures.join(hex::encode(Sha256::digest(&bytes)));
        if !dir.is_dir() {
            return Err(IngestError::Config(format!(
                "no fixture recorded at {}",
                dir.display()
            )));
        }
        versions.insert("text_converter".into(), "fixture".into());
        versions.insert("figure_extractor".into(), "fixture".into());
        let markup = fs::read_to_string(dir.join("markup.mmd"))?;
        let manifest = dir.join("figures.json");
        let assets = if manifest.exists() {
            parse_figure_manifest(&fs::read_to_string(manifest)?, &dir)?
        } else {
            Vec::new()
        };
        (markup, assets)
    } else {
        let text_tool = tools
            .text_converter
            .as_ref()
            .ok_or_else(|| IngestError::Config("text_converter is not configured".into()))?;
        let figure_tool = tools
            .figure_extractor
            .as_ref()
            .ok_or_else(|| IngestError::Config("figure_extractor is not configured".into()))?;
        fs::create_dir_all(work_dir)?;
        versions.insert("text_converter".into(), text_tool.version());
        versions.insert("figure_extractor".into(), figure_tool.version());
        let markup = run_text_converter(text_tool, pdf, &bytes, work_dir, timeout, http)?;
        let assets = run_figure_extractor(figure_tool, pdf, &bytes, work_dir, timeout, http)?;
        (markup, assets)
    };

    for asset in &assets {
        if !asset.image_path.exists() {
            return Err(IngestError::Manifest(format!(
                "image {} for {} {} does not exist",
                asset.image_path.display(),
                asset.kind.as_str(),
                asset.label
            )));
        }
    }

    let (markup, page_breaks) = split_pages(&raw_markup);
    let bundle = ConversionBundle {
        markup,
        page_breaks,
        assets,
        source: source.clone(),
        converter_versions: versions,
    };
    let pages = bundle.page_count();
    if let Some(a) = bundle.assets.iter().find(|a| a.page > pages) {
        return Err(IngestError::Manifest(format!(
            "{} {} is on page {} but the document has {pages} pages",
            a.kind.as_str(),
            a.label,
            a.page
        )));
    }
    Ok(bundle)
}

fn stem(pdf: &Path) -> String {
    pdf.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("document")
        .to_string()
}

fn expand(args: &[String], vars: &[(&str, String)]) -> Vec<String> {
    args.iter()
        .map(|a| {
            vars.iter()
                .fold(a.clone(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v))
        })
        .collect()
}

fn run_text_converter(
    spec: &ToolSpec,
    pdf: &Path,
    bytes: &[u8],
    work_dir: &Path,
    timeout: Duration,
    http: &dyn HttpClient,
) -> Result<String, IngestError> {
    const TOOL: &str = "text_converter";
    let output = match spec {
        ToolSpec::Command { program, args, .. } => {
            let out = work_dir.join(format!("{}.mmd", stem(pdf)));
            let _ = fs::remove_file(&out);
            let args = if args.is_empty() {
                vec!["{pdf}".into(), "--out".into(), "{out}".into()]
            } else {
                args.clone()
            };
            let vars = [
                ("pdf", pdf.display().to_string()),
                ("out", out.display().to_string()),
                ("out_dir", work_dir.display().to_string()),
                ("stem", stem(pdf)),
            ];
            let stdout = run_command(TOOL, program, &expand(&args, &vars), timeout)?;
            if out.exists() {
                fs::read(&out)?
            } else {
                stdout
            }
        }
        ToolSpec::Http { endpoint, .. } => post_pdf(TOOL, endpoint, bytes, timeout, http)?,
    };
    String::from_utf8(output).map_err(|_| IngestError::ToolFailure {
        tool: TOOL.into(),
        status: "invalid output".into(),
        stderr_tail: "markup is not valid UTF-8".into(),
    })
}

fn run_figure_extractor(
    spec: &ToolSpec,
    pdf: &Path,
    bytes: &[u8],
    work_dir: &Path,
    timeout: Duration,
    http: &dyn HttpClient,
) -> Result<Vec<Asset>, IngestError> {
    const TOOL: &str = "figure_extractor";
    let out_dir = work_dir.join("figures");
    fs::create_dir_all(&out_dir)?;
    match spec {
        ToolSpec::Command { program, args, .. } => {
            let args = if args.is_empty() {
                vec!["{pdf}".into(), "{out_dir}".into()]
            } else {
                args.clone()
            };
            let vars = [
                ("pdf", pdf.display().to_string()),
                (
                    "out",
                    out_dir
                        .join(format!("{}.json", stem(pdf)))
                        .display()
                        .to_string(),
                ),
                ("out_dir", out_dir.display().to_string()),
                ("stem", stem(pdf)),
            ];
            run_command(TOOL, program, &expand(&args, &vars), timeout)?;
            let manifest = out_dir.join(format!("{}.json", stem(pdf)));
            let text = fs::read_to_string(&manifest)
                .map_err(|e| IngestError::Manifest(format!("{}: {e}", manifest.display())))?;
            parse_figure_manifest(&text, &out_dir)
        }
        ToolSpec::Http { endpoint, .. } => {
            let body = post_pdf(TOOL, endpoint, bytes, timeout, http)?;
            let reply: HttpFigures =
                serde_json::from_slice(&body).map_err(|e| IngestError::Manifest(e.to_string()))?;
            for (name, data) in &reply.images {
                let file = Path::new(name)
                    .file_name()
                    .ok_or_else(|| IngestError::Manifest(format!("bad image name {name:?}")))?;
                let decoded = base64::engine::general_purpose::STANDARD
                    .decode(data)
                    .map_err(|e| IngestError::Manifest(format!("image {name}: {e}")))?;
                fs::write(out_dir.join(file), decoded)?;
            }
            parse_figure_manifest(&reply.manifest.to_string(), &out_dir)
        }
    }
}

fn post_pdf(
    tool: &str,
    endpoint: &str,
    bytes: &[u8],
    timeout: Duration,
    http: &dyn HttpClient,
) -> Result<Vec<u8>, IngestError> {
    let request = HttpRequest::post(endpoint, bytes.to_vec())
        .header("Content-Type", "application/pdf")
        .timeout(timeout);
    match http.send(request) {
        Ok(resp) if resp.is_success() => Ok(resp.body),
        Ok(resp) => Err(IngestError::ToolFailure {
            tool: tool.into(),
            status: format!("HTTP {}", resp.status),
            stderr_tail: tail(&resp.text_lossy()),
        }),
        Err(TransportFailure::Timeout) => Err(IngestError::Timeout {
            tool: tool.into(),
            seconds: timeout.as_secs(),
        }),
        Err(e) => Err(IngestError::ToolFailure {
            tool: tool.into(),
            status: "transport".into(),
            stderr_tail: e.to_string(),
        }),
    }
}

fn tail(s: &str) -> String {
    let count = s.chars().count();
    s.chars().skip(count.saturating_sub(STDERR_TAIL)).collect()
}

fn run_command(
    tool: &str,
    program: &Path,
    args: &[String],
    timeout: Duration,
) -> Result<Vec<u8>, IngestError> {
    log::info!("running {tool}: {}", program.display());
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| IngestError::ToolFailure {
            tool: tool.into(),
            status: "spawn failed".into(),
            stderr_tail: e.to_string(),
        })?;

    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut stderr = child.stderr.take().expect("piped stderr");
    let out_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        buf
    });
    let err_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr.read_to_end(&mut buf);
        buf
    });

    let deadline = Instant::now() + timeout;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            return Err(IngestError::Timeout {
                tool: tool.into(),
                seconds: timeout.as_secs(),
            });
        }
        std::thread::sleep(Duration::from_millis(10));
    };
    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();
    if !status.success() {
        return Err(IngestError::ToolFailure {
            tool: tool.into(),
            status: status.to_string(),
            stderr_tail: tail(&String::from_utf8_lossy(&stderr)),
        });
    }
    Ok(stdout)
}
