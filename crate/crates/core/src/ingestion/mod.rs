//! Source acquisition and external conversion tools.

mod convert;
mod manifest;
mod source;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use convert::{convert_pdf, ToolConfig, ToolSpec};
pub use manifest::parse_figure_manifest;
pub use source::{looks_like_pdf, FetchedPdf, Fetcher, PdfCache, SourceRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssetKind {
    Figure,
    Table,
}

impl AssetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AssetKind::Figure => "figure",
            AssetKind::Table => "table",
        }
    }

    pub fn display(&self) -> &'static str {
        match self {
            AssetKind::Figure => "Figure",
            AssetKind::Table => "Table",
        }
    }
}

impl std::str::FromStr for AssetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "figure" | "fig" | "image" | "chart" => Ok(AssetKind::Figure),
            "table" => Ok(AssetKind::Table),
            other => Err(format!("unknown asset kind {other:?}")),
        }
    }
}

/// Axis-aligned rectangle in page coordinates (points, origin top-left).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

/// One extracted figure or table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Asset {
    pub kind: AssetKind,
    /// Per-kind position in document order, starting at 1.
    pub ordinal: u32,
    pub label: String,
    pub caption: String,
    pub page: u32,
    pub region: Option<Region>,
    pub image_path: PathBuf,
    /// Canonical title of the owning section, set by alignment.
    #[serde(default)]
    pub aligned_section: Option<String>,
    /// Per-section, per-kind position, set by alignment.
    #[serde(default)]
    pub section_ordinal: Option<u32>,
}

impl Asset {
    /// Stable file name used inside workspaces, e.g. `figure-3.png`.
    pub fn file_name(&self) -> String {
        let ext = self
            .image_path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("png")
            .to_ascii_lowercase();
        format!("{}-{}.{}", self.kind.as_str(), self.ordinal, ext)
    }

    pub fn top(&self) -> f64 {
        self.region.map_or(0.0, |r| r.y1)
    }

    pub fn left(&self) -> f64 {
        self.region.map_or(0.0, |r| r.x1)
    }
}

/// Converter output for one PDF: markup, page boundaries and assets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionBundle {
    pub markup: String,
    pub page_breaks: Vec<usize>,
    pub assets: Vec<Asset>,
    pub source: SourceRef,
    pub converter_versions: BTreeMap<String, String>,
}

impl ConversionBundle {
    pub fn page_count(&self) -> u32 {
        if self.markup.is_empty() {
            0
        } else {
            self.page_breaks.len() as u32 + 1
        }
    }

    /// JSON with asset paths made relative to `base` where possible, so the
    /// bytes do not depend on where the workspace lives.
    pub fn to_json(&self, base: &Path) -> String {
        let mut copy = self.clone();
        for asset in &mut copy.assets {
            if let Ok(rel) = asset.image_path.strip_prefix(base) {
                asset.image_path = rel.to_path_buf();
            }
        }
        serde_json::to_string_pretty(&copy).expect("bundle serializes")
    }

    pub fn from_json(json: &str, base: &Path) -> Result<Self, serde_json::Error> {
        let mut bundle: Self = serde_json::from_str(json)?;
        for asset in &mut bundle.assets {
            if asset.image_path.is_relative() {
                asset.image_path = base.join(&asset.image_path);
            }
        }
        Ok(bundle)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("invalid source reference {0:?}")]
    InvalidSource(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("network error: {0}")]
    Network(String),
    #[error("not a PDF: {0}")]
    InvalidPdf(String),
    #[error("{tool} failed ({status}): {stderr_tail}")]
    ToolFailure {
        tool: String,
        status: String,
        stderr_tail: String,
    },
    #[error("{tool} timed out after {seconds} s")]
    Timeout { tool: String, seconds: u64 },
    #[error("figure manifest: {0}")]
    Manifest(String),
    #[error("tool configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
