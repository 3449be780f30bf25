//! On-disk layout: `index.json` plus one directory per paper under
//! `papers/<paper_id>/`. Every write goes through a temp file and rename.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::ingestion::{PdfCache, SourceRef};

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let parent = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = parent.join(format!(
        ".{name}.tmp-{}-{}",
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Fetched,
    Converted,
    Aligned,
    Summarized,
    Failed,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Fetched => "fetched",
            Status::Converted => "converted",
            Status::Aligned => "aligned",
            Status::Summarized => "summarized",
            Status::Failed => "failed",
        }
    }

    /// Forward moves, any move to `Failed`, and resumption out of `Failed`.
    pub fn can_transition(self, to: Status) -> bool {
        to == Status::Failed || self == Status::Failed || to >= self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub paper_id: String,
    pub source: SourceRef,
    pub status: Status,
    #[serde(default)]
    pub timestamps: BTreeMap<String, String>,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub title: Option<String>,
}

impl PaperRecord {
    pub fn new(paper_id: impl Into<String>, source: SourceRef) -> Self {
        let mut record = Self {
            paper_id: paper_id.into(),
            source,
            status: Status::Fetched,
            timestamps: BTreeMap::new(),
            error: None,
            title: None,
        };
        record.stamp(Status::Fetched);
        record
    }

    fn stamp(&mut self, status: Status) {
        self.timestamps.insert(
            status.as_str().to_string(),
            chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        );
    }

    pub fn advance(&mut self, to: Status) {
        assert!(
            self.status.can_transition(to),
            "illegal status transition {:?} -> {:?}",
            self.status,
            to
        );
        self.status = to;
        if to != Status::Failed {
            self.error = None;
        }
        self.stamp(to);
    }

    pub fn fail(&mut self, error: impl Into<String>) {
        self.advance(Status::Failed);
        self.error = Some(error.into());
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct IndexFile {
    papers: BTreeMap<String, PaperRecord>,
}

pub struct Workspace {
    root: PathBuf,
    index: Mutex<BTreeMap<String, PaperRecord>>,
}

impl Workspace {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("papers"))?;
        let index_path = root.join("index.json");
        let index = if index_path.exists() {
            let file: IndexFile = serde_json::from_slice(&fs::read(&index_path)?)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            file.papers
        } else {
            BTreeMap::new()
        };
        Ok(Self {
            root,
            index: Mutex::new(index),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn cache(&self) -> PdfCache {
        PdfCache::new(self.root.join("cache"))
    }

    pub fn paper_dir(&self, paper_id: &str) -> PathBuf {
        self.root.join("papers").join(paper_id)
    }

    pub fn record(&self, paper_id: &str) -> Option<PaperRecord> {
        self.index.lock().unwrap().get(paper_id).cloned()
    }

    pub fn records(&self) -> Vec<PaperRecord> {
        self.index.lock().unwrap().values().cloned().collect()
    }

    pub fn upsert(&self, record: &PaperRecord) -> io::Result<()> {
        let mut index = self.index.lock().unwrap();
        index.insert(record.paper_id.clone(), record.clone());
        let file = IndexFile {
            papers: index.clone(),
        };
        let mut json = serde_json::to_vec_pretty(&file).expect("index serializes");
        json.push(b'\n');
        write_atomic(&self.root.join("index.json"), &json)
    }

    pub fn write(&self, paper_id: &str, name: &str, bytes: &[u8]) -> io::Result<PathBuf> {
        let path = self.paper_dir(paper_id).join(name);
        write_atomic(&path, bytes)?;
        Ok(path)
    }

    pub fn read(&self, paper_id: &str, name: &str) -> io::Result<Vec<u8>> {
        fs::read(self.paper_dir(paper_id).join(name))
    }

    pub fn exists(&self, paper_id: &str, name: &str) -> bool {
        self.paper_dir(paper_id).join(name).exists()
    }
}

/// One mutex per key, created on demand.
#[derive(Default)]
pub struct KeyedLocks {
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl KeyedLocks {
    pub fn with<R>(&self, key: &str, f: impl FnOnce() -> R) -> R {
        let lock = self
            .locks
            .lock()
            .unwrap()
            .entry(key.to_string())
            .or_default()
            .clone();
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        f()
    }
}
