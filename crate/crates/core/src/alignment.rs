//! Attaching figures and tables to sections, and resolving
//! `(section, index)` locators back to assets.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::doc_model::{normalize_title, Section, SectionTree, TreeManifest};
use crate::ingestion::{Asset, AssetKind};
use crate::summarizer::{extract_front_matter, title_section_index, DocumentMetadata};
use crate::text::{content_tokens, jaccard};
use crate::workspace::write_atomic;

pub const PAGE_WEIGHT: f64 = 2.0;
pub const CAPTION_WEIGHT: f64 = 1.0;
pub const REFERENCE_WEIGHT: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentEntry {
    pub kind: AssetKind,
    pub ordinal: u32,
    pub label: String,
    /// Position of the chosen section in depth-first reading order.
    pub section_index: usize,
    pub chosen_section: String,
    pub score: f64,
    pub page_containment: bool,
    pub caption_overlap: f64,
    pub explicit_reference: bool,
    /// No section scored above zero.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDocument {
    pub tree: SectionTree,
    pub assets: Vec<Asset>,
    pub metadata: DocumentMetadata,
    pub alignment_report: Vec<AlignmentEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Locator {
    pub section: String,
    pub index: u32,
    #[serde(default = "default_kind")]
    pub kind: AssetKind,
}

fn default_kind() -> AssetKind {
    AssetKind::Figure
}

impl Locator {
    pub fn new(section: impl Into<String>, index: u32, kind: AssetKind) -> Self {
        Self {
            section: section.into(),
            index,
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlignError {
    #[error("the document has no sections to attach assets to")]
    EmptyTree,
    #[error("no section matches {query:?} (candidates: {candidates:?})")]
    UnknownSection {
        query: String,
        candidates: Vec<String>,
    },
    #[error("{section:?} has {available} {kind:?} asset(s), index {index} is out of range")]
    IndexOutOfRange {
        section: String,
        kind: AssetKind,
        index: u32,
        available: u32,
    },
}

/// Scoring terms of one (asset, section) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreTerms {
    pub page_containment: bool,
    pub caption_overlap: f64,
    pub explicit_reference: bool,
}

impl ScoreTerms {
    pub fn total(&self) -> f64 {
        PAGE_WEIGHT * f64::from(u8::from(self.page_containment))
            + CAPTION_WEIGHT * self.caption_overlap
            + REFERENCE_WEIGHT * f64::from(u8::from(self.explicit_reference))
    }
}

static REFERENCE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)(?:^|[^\p{L}\p{N}])(figure|figs?\.?|table|tab\.)\s*([\p{L}\p{N}]+(?:\.[\p{L}\p{N}]+)*)").unwrap()
});

/// Every (kind, lowercased label) referenced in `text`, e.g. "Figure 2" or
/// "Fig. 2" for figures and "Table 2" for tables. "Figure 3.1" also counts
/// as a reference to label "3".
pub fn references_in(text: &str) -> BTreeSet<(AssetKind, String)> {
    let mut out = BTreeSet::new();
    for caps in REFERENCE.captures_iter(text) {
        let kind = if caps[1].to_lowercase().starts_with('t') {
            AssetKind::Table
        } else {
            AssetKind::Figure
        };
        let label = caps[2].to_lowercase();
        for (i, _) in label.match_indices('.') {
            out.insert((kind, label[..i].to_string()));
        }
        out.insert((kind, label));
    }
    out
}

/// Whether `text` refers to the asset with this kind and label.
pub fn mentions(text: &str, kind: AssetKind, label: &str) -> bool {
    let label = label.trim().to_lowercase();
    !label.is_empty() && references_in(text).contains(&(kind, label))
}

static CAPTION_LABEL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(?:figure|fig\.|table)\s*[\p{L}\p{N}.]*\s*[:.]?").unwrap()
});

fn caption_tokens(caption: &str) -> BTreeSet<String> {
    // The leading "Figure 3:" label carries no topical signal.
    content_tokens(&CAPTION_LABEL.replace(caption, ""))
}

pub fn score_terms(asset: &Asset, section: &Section) -> ScoreTerms {
    score_with(
        asset,
        section,
        &caption_tokens(&asset.caption),
        &content_tokens(&section.body),
        &references_in(&section.body),
    )
}

fn score_with(
    asset: &Asset,
    section: &Section,
    caption: &BTreeSet<String>,
    section_tokens: &BTreeSet<String>,
    references: &BTreeSet<(AssetKind, String)>,
) -> ScoreTerms {
    let label = asset.label.trim().to_lowercase();
    ScoreTerms {
        page_containment: section.page_range.is_some_and(|r| r.contains(asset.page)),
        caption_overlap: jaccard(caption, section_tokens),
        explicit_reference: !label.is_empty() && references.contains(&(asset.kind, label)),
    }
}

fn canonical_order(a: &Asset, b: &Asset) -> std::cmp::Ordering {
    a.page
        .cmp(&b.page)
        .then(a.top().total_cmp(&b.top()))
        .then(a.left().total_cmp(&b.left()))
        .then(a.kind.cmp(&b.kind))
        .then(a.ordinal.cmp(&b.ordinal))
        .then(a.label.cmp(&b.label))
        .then(a.caption.cmp(&b.caption))
}

/// Assigns every asset to the best-scoring section of `tree` and numbers
/// assets per (section, kind) in reading order.
///
/// The front-matter section and the title heading only receive assets when
/// no other section exists.
pub fn align_assets(tree: SectionTree, assets: Vec<Asset>) -> Result<AlignedDocument, AlignError> {
    let sections = tree.sections();
    if sections.is_empty() {
        return Err(AlignError::EmptyTree);
    }
    let metadata = extract_front_matter(&tree);
    let title_index = title_section_index(&tree, &metadata);
    let candidates: Vec<usize> = {
        let body: Vec<usize> = (0..sections.len())
            .filter(|&i| !sections[i].is_front_matter() && Some(i) != title_index)
            .collect();
        if body.is_empty() {
            (0..sections.len()).collect()
        } else {
            body
        }
    };
    let section_tokens: Vec<BTreeSet<String>> =
        sections.iter().map(|s| content_tokens(&s.body)).collect();
    let section_refs: Vec<_> = sections.iter().map(|s| references_in(&s.body)).collect();

    let mut assets = assets;
    assets.sort_by(canonical_order);
    let mut report = Vec::with_capacity(assets.len());
    for asset in &mut assets {
        let caption = caption_tokens(&asset.caption);
        let mut best: Option<(usize, ScoreTerms, f64)> = None;
        for &i in &candidates {
            let terms = score_with(
                asset,
                sections[i],
                &caption,
                &section_tokens[i],
                &section_refs[i],
            );
            let total = terms.total();
            if best.as_ref().is_none_or(|b| total > b.2) {
                best = Some((i, terms, total));
            }
        }
        let (mut index, mut terms, score) = best.expect("at least one candidate");
        let fallback = score <= 0.0;
        if fallback {
            index = candidates
                .iter()
                .copied()
                .find(|&i| {
                    sections[i]
                        .page_range
                        .is_some_and(|r| r.first() >= asset.page)
                })
                .unwrap_or(*candidates.last().unwrap());
            terms = score_with(
                asset,
                sections[index],
                &caption,
                &section_tokens[index],
                &section_refs[index],
            );
        }
        let chosen = sections[index].canonical_title.clone();
        asset.aligned_section = Some(chosen.clone());
        report.push(AlignmentEntry {
            kind: asset.kind,
            ordinal: asset.ordinal,
            label: asset.label.clone(),
            section_index: index,
            chosen_section: chosen,
            score: terms.total(),
            page_containment: terms.page_containment,
            caption_overlap: terms.caption_overlap,
            explicit_reference: terms.explicit_reference,
            fallback,
        });
    }

    // Sections sharing a canonical title form one group, numbered in the
    // reading order of their owning section, then canonical asset order.
    let mut order: Vec<usize> = (0..assets.len()).collect();
    order.sort_by_key(|&i| report[i].section_index);
    let mut counters: BTreeMap<(String, AssetKind), u32> = BTreeMap::new();
    for i in order {
        let key = (report[i].chosen_section.clone(), assets[i].kind);
        let n = counters.entry(key).or_default();
        *n += 1;
        assets[i].section_ordinal = Some(*n);
    }

    Ok(AlignedDocument {
        tree,
        assets,
        metadata,
        alignment_report: report,
    })
}

impl AlignedDocument {
    /// Distinct canonical titles in reading order.
    pub fn canonical_titles(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.tree
            .sections()
            .into_iter()
            .filter(|s| seen.insert(s.canonical_title.clone()))
            .map(|s| s.canonical_title.clone())
            .collect()
    }

    /// Assets owned by the canonical title, in section-ordinal order.
    pub fn assets_of(&self, canonical_title: &str) -> Vec<&Asset> {
        let mut owned: Vec<&Asset> = self
            .assets
            .iter()
            .filter(|a| a.aligned_section.as_deref() == Some(canonical_title))
            .collect();
        owned.sort_by_key(|a| (a.kind, a.section_ordinal));
        owned
    }

    /// Exact canonical match first, then a unique substring match.
    pub fn match_section(&self, query: &str) -> Result<String, AlignError> {
        let q = normalize_title(query);
        let titles = self.canonical_titles();
        if titles.contains(&q) {
            return Ok(q);
        }
        let candidates: Vec<String> = if q.is_empty() {
            Vec::new()
        } else {
            titles
                .iter()
                .filter(|t| t.contains(q.as_str()))
                .cloned()
                .collect()
        };
        match candidates.as_slice() {
            [only] => Ok(only.clone()),
            [] => Err(AlignError::UnknownSection {
                query: query.to_string(),
                candidates: titles,
            }),
            _ => Err(AlignError::UnknownSection {
                query: query.to_string(),
                candidates,
            }),
        }
    }

    pub fn resolve_locator(&self, loc: &Locator) -> Result<&Asset, AlignError> {
        let section = self.match_section(&loc.section)?;
        let owned: Vec<&Asset> = self
            .assets
            .iter()
            .filter(|a| {
                a.kind == loc.kind && a.aligned_section.as_deref() == Some(section.as_str())
            })
            .collect();
        owned
            .iter()
            .find(|a| a.section_ordinal == Some(loc.index))
            .copied()
            .ok_or(AlignError::IndexOutOfRange {
                section,
                kind: loc.kind,
                index: loc.index,
                available: owned.len() as u32,
            })
    }
}

pub fn resolve_locator<'a>(
    doc: &'a AlignedDocument,
    loc: &Locator,
) -> Result<&'a Asset, AlignError> {
    doc.resolve_locator(loc)
}

#[derive(Debug, Serialize, Deserialize)]
struct AlignedManifest {
    tree: TreeManifest,
    metadata: DocumentMetadata,
    assets: Vec<Asset>,
    alignment_report: Vec<AlignmentEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("manifest.json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Mismatch(#[from] crate::doc_model::ManifestMismatch),
}

impl AlignedDocument {
    /// Writes `document.md`, `manifest.json` and `assets/<file>` under `dir`.
    /// Asset paths in the manifest are relative to `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), StoreError> {
        fs::create_dir_all(dir.join("assets"))?;
        let mut assets = self.assets.clone();
        for asset in &mut assets {
            let rel = Path::new("assets").join(asset.file_name());
            let target = dir.join(&rel);
            if asset.image_path != target {
                write_atomic(&target, &fs::read(&asset.image_path)?)?;
            }
            asset.image_path = rel;
        }
        write_atomic(&dir.join("document.md"), self.tree.to_markup().as_bytes())?;
        let manifest = AlignedManifest {
            tree: self.tree.manifest(),
            metadata: self.metadata.clone(),
            assets,
            alignment_report: self.alignment_report.clone(),
        };
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        write_atomic(&dir.join("manifest.json"), &json)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, StoreError> {
        let markup = fs::read_to_string(dir.join("document.md"))?;
        let manifest: AlignedManifest =
            serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
        let tree = SectionTree::from_parts(&markup, &manifest.tree)?;
        let assets = manifest
            .assets
            .into_iter()
            .map(|mut a| {
                a.image_path = dir.join(&a.image_path);
                a
            })
            .collect();
        Ok(Self {
            tree,
            assets,
            metadata: manifest.metadata,
            alignment_report: manifest.alignment_report,
        })
    }
}
