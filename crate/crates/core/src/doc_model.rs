//! Section tree parsed from converter markup.
//!
//! Headings are the `#` ladder only. Text before the first heading becomes a
//! synthetic level-1 "Front Matter" section so that title and author lines
//! have somewhere to live.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::text::estimate_tokens;

pub const FRONT_MATTER_TITLE: &str = "Front Matter";
pub const FRONT_MATTER: &str = "front matter";

static HEADING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(#{1,6})(?:[ \t]+(.*?))?[ \t]*$").unwrap());
static ENUMERATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^(?:\(?\d+(?:\.\d+)*[.):]?|\(?[ivxlcdm]+[.):]|\(?[a-z][.):]|[a-z](?:\.\d+)+\.?|\([ivxlcdm]+\)|\([a-z]\))$",
    )
    .unwrap()
});

/// Inclusive 1-based page span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRange(pub u32, pub u32);

impl PageRange {
    pub fn first(&self) -> u32 {
        self.0
    }

    pub fn last(&self) -> u32 {
        self.1
    }

    pub fn contains(&self, page: u32) -> bool {
        self.0 <= page && page <= self.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub title: String,
    pub canonical_title: String,
    pub level: u8,
    pub body: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<Section>,
    pub page_range: Option<PageRange>,
    pub token_estimate: usize,
}

impl Section {
    pub fn new(title: impl Into<String>, level: u8, body: impl Into<String>) -> Self {
        let title = title.into();
        let body = body.into();
        Self {
            canonical_title: normalize_title(&title),
            token_estimate: estimate_tokens(&body),
            title,
            level,
            body,
            children: Vec::new(),
            page_range: None,
        }
    }

    pub fn with_children(mut self, children: Vec<Section>) -> Self {
        self.children = children;
        self
    }

    /// Own body followed by every descendant body, in reading order.
    pub fn full_text(&self) -> String {
        let mut parts = Vec::new();
        collect_bodies(self, &mut parts);
        parts.join("\n\n")
    }

    pub fn is_front_matter(&self) -> bool {
        self.canonical_title == FRONT_MATTER
    }
}

fn collect_bodies<'a>(section: &'a Section, out: &mut Vec<&'a str>) {
    if !section.body.is_empty() {
        out.push(&section.body);
    }
    for child in &section.children {
        collect_bodies(child, out);
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SectionTree {
    pub source_id: String,
    pub page_count: u32,
    pub root_sections: Vec<Section>,
}

impl SectionTree {
    pub fn with_source_id(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }

    pub fn is_empty(&self) -> bool {
        self.root_sections.is_empty()
    }

    /// Sections in depth-first reading order.
    pub fn sections(&self) -> Vec<&Section> {
        let mut out = Vec::new();
        fn walk<'a>(s: &'a [Section], out: &mut Vec<&'a Section>) {
            for section in s {
                out.push(section);
                walk(&section.children, out);
            }
        }
        walk(&self.root_sections, &mut out);
        out
    }

    pub fn section_count(&self) -> usize {
        self.sections().len()
    }

    pub fn total_tokens(&self) -> usize {
        self.sections().iter().map(|s| s.token_estimate).sum()
    }

    pub fn find(&self, canonical_title: &str) -> Option<&Section> {
        self.sections()
            .into_iter()
            .find(|s| s.canonical_title == canonical_title)
    }

    /// Serializes back to heading markup. Parsing the result reproduces the
    /// titles, levels and bodies of this tree.
    pub fn to_markup(&self) -> String {
        let mut out = String::new();
        for (i, section) in self.root_sections.iter().enumerate() {
            let raw_front = i == 0
                && section.level == 1
                && section.title == FRONT_MATTER_TITLE
                && section.children.is_empty()
                && !section.body.is_empty();
            if raw_front {
                out.push_str(&section.body);
                out.push_str("\n\n");
            } else {
                write_section(section, &mut out);
            }
        }
        out
    }

    /// Sidecar manifest carrying what markup alone cannot.
    pub fn manifest(&self) -> TreeManifest {
        TreeManifest {
            source_id: self.source_id.clone(),
            page_count: self.page_count,
            sections: self
                .sections()
                .into_iter()
                .map(|s| SectionEntry {
                    title: s.title.clone(),
                    level: s.level,
                    page_range: s.page_range,
                    token_estimate: s.token_estimate,
                })
                .collect(),
        }
    }

    /// Rebuilds a tree from serialized markup and its sidecar manifest.
    pub fn from_parts(markup: &str, manifest: &TreeManifest) -> Result<Self, ManifestMismatch> {
        let mut tree = parse_markup(markup, None);
        tree.source_id = manifest.source_id.clone();
        tree.page_count = manifest.page_count;
        let mut entries = manifest.sections.iter();
        let mut mismatch = None;
        visit_mut(
            &mut tree.root_sections,
            &mut |section| match entries.next() {
                Some(e) if e.title == section.title && e.level == section.level => {
                    section.page_range = e.page_range;
                }
                _ => {
                    mismatch.get_or_insert_with(|| section.title.clone());
                }
            },
        );
        if let Some(title) = mismatch.or_else(|| entries.next().map(|e| e.title.clone())) {
            return Err(ManifestMismatch { title });
        }
        Ok(tree)
    }
}

fn visit_mut(sections: &mut [Section], f: &mut impl FnMut(&mut Section)) {
    for section in sections {
        f(section);
        visit_mut(&mut section.children, f);
    }
}

fn write_section(section: &Section, out: &mut String) {
    for _ in 0..section.level {
        out.push('#');
    }
    out.push(' ');
    out.push_str(&section.title);
    out.push('\n');
    if !section.body.is_empty() {
        out.push('\n');
        out.push_str(&section.body);
        out.push('\n');
    }
    out.push('\n');
    for child in &section.children {
        write_section(child, out);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeManifest {
    pub source_id: String,
    pub page_count: u32,
    pub sections: Vec<SectionEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionEntry {
    pub title: String,
    pub level: u8,
    pub page_range: Option<PageRange>,
    pub token_estimate: usize,
}

#[derive(Debug, thiserror::Error)]
#[error("manifest does not match markup at section {title:?}")]
pub struct ManifestMismatch {
    pub title: String,
}

/// Removes form feeds from converter output, returning the clean markup and
/// the char offset at which each new page starts.
pub fn split_pages(raw: &str) -> (String, Vec<usize>) {
    let mut markup = String::with_capacity(raw.len());
    let mut breaks = Vec::new();
    let mut chars = 0;
    for c in raw.chars() {
        if c == '\u{000C}' {
            if breaks.last() != Some(&chars) {
                breaks.push(chars);
            }
        } else {
            markup.push(c);
            chars += 1;
        }
    }
    (markup, breaks)
}

struct Heading {
    level: u8,
    title: String,
    line_start: usize,
    body_start: usize,
}

/// Parses heading markup into a section tree.
///
/// `page_breaks` are strictly increasing char offsets where each page after
/// the first begins; when given, every section gets a page range.
pub fn parse_markup(markup: &str, page_breaks: Option<&[usize]>) -> SectionTree {
    let mut headings = Vec::new();
    let mut in_fence = false;
    let mut pos = 0;
    for line in markup.split_inclusive('\n') {
        let start = pos;
        pos += line.len();
        let content = line.trim_end_matches('\n').trim_end_matches('\r');
        let lead = content.trim_start();
        if lead.starts_with("```") || lead.starts_with("~~~") {
            in_fence = !in_fence;
            continue;
        }
        if in_fence {
            continue;
        }
        if let Some(caps) = HEADING.captures(content) {
            headings.push(Heading {
                level: caps[1].len() as u8,
                title: caps.get(2).map_or("", |m| m.as_str()).trim().to_string(),
                line_start: start,
                body_start: pos,
            });
        }
    }

    let pages = page_breaks.map(|b| PageLocator::new(markup, b));
    let page_count = match &pages {
        Some(p) if !markup.is_empty() => p.page_count(),
        _ => 0,
    };

    let mut flat = Vec::with_capacity(headings.len() + 1);
    let first_heading = headings.first().map_or(markup.len(), |h| h.line_start);
    let front = clean_body(&markup[..first_heading]);
    let has_front = !front.is_empty();
    if has_front {
        let mut s = Section::new(FRONT_MATTER_TITLE, 1, front);
        s.page_range = pages.as_ref().map(|p| p.range(0, first_heading));
        flat.push(s);
    }
    for (i, h) in headings.iter().enumerate() {
        let end = headings.get(i + 1).map_or(markup.len(), |n| n.line_start);
        let mut s = Section::new(
            h.title.clone(),
            h.level,
            clean_body(&markup[h.body_start.min(end)..end]),
        );
        s.page_range = pages.as_ref().map(|p| p.range(h.line_start, end));
        flat.push(s);
    }

    let mut items = flat.into_iter().peekable();
    let mut root_sections = Vec::new();
    if has_front {
        root_sections.extend(items.next());
    }
    root_sections.extend(nest(&mut items, 0));
    SectionTree {
        source_id: String::new(),
        page_count,
        root_sections,
    }
}

fn nest(
    items: &mut std::iter::Peekable<impl Iterator<Item = Section>>,
    parent_level: u8,
) -> Vec<Section> {
    let mut out = Vec::new();
    while let Some(next) = items.peek() {
        if next.level <= parent_level {
            break;
        }
        let mut section = items.next().expect("peeked");
        section.children = nest(items, section.level);
        out.push(section);
    }
    out
}

/// Drops leading and trailing blank lines; interior lines are kept verbatim.
fn clean_body(raw: &str) -> String {
    let lines: Vec<&str> = raw.lines().collect();
    let first = lines.iter().position(|l| !l.trim().is_empty());
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    match (first, last) {
        (Some(a), Some(b)) => lines[a..=b].join("\n"),
        _ => String::new(),
    }
}

struct PageLocator {
    /// char offset -> byte offset conversion happens once up front
    break_bytes: Vec<usize>,
    total_pages: u32,
}

impl PageLocator {
    fn new(markup: &str, breaks: &[usize]) -> Self {
        let mut sorted = breaks.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut byte_of_char: Vec<usize> = markup.char_indices().map(|(i, _)| i).collect();
        byte_of_char.push(markup.len());
        let break_bytes: Vec<usize> = sorted
            .iter()
            .map(|&c| byte_of_char.get(c).copied().unwrap_or(markup.len()))
            .collect();
        Self {
            total_pages: break_bytes.len() as u32 + 1,
            break_bytes,
        }
    }

    fn page_count(&self) -> u32 {
        self.total_pages
    }

    fn page_at(&self, byte: usize) -> u32 {
        1 + self.break_bytes.partition_point(|&b| b <= byte) as u32
    }

    fn range(&self, start: usize, end: usize) -> PageRange {
        let first = self.page_at(start);
        let last = if end > start {
            self.page_at(end - 1)
        } else {
            first
        };
        PageRange(first, last.max(first))
    }
}

/// Canonical form of a section title: lowercase, leading enumeration
/// ("3.2", "IV.", "A.") removed, punctuation collapsed, single-spaced.
pub fn normalize_title(title: &str) -> String {
    let lowered = title.trim().to_lowercase();
    let mut tokens: Vec<&str> = lowered.split_whitespace().collect();
    while tokens.len() > 1 && ENUMERATION.is_match(tokens[0]) {
        tokens.remove(0);
    }
    let joined = tokens.join(" ");
    let chars: Vec<char> = joined.chars().collect();
    let mut collapsed = String::with_capacity(joined.len());
    for (i, &c) in chars.iter().enumerate() {
        let keep = c.is_alphanumeric()
            || (matches!(c, '-' | '\'')
                && i > 0
                && chars[i - 1].is_alphanumeric()
                && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric()));
        collapsed.push(if keep { c } else { ' ' });
    }
    let mut words: Vec<&str> = collapsed.split_whitespace().collect();
    while words.len() > 1 && words[0].chars().all(|c| c.is_ascii_digit()) {
        words.remove(0);
    }
    words.join(" ")
}

/// Which sections count as noise and are excised before summarization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterPolicy {
    pub excluded_canonical_titles: BTreeSet<String>,
    /// When false, sections with an empty canonical title are dropped too.
    #[serde(default = "default_true")]
    pub keep_unmatched: bool,
}

fn default_true() -> bool {
    true
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self::new([
            "references",
            "bibliography",
            "appendix",
            "acknowledgments",
            "acknowledgements",
        ])
    }
}

impl FilterPolicy {
    pub fn new<I, S>(titles: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            excluded_canonical_titles: titles
                .into_iter()
                .map(|t| t.as_ref().trim().to_lowercase())
                .filter(|t| !t.is_empty())
                .collect(),
            keep_unmatched: true,
        }
    }

    pub fn empty() -> Self {
        Self::new(Vec::<String>::new())
    }

    /// An excluded entry matches the canonical title exactly or as its
    /// leading words ("appendix" matches "appendix a proofs").
    pub fn excludes(&self, canonical_title: &str) -> bool {
        if !self.keep_unmatched && canonical_title.is_empty() {
            return true;
        }
        self.excluded_canonical_titles.iter().any(|e| {
            canonical_title == e
                || canonical_title
                    .strip_prefix(e.as_str())
                    .is_some_and(|rest| rest.starts_with(' '))
        })
    }
}

/// Copy of `tree` without excluded sections and their subtrees.
pub fn filter_sections(tree: &SectionTree, policy: &FilterPolicy) -> SectionTree {
    fn keep(sections: &[Section], policy: &FilterPolicy) -> Vec<Section> {
        sections
            .iter()
            .filter(|s| !policy.excludes(&s.canonical_title))
            .map(|s| Section {
                children: keep(&s.children, policy),
                ..s.clone()
            })
            .collect()
    }
    SectionTree {
        source_id: tree.source_id.clone(),
        page_count: tree.page_count,
        root_sections: keep(&tree.root_sections, policy),
    }
}
