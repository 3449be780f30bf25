use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::doc_model::SectionTree;

/// Title, authors and affiliations recovered from the front matter.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DocumentMetadata {
    pub title: String,
    pub authors: Vec<String>,
    pub affiliations: Vec<String>,
    pub source_id: String,
    /// True when the title is the text of a level-1 heading; that heading's
    /// own body is the author block rather than paper content.
    #[serde(default)]
    pub title_from_heading: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Headings that open the body of a paper and therefore cannot be its title.
pub const KNOWN_SECTION_NAMES: &[&str] = &[
    "abstract",
    "introduction",
    "related work",
    "background",
    "method",
    "methods",
    "methodology",
    "approach",
    "experiments",
    "results",
    "discussion",
    "conclusion",
    "conclusions",
    "references",
    "bibliography",
    "appendix",
    "acknowledgments",
    "acknowledgements",
];

pub const AFFILIATION_CUES: &[&str] = &[
    "university",
    "institute",
    "laboratory",
    "college",
    "corporation",
    "department",
    "lab",
    "labs",
    "research",
    "school",
    "centre",
    "center",
    "inc",
    "academy",
    "faculty",
    "google",
];

static EMAIL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\S+@\S+").unwrap());
// superscript markers in their common converter spellings
static MARKERS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\\\(\s*\{?\}?\^\{?[^)]*\}?\s*\\\)|\$\^\{?[^$]*\}?\$|\^\{[^}]*\}|[*\u{2020}\u{2021}\u{00a7}\u{00b6}\u{2217}\d]").unwrap()
});
static SPLIT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s*(?:,|;|&|\band\b)\s*").unwrap());
static NAME_TOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:\p{Lu}\.|\p{Lu}[\p{L}'\u{2019}-]*\p{Ll})$").unwrap());
static ABSTRACT_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\W*abstract\b").unwrap());

fn is_known_section(canonical: &str) -> bool {
    KNOWN_SECTION_NAMES.contains(&canonical)
}

pub fn is_affiliation_line(line: &str) -> bool {
    line.split(|c: char| !c.is_alphanumeric())
        .any(|w| AFFILIATION_CUES.contains(&w.to_lowercase().as_str()))
}

fn clean(line: &str) -> String {
    let line = EMAIL.replace_all(line, " ");
    let line = MARKERS.replace_all(&line, " ");
    let trimmed =
        line.trim_matches(|c: char| c.is_whitespace() || matches!(c, '#' | '&' | ',' | ';'));
    trimmed.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits a line into person names: pieces of 2 to 4 capitalized tokens
/// separated by commas, semicolons, `&` or `and`.
pub fn names_in_line(line: &str) -> Vec<String> {
    SPLIT
        .split(&clean(line))
        .map(str::trim)
        .filter(|piece| {
            let tokens: Vec<&str> = piece.split_whitespace().collect();
            (2..=4).contains(&tokens.len()) && tokens.iter().all(|t| NAME_TOKEN.is_match(t))
        })
        .map(str::to_string)
        .collect()
}

/// Deterministic rule-based extraction of title, authors and affiliations.
pub fn extract_front_matter(tree: &SectionTree) -> DocumentMetadata {
    let sections = tree.sections();
    let mut meta = DocumentMetadata {
        source_id: tree.source_id.clone(),
        ..Default::default()
    };

    // A title heading must come before the first recognizable body heading.
    let title_heading = sections
        .iter()
        .take_while(|s| !is_known_section(&s.canonical_title))
        .find(|s| s.level == 1 && !s.is_front_matter() && !s.title.trim().is_empty());
    let front = sections.iter().find(|s| s.is_front_matter());

    let span: Vec<&str> = if let Some(heading) = title_heading {
        meta.title = heading.title.trim().to_string();
        meta.title_from_heading = true;
        heading.body.lines().collect()
    } else if let Some(front) = front {
        let mut lines = front.body.lines().filter(|l| !l.trim().is_empty());
        meta.title = lines
            .next()
            .map(|l| l.trim().trim_start_matches('#').trim().to_string())
            .unwrap_or_default();
        lines.collect()
    } else {
        Vec::new()
    };

    for line in span {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if ABSTRACT_LINE.is_match(line) {
            break;
        }
        if is_affiliation_line(line) {
            let text = clean(line);
            if !text.is_empty() && !meta.affiliations.contains(&text) {
                meta.affiliations.push(text);
            }
        } else {
            for name in names_in_line(line) {
                if !meta.authors.contains(&name) {
                    meta.authors.push(name);
                }
            }
        }
    }

    if meta.title.is_empty() {
        meta.warnings.push("no title found in front matter".into());
        if let Some(first) = sections.iter().find(|s| !s.title.trim().is_empty()) {
            meta.title = first.title.trim().to_string();
        }
    }
    if meta.authors.is_empty() {
        meta.warnings
            .push("no authors found in front matter".into());
    }
    if meta.affiliations.is_empty() {
        meta.warnings
            .push("no affiliations found in front matter".into());
    }
    meta
}

/// Position, in depth-first reading order, of the heading whose text became
/// the document title.
pub fn title_section_index(tree: &SectionTree, meta: &DocumentMetadata) -> Option<usize> {
    if !meta.title_from_heading {
        return None;
    }
    tree.sections()
        .iter()
        .position(|s| s.level == 1 && !s.is_front_matter() && s.title.trim() == meta.title)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc_model::parse_markup;

    #[test]
    fn title_heading_with_author_block() {
        let markup = "# Attention is All You Need\n\nAshish Vaswani\\({}^{*}\\), Noam Shazeer and Niki Parmar\n\
                      Google Brain\n\navaswani@google.com\n\n## Abstract\n\nThe dominant models.\n\n## 1 Introduction\n\nText.";
        let meta = extract_front_matter(&parse_markup(markup, None));
        assert_eq!(meta.title, "Attention is All You Need");
        assert!(meta.title_from_heading);
        assert_eq!(
            meta.authors,
            ["Ashish Vaswani", "Noam Shazeer", "Niki Parmar"]
        );
        assert_eq!(meta.affiliations, ["Google Brain"]);
        assert!(meta.warnings.is_empty(), "{:?}", meta.warnings);
    }

    #[test]
    fn first_line_of_front_matter_as_title() {
        let markup = "Deep Residual Learning\nKaiming He, Xiangyu Zhang\nMicrosoft Research\n\n# Introduction\n\nBody.";
        let meta = extract_front_matter(&parse_markup(markup, None));
        assert_eq!(meta.title, "Deep Residual Learning");
        assert!(!meta.title_from_heading);
        assert_eq!(meta.authors, ["Kaiming He", "Xiangyu Zhang"]);
        assert_eq!(meta.affiliations, ["Microsoft Research"]);
    }

    #[test]
    fn no_front_matter() {
        let meta = extract_front_matter(&parse_markup(
            "# Introduction\n\nBody.\n\n# Method\n\nMore.",
            None,
        ));
        assert!(meta.authors.is_empty());
        assert!(meta.affiliations.is_empty());
        assert!(!meta.warnings.is_empty());
        assert_eq!(meta.title, "Introduction");
    }

    #[test]
    fn empty_tree() {
        let meta = extract_front_matter(&SectionTree::default());
        assert_eq!(meta.title, "");
        assert_eq!(meta.warnings.len(), 3);
    }

    #[test]
    fn name_rules() {
        assert_eq!(
            names_in_line("Jane Doe & John Q. Public"),
            ["Jane Doe", "John Q. Public"]
        );
        assert_eq!(
            names_in_line("Mary-Ann O'Neil; Li Wei"),
            ["Mary-Ann O'Neil", "Li Wei"]
        );
        assert!(names_in_line("we propose a new model").is_empty());
        assert!(names_in_line("Madonna").is_empty());
        assert!(names_in_line("Alpha Beta Gamma Delta Epsilon").is_empty());
    }
}
