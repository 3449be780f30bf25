use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AppError;
use crate::alignment::AlignedDocument;
use crate::doc_model::Section;
use crate::ingestion::{Asset, AssetKind};
use crate::llm::{LlmGateway, Tier};
use crate::prompt::{cot_workflow, ids, PromptPack, PromptTemplate, Variables, USER_PROMPT_VAR};
use crate::summarizer::{title_section_index, DocumentSummary};
use crate::text::truncate_to_budget;

pub const FINAL_THOUGHTS: &str = "Final Thoughts";
const LEFTOVER_HEADING: &str = "More Figures and Tables";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddedAsset {
    pub kind: AssetKind,
    pub ordinal: u32,
    pub file: String,
    /// Title of the block the image was placed under.
    pub section: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlogDocument {
    pub markdown: String,
    pub embedded_assets: Vec<EmbeddedAsset>,
    pub word_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlogConfig {
    pub tier: Tier,
    pub user_prompt: Option<String>,
}

impl Default for BlogConfig {
    fn default() -> Self {
        Self {
            tier: Tier::Standard,
            user_prompt: None,
        }
    }
}

fn write_part(
    template: &PromptTemplate,
    part: &str,
    input: &str,
    base: &Variables,
    gateway: &LlmGateway,
    tier: Tier,
) -> Result<String, AppError> {
    let mut vars = base.clone();
    vars.insert("part".into(), part.to_string());
    let budget = template.input_budget_tokens;
    let text =
        cot_workflow(template)?.run(truncate_to_budget(input, budget), &vars, |_, prompt| {
            let reply = gateway.complete(prompt, tier).map_err(AppError::from)?;
            Ok::<_, AppError>(truncate_to_budget(&reply.text, budget).to_string())
        })?;
    Ok(text.trim().to_string())
}

fn one_line(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .replace('*', "")
}

fn embed(out: &mut String, asset: &Asset, block: &str, embedded: &mut Vec<EmbeddedAsset>) {
    let file = asset.file_name();
    out.push_str(&format!(
        "\n\n![{} {}](assets/{file})",
        asset.kind.display(),
        asset.ordinal
    ));
    let caption = one_line(&asset.caption);
    if !caption.is_empty() {
        out.push_str(&format!("\n*{caption}*"));
    }
    embedded.push(EmbeddedAsset {
        kind: asset.kind,
        ordinal: asset.ordinal,
        file,
        section: block.to_string(),
    });
}

struct Block<'a> {
    section: &'a Section,
    summary: &'a str,
}

/// Interpretive blog post: an opening, one block per section that has a
/// summary or owns figures, then closing thoughts. Each block is followed by
/// the figures and tables aligned to it, embedded from `assets/`.
pub fn make_blog(
    summary: &DocumentSummary,
    doc: &AlignedDocument,
    pack: &PromptPack,
    gateway: &LlmGateway,
    config: &BlogConfig,
) -> Result<BlogDocument, AppError> {
    let template = pack.app(ids::BLOG);
    let title = if doc.metadata.title.is_empty() {
        &summary.metadata.title
    } else {
        &doc.metadata.title
    };
    let mut vars = Variables::new();
    vars.insert("doc_title".into(), title.clone());
    if let Some(pref) = &config.user_prompt {
        vars.insert(USER_PROMPT_VAR.into(), pref.clone());
    }

    let sections = doc.tree.sections();
    let title_index = title_section_index(&doc.tree, &doc.metadata);
    let aligned: BTreeSet<&str> = doc
        .assets
        .iter()
        .filter_map(|a| a.aligned_section.as_deref())
        .collect();
    let summary_of = |i: usize, s: &Section| -> &str {
        let by_position = summary.section_summaries.get(i).filter(|ss| {
            summary.section_summaries.len() == sections.len() && ss.section_title == s.title
        });
        by_position
            .or_else(|| {
                summary.section_summaries.iter().find(|ss| {
                    ss.section_title == s.title && ss.section_canonical_title == s.canonical_title
                })
            })
            .map_or("", |ss| ss.summary.trim())
    };
    let mut claimed = BTreeSet::new();
    let blocks: Vec<Block> = sections
        .iter()
        .enumerate()
        .filter_map(|(i, &s)| {
            let text = if s.is_front_matter() || Some(i) == title_index {
                ""
            } else {
                summary_of(i, s)
            };
            let owns = aligned.contains(s.canonical_title.as_str())
                && claimed.insert(s.canonical_title.as_str());
            (owns || !text.is_empty()).then_some(Block {
                section: s,
                summary: text,
            })
        })
        .collect();

    let tier = config.tier;
    let opening = write_part(template, "opening", &summary.text, &vars, gateway, tier)?;
    let prose: Vec<String> = blocks
        .par_iter()
        .map(|b| {
            if b.summary.is_empty() {
                return Ok(String::new());
            }
            let part = format!("section about \"{}\"", b.section.title);
            write_part(template, &part, b.summary, &vars, gateway, tier)
        })
        .collect::<Result<_, AppError>>()?;
    let closing = write_part(
        template,
        "closing thoughts",
        &summary.text,
        &vars,
        gateway,
        tier,
    )?;

    let mut md = format!("# {}", one_line(title));
    if !doc.metadata.authors.is_empty() {
        md.push_str(&format!(
            "\n\n*A reading of the paper by {}.*",
            doc.metadata.authors.join(", ")
        ));
    }
    if !opening.is_empty() {
        md.push_str("\n\n");
        md.push_str(&opening);
    }
    let mut embedded = Vec::new();
    let mut done = BTreeSet::new();
    for (block, text) in blocks.iter().zip(&prose) {
        let heading = one_line(&block.section.title);
        md.push_str(&format!("\n\n## {heading}"));
        if !text.is_empty() {
            md.push_str("\n\n");
            md.push_str(text);
        }
        if done.insert(block.section.canonical_title.as_str()) {
            for asset in doc.assets_of(&block.section.canonical_title) {
                embed(&mut md, asset, &heading, &mut embedded);
            }
        }
    }
    let leftovers: Vec<&Asset> = doc
        .assets
        .iter()
        .filter(|a| {
            !a.aligned_section
                .as_deref()
                .is_some_and(|s| done.contains(s))
        })
        .collect();
    if !leftovers.is_empty() {
        md.push_str(&format!("\n\n## {LEFTOVER_HEADING}"));
        for asset in leftovers {
            embed(&mut md, asset, LEFTOVER_HEADING, &mut embedded);
        }
    }
    md.push_str(&format!("\n\n## {FINAL_THOUGHTS}"));
    if !closing.is_empty() {
        md.push_str("\n\n");
        md.push_str(&closing);
    }
    md.push('\n');

    Ok(BlogDocument {
        word_count: md.split_whitespace().count(),
        markdown: md,
        embedded_assets: embedded,
    })
}
