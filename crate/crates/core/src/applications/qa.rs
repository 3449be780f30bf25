use serde::{Deserialize, Serialize};

use super::{content_sections, AppError};
use crate::alignment::{AlignedDocument, Locator};
use crate::doc_model::Section;
use crate::ingestion::{Asset, AssetKind};
use crate::llm::{CallOptions, FieldKind, FieldSpec, LlmError, LlmGateway, Schema, Tier};
use crate::prompt::{ids, render, PromptPack, Variables};
use crate::summarizer::DocumentSummary;
use crate::text::{content_tokens, estimate_tokens, jaccard, truncate_to_budget};

pub const DEFAULT_FALLBACK_NOTICE: &str =
    "I could not find that figure or table in the paper, so this answer is based on the text. ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QaRoute {
    Visual,
    Textual,
}

/// The asset shown alongside a visual answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetRef {
    pub kind: AssetKind,
    pub ordinal: u32,
    pub section: String,
    pub section_ordinal: u32,
    pub file: String,
    pub caption: String,
}

impl AssetRef {
    fn of(asset: &Asset) -> Self {
        Self {
            kind: asset.kind,
            ordinal: asset.ordinal,
            section: asset.aligned_section.clone().unwrap_or_default(),
            section_ordinal: asset.section_ordinal.unwrap_or(0),
            file: asset.file_name(),
            caption: asset.caption.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaTurn {
    pub question: String,
    pub route: QaRoute,
    /// Locator the router extracted; on the textual route it is kept only
    /// when resolution failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locator: Option<Locator>,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_shown: Option<AssetRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QaConfig {
    pub fallback_notice: String,
    pub locate_tier: Tier,
    pub text_tier: Tier,
    /// Most recent turns carried as dialogue context.
    pub history_turns: usize,
}

impl Default for QaConfig {
    fn default() -> Self {
        Self {
            fallback_notice: DEFAULT_FALLBACK_NOTICE.into(),
            locate_tier: Tier::Fast,
            text_tier: Tier::Standard,
            history_turns: 6,
        }
    }
}

fn locator_schema() -> Schema {
    Schema::new(vec![
        FieldSpec::required("is_visual", FieldKind::Bool),
        FieldSpec::optional("section", FieldKind::Text),
        FieldSpec::optional(
            "index",
            FieldKind::Integer {
                min: Some(1),
                max: None,
            },
        ),
        FieldSpec::optional(
            "kind",
            FieldKind::Enum(vec!["figure".into(), "table".into()]),
        ),
    ])
}

/// Outcome of the first tier.
enum Routing {
    Textual,
    Visual(Option<Locator>),
}

fn route(
    doc: &AlignedDocument,
    question: &str,
    pack: &PromptPack,
    gateway: &LlmGateway,
    config: &QaConfig,
) -> Result<Routing, AppError> {
    let mut vars = Variables::new();
    vars.insert("sections".into(), doc.canonical_titles().join(", "));
    let prompt = render(pack.app(ids::QA_LOCATE), question, &vars)?;
    let opts = CallOptions::tier(config.locate_tier).temperature(0.0);
    let value = match gateway.complete_structured(&prompt, &locator_schema(), opts) {
        Ok(r) => r.value,
        Err(LlmError::StructuredOutput { message, .. }) => {
            log::warn!("question router gave no usable locator, answering from text: {message}");
            return Ok(Routing::Textual);
        }
        Err(e) => return Err(e.into()),
    };
    if !value["is_visual"].as_bool().unwrap_or(false) {
        return Ok(Routing::Textual);
    }
    let section = value
        .get("section")
        .and_then(|v| v.as_str())
        .map(str::trim)
        .unwrap_or("");
    let index = value.get("index").and_then(|v| v.as_u64());
    let kind = value
        .get("kind")
        .and_then(|v| v.as_str())
        .and_then(|k| k.parse().ok())
        .unwrap_or(AssetKind::Figure);
    Ok(Routing::Visual(match (section, index) {
        ("", _) | (_, None) => None,
        (section, Some(i)) => Some(Locator::new(section, i as u32, kind)),
    }))
}

/// Content section whose body shares the most content words with the
/// question; the earliest wins ties.
pub fn best_section<'a>(doc: &'a AlignedDocument, question: &str) -> Option<&'a Section> {
    let q = content_tokens(question);
    let mut best: Option<(&Section, f64)> = None;
    for s in content_sections(doc) {
        if s.body.trim().is_empty() {
            continue;
        }
        let score = jaccard(&q, &content_tokens(&s.body));
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((s, score));
        }
    }
    best.map(|(s, _)| s)
}

fn dialogue(history: &[QaTurn], keep: usize) -> String {
    let start = history.len().saturating_sub(keep);
    history[start..]
        .iter()
        .map(|t| format!("Q: {}\nA: {}", t.question.trim(), t.answer.trim()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn with_history(mut input: String, history: &str, question: &str) -> String {
    if !history.is_empty() {
        input.push_str("\n\nEarlier conversation:\n");
        input.push_str(history);
    }
    input.push_str("\n\nQuestion: ");
    input.push_str(question.trim());
    input
}

fn textual_answer(
    doc: &AlignedDocument,
    summary: &DocumentSummary,
    history: &str,
    question: &str,
    pack: &PromptPack,
    gateway: &LlmGateway,
    config: &QaConfig,
) -> Result<String, AppError> {
    let template = pack.app(ids::QA_TEXT);
    let budget = template.input_budget_tokens;
    let summary_text = truncate_to_budget(summary.text.trim(), budget / 2);
    let mut input = format!("Paper summary:\n{summary_text}");
    if let Some(section) = best_section(doc, question) {
        let header = format!("\n\nMost relevant section ({}):\n", section.title);
        let rest = with_history(String::new(), history, question);
        let room = budget.saturating_sub(
            estimate_tokens(&input) + estimate_tokens(&header) + estimate_tokens(&rest) + 1,
        );
        let body = truncate_to_budget(section.body.trim(), room);
        if !body.is_empty() {
            input.push_str(&header);
            input.push_str(body);
        }
    }
    let input = with_history(input, history, question);
    let mut vars = Variables::new();
    vars.insert("doc_title".into(), doc.metadata.title.clone());
    let prompt = render(template, truncate_to_budget(&input, budget), &vars)?;
    Ok(gateway.complete(&prompt, config.text_tier)?.text)
}

fn visual_answer(
    doc: &AlignedDocument,
    summary: &DocumentSummary,
    asset: &Asset,
    history: &str,
    question: &str,
    pack: &PromptPack,
    gateway: &LlmGateway,
) -> Result<String, AppError> {
    let template = pack.app(ids::QA_VISION);
    let section = asset.aligned_section.as_deref().unwrap_or("");
    let context = summary.section(section).map_or("", |s| s.summary.trim());
    let head = format!("Summary of the section \"{section}\":\n");
    let rest = with_history(String::new(), history, question);
    let room = template
        .input_budget_tokens
        .saturating_sub(estimate_tokens(&head) + estimate_tokens(&rest) + 1);
    let input = with_history(
        format!("{head}{}", truncate_to_budget(context, room)),
        history,
        question,
    );
    let mut vars = Variables::new();
    vars.insert("doc_title".into(), doc.metadata.title.clone());
    let caption = asset.caption.trim();
    vars.insert(
        "asset".into(),
        if caption.is_empty() {
            format!("{} {}", asset.kind.display(), asset.ordinal)
        } else {
            format!(
                "{} {} (caption: {caption})",
                asset.kind.display(),
                asset.ordinal
            )
        },
    );
    let prompt = render(
        template,
        truncate_to_budget(&input, template.input_budget_tokens),
        &vars,
    )?;
    Ok(gateway.complete_vision(&prompt, &asset.image_path)?.text)
}

/// Two-tier answer: a fast-tier router decides whether the question points
/// at a figure or table; if it does and the locator resolves, the image goes
/// to the vision tier, otherwise the answer comes from the text.
pub fn answer_question(
    doc: &AlignedDocument,
    summary: &DocumentSummary,
    history: &[QaTurn],
    question: &str,
    pack: &PromptPack,
    gateway: &LlmGateway,
    config: &QaConfig,
) -> Result<QaTurn, AppError> {
    let history_text = dialogue(history, config.history_turns);
    let (locator, notice) = match route(doc, question, pack, gateway, config)? {
        Routing::Textual => (None, false),
        Routing::Visual(None) => (None, true),
        Routing::Visual(Some(loc)) => match doc.resolve_locator(&loc) {
            Ok(asset) => {
                let answer =
                    visual_answer(doc, summary, asset, &history_text, question, pack, gateway)?;
                return Ok(QaTurn {
                    question: question.to_string(),
                    route: QaRoute::Visual,
                    locator: Some(loc),
                    answer,
                    asset_shown: Some(AssetRef::of(asset)),
                });
            }
            Err(e) => {
                log::info!("locator {loc:?} did not resolve: {e}");
                (Some(loc), true)
            }
        },
    };
    let mut answer = textual_answer(doc, summary, &history_text, question, pack, gateway, config)?;
    if notice {
        answer.insert_str(0, &config.fallback_notice);
    }
    Ok(QaTurn {
        question: question.to_string(),
        route: QaRoute::Textual,
        locator,
        answer,
        asset_shown: None,
    })
}
