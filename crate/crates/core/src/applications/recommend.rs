use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{content_sections, AppError};
use crate::alignment::AlignedDocument;
use crate::doc_model::Section;
use crate::llm::{FieldKind, FieldSpec, LlmGateway, Schema, Tier, Usage};
use crate::prompt::{ids, render, PromptPack, Variables, USER_PROMPT_VAR};
use crate::summarizer::DocumentSummary;
use crate::text::{estimate_tokens, truncate_to_budget};

pub const RECOMMENDATION_DIMENSIONS: [&str; 5] = [
    "Objectives Clarity",
    "Methods Appropriateness",
    "Data Authenticity",
    "Analysis Depth",
    "Writing Quality",
];

pub const RECOMMENDATION_SCALE: [f64; 2] = [0.0, 10.0];

/// Scores keyed by dimension name, in the configured order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DimensionScores {
    pub scores: IndexMap<String, f64>,
    pub scale: [f64; 2],
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub rationale: IndexMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub usage: Usage,
}

impl DimensionScores {
    pub fn get(&self, dimension: &str) -> Option<f64> {
        self.scores.get(dimension).copied()
    }

    pub fn dimensions(&self) -> Vec<&str> {
        self.scores.keys().map(String::as_str).collect()
    }

    /// Reads `dimensions` (and any `<key>_rationale` fields) out of a
    /// validated structured reply.
    pub fn from_reply(dimensions: &[&str], scale: [f64; 2], value: &Map<String, Value>) -> Self {
        let mut out = Self {
            scale,
            ..Default::default()
        };
        for &name in dimensions {
            let key = dimension_key(name);
            if let Some(score) = value.get(&key).and_then(Value::as_f64) {
                out.scores.insert(name.to_string(), score);
            }
            if let Some(why) = value
                .get(&format!("{key}_rationale"))
                .and_then(Value::as_str)
            {
                out.rationale.insert(name.to_string(), why.to_string());
            }
        }
        out
    }
}

/// JSON field name for a dimension: lowercase with underscores.
pub fn dimension_key(name: &str) -> String {
    name.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

/// One required number per dimension within `scale`, plus optional rationales.
pub fn dimension_schema(dimensions: &[&str], scale: [f64; 2], rationale: bool) -> Schema {
    let mut fields = Vec::new();
    for name in dimensions {
        let key = dimension_key(name);
        fields.push(FieldSpec::required(
            key.clone(),
            FieldKind::Number {
                min: Some(scale[0]),
                max: Some(scale[1]),
            },
        ));
        if rationale {
            fields.push(FieldSpec::optional(
                format!("{key}_rationale"),
                FieldKind::Text,
            ));
        }
    }
    Schema::new(fields)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub tier: Tier,
    pub user_prompt: Option<String>,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            tier: Tier::Standard,
            user_prompt: None,
        }
    }
}

fn is_introduction(s: &Section) -> bool {
    s.canonical_title == "introduction"
}

fn is_conclusion(s: &Section) -> bool {
    s.canonical_title.contains("conclusion") || s.canonical_title.starts_with("concluding")
}

/// Input for the writing-quality judgement: the introduction and conclusion
/// bodies, each cut at a paragraph boundary to half of `budget`. Missing
/// sections are replaced by the first and last content sections, with a
/// warning per substitution.
pub fn writing_quality_input(doc: &AlignedDocument, budget: usize) -> (String, Vec<String>) {
    let sections: Vec<&Section> = content_sections(doc)
        .into_iter()
        .filter(|s| !s.full_text().trim().is_empty())
        .collect();
    let mut warnings = Vec::new();
    let intro = sections.iter().find(|s| is_introduction(s)).or_else(|| {
        let first = sections.first();
        warnings.push(format!(
            "MissingSections: no introduction found, used {:?}",
            first.map_or("", |s| s.title.as_str())
        ));
        first
    });
    let conclusion = sections
        .iter()
        .rev()
        .find(|s| is_conclusion(s))
        .or_else(|| {
            let last = sections.last();
            warnings.push(format!(
                "MissingSections: no conclusion found, used {:?}",
                last.map_or("", |s| s.title.as_str())
            ));
            last
        });

    let label = |s: Option<&&Section>, role: &str| {
        format!("{role} ({}):\n", s.map_or("", |s| s.title.as_str()))
    };
    let intro_label = label(intro, "Introduction");
    let conclusion_label = format!("\n\n{}", label(conclusion, "Conclusion"));
    let half = budget
        .saturating_sub(estimate_tokens(&intro_label) + estimate_tokens(&conclusion_label))
        / 2;
    let body = |s: Option<&&Section>| {
        s.map(|s| truncate_to_budget(s.full_text().trim(), half).to_string())
            .unwrap_or_default()
    };
    (
        format!(
            "{intro_label}{}{conclusion_label}{}",
            body(intro),
            body(conclusion)
        ),
        warnings,
    )
}

/// Scores the paper on the five recommendation dimensions: the first four
/// from the integrated summary, writing quality from the introduction and
/// conclusion text.
pub fn score_paper(
    summary: &DocumentSummary,
    doc: &AlignedDocument,
    pack: &PromptPack,
    gateway: &LlmGateway,
    config: &ScoringConfig,
) -> Result<DimensionScores, AppError> {
    if summary.text.trim().is_empty() {
        return Err(AppError::EmptySummary);
    }
    let mut vars = Variables::new();
    if let Some(pref) = &config.user_prompt {
        vars.insert(USER_PROMPT_VAR.into(), pref.clone());
    }

    let content_dims = &RECOMMENDATION_DIMENSIONS[..4];
    let template = pack.app(ids::RECOMMEND);
    let mut content_vars = vars.clone();
    content_vars.insert(
        "dimensions".into(),
        content_dims
            .iter()
            .map(|d| format!("- {d} (field `{}`)", dimension_key(d)))
            .collect::<Vec<_>>()
            .join("\n"),
    );
    let input = truncate_to_budget(&summary.text, template.input_budget_tokens);
    let prompt = render(template, input, &content_vars)?;
    let first = gateway.complete_structured(
        &prompt,
        &dimension_schema(content_dims, RECOMMENDATION_SCALE, true),
        config.tier,
    )?;

    let writing_dims = &RECOMMENDATION_DIMENSIONS[4..];
    let template = pack.app(ids::WRITING_QUALITY);
    let (input, warnings) = writing_quality_input(doc, template.input_budget_tokens);
    for w in &warnings {
        log::warn!("{w}");
    }
    let prompt = render(template, &input, &vars)?;
    let second = gateway.complete_structured(
        &prompt,
        &dimension_schema(writing_dims, RECOMMENDATION_SCALE, true),
        config.tier,
    )?;

    let mut scores = DimensionScores::from_reply(content_dims, RECOMMENDATION_SCALE, &first.value);
    let writing = DimensionScores::from_reply(writing_dims, RECOMMENDATION_SCALE, &second.value);
    scores.scores.extend(writing.scores);
    scores.rationale.extend(writing.rationale);
    for v in scores.scores.values_mut() {
        *v = (*v * 10.0).round() / 10.0;
    }
    scores.warnings = warnings;
    scores.usage = first.usage;
    scores.usage += second.usage;
    Ok(scores)
}
