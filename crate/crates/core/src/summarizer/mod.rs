//! Two-stage summarization: one summary per section, then a single
//! densifying integration pass over all of them.

mod metadata;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::AlignedDocument;
use crate::doc_model::Section;
use crate::llm::{LlmError, LlmGateway, Tier, Usage};
use crate::prompt::{
    cod_workflow, cot_workflow, ids, render, select_template, CotStep, PromptError, PromptPack,
    PromptSet, PromptTemplate, Strategy, Variables, USER_PROMPT_VAR,
};
use crate::text::{chunk_by_budget, estimate_tokens, truncate_to_budget};

pub use metadata::{
    extract_front_matter, is_affiliation_line, names_in_line, title_section_index,
    DocumentMetadata, AFFILIATION_CUES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummarizerConfig {
    pub section_tier: Tier,
    pub integration_tier: Tier,
    /// Free-text reader preference forwarded to every template.
    pub user_prompt: Option<String>,
}

impl Default for SummarizerConfig {
    fn default() -> Self {
        Self {
            section_tier: Tier::Standard,
            integration_tier: Tier::Standard,
            user_prompt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionSummary {
    pub section_title: String,
    pub section_canonical_title: String,
    pub summary: String,
    pub template_id: String,
    pub chunk_count: usize,
    pub usage: Usage,
    /// Why the section was not summarized, for empty-marked entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub text: String,
    pub section_summaries: Vec<SectionSummary>,
    pub metadata: DocumentMetadata,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SummarizeError {
    #[error("section {title:?}: {source}")]
    Section {
        title: String,
        #[source]
        source: LlmError,
    },
    #[error("section {title:?}: {source}")]
    Prompt {
        title: String,
        #[source]
        source: PromptError,
    },
    #[error("every section summary is empty, nothing to integrate")]
    NothingToIntegrate,
    #[error("integration: {0}")]
    Integration(#[source] LlmError),
    #[error("integration prompt: {0}")]
    IntegrationPrompt(#[source] PromptError),
}

enum StepError {
    Llm(LlmError),
    Prompt(PromptError),
}

impl From<LlmError> for StepError {
    fn from(e: LlmError) -> Self {
        StepError::Llm(e)
    }
}

impl From<PromptError> for StepError {
    fn from(e: PromptError) -> Self {
        StepError::Prompt(e)
    }
}

impl StepError {
    fn tagged(self, title: &str) -> SummarizeError {
        match self {
            StepError::Llm(source) => SummarizeError::Section {
                title: title.to_string(),
                source,
            },
            StepError::Prompt(source) => SummarizeError::Prompt {
                title: title.to_string(),
                source,
            },
        }
    }
}

fn base_vars(doc_title: &str, config: &SummarizerConfig) -> Variables {
    let mut vars = Variables::new();
    vars.insert("doc_title".into(), doc_title.to_string());
    if let Some(pref) = &config.user_prompt {
        vars.insert(USER_PROMPT_VAR.into(), pref.clone());
    }
    vars
}

/// Runs a section template once over `input`, through all three steps when
/// the template is chain-of-thought.
fn run_template(
    template: &PromptTemplate,
    input: &str,
    vars: &Variables,
    gateway: &LlmGateway,
    tier: Tier,
    usage: &mut Usage,
) -> Result<String, StepError> {
    let budget = template.input_budget_tokens;
    match template.strategy {
        Strategy::Cot => cot_workflow(template)?.run(input, vars, |step, prompt| {
            let r = gateway.complete(prompt, tier)?;
            *usage += r.usage;
            // An intermediate reply longer than the budget would make the
            // next step unrenderable.
            Ok::<_, StepError>(if step == CotStep::Refine {
                r.text
            } else {
                truncate_to_budget(&r.text, budget).to_string()
            })
        }),
        Strategy::Plain => {
            let prompt = render(template, input, vars)?;
            let r = gateway.complete(&prompt, tier)?;
            *usage += r.usage;
            Ok(r.text)
        }
        Strategy::Cod => Err(PromptError::StrategyMismatch {
            template: template.id.clone(),
            expected: Strategy::Cot,
            found: Strategy::Cod,
        }
        .into()),
    }
}

/// Number of chunks a body is split into under `budget`.
pub fn chunk_count(body: &str, budget: usize) -> usize {
    estimate_tokens(body).div_ceil(budget.max(1))
}

/// Summarizes one section body. Bodies over the template budget are split
/// into `ceil(tokens / budget)` chunks whose summaries are merged with the
/// same template.
pub fn summarize_section(
    section: &Section,
    doc_title: &str,
    set: &PromptSet,
    gateway: &LlmGateway,
    config: &SummarizerConfig,
) -> Result<SectionSummary, SummarizeError> {
    let template = select_template(set, &section.title);
    let mut out = SectionSummary {
        section_title: section.title.clone(),
        section_canonical_title: section.canonical_title.clone(),
        summary: String::new(),
        template_id: template.id.clone(),
        chunk_count: 0,
        usage: Usage::default(),
        skipped: None,
    };
    let body = section.body.trim();
    if body.is_empty() {
        out.skipped = Some("empty body".into());
        return Ok(out);
    }
    let budget = template.input_budget_tokens;
    let mut vars = base_vars(doc_title, config);
    vars.insert("section_title".into(), section.title.clone());
    let tier = config.section_tier;

    let chunks = chunk_by_budget(&section.body, budget);
    out.chunk_count = chunks.len();
    let mut usage = Usage::default();
    let mut partials = Vec::with_capacity(chunks.len());
    for chunk in &chunks {
        partials.push(
            run_template(template, chunk, &vars, gateway, tier, &mut usage)
                .map_err(|e| e.tagged(&section.title))?,
        );
    }
    let summary = if partials.len() == 1 {
        partials.pop().unwrap()
    } else {
        merge(partials, template, &vars, gateway, tier, &mut usage)
            .map_err(|e| e.tagged(&section.title))?
    };
    out.summary = summary.trim().to_string();
    out.usage = usage;
    Ok(out)
}

/// Folds chunk summaries into one. When the joined summaries exceed the
/// budget they are summarized in budget-sized groups first; a round that
/// fails to shrink the text is cut at the budget to guarantee progress.
fn merge(
    partials: Vec<String>,
    template: &PromptTemplate,
    vars: &Variables,
    gateway: &LlmGateway,
    tier: Tier,
    usage: &mut Usage,
) -> Result<String, StepError> {
    let budget = template.input_budget_tokens;
    let mut joined = partials.join("\n\n");
    while estimate_tokens(&joined) > budget {
        let before = estimate_tokens(&joined);
        let mut next = Vec::new();
        for group in chunk_by_budget(&joined, budget) {
            next.push(run_template(template, group, vars, gateway, tier, usage)?);
        }
        let merged = next.join("\n\n");
        joined = if estimate_tokens(&merged) >= before {
            truncate_to_budget(&merged, budget).to_string()
        } else {
            merged
        };
    }
    run_template(template, &joined, vars, gateway, tier, usage)
}

/// Stage 1 over every surviving section, in reading order. Front matter and
/// the title heading's author block get empty-marked entries.
pub fn summarize_sections(
    doc: &AlignedDocument,
    set: &PromptSet,
    gateway: &LlmGateway,
    config: &SummarizerConfig,
) -> Result<Vec<SectionSummary>, SummarizeError> {
    let sections = doc.tree.sections();
    let title_index = title_section_index(&doc.tree, &doc.metadata);
    let doc_title = doc.metadata.title.as_str();
    sections
        .par_iter()
        .enumerate()
        .map(|(i, section)| {
            if section.is_front_matter() || Some(i) == title_index {
                let template = select_template(set, &section.title);
                Ok(SectionSummary {
                    section_title: section.title.clone(),
                    section_canonical_title: section.canonical_title.clone(),
                    summary: String::new(),
                    template_id: template.id.clone(),
                    chunk_count: 0,
                    usage: Usage::default(),
                    skipped: Some("front matter".into()),
                })
            } else {
                summarize_section(section, doc_title, set, gateway, config)
            }
        })
        .collect()
}

/// Metadata lines placed at the start of the integration input.
pub fn metadata_block(meta: &DocumentMetadata) -> String {
    let mut lines = vec![format!("Title: {}", meta.title)];
    if !meta.authors.is_empty() {
        lines.push(format!("Authors: {}", meta.authors.join(", ")));
    }
    if !meta.affiliations.is_empty() {
        lines.push(format!("Affiliations: {}", meta.affiliations.join("; ")));
    }
    lines.join("\n")
}

/// Source text for integration: metadata, then one titled block per
/// non-empty section summary in reading order.
pub fn integration_source(summaries: &[SectionSummary], meta: &DocumentMetadata) -> String {
    let mut out = metadata_block(meta);
    for s in summaries.iter().filter(|s| !s.summary.trim().is_empty()) {
        out.push_str("\n\n## ");
        out.push_str(&s.section_title);
        out.push('\n');
        out.push_str(s.summary.trim());
    }
    out
}

/// Stage 2: one densification pass producing the document summary.
pub fn integrate_summaries(
    summaries: Vec<SectionSummary>,
    metadata: DocumentMetadata,
    pack: &PromptPack,
    gateway: &LlmGateway,
    config: &SummarizerConfig,
) -> Result<DocumentSummary, SummarizeError> {
    let non_empty: Vec<&str> = summaries
        .iter()
        .map(|s| s.summary.trim())
        .filter(|s| !s.is_empty())
        .collect();
    if non_empty.is_empty() {
        return Err(SummarizeError::NothingToIntegrate);
    }
    let template = pack.app(ids::INTEGRATE);
    let workflow = cod_workflow(template).map_err(SummarizeError::IntegrationPrompt)?;
    let source = integration_source(&summaries, &metadata);
    let prior = non_empty.join("\n\n");
    let vars = base_vars(&metadata.title, config);
    let prompt = workflow
        .build(&source, &prior, &vars)
        .map_err(SummarizeError::IntegrationPrompt)?;
    let result = gateway
        .complete(&prompt, config.integration_tier)
        .map_err(SummarizeError::Integration)?;
    let mut usage = result.usage;
    for s in &summaries {
        usage += s.usage;
    }
    Ok(DocumentSummary {
        text: result.text.trim().to_string(),
        section_summaries: summaries,
        metadata,
        usage,
    })
}

/// Both stages over an aligned document.
pub fn summarize_document(
    doc: &AlignedDocument,
    pack: &PromptPack,
    gateway: &LlmGateway,
    config: &SummarizerConfig,
) -> Result<DocumentSummary, SummarizeError> {
    let summaries = summarize_sections(doc, pack.sections(), gateway, config)?;
    integrate_summaries(summaries, doc.metadata.clone(), pack, gateway, config)
}

impl DocumentSummary {
    /// Summary of the first section with the given canonical title.
    pub fn section(&self, canonical_title: &str) -> Option<&SectionSummary> {
        self.section_summaries
            .iter()
            .find(|s| s.section_canonical_title == canonical_title && !s.summary.is_empty())
    }

    pub fn markdown(&self) -> String {
        format!("{}\n", self.text)
    }
}
