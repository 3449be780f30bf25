//! Corpus statistics and multi-trial judged scoring of summaries, with
//! report rendering as markdown corpus and score tables.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::applications::{dimension_schema, DimensionScores};
use crate::doc_model::SectionTree;
use crate::ingestion::SourceRef;
use crate::llm::{CallOptions, LlmError, LlmGateway, Tier};
use crate::prompt::{ids, render, PromptError, PromptPack, Variables};
use crate::text::{estimate_tokens, truncate_to_budget};

pub const JUDGE_DIMENSIONS: [&str; 5] = [
    "Informative",
    "Quality",
    "Coherence",
    "Attributable",
    "Overall",
];
pub const JUDGE_SCALE: [f64; 2] = [1.0, 5.0];
/// Share of the document budget kept from the start; the rest comes from the end.
pub const HEAD_SHARE: f64 = 0.6;
const ELISION: &str = "\n\n[...]\n\n";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("the corpus is empty")]
    EmptyCorpus,
    #[error("sample {sample:?} has {found} trials, expected {expected}")]
    TrialCountMismatch {
        sample: String,
        expected: usize,
        found: usize,
    },
    #[error("sample {sample:?} trial {trial} has dimensions {found:?}, expected {expected:?}")]
    DimensionMismatch {
        sample: String,
        trial: usize,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("document and summary must both be non-empty")]
    EmptyInput,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub avg_section_tokens: f64,
    pub avg_document_tokens: f64,
    pub avg_section_count: f64,
    pub n_documents: usize,
}

/// Averages over every section at every depth; a document's length is the
/// sum of its section estimates.
pub fn compute_corpus_stats(corpus: &[SectionTree]) -> Result<CorpusStats, EvalError> {
    if corpus.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let mut section_tokens = 0usize;
    let mut section_count = 0usize;
    for tree in corpus {
        for s in tree.sections() {
            section_tokens += s.token_estimate;
            section_count += 1;
        }
    }
    let n = corpus.len() as f64;
    Ok(CorpusStats {
        avg_section_tokens: if section_count == 0 {
            0.0
        } else {
            section_tokens as f64 / section_count as f64
        },
        avg_document_tokens: section_tokens as f64 / n,
        avg_section_count: section_count as f64 / n,
        n_documents: corpus.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeConfig {
    pub tier: Tier,
    pub temperature: f32,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        // the vision tier is the strongest model in the default configuration
        Self {
            tier: Tier::Vision,
            temperature: 0.0,
        }
    }
}

/// The last part of `text` within `max_tokens`, starting at a word boundary.
fn tail_within(text: &str, max_tokens: usize) -> &str {
    if estimate_tokens(text) <= max_tokens {
        return text;
    }
    let keep = max_tokens * 4;
    let total = text.chars().count();
    let start = text
        .char_indices()
        .nth(total - keep)
        .map_or(text.len(), |(i, _)| i);
    let tail = &text[start..];
    match tail.find(char::is_whitespace) {
        Some(ws) if !text[..start].ends_with(char::is_whitespace) => tail[ws..].trim_start(),
        _ => tail.trim_start(),
    }
}

/// Keeps the opening and the ending of an over-long document: 60% of the
/// budget from the start, 40% from the end.
pub fn head_tail(text: &str, budget: usize) -> String {
    if estimate_tokens(text) <= budget {
        return text.to_string();
    }
    let room = budget.saturating_sub(estimate_tokens(ELISION));
    let head_budget = (room as f64 * HEAD_SHARE).floor() as usize;
    let head = truncate_to_budget(text, head_budget);
    let tail = tail_within(&text[head.len()..], room - estimate_tokens(head));
    format!("{}{ELISION}{}", head.trim_end(), tail)
}

/// Scores a summary against its source on the five judged dimensions, 1 to 5.
pub fn judge_summary(
    document_text: &str,
    summary: &str,
    pack: &PromptPack,
    gateway: &LlmGateway,
    config: &JudgeConfig,
) -> Result<DimensionScores, EvalError> {
    if document_text.trim().is_empty() || summary.trim().is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let template = pack.app(ids::JUDGE);
    let budget = template.input_budget_tokens;
    let summary = truncate_to_budget(summary.trim(), budget / 4);
    let summary_part = format!("\n\nSummary:\n{summary}");
    let doc_label = "Paper:\n";
    let room =
        budget.saturating_sub(estimate_tokens(&summary_part) + estimate_tokens(doc_label) + 1);
    let input = format!(
        "{doc_label}{}{summary_part}",
        head_tail(document_text.trim(), room)
    );
    let prompt = render(template, &input, &Variables::new())?;
    let opts = CallOptions::tier(config.tier).temperature(config.temperature);
    let reply = gateway.complete_structured(
        &prompt,
        &dimension_schema(&JUDGE_DIMENSIONS, JUDGE_SCALE, false),
        opts,
    )?;
    let mut scores = DimensionScores::from_reply(&JUDGE_DIMENSIONS, JUDGE_SCALE, &reply.value);
    scores.usage = reply.usage;
    Ok(scores)
}

/// How per-dimension standard deviations are formed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdMode {
    /// Over all (sample, trial) values together.
    #[default]
    Pooled,
    /// Per sample over its trials, then averaged across samples.
    WithinSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub per_sample: BTreeMap<String, Vec<DimensionScores>>,
    pub means: IndexMap<String, f64>,
    pub stds: IndexMap<String, f64>,
    pub eval_average: f64,
    /// Mean of the per-dimension standard deviations.
    pub eval_average_std: f64,
    pub n_trials: usize,
    pub std_mode: StdMode,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation (divides by N).
pub fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

pub fn aggregate_trials(
    trials: &BTreeMap<String, Vec<DimensionScores>>,
    n_trials: usize,
    mode: StdMode,
) -> Result<TrialReport, EvalError> {
    let Some(first) = trials.values().flatten().next() else {
        return Err(EvalError::EmptyCorpus);
    };
    let dims: Vec<String> = first.scores.keys().cloned().collect();
    for (sample, runs) in trials {
        if runs.len() != n_trials {
            return Err(EvalError::TrialCountMismatch {
                sample: sample.clone(),
                expected: n_trials,
                found: runs.len(),
            });
        }
        for (trial, run) in runs.iter().enumerate() {
            let found: Vec<String> = run.scores.keys().cloned().collect();
            let mut sorted_found = found.clone();
            let mut sorted_dims = dims.clone();
            sorted_found.sort();
            sorted_dims.sort();
            if sorted_found != sorted_dims {
                return Err(EvalError::DimensionMismatch {
                    sample: sample.clone(),
                    trial,
                    expected: dims.clone(),
                    found,
                });
            }
        }
    }

    let mut means = IndexMap::new();
    let mut stds = IndexMap::new();
    for dim in &dims {
        let pooled: Vec<f64> = trials.values().flatten().map(|s| s.scores[dim]).collect();
        means.insert(dim.clone(), mean(&pooled));
        let std = match mode {
            StdMode::Pooled => population_std(&pooled),
            StdMode::WithinSample => {
                let per: Vec<f64> = trials
                    .values()
                    .map(|runs| {
                        population_std(&runs.iter().map(|s| s.scores[dim]).collect::<Vec<_>>())
                    })
                    .collect();
                mean(&per)
            }
        };
        stds.insert(dim.clone(), std);
    }
    Ok(TrialReport {
        per_sample: trials.clone(),
        eval_average: mean(&means.values().copied().collect::<Vec<_>>()),
        eval_average_std: mean(&stds.values().copied().collect::<Vec<_>>()),
        means,
        stds,
        n_trials,
        std_mode: mode,
    })
}

/// Benchmark manifest: one arXiv id or path per line, `#` starts a comment.
pub fn parse_benchmark_manifest(text: &str) -> Vec<SourceRef> {
    text.lines()
        .map(|l| l.split_once('#').map_or(l, |(before, _)| before).trim())
        .filter(|l| !l.is_empty())
        .map(SourceRef::parse)
        .collect()
}

/// One row of the corpus statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRow {
    pub dataset: String,
    pub stats: CorpusStats,
}

/// One row of the judged-score table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub dataset: String,
    pub summarizer: String,
    pub means: IndexMap<String, f64>,
    pub stds: IndexMap<String, f64>,
    pub eval_average: f64,
    pub eval_average_std: f64,
}

impl ScoreRow {
    pub fn from_report(dataset: &str, summarizer: &str, report: &TrialReport) -> Self {
        Self {
            dataset: dataset.into(),
            summarizer: summarizer.into(),
            means: report.means.clone(),
            stds: report.stds.clone(),
            eval_average: report.eval_average,
            eval_average_std: report.eval_average_std,
        }
    }
}

pub fn render_corpus_table(rows: &[CorpusRow]) -> String {
    let mut out = String::from(
        "| Dataset | Ave. Section Length (tokens) | Ave. Document Length (tokens) | Ave. Number of Sections |\n\
         |---|---|---|---|\n",
    );
    for r in rows {
        out.push_str(&format!(
            "| {} | {:.0} | {:.0} | {:.2} |\n",
            r.dataset,
            r.stats.avg_section_tokens,
            r.stats.avg_document_tokens,
            r.stats.avg_section_count
        ));
    }
    out
}

/// Cells read `mean±std` with three decimals.
pub fn render_score_table(rows: &[ScoreRow]) -> String {
    let mut out = String::from("| Dataset | Summarizer |");
    for d in JUDGE_DIMENSIONS {
        out.push_str(&format!(" {d} |"));
    }
    out.push_str(" Eval Average |\n|---|---|");
    out.push_str(&"---|".repeat(JUDGE_DIMENSIONS.len() + 1));
    out.push('\n');
    let cell = |m: f64, s: f64| format!(" {m:.3}±{s:.3} |");
    for r in rows {
        out.push_str(&format!("| {} | {} |", r.dataset, r.summarizer));
        for d in JUDGE_DIMENSIONS {
            match (r.means.get(d), r.stds.get(d)) {
                (Some(&m), Some(&s)) => out.push_str(&cell(m, s)),
                _ => out.push_str(" - |"),
            }
        }
        out.push_str(&cell(r.eval_average, r.eval_average_std));
        out.push('\n');
    }
    out
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub corpus: CorpusStats,
    pub trials: TrialReport,
    /// Sources that could not be processed, with the reason.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub failures: BTreeMap<String, String>,
}

impl EvalReport {
    /// Contents of `report.md`.
    pub fn markdown(&self) -> String {
        let mut out = String::from("# Evaluation report\n\n## Corpus statistics\n\n");
        out.push_str(&render_corpus_table(&[CorpusRow {
            dataset: self.dataset.clone(),
            stats: self.corpus,
        }]));
        out.push_str(&format!(
            "\n## Judged summary quality\n\nEach sample is judged {} times. Cells show mean±std ({} std).\n\n",
            self.trials.n_trials,
            match self.trials.std_mode {
                StdMode::Pooled => "pooled population",
                StdMode::WithinSample => "within-sample population",
            }
        ));
        out.push_str(&render_score_table(&[ScoreRow::from_report(
            &self.dataset,
            "Ours",
            &self.trials,
        )]));
        if !self.failures.is_empty() {
            out.push_str("\n## Failures\n\n");
            for (source, why) in &self.failures {
                out.push_str(&format!("- {source}: {why}\n"));
            }
        }
        out
    }
}
