use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::AppError;
use crate::llm::{LlmGateway, Tier};
use crate::prompt::{ids, render, PromptPack, Variables, USER_PROMPT_VAR};
use crate::summarizer::DocumentSummary;
use crate::text::truncate_to_budget;

pub const FORMULA_PHRASE: &str = "a formula";

static MATH: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?s)\$\$.*?\$\$|\\\[.*?\\\]|\\\(.*?\\\)|\$[^$\n]+\$|\\begin\{(equation|align|eqnarray)\*?\}.*?\\end\{(equation|align|eqnarray)\*?\}")
        .unwrap()
});
static FORBIDDEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[#|*$]").unwrap());
static SPACES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[ \t]{2,}").unwrap());
static BLANKS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\n{3,}").unwrap());

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BroadcastConfig {
    pub tier: Tier,
    pub user_prompt: Option<String>,
}

impl Default for BroadcastConfig {
    fn default() -> Self {
        Self {
            tier: Tier::Standard,
            user_prompt: None,
        }
    }
}

/// Makes model output safe to read aloud: math spans become "a formula",
/// then every `#`, `|`, `*` and `$` is dropped.
pub fn sanitize_script(text: &str) -> String {
    let text = MATH.replace_all(text, FORMULA_PHRASE);
    let text = FORBIDDEN.replace_all(&text, "");
    let lines: Vec<String> = text
        .lines()
        .map(|l| SPACES.replace_all(l.trim(), " ").into_owned())
        .collect();
    BLANKS
        .replace_all(lines.join("\n").trim(), "\n\n")
        .into_owned()
}

pub fn make_broadcast_script(
    summary: &DocumentSummary,
    pack: &PromptPack,
    gateway: &LlmGateway,
    config: &BroadcastConfig,
) -> Result<String, AppError> {
    if summary.text.trim().is_empty() {
        return Err(AppError::EmptySummary);
    }
    let template = pack.app(ids::BROADCAST);
    let mut vars = Variables::new();
    vars.insert("doc_title".into(), summary.metadata.title.clone());
    if let Some(pref) = &config.user_prompt {
        vars.insert(USER_PROMPT_VAR.into(), pref.clone());
    }
    let input = truncate_to_budget(summary.text.trim(), template.input_budget_tokens);
    let prompt = render(template, input, &vars)?;
    Ok(sanitize_script(
        &gateway.complete(&prompt, config.tier)?.text,
    ))
}
