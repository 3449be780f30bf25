//! Three-segment prompts: a task description (system), the current input
//! (user) and an output indicator (system), in that order.

mod pack;
mod workflow;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::doc_model::normalize_title;
use crate::text::estimate_tokens;

pub use pack::{ids, PromptPack};
pub use workflow::{cod_workflow, cot_workflow, CodWorkflow, CotStep, CotWorkflow, COD_SEPARATOR};

pub const DEFAULT_INPUT_BUDGET: usize = 3500;
/// Free-text reader preference appended to the task description.
pub const USER_PROMPT_VAR: &str = "user_prompt";

pub type Variables = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Cot,
    Cod,
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub strategy: Strategy,
    #[serde(default, rename = "titles")]
    pub applicable_titles: BTreeSet<String>,
    pub task_description: String,
    pub output_indicator: String,
    #[serde(default = "default_budget")]
    pub input_budget_tokens: usize,
}

fn default_budget() -> usize {
    DEFAULT_INPUT_BUDGET
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), PromptError> {
        let bad = |why: &str| {
            Err(PromptError::InvalidTemplate(
                self.id.clone(),
                why.to_string(),
            ))
        };
        if self.task_description.trim().is_empty() {
            return bad("task_description is empty");
        }
        if self.output_indicator.trim().is_empty() {
            return bad("output_indicator is empty");
        }
        if self.input_budget_tokens == 0 {
            return bad("input_budget_tokens must be positive");
        }
        Ok(())
    }

    fn normalized(mut self) -> Self {
        self.applicable_titles = self
            .applicable_titles
            .iter()
            .map(|t| normalize_title(t))
            .filter(|t| !t.is_empty())
            .collect();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub messages: Vec<Message>,
    pub token_estimate: usize,
}

impl RenderedPrompt {
    fn new(messages: Vec<Message>) -> Self {
        let token_estimate = messages.iter().map(|m| estimate_tokens(&m.content)).sum();
        Self {
            messages,
            token_estimate,
        }
    }

    /// The user segment.
    pub fn current_input(&self) -> &str {
        self.messages
            .iter()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromptError {
    #[error("template variable `{0}` has no value")]
    MissingVariable(String),
    #[error("malformed placeholder near {0:?}")]
    MalformedPlaceholder(String),
    #[error("input of {tokens} tokens exceeds the {budget}-token budget of `{template}`")]
    OverBudget {
        template: String,
        tokens: usize,
        budget: usize,
    },
    #[error("template `{template}` uses strategy {found:?}, expected {expected:?}")]
    StrategyMismatch {
        template: String,
        expected: Strategy,
        found: Strategy,
    },
    #[error("empty input for `{0}`")]
    EmptyInput(String),
    #[error("template `{0}`: {1}")]
    InvalidTemplate(String, String),
    #[error("titles {0:?} are claimed by more than one template")]
    OverlappingTitles(Vec<String>),
    #[error("no template with id `{0}`")]
    UnknownTemplate(String),
    #[error("prompt pack: {0}")]
    Load(String),
}

/// Replaces `{{name}}` placeholders. Values are inserted verbatim and never
/// rescanned.
pub fn substitute(text: &str, vars: &Variables) -> Result<String, PromptError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let close = after
            .find("}}")
            .ok_or_else(|| PromptError::MalformedPlaceholder(snippet(&rest[open..])))?;
        let name = after[..close].trim();
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(PromptError::MalformedPlaceholder(snippet(&rest[open..])));
        }
        let value = vars
            .get(name)
            .ok_or_else(|| PromptError::MissingVariable(name.to_string()))?;
        out.push_str(value);
        rest = &after[close + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

fn snippet(s: &str) -> String {
    s.chars().take(24).collect()
}

/// Renders the three messages for `template`. Inputs over the template's
/// budget are rejected rather than truncated.
pub fn render(
    template: &PromptTemplate,
    current_input: &str,
    vars: &Variables,
) -> Result<RenderedPrompt, PromptError> {
    render_with_indicator(template, &template.output_indicator, current_input, vars)
}

pub(crate) fn render_with_indicator(
    template: &PromptTemplate,
    output_indicator: &str,
    current_input: &str,
    vars: &Variables,
) -> Result<RenderedPrompt, PromptError> {
    let tokens = estimate_tokens(current_input);
    if tokens > template.input_budget_tokens {
        return Err(PromptError::OverBudget {
            template: template.id.clone(),
            tokens,
            budget: template.input_budget_tokens,
        });
    }
    let mut task = substitute(&template.task_description, vars)?;
    if let Some(pref) = vars.get(USER_PROMPT_VAR).filter(|p| !p.trim().is_empty()) {
        task.push_str("\n\nReader's request: ");
        task.push_str(pref.trim());
    }
    let indicator = substitute(output_indicator, vars)?;
    Ok(RenderedPrompt::new(vec![
        Message::system(task),
        Message::user(current_input),
        Message::system(indicator),
    ]))
}

/// Section templates keyed by canonical title, plus a universal fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    templates: Vec<PromptTemplate>,
    universal: PromptTemplate,
}

impl PromptSet {
    pub fn new(
        templates: Vec<PromptTemplate>,
        universal: PromptTemplate,
    ) -> Result<Self, PromptError> {
        let templates: Vec<_> = templates
            .into_iter()
            .map(PromptTemplate::normalized)
            .collect();
        let mut universal = universal.normalized();
        universal.applicable_titles.clear();
        let mut seen = BTreeSet::new();
        let mut overlap = BTreeSet::new();
        for t in &templates {
            t.validate()?;
            for title in &t.applicable_titles {
                if !seen.insert(title.clone()) {
                    overlap.insert(title.clone());
                }
            }
        }
        universal.validate()?;
        if !overlap.is_empty() {
            return Err(PromptError::OverlappingTitles(
                overlap.into_iter().collect(),
            ));
        }
        Ok(Self {
            templates,
            universal,
        })
    }

    pub fn templates(&self) -> &[PromptTemplate] {
        &self.templates
    }

    pub fn universal(&self) -> &PromptTemplate {
        &self.universal
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        for t in self
            .templates
            .iter_mut()
            .chain(std::iter::once(&mut self.universal))
        {
            t.input_budget_tokens = budget;
        }
        self
    }
}

/// Template claiming the normalized title, else the universal one.
pub fn select_template<'a>(set: &'a PromptSet, section_title: &str) -> &'a PromptTemplate {
    let key = normalize_title(section_title);
    set.templates
        .iter()
        .find(|t| t.applicable_titles.contains(&key))
        .unwrap_or(&set.universal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn template(td: &str, oi: &str, budget: usize) -> PromptTemplate {
        PromptTemplate {
            id: "t".into(),
            strategy: Strategy::Plain,
            applicable_titles: BTreeSet::new(),
            task_description: td.into(),
            output_indicator: oi.into(),
            input_budget_tokens: budget,
        }
    }

    fn vars(pairs: &[(&str, &str)]) -> Variables {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn selects_by_normalized_title() {
        let pack = PromptPack::shipped();
        let set = pack.sections();
        assert_eq!(
            select_template(set, "1 Introduction").id,
            "section.introduction"
        );
        assert_eq!(
            select_template(set, "III. METHODOLOGY").id,
            "section.method"
        );
        assert_eq!(
            select_template(set, "Ethics Statement").id,
            "section.universal"
        );
        assert_eq!(select_template(set, "").id, "section.universal");
    }

    #[test]
    fn renders_three_segments_in_order() {
        let pack = PromptPack::shipped();
        let intro = select_template(pack.sections(), "Introduction");
        let body = "x".repeat(2000); // 500 tokens
        let prompt = render(
            intro,
            &body,
            &vars(&[("section_title", "Introduction"), ("doc_title", "Demo")]),
        )
        .unwrap();
        let roles: Vec<_> = prompt.messages.iter().map(|m| m.role).collect();
        assert_eq!(roles, vec![Role::System, Role::User, Role::System]);
        assert_eq!(prompt.current_input(), body);
        let expected: usize = prompt
            .messages
            .iter()
            .map(|m| estimate_tokens(&m.content))
            .sum();
        assert_eq!(prompt.token_estimate, expected);
    }

    #[test]
    fn over_budget_is_rejected() {
        let t = template("do it", "now", 10);
        assert!(render(&t, &"x".repeat(40), &Variables::new()).is_ok());
        let err = render(&t, &"x".repeat(41), &Variables::new()).unwrap_err();
        assert_eq!(
            err,
            PromptError::OverBudget {
                template: "t".into(),
                tokens: 11,
                budget: 10
            }
        );
    }

    #[test]
    fn missing_and_malformed_placeholders() {
        let t = template("Summarize {{title}}", "ok", 100);
        assert_eq!(
            render(&t, "in", &Variables::new()).unwrap_err(),
            PromptError::MissingVariable("title".into())
        );
        let t = template("Summarize {{title", "ok", 100);
        assert!(matches!(
            render(&t, "in", &vars(&[("title", "x")])),
            Err(PromptError::MalformedPlaceholder(_))
        ));
    }

    #[test]
    fn values_are_not_rescanned() {
        let out = substitute("{{a}}", &vars(&[("a", "{{b}}")])).unwrap();
        assert_eq!(out, "{{b}}");
    }

    #[test]
    fn user_preference_extends_task_description() {
        let t = template("Summarize.", "Output prose.", 100);
        let p = render(&t, "body", &vars(&[(USER_PROMPT_VAR, "focus on datasets")])).unwrap();
        assert!(p.messages[0]
            .content
            .ends_with("Reader's request: focus on datasets"));
    }

    #[test]
    fn overlapping_titles_rejected() {
        let mut a = template("a", "a", 10);
        a.applicable_titles = ["Method".to_string()].into();
        let mut b = a.clone();
        b.id = "b".into();
        b.applicable_titles = ["method".to_string()].into();
        let err = PromptSet::new(vec![a, b], template("u", "u", 10)).unwrap_err();
        assert_eq!(err, PromptError::OverlappingTitles(vec!["method".into()]));
    }

    proptest! {
        #[test]
        fn rendered_order_and_substitution_hold(
            td in "[a-zA-Z .]{1,40}",
            oi in "[a-zA-Z .]{1,40}",
            names in proptest::collection::vec("[a-z]{1,6}", 0..4),
            value in "[a-zA-Z0-9 ]{0,12}",
            input in "[a-z ]{0,200}",
        ) {
            let mut task = td.clone();
            let mut indicator = oi.clone();
            let mut v = Variables::new();
            for (i, n) in names.iter().enumerate() {
                if i % 2 == 0 { task.push_str(&format!(" {{{{{n}}}}}")); } else { indicator.push_str(&format!(" {{{{ {n} }}}}")); }
                v.insert(n.clone(), value.clone());
            }
            let t = template(&task, &indicator, 1000);
            let p = render(&t, &input, &v).unwrap();
            prop_assert_eq!(p.messages.len(), 3);
            prop_assert_eq!(p.messages[0].role, Role::System);
            prop_assert_eq!(p.messages[1].role, Role::User);
            prop_assert_eq!(p.messages[2].role, Role::System);
            prop_assert!(p.messages[0].content.starts_with(&td));
            prop_assert!(p.messages[2].content.starts_with(&oi));
            for m in &p.messages {
                prop_assert!(!m.content.contains("{{"));
            }
        }
    }
}
