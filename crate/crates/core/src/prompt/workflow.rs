use super::{
    render_with_indicator, PromptError, PromptTemplate, RenderedPrompt, Strategy, Variables,
};

/// Placed between the source text and the prior summary in densification
/// prompts.
pub const COD_SEPARATOR: &str = "\n\n=== Current summary ===\n\n";

const DRAFT_STEP: &str =
    "Step 1 of 3, draft: write a first version following the instructions above.";
const REVIEW_STEP: &str =
    "Step 2 of 3, self-review: the input is your draft. Check it for fluency, \
for claims the source does not support, and for important points that are missing. \
Return the corrected draft.";
const REFINE_STEP: &str = "Step 3 of 3, refine: the input is your reviewed draft. \
Polish it into the final version and output only that text.";

const COD_STEP: &str = "The input holds the source text followed by the current summary. \
Identify one to three salient entities from the source that the summary is missing, \
then rewrite the summary so it includes them without getting longer. \
Output only the rewritten summary.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CotStep {
    Draft,
    SelfReview,
    Refine,
}

impl CotStep {
    pub const ALL: [CotStep; 3] = [CotStep::Draft, CotStep::SelfReview, CotStep::Refine];

    pub fn name(&self) -> &'static str {
        match self {
            CotStep::Draft => "draft",
            CotStep::SelfReview => "self_review",
            CotStep::Refine => "refine",
        }
    }

    fn instruction(&self) -> &'static str {
        match self {
            CotStep::Draft => DRAFT_STEP,
            CotStep::SelfReview => REVIEW_STEP,
            CotStep::Refine => REFINE_STEP,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CotWorkflow<'a> {
    template: &'a PromptTemplate,
}

pub fn cot_workflow(template: &PromptTemplate) -> Result<CotWorkflow<'_>, PromptError> {
    expect_strategy(template, Strategy::Cot)?;
    Ok(CotWorkflow { template })
}

impl<'a> CotWorkflow<'a> {
    pub fn steps(&self) -> [CotStep; 3] {
        CotStep::ALL
    }

    pub fn template(&self) -> &'a PromptTemplate {
        self.template
    }

    pub fn build(
        &self,
        step: CotStep,
        input: &str,
        vars: &Variables,
    ) -> Result<RenderedPrompt, PromptError> {
        let indicator = format!(
            "{}\n\n{}",
            self.template.output_indicator,
            step.instruction()
        );
        render_with_indicator(self.template, &indicator, input, vars)
    }

    /// Runs the three steps, feeding each completion into the next step.
    pub fn run<E>(
        &self,
        input: &str,
        vars: &Variables,
        mut complete: impl FnMut(CotStep, &RenderedPrompt) -> Result<String, E>,
    ) -> Result<String, E>
    where
        E: From<PromptError>,
    {
        let mut current = input.to_string();
        for step in CotStep::ALL {
            let prompt = self.build(step, &current, vars)?;
            current = complete(step, &prompt)?;
        }
        Ok(current)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CodWorkflow<'a> {
    template: &'a PromptTemplate,
}

pub fn cod_workflow(template: &PromptTemplate) -> Result<CodWorkflow<'_>, PromptError> {
    expect_strategy(template, Strategy::Cod)?;
    Ok(CodWorkflow { template })
}

impl<'a> CodWorkflow<'a> {
    pub fn template(&self) -> &'a PromptTemplate {
        self.template
    }

    pub fn build(
        &self,
        source: &str,
        prior: &str,
        vars: &Variables,
    ) -> Result<RenderedPrompt, PromptError> {
        if prior.trim().is_empty() {
            return Err(PromptError::EmptyInput(self.template.id.clone()));
        }
        let input = format!("{source}{COD_SEPARATOR}{prior}");
        let indicator = format!("{}\n\n{}", self.template.output_indicator, COD_STEP);
        render_with_indicator(self.template, &indicator, &input, vars)
    }
}

fn expect_strategy(template: &PromptTemplate, expected: Strategy) -> Result<(), PromptError> {
    if template.strategy == expected {
        Ok(())
    } else {
        Err(PromptError::StrategyMismatch {
            template: template.id.clone(),
            expected,
            found: template.strategy,
        })
    }
}
