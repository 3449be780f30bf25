//! Downstream generators built on an aligned document and its summary:
//! recommendation scores, multimodal Q&A, spoken broadcast and blog.

mod blog;
mod broadcast;
mod qa;
mod recommend;
mod tts;

pub use blog::{make_blog, BlogConfig, BlogDocument, EmbeddedAsset, FINAL_THOUGHTS};
pub use broadcast::{make_broadcast_script, sanitize_script, BroadcastConfig, FORMULA_PHRASE};
pub use qa::{
    answer_question, best_section, AssetRef, QaConfig, QaRoute, QaTurn, DEFAULT_FALLBACK_NOTICE,
};
pub use recommend::{
    dimension_key, dimension_schema, score_paper, writing_quality_input, DimensionScores,
    ScoringConfig, RECOMMENDATION_DIMENSIONS, RECOMMENDATION_SCALE,
};
pub use tts::{
    silent_mp3, synthesize_speech, TtsClient, TtsConfig, TtsMock, DEFAULT_TTS_CHAR_LIMIT,
};

use crate::alignment::AlignedDocument;
use crate::doc_model::Section;
use crate::llm::LlmError;
use crate::prompt::PromptError;
use crate::summarizer::title_section_index;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("the document summary is empty")]
    EmptySummary,
    #[error("the broadcast script is empty")]
    EmptyScript,
    #[error("speech synthesis failed: {0}")]
    Tts(String),
}

/// Sections that carry paper content: everything except the front matter
/// and the heading that supplied the title.
fn content_sections(doc: &AlignedDocument) -> Vec<&Section> {
    let title_index = title_section_index(&doc.tree, &doc.metadata);
    doc.tree
        .sections()
        .into_iter()
        .enumerate()
        .filter(|(i, s)| !s.is_front_matter() && Some(*i) != title_index)
        .map(|(_, s)| s)
        .collect()
}
