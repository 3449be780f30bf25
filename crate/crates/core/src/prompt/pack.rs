use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{PromptError, PromptSet, PromptTemplate};

/// Ids of the application templates.
pub mod ids {
    pub const INTEGRATE: &str = "integrate";
    pub const RECOMMEND: &str = "recommend";
    pub const WRITING_QUALITY: &str = "writing_quality";
    pub const QA_LOCATE: &str = "qa_locate";
    pub const QA_TEXT: &str = "qa_text";
    pub const QA_VISION: &str = "qa_vision";
    pub const BROADCAST: &str = "broadcast";
    pub const BLOG: &str = "blog";
    pub const JUDGE: &str = "judge";

    pub const SECTION_PREFIX: &str = "section.";
    pub const SECTION_UNIVERSAL: &str = "section.universal";

    pub const APPS: [&str; 9] = [
        INTEGRATE,
        RECOMMEND,
        WRITING_QUALITY,
        QA_LOCATE,
        QA_TEXT,
        QA_VISION,
        BROADCAST,
        BLOG,
        JUDGE,
    ];
}

const SHIPPED: &[(&str, &str)] = &[
    (
        "section_abstract.toml",
        include_str!("../../prompts/section_abstract.toml"),
    ),
    (
        "section_introduction.toml",
        include_str!("../../prompts/section_introduction.toml"),
    ),
    (
        "section_related_work.toml",
        include_str!("../../prompts/section_related_work.toml"),
    ),
    (
        "section_method.toml",
        include_str!("../../prompts/section_method.toml"),
    ),
    (
        "section_experiments.toml",
        include_str!("../../prompts/section_experiments.toml"),
    ),
    (
        "section_discussion.toml",
        include_str!("../../prompts/section_discussion.toml"),
    ),
    (
        "section_conclusion.toml",
        include_str!("../../prompts/section_conclusion.toml"),
    ),
    (
        "section_universal.toml",
        include_str!("../../prompts/section_universal.toml"),
    ),
    (
        "integrate.toml",
        include_str!("../../prompts/integrate.toml"),
    ),
    (
        "recommend.toml",
        include_str!("../../prompts/recommend.toml"),
    ),
    (
        "writing_quality.toml",
        include_str!("../../prompts/writing_quality.toml"),
    ),
    (
        "qa_locate.toml",
        include_str!("../../prompts/qa_locate.toml"),
    ),
    ("qa_text.toml", include_str!("../../prompts/qa_text.toml")),
    (
        "qa_vision.toml",
        include_str!("../../prompts/qa_vision.toml"),
    ),
    (
        "broadcast.toml",
        include_str!("../../prompts/broadcast.toml"),
    ),
    ("blog.toml", include_str!("../../prompts/blog.toml")),
    ("judge.toml", include_str!("../../prompts/judge.toml")),
];

/// Section prompt set plus the templates used by integration and the
/// downstream applications.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptPack {
    sections: PromptSet,
    apps: BTreeMap<String, PromptTemplate>,
}

impl PromptPack {
    pub fn shipped() -> Self {
        let templates = SHIPPED
            .iter()
            .map(|(name, text)| parse_file(name, text))
            .collect::<Result<Vec<_>, _>>()
            .expect("shipped prompts parse");
        Self::from_templates(templates).expect("shipped prompts are valid")
    }

    /// Shipped pack with every template found in `dir` replacing the shipped
    /// template of the same id. Files are `*.toml` or `*.json`.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut by_id: BTreeMap<String, PromptTemplate> = SHIPPED
            .iter()
            .map(|(name, text)| parse_file(name, text).map(|t| (t.id.clone(), t)))
            .collect::<Result<_, _>>()?;
        let entries =
            fs::read_dir(dir).map_err(|e| PromptError::Load(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<_> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for path in paths {
            let ext = path
                .extension()
                .and_then(|e| e.to_str())
                .unwrap_or_default();
            if ext != "toml" && ext != "json" {
                continue;
            }
            let text = fs::read_to_string(&path)
                .map_err(|e| PromptError::Load(format!("{}: {e}", path.display())))?;
            let template = parse_file(&path.display().to_string(), &text)?;
            by_id.insert(template.id.clone(), template);
        }
        Self::from_templates(by_id.into_values().collect())
    }

    pub fn from_templates(templates: Vec<PromptTemplate>) -> Result<Self, PromptError> {
        let mut sections = Vec::new();
        let mut universal = None;
        let mut apps = BTreeMap::new();
        for t in templates {
            t.validate()?;
            if t.id == ids::SECTION_UNIVERSAL {
                universal = Some(t);
            } else if t.id.starts_with(ids::SECTION_PREFIX) {
                sections.push(t);
            } else {
                apps.insert(t.id.clone(), t);
            }
        }
        for id in ids::APPS {
            if !apps.contains_key(id) {
                return Err(PromptError::UnknownTemplate(id.to_string()));
            }
        }
        let universal =
            universal.ok_or_else(|| PromptError::UnknownTemplate(ids::SECTION_UNIVERSAL.into()))?;
        Ok(Self {
            sections: PromptSet::new(sections, universal)?,
            apps,
        })
    }

    pub fn sections(&self) -> &PromptSet {
        &self.sections
    }

    pub fn app(&self, id: &str) -> &PromptTemplate {
        self.apps
            .get(id)
            .unwrap_or_else(|| panic!("prompt pack is missing `{id}`"))
    }

    pub fn with_section_budget(mut self, budget: usize) -> Self {
        self.sections = self.sections.with_budget(budget);
        self
    }
}

fn parse_file(name: &str, text: &str) -> Result<PromptTemplate, PromptError> {
    let parsed = if name.ends_with(".json") {
        serde_json::from_str(text).map_err(|e| e.to_string())
    } else {
        toml::from_str(text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| PromptError::Load(format!("{name}: {e}")))
}
