//! Orchestration over a workspace: fetch, convert, parse, filter, align and
//! summarize a paper, then produce its score, blog and broadcast. Every stage
//! persists its output before the next one starts, so a failed run resumes
//! from the last completed stage.

use std::collections::BTreeMap;
use std::io;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;

use crate::alignment::{align_assets, AlignError, AlignedDocument, StoreError};
use crate::applications::{
    answer_question, make_blog, make_broadcast_script, score_paper, synthesize_speech, AppError,
    BlogConfig, BroadcastConfig, DimensionScores, QaConfig, QaTurn, ScoringConfig, TtsClient,
};
use crate::config::AppConfig;
use crate::doc_model::{filter_sections, parse_markup};
use crate::evaluation::{
    aggregate_trials, compute_corpus_stats, judge_summary, parse_benchmark_manifest, EvalError,
    EvalReport, JudgeConfig, StdMode,
};
use crate::http::{HttpClient, ReqwestClient};
use crate::ingestion::{convert_pdf, ConversionBundle, Fetcher, IngestError, SourceRef};
use crate::llm::{LlmError, LlmGateway};
use crate::prompt::{PromptError, PromptPack};
use crate::retry::ThreadSleeper;
use crate::summarizer::{summarize_document, DocumentSummary, SummarizeError, SummarizerConfig};
use crate::workspace::{write_atomic, KeyedLocks, PaperRecord, Status, Workspace};

pub const SOURCE_PDF: &str = "source.pdf";
pub const BUNDLE_JSON: &str = "bundle.json";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_MD: &str = "summary.md";
pub const SCORE_JSON: &str = "score.json";
pub const BLOG_MD: &str = "blog.md";
pub const BROADCAST_TXT: &str = "broadcast.txt";
pub const BROADCAST_MP3: &str = "broadcast.mp3";
pub const QA_DIR: &str = "qa";
pub const EVAL_DIR: &str = "eval";
/// Length of the hex content hash used as paper id.
pub const PAPER_ID_LEN: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Summarize(#[from] SummarizeError),
    #[error(transparent)]
    App(#[from] AppError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("unknown paper {0}")]
    UnknownPaper(String),
    #[error("paper {paper_id} is {status}, not ready")]
    NotReady { paper_id: String, status: String },
    #[error("invalid conversation id {0:?}")]
    InvalidConversation(String),
}

impl PipelineError {
    /// True when the failure came from the model provider.
    pub fn is_provider_failure(&self) -> bool {
        matches!(
            self,
            PipelineError::Llm(_)
                | PipelineError::Summarize(
                    SummarizeError::Section { .. } | SummarizeError::Integration(_)
                )
                | PipelineError::App(AppError::Llm(_) | AppError::Tts(_))
                | PipelineError::Eval(EvalError::Llm(_))
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProcessOptions {
    /// Recompute every stage even when outputs exist.
    pub force: bool,
}

/// Everything a run needs: workspace, configuration, prompts and clients.
pub struct Engine {
    workspace: Workspace,
    config: AppConfig,
    pack: PromptPack,
    gateway: LlmGateway,
    tts: TtsClient,
    fetcher: Fetcher,
    http: Arc<dyn HttpClient>,
    locks: KeyedLocks,
}

impl Engine {
    pub fn new(config: AppConfig, root: impl Into<PathBuf>) -> Result<Self, PipelineError> {
        let http: Arc<dyn HttpClient> = Arc::new(ReqwestClient::new(Duration::from_secs(30)));
        Self::with_http(config, root, http)
    }

    pub fn with_http(
        config: AppConfig,
        root: impl Into<PathBuf>,
        http: Arc<dyn HttpClient>,
    ) -> Result<Self, PipelineError> {
        let gateway = LlmGateway::from_config(config.provider.clone(), http.clone())?;
        Self::with_gateway(config, root, http, gateway)
    }

    pub fn with_gateway(
        config: AppConfig,
        root: impl Into<PathBuf>,
        http: Arc<dyn HttpClient>,
        gateway: LlmGateway,
    ) -> Result<Self, PipelineError> {
        let pack = match &config.prompts_dir {
            Some(dir) => PromptPack::load_dir(dir)?,
            None => PromptPack::shipped(),
        }
        .with_section_budget(config.budgets.section_input_tokens);
        let mut fetcher = Fetcher::new(http.clone(), Arc::new(ThreadSleeper));
        if let Ok(base) = std::env::var("ARXIV_BASE_URL") {
            fetcher = fetcher.with_base_url(base);
        }
        Ok(Self {
            workspace: Workspace::open(root)?,
            tts: TtsClient::new(config.tts.clone(), http.clone()),
            config,
            pack,
            gateway,
            fetcher,
            http,
            locks: KeyedLocks::default(),
        })
    }

    pub fn with_fetcher(mut self, fetcher: Fetcher) -> Self {
        self.fetcher = fetcher;
        self
    }

    pub fn with_tts(mut self, tts: TtsClient) -> Self {
        self.tts = tts;
        self
    }

    pub fn workspace(&self) -> &Workspace {
        &self.workspace
    }

    pub fn config(&self) -> &AppConfig {
        &self.config
    }

    pub fn gateway(&self) -> &LlmGateway {
        &self.gateway
    }

    pub fn pack(&self) -> &PromptPack {
        &self.pack
    }

    fn save_json<T: serde::Serialize>(
        &self,
        id: &str,
        name: &str,
        value: &T,
    ) -> Result<(), PipelineError> {
        let mut json = serde_json::to_vec_pretty(value)?;
        json.push(b'\n');
        self.workspace.write(id, name, &json)?;
        Ok(())
    }

    fn load_json<T: serde::de::DeserializeOwned>(
        &self,
        id: &str,
        name: &str,
    ) -> Result<T, PipelineError> {
        Ok(serde_json::from_slice(&self.workspace.read(id, name)?)?)
    }

    /// Fetches the PDF and registers the paper. Known papers are returned as
    /// they are.
    pub fn fetch(&self, source: &SourceRef) -> Result<PaperRecord, PipelineError> {
        let fetched = self.fetcher.fetch(source, &self.workspace.cache())?;
        let id = fetched.sha256[..PAPER_ID_LEN].to_string();
        self.locks.with(&id, || {
            if let Some(record) = self.workspace.record(&id) {
                if self.workspace.exists(&id, SOURCE_PDF) {
                    return Ok(record);
                }
            }
            let bytes = std::fs::read(&fetched.path)?;
            self.workspace.write(&id, SOURCE_PDF, &bytes)?;
            let record = PaperRecord::new(id.clone(), source.clone());
            self.workspace.upsert(&record)?;
            Ok(record)
        })
    }

    /// Runs every missing stage for `source`. A summarized paper is returned
    /// without any work unless `force` is set.
    pub fn process(
        &self,
        source: &SourceRef,
        options: ProcessOptions,
    ) -> Result<PaperRecord, PipelineError> {
        let record = self.fetch(source)?;
        self.process_id(&record.paper_id, options)
    }

    pub fn process_id(
        &self,
        id: &str,
        options: ProcessOptions,
    ) -> Result<PaperRecord, PipelineError> {
        self.locks.with(id, || {
            let mut record = self
                .workspace
                .record(id)
                .ok_or_else(|| PipelineError::UnknownPaper(id.to_string()))?;
            if record.status == Status::Summarized && !options.force {
                return Ok(record);
            }
            if options.force {
                for name in [BUNDLE_JSON, MANIFEST_JSON, SUMMARY_JSON] {
                    let _ = std::fs::remove_file(self.workspace.paper_dir(id).join(name));
                }
                record = PaperRecord::new(id, record.source.clone());
                self.workspace.upsert(&record)?;
            }
            match self.run_stages(&mut record) {
                Ok(()) => Ok(record),
                Err((stage, e)) => {
                    log::error!("{id}: {stage} failed: {e}");
                    record.fail(format!("{stage}: {e}"));
                    self.workspace.upsert(&record)?;
                    Err(e)
                }
            }
        })
    }

    fn run_stages(&self, record: &mut PaperRecord) -> Result<(), (&'static str, PipelineError)> {
        let id = record.paper_id.clone();
        let dir = self.workspace.paper_dir(&id);
        let ws = &self.workspace;
        let persist = |record: &PaperRecord| ws.upsert(record).map_err(|e| ("index", e.into()));

        if !ws.exists(&id, BUNDLE_JSON) {
            let bundle = convert_pdf(
                &dir.join(SOURCE_PDF),
                &record.source,
                &self.config.tools,
                &dir.join("work"),
                self.http.as_ref(),
            )
            .map_err(|e| ("convert", e.into()))?;
            ws.write(&id, BUNDLE_JSON, bundle.to_json(&dir).as_bytes())
                .map_err(|e| ("convert", e.into()))?;
        }
        if record.status < Status::Converted || record.status == Status::Failed {
            record.advance(Status::Converted);
            persist(record)?;
        }

        if !ws.exists(&id, MANIFEST_JSON) {
            self.align_stage(&id).map_err(|e| ("align", e))?;
        }
        if record.status < Status::Aligned || record.status == Status::Failed {
            record.advance(Status::Aligned);
            persist(record)?;
        }

        let summary = if ws.exists(&id, SUMMARY_JSON) {
            self.summary(&id).map_err(|e| ("summarize", e))?
        } else {
            self.summarize_stage(&id).map_err(|e| ("summarize", e))?
        };
        record.title = Some(summary.metadata.title.clone()).filter(|t| !t.is_empty());

        self.score_stage(&id).map_err(|e| ("score", e))?;
        self.blog_stage(&id).map_err(|e| ("blog", e))?;
        self.broadcast_stage(&id).map_err(|e| ("broadcast", e))?;
        record.advance(Status::Summarized);
        persist(record)
    }

    fn align_stage(&self, id: &str) -> Result<AlignedDocument, PipelineError> {
        let dir = self.workspace.paper_dir(id);
        let json = String::from_utf8_lossy(&self.workspace.read(id, BUNDLE_JSON)?).into_owned();
        let bundle = ConversionBundle::from_json(&json, &dir)?;
        let tree = parse_markup(&bundle.markup, Some(&bundle.page_breaks)).with_source_id(id);
        let tree = filter_sections(&tree, &self.config.filter);
        let doc = align_assets(tree, bundle.assets)?;
        doc.save(&dir)?;
        Ok(doc)
    }

    fn summarize_stage(&self, id: &str) -> Result<DocumentSummary, PipelineError> {
        let doc = self.document(id)?;
        let summary = summarize_document(
            &doc,
            &self.pack,
            &self.gateway,
            &SummarizerConfig::default(),
        )?;
        self.workspace
            .write(id, SUMMARY_MD, summary.markdown().as_bytes())?;
        self.save_json(id, SUMMARY_JSON, &summary)?;
        Ok(summary)
    }

    fn score_stage(&self, id: &str) -> Result<DimensionScores, PipelineError> {
        let (doc, summary) = (self.document(id)?, self.summary(id)?);
        let scores = score_paper(
            &summary,
            &doc,
            &self.pack,
            &self.gateway,
            &ScoringConfig::default(),
        )?;
        self.save_json(id, SCORE_JSON, &scores)?;
        Ok(scores)
    }

    fn blog_stage(&self, id: &str) -> Result<String, PipelineError> {
        let (doc, summary) = (self.document(id)?, self.summary(id)?);
        let blog = make_blog(
            &summary,
            &doc,
            &self.pack,
            &self.gateway,
            &BlogConfig::default(),
        )?;
        self.workspace
            .write(id, BLOG_MD, blog.markdown.as_bytes())?;
        Ok(blog.markdown)
    }

    fn broadcast_stage(&self, id: &str) -> Result<String, PipelineError> {
        let summary = self.summary(id)?;
        let script = make_broadcast_script(
            &summary,
            &self.pack,
            &self.gateway,
            &BroadcastConfig::default(),
        )?;
        self.workspace.write(id, BROADCAST_TXT, script.as_bytes())?;
        let audio = synthesize_speech(&script, &self.tts)?;
        self.workspace.write(id, BROADCAST_MP3, &audio)?;
        Ok(script)
    }

    fn require(&self, id: &str, file: &str) -> Result<(), PipelineError> {
        let record = self
            .workspace
            .record(id)
            .ok_or_else(|| PipelineError::UnknownPaper(id.to_string()))?;
        if self.workspace.exists(id, file) {
            Ok(())
        } else {
            Err(PipelineError::NotReady {
                paper_id: id.to_string(),
                status: record.status.as_str().to_string(),
            })
        }
    }

    pub fn document(&self, id: &str) -> Result<AlignedDocument, PipelineError> {
        self.require(id, MANIFEST_JSON)?;
        Ok(AlignedDocument::load(&self.workspace.paper_dir(id))?)
    }

    pub fn summary(&self, id: &str) -> Result<DocumentSummary, PipelineError> {
        self.require(id, SUMMARY_JSON)?;
        self.load_json(id, SUMMARY_JSON)
    }

    /// Re-runs only the summarization stage and rewrites its outputs.
    pub fn summarize(&self, id: &str, force: bool) -> Result<DocumentSummary, PipelineError> {
        self.locks.with(id, || {
            if !force && self.workspace.exists(id, SUMMARY_JSON) {
                return self.summary(id);
            }
            self.require(id, MANIFEST_JSON)?;
            self.summarize_stage(id)
        })
    }

    pub fn score(&self, id: &str, force: bool) -> Result<DimensionScores, PipelineError> {
        self.locks.with(id, || {
            if !force && self.workspace.exists(id, SCORE_JSON) {
                return self.load_json(id, SCORE_JSON);
            }
            self.score_stage(id)
        })
    }

    pub fn blog(&self, id: &str, force: bool) -> Result<String, PipelineError> {
        self.locks.with(id, || {
            if !force && self.workspace.exists(id, BLOG_MD) {
                return Ok(String::from_utf8_lossy(&self.workspace.read(id, BLOG_MD)?).into_owned());
            }
            self.blog_stage(id)
        })
    }

    pub fn broadcast(&self, id: &str, force: bool) -> Result<String, PipelineError> {
        self.locks.with(id, || {
            if !force
                && self.workspace.exists(id, BROADCAST_TXT)
                && self.workspace.exists(id, BROADCAST_MP3)
            {
                return Ok(
                    String::from_utf8_lossy(&self.workspace.read(id, BROADCAST_TXT)?).into_owned(),
                );
            }
            self.broadcast_stage(id)
        })
    }

    fn conversation_file(conversation: &str) -> Result<String, PipelineError> {
        let ok = !conversation.is_empty()
            && conversation.len() <= 64
            && conversation
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if ok {
            Ok(format!("{QA_DIR}/{conversation}.json"))
        } else {
            Err(PipelineError::InvalidConversation(conversation.to_string()))
        }
    }

    pub fn conversation(&self, id: &str, conversation: &str) -> Result<Vec<QaTurn>, PipelineError> {
        let file = Self::conversation_file(conversation)?;
        if self.workspace.exists(id, &file) {
            self.load_json(id, &file)
        } else {
            Ok(Vec::new())
        }
    }

    /// Answers `question` in the named conversation and appends the turn to
    /// its history. Turns of one conversation run one at a time.
    pub fn ask(
        &self,
        id: &str,
        conversation: &str,
        question: &str,
    ) -> Result<QaTurn, PipelineError> {
        let file = Self::conversation_file(conversation)?;
        self.locks.with(&format!("{id}/{file}"), || {
            let (doc, summary) = (self.document(id)?, self.summary(id)?);
            let mut history = self.conversation(id, conversation)?;
            let turn = answer_question(
                &doc,
                &summary,
                &history,
                question,
                &self.pack,
                &self.gateway,
                &QaConfig::default(),
            )?;
            history.push(turn.clone());
            self.save_json(id, &file, &history)?;
            Ok(turn)
        })
    }

    /// Processes every manifest entry, then judges each summary `n_trials`
    /// times. Entries that fail are listed in the report and left out of the
    /// statistics. Writes `eval/report.json` and `eval/report.md`.
    pub fn evaluate(
        &self,
        manifest: &str,
        dataset: &str,
        n_trials: usize,
        mode: StdMode,
    ) -> Result<EvalReport, PipelineError> {
        let mut failures = BTreeMap::new();
        let mut papers = Vec::new();
        for source in parse_benchmark_manifest(manifest) {
            match self.process(&source, ProcessOptions::default()) {
                Ok(record) => papers.push(record.paper_id),
                Err(e) => {
                    failures.insert(source.to_string(), e.to_string());
                }
            }
        }
        papers.sort();
        papers.dedup();
        let mut trees = Vec::new();
        let mut inputs = Vec::new();
        for id in &papers {
            let doc = self.document(id)?;
            let text = doc
                .tree
                .sections()
                .iter()
                .filter(|s| !s.body.trim().is_empty())
                .map(|s| format!("{}\n{}", s.title, s.body.trim()))
                .collect::<Vec<_>>()
                .join("\n\n");
            inputs.push((id.clone(), text, self.summary(id)?.text));
            trees.push(doc.tree);
        }
        let corpus = compute_corpus_stats(&trees)?;
        let judge = JudgeConfig::default();
        let jobs: Vec<(usize, usize)> = (0..inputs.len())
            .flat_map(|i| (0..n_trials).map(move |t| (i, t)))
            .collect();
        let results: Vec<(usize, DimensionScores)> = jobs
            .par_iter()
            .map(|&(i, _)| {
                let (_, text, summary) = &inputs[i];
                judge_summary(text, summary, &self.pack, &self.gateway, &judge).map(|s| (i, s))
            })
            .collect::<Result<_, _>>()?;
        let mut trials: BTreeMap<String, Vec<DimensionScores>> = BTreeMap::new();
        for (i, scores) in results {
            trials.entry(inputs[i].0.clone()).or_default().push(scores);
        }
        let report = EvalReport {
            dataset: dataset.to_string(),
            corpus,
            trials: aggregate_trials(&trials, n_trials, mode)?,
            failures,
        };
        let dir = self.workspace.root().join(EVAL_DIR);
        let mut json = serde_json::to_vec_pretty(&report)?;
        json.push(b'\n');
        write_atomic(&dir.join("report.json"), &json)?;
        write_atomic(&dir.join("report.md"), report.markdown().as_bytes())?;
        Ok(report)
    }

    pub fn eval_report(&self) -> Result<EvalReport, PipelineError> {
        let path = self.workspace.root().join(EVAL_DIR).join("report.json");
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}
