use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use paperlens_core::config::AppConfig;
use paperlens_core::evaluation::StdMode;
use paperlens_core::ingestion::SourceRef;
use paperlens_core::pipeline::{Engine, ProcessOptions, BROADCAST_MP3};

use crate::server::{self, AppState};

#[derive(Debug, Parser)]
#[command(
    name = "paperlens",
    version,
    about = "Summarize, explain and score academic papers"
)]
pub struct Cli {
    /// Directory holding the paper index and per-paper outputs.
    #[arg(
        long,
        global = true,
        env = "PAPERLENS_WORKSPACE",
        default_value = "workspace"
    )]
    pub workspace: PathBuf,
    /// JSON configuration file.
    #[arg(long, global = true, env = "PAPERLENS_CONFIG")]
    pub config: Option<PathBuf>,
    /// Use the offline model and speech stand-ins.
    #[arg(long, global = true)]
    pub mock: bool,
    /// Recompute outputs that already exist.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Download or import a PDF and register it.
    Fetch { source: String },
    /// Run every stage for a paper (arXiv id or PDF path).
    Process { source: String },
    /// Print the summary of a processed paper.
    Summarize { paper_id: String },
    /// Print the recommendation scores.
    Score { paper_id: String },
    /// Print the blog post.
    Blog { paper_id: String },
    /// Print the broadcast script and the audio path.
    Broadcast { paper_id: String },
    /// Ask a question about a paper.
    Qa {
        paper_id: String,
        question: String,
        #[arg(long, default_value = "default")]
        conversation: String,
    },
    /// Process a benchmark manifest and judge every summary.
    Eval {
        manifest: PathBuf,
        #[arg(long, default_value = "benchmark")]
        dataset: String,
        #[arg(long, default_value_t = 3)]
        trials: usize,
        /// Average per-paper deviations instead of pooling all trials.
        #[arg(long)]
        within_sample: bool,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        /// Directory with the browser client, served under /ui/.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> anyhow::Result<AppConfig> {
    let mut config = match &cli.config {
        Some(path) => AppConfig::load(path)?,
        None => AppConfig::from_env(),
    };
    if cli.mock {
        config.enable_mock();
    }
    config.validate()?;
    Ok(config)
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = load_config(&cli)?;
    if let Command::Serve { host, port, .. } = &cli.command {
        if let Some(h) = host {
            config.server.host = h.clone();
        }
        if let Some(p) = port {
            config.server.port = *p;
        }
    }
    let engine = Engine::new(config, &cli.workspace)
        .with_context(|| format!("opening workspace {}", cli.workspace.display()))?;
    let force = cli.force;

    match cli.command {
        Command::Fetch { source } => {
            let record = engine.fetch(&SourceRef::parse(&source))?;
            println!("{}", serde_json::to_string_pretty(&record)?);
        }
        Command::Process { source } => {
            let record = engine.process(&SourceRef::parse(&source), ProcessOptions { force })?;
            println!("{}", serde_json::to_string_pretty(&record)?);
        }
        Command::Summarize { paper_id } => {
            println!("{}", engine.summarize(&paper_id, force)?.text);
        }
        Command::Score { paper_id } => {
            println!(
                "{}",
                serde_json::to_string_pretty(&engine.score(&paper_id, force)?)?
            );
        }
        Command::Blog { paper_id } => {
            print!("{}", engine.blog(&paper_id, force)?);
        }
        Command::Broadcast { paper_id } => {
            println!("{}", engine.broadcast(&paper_id, force)?);
            eprintln!(
                "audio: {}",
                engine
                    .workspace()
                    .paper_dir(&paper_id)
                    .join(BROADCAST_MP3)
                    .display()
            );
        }
        Command::Qa {
            paper_id,
            question,
            conversation,
        } => {
            let turn = engine.ask(&paper_id, &conversation, &question)?;
            println!("{}", turn.answer);
            if let Some(asset) = turn.asset_shown {
                eprintln!("shown: {} ({})", asset.file, asset.caption);
            }
        }
        Command::Eval {
            manifest,
            dataset,
            trials,
            within_sample,
        } => {
            if trials == 0 {
                bail!("--trials must be positive");
            }
            let text = std::fs::read_to_string(&manifest)
                .with_context(|| format!("reading {}", manifest.display()))?;
            let mode = if within_sample {
                StdMode::WithinSample
            } else {
                StdMode::Pooled
            };
            let report = engine.evaluate(&text, &dataset, trials, mode)?;
            print!("{}", report.markdown());
        }
        Command::Serve { ui_dir, .. } => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(server::serve(AppState::new(engine), ui_dir))?;
        }
    }
    Ok(())
}
