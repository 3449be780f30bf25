//! Parsing, section alignment, hierarchical summarization and downstream
//! generators for academic papers.

pub mod alignment;
pub mod applications;
pub mod config;
pub mod doc_model;
pub mod evaluation;
pub mod http;
pub mod ingestion;
pub mod llm;
pub mod pipeline;
pub mod prompt;
pub mod retry;
pub mod summarizer;
pub mod text;
pub mod workspace;
