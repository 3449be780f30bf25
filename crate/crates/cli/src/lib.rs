//! Command-line interface and HTTP service for the paperlens pipeline.

pub mod cli;
pub mod server;
