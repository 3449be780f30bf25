//! The single JSON configuration document shared by the CLI and the service.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::applications::{TtsConfig, TtsMock};
use crate::doc_model::FilterPolicy;
use crate::ingestion::ToolConfig;
use crate::llm::{MockConfig, ProviderConfig};
use crate::prompt::DEFAULT_INPUT_BUDGET;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budgets {
    /// Input budget of every section template, in estimated tokens.
    pub section_input_tokens: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            section_input_tokens: DEFAULT_INPUT_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
    /// Papers processed in parallel.
    pub workers: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            workers: 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub provider: ProviderConfig,
    pub tts: TtsConfig,
    pub tools: ToolConfig,
    pub prompts_dir: Option<PathBuf>,
    pub filter: FilterPolicy,
    pub budgets: Budgets,
    pub server: ServerConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn rebase(base: &Path, path: &mut Option<PathBuf>) {
    if let Some(p) = path {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

impl AppConfig {
    /// Reads `path`, resolving relative paths against its directory, then
    /// applies environment overrides.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: AppConfig =
            serde_json::from_str(&text).map_err(|source| ConfigError::Json {
                path: path.to_path_buf(),
                source,
            })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.rebase_paths(base);
        config.apply_env(|k| std::env::var(k).ok());
        Ok(config)
    }

    /// Defaults plus environment overrides, for runs without a config file.
    pub fn from_env() -> Self {
        let mut config = Self::default();
        config.apply_env(|k| std::env::var(k).ok());
        config
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        self.provider.apply_env(&get);
        self.tts.apply_env(&get);
    }

    fn rebase_paths(&mut self, base: &Path) {
        rebase(base, &mut self.prompts_dir);
        rebase(base, &mut self.tools.fixtures_dir);
        if let Some(mock) = &mut self.provider.mock {
            rebase(base, &mut mock.fixtures_file);
        }
        if let Some(mock) = &mut self.tts.mock {
            rebase(base, &mut mock.fixtures_dir);
        }
    }

    /// Switches the model provider and speech synthesis to their offline
    /// stand-ins, keeping any mock settings already present.
    pub fn enable_mock(&mut self) {
        if self.provider.mock.is_none() {
            self.provider.mock = Some(MockConfig::offline());
        }
        if self.tts.mock.is_none() {
            self.tts.mock = Some(TtsMock::default());
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.provider
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.budgets.section_input_tokens == 0 {
            return Err(ConfigError::Invalid(
                "budgets.section_input_tokens must be positive".into(),
            ));
        }
        if self.tts.char_limit == 0 {
            return Err(ConfigError::Invalid(
                "tts.char_limit must be positive".into(),
            ));
        }
        if self.server.workers == 0 {
            return Err(ConfigError::Invalid(
                "server.workers must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_top_level_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        fs::write(
            &path,
            r#"{
              "provider": {"endpoint": "http://llm.test/v1", "api_key": "k-123"},
              "tts": {"voice": "nova"},
              "tools": {"fixtures_dir": "fixtures"},
              "prompts_dir": "prompts",
              "filter": {"excluded_canonical_titles": ["references"]},
              "budgets": {"section_input_tokens": 2000},
              "server": {"host": "0.0.0.0", "port": 9000}
            }"#,
        )
        .unwrap();
        let config = AppConfig::load(&path).unwrap();
        assert_eq!(config.provider.endpoint, "http://llm.test/v1");
        assert_eq!(config.tts.voice, "nova");
        assert_eq!(config.tools.fixtures_dir, Some(dir.path().join("fixtures")));
        assert_eq!(config.prompts_dir, Some(dir.path().join("prompts")));
        assert_eq!(config.budgets.section_input_tokens, 2000);
        assert_eq!(config.server.port, 9000);
        assert_eq!(config.server.workers, 2);
        assert!(config.validate().is_ok());
        let shown = serde_json::to_string(&config).unwrap();
        assert!(!shown.contains("k-123"));
    }

    #[test]
    fn unknown_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        fs::write(&path, r#"{"providr": {}}"#).unwrap();
        assert!(matches!(
            AppConfig::load(&path),
            Err(ConfigError::Json { .. })
        ));
    }

    #[test]
    fn mock_switch() {
        let mut config = AppConfig::default();
        config.enable_mock();
        assert!(config.provider.mock.is_some());
        assert!(config.tts.mock.is_some());
    }
}
