use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::active::StoppingRule;
use super::OrchestratorError;
use crate::annotators::LlmConfig;
use crate::models::Arch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub path: PathBuf,
}

/// Experiment settings read from a TOML file. Every field is optional;
/// command-line flags take precedence.
///
/// ```toml
/// data_dir = "runs"
/// seed = 7
/// arch = "lstm"
///
/// [datasets.ajgt]
/// path = "data/ajgt.csv"
///
/// [annotators.gpt4o]
/// endpoint_url = "https://api.openai.com/v1/chat/completions"
/// model_name = "gpt-4o"
/// api_key_env = "OPENAI_API_KEY"
///
/// [stopping]
/// max_cycles = 25
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub arch: Option<Arch>,
    #[serde(default)]
    pub datasets: BTreeMap<String, DatasetEntry>,
    #[serde(default)]
    pub annotators: BTreeMap<String, LlmConfig>,
    #[serde(default)]
    pub stopping: Option<StoppingRule>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, OrchestratorError> {
        let config: Self = toml::from_str(text).map_err(|e| OrchestratorError::Config(e.to_string()))?;
        for (name, llm) in &config.annotators {
            llm.validate().map_err(|e| OrchestratorError::Config(format!("annotator `{name}`: {e}")))?;
        }
        if let Some(rule) = &config.stopping {
            rule.validate()?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OrchestratorError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// A dataset argument is either a name from `[datasets]` or a path.
    pub fn dataset_path(&self, name_or_path: &str) -> PathBuf {
        self.datasets
            .get(name_or_path)
            .map_or_else(|| PathBuf::from(name_or_path), |d| d.path.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_document() {
        let text = r#"
data_dir = "runs"
seed = 7
arch = "gru"

[datasets.ajgt]
path = "data/ajgt.csv"

[annotators.gpt4o]
endpoint_url = "http://localhost/v1/chat/completions"
model_name = "gpt-4o"
api_key_env = "KEY"
parallelism = 2

[stopping]
max_cycles = 10
batch_size = 50
seed_size = 50
"#;
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.arch, Some(Arch::Gru));
        assert_eq!(c.dataset_path("ajgt"), PathBuf::from("data/ajgt.csv"));
        assert_eq!(c.dataset_path("x.csv"), PathBuf::from("x.csv"));
        assert_eq!(c.annotators["gpt4o"].parallelism, 2);
        assert_eq!(c.annotators["gpt4o"].max_tokens, 15);
        assert_eq!(c.stopping.unwrap().max_cycles, 10);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::parse("seeds = 1").is_err());
        let hot = "[annotators.a]\nendpoint_url = \"u\"\nmodel_name = \"m\"\napi_key_env = \"K\"\ntemperature = 0.7\n";
        assert!(ExperimentConfig::parse(hot).is_err());
        assert!(ExperimentConfig::parse("[stopping]\nmax_cycles = 0\nbatch_size = 50\nseed_size = 50\n").is_err());
    }
}
