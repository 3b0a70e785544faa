use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vitforge_core::train::TrainConfig;
use vitforge_core::{Error, Result};

/// Everything a `train` run depends on. Loaded from `--config`, then
/// overridden by command-line flags, then echoed to `run_config.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset root (`<root>/<split>/<class>/*`) or a directory of manifests.
    pub data: Option<PathBuf>,
    /// `tiny` or `base`.
    pub model: String,
    pub output: PathBuf,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            model: "tiny".into(),
            output: PathBuf::from("run"),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Canonical form: pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_json_round_trips() {
        let mut c = RunConfig {
            data: Some("data".into()),
            ..RunConfig::default()
        };
        c.train.learning_rate = 1e-3;
        c.train.checkpoint_path = Some("run/model.vitf".into());
        let text = c.to_json();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn partial_files_fill_defaults_and_unknown_keys_fail() {
        let c = RunConfig::from_json(r#"{"model": "base", "train": {"epochs": 3}}"#).unwrap();
        assert_eq!(c.model, "base");
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.batch_size, 32);
        assert!(RunConfig::from_json(r#"{"modle": "tiny"}"#).is_err());
    }
}
