//! Config-file handling. Precedence: command-line flags override config
//! file values, which override built-in defaults.

use std::path::Path;

use serde::Deserialize;

/// Optional keys mirroring the command-line flags.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub kcr: Option<f64>,
    pub scl_epochs: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub beta: Option<f64>,
    pub mix_p: Option<usize>,
    pub mix_alpha: Option<f64>,
    pub neg_loss: Option<String>,
    pub format: Option<String>,
    pub scenario: Option<String>,
    pub renormalize_mixtures: Option<bool>,
    pub nearest_class_only: Option<bool>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| format!("bad config {}: {e}", path.display()))
    }
}

/// First of: explicit flag, config value, default.
pub fn resolve<T: Copy>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn resolve_clone<T: Clone>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
