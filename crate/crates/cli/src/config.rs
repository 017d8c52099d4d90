use std::fs;
use std::path::{Path, PathBuf};

use coauthor_core::corpus::Label;
use coauthor_core::crf::TrainConfig;
use coauthor_core::evaluation::GroupBy;
use coauthor_core::pipeline::Decoder;
use coauthor_core::synthesis::{HttpConfig, SynthesisConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub input: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub decoder: Decoder,
    /// `None` reports both orientations.
    pub positive: Option<Label>,
    pub group_by: GroupBy,
    /// Apply homoglyph and invisible-character normalisation first.
    pub normalize: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            decoder: Decoder::Viterbi,
            positive: None,
            group_by: GroupBy::default(),
            normalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSettings {
    /// Offline Markov generators `mock-0 .. mock-{n-1}`.
    pub mock: usize,
    /// Chat-completions endpoints; used instead of mocks when present.
    pub endpoints: Vec<HttpConfig>,
    /// Source language for plain-text input.
    pub language: String,
    /// Offline human-style sources: count and word range.
    pub mock_sources: usize,
    pub mock_min_words: usize,
    pub mock_max_words: usize,
}

impl Default for GeneratorSettings {
    fn default() -> Self {
        Self {
            mock: 2,
            endpoints: Vec::new(),
            language: "en".into(),
            mock_sources: 0,
            mock_min_words: 40,
            mock_max_words: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSettings {
    pub kind: String,
    pub rate: f64,
    pub seed: u64,
}

impl Default for AttackSettings {
    fn default() -> Self {
        Self {
            kind: "homoglyph".into(),
            rate: 0.3,
            seed: 1024,
        }
    }
}

/// Everything a run depends on. Written back, fully resolved, next to the
/// outputs of every command.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    /// Overrides every seed below when set.
    pub seed: Option<u64>,
    /// Worker pool width; 0 uses every core.
    pub jobs: usize,
    pub paths: Paths,
    pub synthesis: SynthesisConfig,
    pub training: TrainConfig,
    pub evaluation: EvalSettings,
    pub generator: GeneratorSettings,
    pub attack: AttackSettings,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Input(format!("invalid config {}: {e}", path.display())))
    }

    /// Pushes the shared seed into every block.
    pub fn apply_seed(&mut self) {
        if let Some(s) = self.seed {
            self.synthesis.seed = s;
            self.training.shuffle_seed = s;
            self.training.init_seed = s;
            self.attack.seed = s;
        }
    }

    /// Writes `<out_dir>/<command>.config.toml`.
    pub fn snapshot(&self, out_dir: &Path) -> Result<PathBuf, CliError> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| CliError::Internal(format!("cannot serialise config: {e}")))?;
        let path = out_dir.join(format!("{}.config.toml", self.command));
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig {
            command: "train".into(),
            seed: Some(9),
            ..Default::default()
        };
        c.generator.endpoints.push(HttpConfig::default());
        c.evaluation.positive = Some(Label::Human);
        let text = toml::to_string_pretty(&c).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
        assert!(toml::from_str::<RunConfig>("[training]\nepoch = 3").is_err());
        let c: RunConfig = toml::from_str("[training]\nepochs = 3").unwrap();
        assert_eq!(c.training.epochs, 3);
    }

    #[test]
    fn seed_reaches_every_block() {
        let mut c = RunConfig {
            seed: Some(77),
            ..Default::default()
        };
        c.apply_seed();
        assert_eq!(c.synthesis.seed, 77);
        assert_eq!(c.training.shuffle_seed, 77);
        assert_eq!(c.training.init_seed, 77);
        assert_eq!(c.attack.seed, 77);
    }
}
