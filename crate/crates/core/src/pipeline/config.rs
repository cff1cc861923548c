use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::SyntheticSpec;
use crate::corpus::CorpusConfig;
use crate::embed::EmbedConfig;
use crate::error::{io_err, Error, Result};
use crate::graph2seq::G2sConfig;

/// Named bundles of model sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Small dimensions that train on a laptop CPU in minutes.
    Desk,
    /// The full-size model: 768-wide, six attention layers.
    Paper,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(format!("unknown preset {s:?}; expected desk or paper")),
        }
    }
}

/// Where `ingest` reads raw data from; unset paths fall back to the files
/// written by `synth`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub novel: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub passages: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub synth: SyntheticSpec,
    pub input: InputConfig,
    pub corpus: CorpusConfig,
    pub embed: EmbedConfig,
    pub generator: G2sConfig,
    /// Tokens kept per reference comment during generator training.
    pub max_comment_len: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::preset(Preset::Desk)
    }
}

impl PipelineConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = Self {
            seed: 42,
            synth: SyntheticSpec::default(),
            input: InputConfig::default(),
            corpus: CorpusConfig::default(),
            embed: EmbedConfig::default(),
            generator: G2sConfig::default(),
            max_comment_len: 50,
        };
        match preset {
            Preset::Desk => Self {
                embed: EmbedConfig {
                    dim: 32,
                    vertex_steps: 200,
                    edge_steps: 100,
                    warmup: 100,
                    ..base.embed
                },
                generator: G2sConfig {
                    d_model: 64,
                    heads: 4,
                    ff_dim: 128,
                    encoder_layers: 2,
                    decoder_layers: 2,
                    lstm_hidden: 32,
                    lstm_layers: 2,
                    warmup: 300,
                    lr_scale: 1.0,
                    epochs: 150,
                    batch_passages: 0,
                    ..base.generator
                },
                ..base
            },
            Preset::Paper => Self {
                embed: EmbedConfig {
                    dim: 768,
                    encoder_layers: 6,
                    encoder_heads: 12,
                    ..base.embed
                },
                generator: G2sConfig {
                    d_model: 768,
                    heads: 12,
                    ff_dim: 3072,
                    encoder_layers: 6,
                    decoder_layers: 6,
                    lstm_hidden: 384,
                    lstm_layers: 2,
                    ..base.generator
                },
                ..base
            },
        }
    }

    /// Reads a JSON config; keys it omits keep the preset's values.
    pub fn load(path: &Path, preset: Preset) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let overlay: Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut value = serde_json::to_value(Self::preset(preset))?;
        merge(&mut value, overlay, "")?;
        Self::from_value(value)
    }

    /// Applies `key=value` overrides with dotted keys such as
    /// `generator.d_model=32`. Values parse as JSON, falling back to a bare
    /// string.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        let mut value = serde_json::to_value(&*self)?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
            let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut value, key.trim(), parsed)?;
        }
        *self = Self::from_value(value)?;
        Ok(())
    }

    fn from_value(value: Value) -> Result<Self> {
        let config: Self = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Checks every section before any stage runs.
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        let c = &self.corpus;
        if !(0.0..=1.0).contains(&c.overlap_threshold) {
            return Err(Error::Config("corpus.overlap_threshold must lie in [0, 1]".into()));
        }
        if c.paragraph_window == 0 {
            return Err(Error::Config("corpus.paragraph_window must be positive".into()));
        }
        if c.min_freq == 0 {
            return Err(Error::Config("corpus.min_freq must be at least 1".into()));
        }
        self.embed
            .validate()
            .map_err(|e| Error::Config(format!("embed: {e}")))?;
        self.generator
            .validate()
            .map_err(|e| Error::Config(format!("generator: {e}")))?;
        if self.max_comment_len == 0 || self.max_comment_len > self.generator.max_len {
            return Err(Error::Config(format!(
                "max_comment_len must lie in 1..={} (generator.max_len)",
                self.generator.max_len
            )));
        }
        Ok(())
    }

    /// Every settable dotted key, sorted.
    pub fn valid_keys() -> Vec<String> {
        let mut keys = Vec::new();
        collect_keys(
            &serde_json::to_value(Self::default()).expect("config serializes"),
            "",
            &mut keys,
        );
        keys.sort();
        keys
    }
}

fn collect_keys(value: &Value, prefix: &str, out: &mut Vec<String>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                collect_keys(v, &key, out);
            }
        }
        _ => out.push(prefix.to_string()),
    }
}

fn unknown_key(key: &str) -> Error {
    Error::Config(format!(
        "unknown config key {key:?}; valid keys are: {}",
        PipelineConfig::valid_keys().join(", ")
    ))
}

fn set_path(root: &mut Value, key: &str, new: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let map = node.as_object_mut().ok_or_else(|| unknown_key(key))?;
        let slot = map.get_mut(*part).ok_or_else(|| unknown_key(key))?;
        if depth + 1 == parts.len() {
            if slot.is_object() {
                return Err(unknown_key(key));
            }
            *slot = new;
            return Ok(());
        }
        node = slot;
    }
    Err(unknown_key(key))
}

fn merge(base: &mut Value, overlay: Value, prefix: &str) -> Result<()> {
    let Value::Object(entries) = overlay else {
        return Err(Error::Config("config file must hold a JSON object".into()));
    };
    for (k, v) in entries {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        let slot = base
            .as_object_mut()
            .and_then(|m| m.get_mut(&k))
            .ok_or_else(|| unknown_key(&key))?;
        if slot.is_object() && v.is_object() {
            merge(slot, v, &key)?;
        } else {
            *slot = v;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        PipelineConfig::preset(Preset::Desk).validate().unwrap();
        PipelineConfig::preset(Preset::Paper).validate().unwrap();
    }

    #[test]
    fn dotted_override_sets_nested_value() {
        let mut c = PipelineConfig::default();
        c.apply_overrides(&["generator.mode=GAT_V", "embed.dim=16", "seed=7"])
            .unwrap();
        assert_eq!(c.generator.mode, crate::graph2seq::Mode::GatV);
        assert_eq!(c.embed.dim, 16);
        assert_eq!(c.seed, 7);
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let mut c = PipelineConfig::default();
        let err = c.apply_overrides(&["generator.dmodel=3"]).unwrap_err().to_string();
        assert!(err.contains("generator.d_model"), "{err}");
        assert!(err.contains("embed.smoothing.past"), "{err}");
    }

    #[test]
    fn invalid_value_is_rejected_before_compute() {
        let mut c = PipelineConfig::default();
        assert!(c.apply_overrides(&["generator.heads=5"]).is_err());
        assert!(c.apply_overrides(&["embed.label_smoothing=1.5"]).is_err());
    }

    #[test]
    fn file_overlay_keeps_unlisted_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"generator": {"beam": 2}}"#).unwrap();
        let c = PipelineConfig::load(&path, Preset::Desk).unwrap();
        assert_eq!(c.generator.beam, 2);
        assert_eq!(c.generator.d_model, 64);
        std::fs::write(&path, r#"{"generatr": {}}"#).unwrap();
        assert!(PipelineConfig::load(&path, Preset::Desk).is_err());
    }
}
