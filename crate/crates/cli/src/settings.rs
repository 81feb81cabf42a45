//! Key-value config files and their merge with command-line flags.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use symgraph::evaluation::ThresholdPolicy;
use symgraph::model::{FusionMode, GraphMode, ModelConfig, Nonlinearity, OutputKind};
use symgraph::synth::{Signal, SynthSpec};
use symgraph::training::TrainConfig;

use crate::args::{RunFlags, SynthArgs};
use crate::error::{CliError, CliResult};

/// Parses a TOML file into `T`, or returns `T::default()` without a path.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
}

/// Keys accepted by `train` and `ablate` config files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    pub embed_dim: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub gcn_layers: Option<usize>,
    pub fusion: Option<FusionMode>,
    pub nonlinearity: Option<Nonlinearity>,
    pub graphs: Option<GraphMode>,
    pub output: Option<OutputKind>,
    pub mlp_hidden: Option<Vec<usize>>,
    pub share_towers: Option<bool>,
    pub train_embeddings: Option<bool>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub shuffle: Option<bool>,
    pub log_wall_time: Option<bool>,
    pub threshold: Option<String>,
}

fn flag(on: bool) -> Option<bool> {
    on.then_some(true)
}

impl RunSettings {
    /// Replaces every value the flags set.
    pub fn overlay(mut self, f: &RunFlags) -> Self {
        macro_rules! over {
            ($($field:ident = $value:expr),+ $(,)?) => {
                $(if let Some(v) = $value { self.$field = Some(v); })+
            };
        }
        over!(
            embed_dim = f.embed_dim,
            hidden_dim = f.hidden_dim,
            fusion = f.fusion,
            nonlinearity = f.nonlinearity,
            output = f.output,
            mlp_hidden = f.mlp_hidden.clone(),
            share_towers = flag(f.share_towers),
            train_embeddings = flag(f.train_embeddings),
            epochs = f.epochs,
            lr = f.lr,
            batch_size = f.batch_size,
            seed = f.seed,
            shuffle = f.no_shuffle.then_some(false),
            log_wall_time = flag(f.log_wall_time),
            threshold = f.threshold.clone(),
        );
        self
    }

    /// Final configs for a dataset with `num_labels` labels whose word
    /// vectors are `file_dim` wide.
    pub fn resolve(&self, num_labels: usize, file_dim: usize) -> CliResult<Resolved> {
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        let seed = self.seed.unwrap_or(m.seed);
        let model = ModelConfig {
            embed_dim: self.embed_dim.unwrap_or(file_dim),
            hidden_dim: self.hidden_dim.unwrap_or(m.hidden_dim),
            gcn_layers: self.gcn_layers.unwrap_or(m.gcn_layers),
            fusion: self.fusion.unwrap_or(m.fusion),
            nonlinearity: self.nonlinearity.unwrap_or(m.nonlinearity),
            num_labels,
            share_towers: self.share_towers.unwrap_or(m.share_towers),
            mlp_hidden: self.mlp_hidden.clone().or(m.mlp_hidden),
            graphs: self.graphs.unwrap_or(m.graphs),
            output: self.output.unwrap_or(m.output),
            train_embeddings: self.train_embeddings.unwrap_or(m.train_embeddings),
            seed,
        };
        model.validate().map_err(CliError::usage)?;
        if model.embed_dim != file_dim {
            return Err(CliError::usage(format!(
                "embed_dim is {} but the embedding file has {file_dim} columns",
                model.embed_dim
            )));
        }
        let train = TrainConfig {
            batch_size: self.batch_size.unwrap_or(t.batch_size),
            lr: self.lr.unwrap_or(t.lr),
            epochs: self.epochs.unwrap_or(t.epochs),
            seed,
            shuffle: self.shuffle.unwrap_or(t.shuffle),
            log_wall_time: self.log_wall_time.unwrap_or(t.log_wall_time),
        };
        train.validate().map_err(CliError::usage)?;
        let policy = match &self.threshold {
            Some(text) => text.parse().map_err(CliError::usage)?,
            None => ThresholdPolicy::default_for(model.output),
        };
        Ok(Resolved { model, train, policy })
    }
}

/// Fully specified run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub policy: ThresholdPolicy,
}

impl Resolved {
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({
            "model": self.model,
            "train": self.train,
            "threshold": self.policy.to_string(),
        })
    }
}

/// Keys accepted by `prepare` config files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepareSettings {
    pub seed: Option<u64>,
    pub match_tail: Option<bool>,
    pub add_reverse: Option<bool>,
    /// Relation whitelist; the built-in list when absent.
    pub relations: Option<Vec<String>>,
}

/// Keys accepted by `synth` config files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSettings {
    pub num_labels: Option<usize>,
    pub examples: Option<usize>,
    pub noise: Option<f64>,
    pub seed: Option<u64>,
    pub embed_dim: Option<usize>,
    pub distractors: Option<usize>,
    pub signal: Option<Signal>,
    pub scale: Option<f64>,
    pub add_reverse: Option<bool>,
}

impl SynthSettings {
    pub fn resolve(&self, a: &SynthArgs) -> SynthSpec {
        let d = SynthSpec::default();
        SynthSpec {
            num_labels: a.labels.or(self.num_labels).unwrap_or(d.num_labels),
            examples: a.examples.or(self.examples).unwrap_or(d.examples),
            noise: a.noise.or(self.noise).unwrap_or(d.noise),
            seed: a.seed.or(self.seed).unwrap_or(d.seed),
            embed_dim: a.embed_dim.or(self.embed_dim).unwrap_or(d.embed_dim),
            distractors: a.distractors.or(self.distractors).unwrap_or(d.distractors),
            signal: a.signal.or(self.signal).unwrap_or(d.signal),
            scale: a.scale.or(self.scale).unwrap_or(d.scale),
            add_reverse: flag(a.add_reverse).or(self.add_reverse).unwrap_or(d.add_reverse),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file_values() {
        let file: RunSettings = toml::from_str("fusion = \"attention\"\nepochs = 7\nlr = 0.5\n").unwrap();
        let flags = RunFlags {
            epochs: Some(3),
            no_shuffle: true,
            ..RunFlags::default()
        };
        let r = file.overlay(&flags).resolve(4, 16).unwrap();
        assert_eq!(r.model.fusion, FusionMode::Attention);
        assert_eq!(r.train.epochs, 3);
        assert_eq!(r.train.lr, 0.5);
        assert!(!r.train.shuffle);
        assert_eq!((r.model.embed_dim, r.model.num_labels), (16, 4));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_usage_errors() {
        assert!(toml::from_str::<RunSettings>("learning_rate = 1.0\n").is_err());
        let bad_width = RunSettings {
            embed_dim: Some(8),
            ..RunSettings::default()
        };
        assert!(matches!(bad_width.resolve(2, 16), Err(CliError::Usage(_))));
        let bad_policy = RunSettings {
            threshold: Some("median".into()),
            ..RunSettings::default()
        };
        assert!(matches!(bad_policy.resolve(2, 16), Err(CliError::Usage(_))));
    }

    #[test]
    fn sigmoid_head_defaults_to_half_threshold() {
        let s = RunSettings {
            output: Some(OutputKind::Sigmoid),
            ..RunSettings::default()
        };
        assert_eq!(s.resolve(3, 4).unwrap().policy, ThresholdPolicy::Fixed(0.5));
    }
}
