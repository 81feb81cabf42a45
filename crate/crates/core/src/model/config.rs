use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// `[kg ; sg ; kg ⊙ sg]`
    Concat,
    /// Softmax over the two squared readout norms, then a weighted average.
    Attention,
    /// Like `Attention` but scores are `wᵀv` with a learned `w`.
    AttentionLearned,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    Relu,
    Sigmoid,
}

/// Which graph towers are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMode {
    Both,
    SgOnly,
    KgOnly,
}

impl GraphMode {
    pub fn uses_scene(self) -> bool {
        !matches!(self, GraphMode::KgOnly)
    }

    pub fn uses_knowledge(self) -> bool {
        !matches!(self, GraphMode::SgOnly)
    }

    pub fn name(self) -> &'static str {
        match self {
            GraphMode::Both => "both",
            GraphMode::SgOnly => "sg_only",
            GraphMode::KgOnly => "kg_only",
        }
    }
}

/// Output head. `Softmax` pairs with soft-target cross-entropy, `Sigmoid`
/// with per-label binary cross-entropy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Softmax,
    Sigmoid,
}

macro_rules! parse_enum {
    ($ty:ty, $what:literal, $($text:literal => $variant:expr),+ $(,)?) => {
        impl std::str::FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
                    $($text => Ok($variant),)+
                    other => Err(Error::Config(format!("unknown {} {other:?}", $what))),
                }
            }
        }
    };
}

parse_enum!(FusionMode, "fusion mode",
    "concat" => FusionMode::Concat,
    "attention" => FusionMode::Attention,
    "attention_learned" => FusionMode::AttentionLearned);
parse_enum!(Nonlinearity, "nonlinearity",
    "relu" => Nonlinearity::Relu,
    "sigmoid" => Nonlinearity::Sigmoid);
parse_enum!(GraphMode, "graph mode",
    "both" => GraphMode::Both,
    "sg_only" => GraphMode::SgOnly,
    "kg_only" => GraphMode::KgOnly);
parse_enum!(OutputKind, "output kind",
    "softmax" => OutputKind::Softmax,
    "sigmoid" => OutputKind::Sigmoid);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub gcn_layers: usize,
    pub fusion: FusionMode,
    pub nonlinearity: Nonlinearity,
    pub num_labels: usize,
    /// One encoder/GCN weight set for both graphs.
    pub share_towers: bool,
    /// Hidden widths of the classification MLP; `None` means one layer of
    /// `hidden_dim`.
    pub mlp_hidden: Option<Vec<usize>>,
    pub graphs: GraphMode,
    pub output: OutputKind,
    /// Make the word-vector table a trainable parameter.
    pub train_embeddings: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 300,
            hidden_dim: 512,
            gcn_layers: 3,
            fusion: FusionMode::Concat,
            nonlinearity: Nonlinearity::Relu,
            num_labels: 2,
            share_towers: false,
            mlp_hidden: None,
            graphs: GraphMode::Both,
            output: OutputKind::Softmax,
            train_embeddings: false,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gcn_layers < 1 {
            return Err(Error::Config("gcn_layers must be at least 1".into()));
        }
        if self.num_labels < 2 {
            return Err(Error::Config("num_labels must be at least 2".into()));
        }
        if self.embed_dim < 1 || self.hidden_dim < 1 {
            return Err(Error::Config("dimensions must be at least 1".into()));
        }
        if self.mlp_widths().contains(&0) {
            return Err(Error::Config("mlp hidden widths must be at least 1".into()));
        }
        Ok(())
    }

    pub fn mlp_widths(&self) -> Vec<usize> {
        self.mlp_hidden.clone().unwrap_or_else(|| vec![self.hidden_dim])
    }

    /// Width of the fused vector fed to the MLP.
    pub fn fusion_width(&self) -> usize {
        match self.fusion {
            FusionMode::Concat => 3 * self.hidden_dim,
            FusionMode::Attention | FusionMode::AttentionLearned => self.hidden_dim,
        }
    }

    pub(crate) fn tower_count(&self) -> usize {
        match (self.graphs, self.share_towers) {
            (GraphMode::Both, false) => 2,
            _ => 1,
        }
    }
}

/// Trainable scalar count under `config`, excluding the word-vector table.
pub fn param_count(config: &ModelConfig) -> usize {
    let (e, h, k) = (config.embed_dim, config.hidden_dim, config.gcn_layers);
    let tower = h * 2 * e + k * h * h;
    let mut mlp = 0;
    let mut width = config.fusion_width();
    for w in config.mlp_widths() {
        mlp += w * width + w;
        width = w;
    }
    mlp += config.num_labels * width + config.num_labels;
    let attention = match config.fusion {
        FusionMode::AttentionLearned => h,
        _ => 0,
    };
    config.tower_count() * tower + mlp + attention
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ModelConfig {
        ModelConfig {
            embed_dim: 2,
            hidden_dim: 3,
            gcn_layers: 1,
            num_labels: 2,
            mlp_hidden: Some(vec![3]),
            ..ModelConfig::default()
        }
    }

    #[test]
    fn hand_counted_toy() {
        // 2 towers x (3*4 + 3*3) + (3*9 + 3) + (2*3 + 2)
        assert_eq!(param_count(&toy()), 80);
    }

    #[test]
    fn attention_shrinks_mlp_input() {
        let concat = param_count(&toy());
        let attn = param_count(&ModelConfig {
            fusion: FusionMode::Attention,
            ..toy()
        });
        assert_eq!(concat - attn, 18);
    }

    #[test]
    fn doubling_labels() {
        let base = toy();
        let doubled = ModelConfig {
            num_labels: 4,
            ..toy()
        };
        assert_eq!(param_count(&doubled) - param_count(&base), (3 + 1) * 2);
    }

    #[test]
    fn both_graphs_have_an_extra_tower() {
        let sg = ModelConfig {
            graphs: GraphMode::SgOnly,
            ..toy()
        };
        assert!(param_count(&toy()) > param_count(&sg));
        assert_eq!(param_count(&toy()) - param_count(&sg), 21);
    }

    #[test]
    fn validation() {
        assert!(ModelConfig { gcn_layers: 0, ..toy() }.validate().is_err());
        assert!(ModelConfig { num_labels: 1, ..toy() }.validate().is_err());
        assert!(toy().validate().is_ok());
    }

    #[test]
    fn enum_parsing() {
        assert_eq!("attention".parse::<FusionMode>().unwrap(), FusionMode::Attention);
        assert_eq!("sg-only".parse::<GraphMode>().unwrap(), GraphMode::SgOnly);
        assert!("tanh".parse::<Nonlinearity>().is_err());
    }
}
