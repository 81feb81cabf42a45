use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};
use symgraph::model::{FusionMode, GraphMode, Nonlinearity, OutputKind};
use symgraph::synth::Signal;

#[derive(Debug, Parser)]
#[command(name = "symgraph", version, about = "Symbolic image classification from scene and knowledge graphs")]
pub struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build knowledge graphs for scene-graph files and write a dataset bundle.
    Prepare(PrepareArgs),
    /// Train a model on a bundle.
    Train(TrainArgs),
    /// Score a checkpoint on one split of a bundle.
    Eval(EvalArgs),
    /// Train one model per GCN depth or per graph mode.
    Ablate(AblateArgs),
    /// Generate a self-contained synthetic dataset.
    Synth(SynthArgs),
    /// Compare backpropagated gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Directory of scene-graph JSON files.
    #[arg(long)]
    pub scenes: PathBuf,
    /// Fact store (TSV: relation, head, tail).
    #[arg(long)]
    pub facts: PathBuf,
    /// Concept vocabulary, one token per line.
    #[arg(long)]
    pub vocab: PathBuf,
    /// Label names, one per line.
    #[arg(long)]
    pub labels: PathBuf,
    /// Output bundle directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Key-value config file (TOML); flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relation whitelist, one relation per line.
    #[arg(long)]
    pub relations: Option<PathBuf>,
    /// Also admit facts whose tail is a detected token.
    #[arg(long)]
    pub match_tail: bool,
    /// Add the reverse of every knowledge edge.
    #[arg(long)]
    pub add_reverse: bool,
}

/// Model and training overrides shared by `train` and `ablate`. The GCN
/// depth and graph mode are separate because `ablate` sweeps them.
#[derive(Debug, Default, Args)]
pub struct RunFlags {
    /// Key-value config file (TOML); flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Word-vector width; read from the embedding file when omitted.
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub fusion: Option<FusionMode>,
    #[arg(long)]
    pub nonlinearity: Option<Nonlinearity>,
    #[arg(long)]
    pub output: Option<OutputKind>,
    /// Hidden widths of the classifier, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub mlp_hidden: Option<Vec<usize>>,
    /// One weight set for both graph towers.
    #[arg(long)]
    pub share_towers: bool,
    /// Fine-tune the word vectors.
    #[arg(long)]
    pub train_embeddings: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_shuffle: bool,
    /// Record measured epoch times in the run log.
    #[arg(long)]
    pub log_wall_time: bool,
    /// uniform_prior, top_k:N or fixed:T.
    #[arg(long)]
    pub threshold: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// GCN layers per tower.
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub graphs: Option<GraphMode>,
    /// Write validation attention weights to attention.csv.
    #[arg(long)]
    pub dump_attention: bool,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// uniform_prior, top_k:N or fixed:T; defaults to the head's rule.
    #[arg(long)]
    pub threshold: Option<String>,
    /// Write attention weights to attention.csv.
    #[arg(long)]
    pub dump_attention: bool,
}

#[derive(Debug, Args)]
#[group(id = "sweep", required = true, multiple = false)]
pub struct SweepArgs {
    /// GCN depths to compare, comma separated.
    #[arg(long, value_delimiter = ',', group = "sweep")]
    pub layers: Option<Vec<usize>>,
    /// Compare both graphs against each graph alone.
    #[arg(long, group = "sweep")]
    pub graphs: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// GCN layers per tower when sweeping graph modes.
    #[arg(long)]
    pub depth: Option<usize>,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Key-value config file (TOML); flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Label count.
    #[arg(long)]
    pub labels: Option<usize>,
    #[arg(long)]
    pub examples: Option<usize>,
    /// Probability of planting a random label's pattern.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub distractors: Option<usize>,
    /// planted, dual or chain.
    #[arg(long)]
    pub signal: Option<Signal>,
    /// Word-vector entries are uniform in [-scale, scale].
    #[arg(long)]
    pub scale: Option<f64>,
    /// Add reverse knowledge edges.
    #[arg(long)]
    pub add_reverse: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 6)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 8)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = 3)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub labels: usize,
    /// Fusion modes to check; concat and attention when omitted.
    #[arg(long, value_delimiter = ',')]
    pub fusion: Vec<FusionMode>,
    #[arg(long, default_value = "relu")]
    pub nonlinearity: Nonlinearity,
    #[arg(long, default_value = "softmax")]
    pub output: OutputKind,
    #[arg(long)]
    pub train_embeddings: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Central-difference step.
    #[arg(long)]
    pub step: Option<f64>,
    /// Corrupt the backward rule of one op kind.
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}
