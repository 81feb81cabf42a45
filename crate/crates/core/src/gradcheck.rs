//! Finite-difference check of the full model at toy sizes.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graphs::{GraphEdge, GraphKind, GraphNode, LabeledGraph};
use crate::model::{FusionMode, Model, ModelConfig, Nonlinearity, OutputKind, PreparedPair};
use crate::numerics::{central_difference, GroupError, OpKind, Tape, DEFAULT_STEP};
use crate::rng::child_rng;
use crate::training::loss_on_tape;

/// Largest relative error a parameter group may show and still pass.
pub const TOLERANCE: f64 = 1e-4;

const WORDS: [&str; 8] = ["car", "bottle", "dog", "red", "sit", "in", "on", "related"];
const OBJECTS: [&str; 4] = ["car", "bottle", "dog", "red car"];
const RELATIONS: [&str; 4] = ["sit in", "on", "RelatedTo", "in"];

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckSpec {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub gcn_layers: usize,
    pub num_labels: usize,
    pub fusion: FusionMode,
    pub nonlinearity: Nonlinearity,
    pub output: OutputKind,
    pub train_embeddings: bool,
    /// Upper bound on the node count of each random graph.
    pub max_nodes: usize,
    pub seed: u64,
    pub step: f64,
    /// Corrupt the backward rule of this op kind.
    pub fault: Option<OpKind>,
}

impl Default for GradcheckSpec {
    fn default() -> Self {
        GradcheckSpec {
            embed_dim: 6,
            hidden_dim: 8,
            gcn_layers: 3,
            num_labels: 4,
            fusion: FusionMode::Concat,
            nonlinearity: Nonlinearity::Relu,
            output: OutputKind::Softmax,
            train_embeddings: false,
            max_nodes: 5,
            seed: 0,
            step: DEFAULT_STEP,
            fault: None,
        }
    }
}

impl GradcheckSpec {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            gcn_layers: self.gcn_layers,
            num_labels: self.num_labels,
            fusion: self.fusion,
            nonlinearity: self.nonlinearity,
            output: self.output,
            train_embeddings: self.train_embeddings,
            seed: self.seed,
            ..ModelConfig::default()
        }
    }
}

fn random_graph(rng: &mut ChaCha8Rng, max_nodes: usize, kind: GraphKind) -> LabeledGraph {
    let n = rng.gen_range(1..=max_nodes.max(1));
    let nodes = (0..n)
        .map(|_| {
            let mut node = GraphNode::new(OBJECTS[rng.gen_range(0..OBJECTS.len())]);
            if rng.gen_bool(0.4) {
                node.attributes.push("red".into());
            }
            node
        })
        .collect();
    let edges = (0..rng.gen_range(0..=2 * n))
        .map(|_| {
            GraphEdge::new(
                rng.gen_range(0..n),
                rng.gen_range(0..n),
                RELATIONS[rng.gen_range(0..RELATIONS.len())],
            )
        })
        .collect();
    LabeledGraph { kind, nodes, edges }
}

fn forward_loss<'p>(
    model: &'p Model,
    tape: &mut Tape<'p>,
    input: &PreparedPair,
    targets: &BTreeSet<usize>,
) -> Result<crate::numerics::Var> {
    let vars = model.forward_on_tape(tape, input)?;
    loss_on_tape(tape, vars.probs, targets, model.config().output)
}

/// Worst relative error per parameter group between the backward pass and
/// central differences of the training loss on one random graph pair.
pub fn gradcheck(spec: &GradcheckSpec) -> Result<Vec<GroupError>> {
    if !(spec.step > 0.0 && spec.step.is_finite()) {
        return Err(Error::Config(format!("step must be positive, got {}", spec.step)));
    }
    let config = spec.model_config();
    config.validate()?;
    let mut rng = child_rng(spec.seed, "gradcheck");
    let mut table = EmbeddingTable::new(spec.embed_dim);
    for w in WORDS {
        let v: Vec<f64> = (0..spec.embed_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        table.insert(w, &v)?;
    }
    let scene = random_graph(&mut rng, spec.max_nodes, GraphKind::Scene);
    let knowledge = random_graph(&mut rng, spec.max_nodes, GraphKind::Knowledge);
    let targets: BTreeSet<usize> = [rng.gen_range(0..spec.num_labels)].into();

    let mut model = Model::new(config, spec.train_embeddings.then_some(&table))?;
    let input = model.prepare(&scene, &knowledge, &table)?;
    let grads = {
        let mut tape = Tape::new();
        if let Some(kind) = spec.fault {
            tape.inject_fault(kind);
        }
        let loss = forward_loss(&model, &mut tape, &input, &targets)?;
        tape.backward(loss)?
    };
    let layout = model.clone();
    central_difference(model.params_mut(), &grads, spec.step, |store| {
        let mut m = layout.clone();
        *m.params_mut() = store.clone();
        let mut tape = Tape::new();
        let loss = forward_loss(&m, &mut tape, &input, &targets)?;
        Ok(tape.value(loss).item().expect("scalar loss"))
    })
}
