//! Graph encoder, GCN towers, readout, fusion and the MLP head.
//!
//! Node states are `[n x hidden]` matrices. For node `i` with in-edges
//! `j -> i` (a `self` loop stands in when there are none) the encoder gives
//! `v_i = σ(mean_j W_enc [x_j ; e_ji])` and every GCN layer gives
//! `v_i = σ(mean_j W v_j)`. Messages are gathered per edge and averaged per
//! destination, so the cost is linear in the edge count.

mod checkpoint;
mod config;

use rand::Rng;

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graphs::LabeledGraph;
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::rng::child_rng;

pub use checkpoint::Checkpoint;
pub use config::{param_count, FusionMode, GraphMode, ModelConfig, Nonlinearity, OutputKind};

/// Word phrase used to embed a relation token: `RelatedTo` becomes
/// `related to`; tokens that already contain spaces are kept.
pub fn relation_phrase(relation: &str) -> String {
    let mut out = String::with_capacity(relation.len() + 4);
    let mut prev_lower = false;
    for c in relation.chars() {
        if c.is_uppercase() && prev_lower {
            out.push(' ');
        }
        prev_lower = c.is_lowercase() || c.is_ascii_digit();
        out.push(c);
    }
    out
}

/// Mean of the phrase vectors of a node's object and attribute tokens.
pub fn node_features(object: &str, attributes: &[String], table: &EmbeddingTable) -> Vec<f64> {
    let mut acc = table.embed_phrase(object);
    for a in attributes {
        for (o, v) in acc.iter_mut().zip(table.embed_phrase(a)) {
            *o += v;
        }
    }
    let count = 1 + attributes.len();
    if count > 1 {
        for o in &mut acc {
            *o /= count as f64;
        }
    }
    acc
}

fn node_weights(object: &str, attributes: &[String], table: &EmbeddingTable) -> Vec<(usize, f64)> {
    let scale = 1.0 / (1 + attributes.len()) as f64;
    let mut out: Vec<(usize, f64)> = Vec::new();
    for phrase in std::iter::once(object).chain(attributes.iter().map(String::as_str)) {
        for (r, w) in table.phrase_weights(phrase) {
            match out.iter_mut().find(|(row, _)| *row == r) {
                Some(slot) => slot.1 += w * scale,
                None => out.push((r, w * scale)),
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
enum EdgeInputs {
    /// `[m x 2·embed]` rows `[x_src ; e_rel]` per augmented edge.
    Dense(Tensor),
    /// Row weights into a trainable table, for the source node and relation.
    Weighted {
        node: Vec<Vec<(usize, f64)>>,
        relation: Vec<Vec<(usize, f64)>>,
    },
}

/// A canonical graph with its edge inputs resolved against a word-vector
/// table, ready for repeated forward passes.
#[derive(Clone, Debug)]
pub struct PreparedGraph {
    nodes: usize,
    src: Vec<usize>,
    dst: Vec<usize>,
    inputs: EdgeInputs,
}

impl PreparedGraph {
    pub fn new(g: &LabeledGraph, table: &EmbeddingTable, trainable: bool) -> Result<Self> {
        let n = g.node_count();
        for e in &g.edges {
            if e.src >= n || e.dst >= n {
                return Err(Error::Validation(format!("edge {} -> {} out of range", e.src, e.dst)));
            }
        }
        let augmented = g.augmented_edges();
        let src: Vec<usize> = augmented.iter().map(|e| e.0).collect();
        let dst: Vec<usize> = augmented.iter().map(|e| e.1).collect();
        let inputs = if trainable {
            let node: Vec<Vec<(usize, f64)>> = g
                .nodes
                .iter()
                .map(|nd| node_weights(&nd.object, &nd.attributes, table))
                .collect();
            EdgeInputs::Weighted {
                node: src.iter().map(|&s| node[s].clone()).collect(),
                relation: augmented
                    .iter()
                    .map(|e| table.phrase_weights(&relation_phrase(e.2)))
                    .collect(),
            }
        } else {
            let features: Vec<Vec<f64>> = g
                .nodes
                .iter()
                .map(|nd| node_features(&nd.object, &nd.attributes, table))
                .collect();
            let d = table.dim();
            let mut rows = Vec::with_capacity(augmented.len() * 2 * d);
            for &(s, _, rel) in &augmented {
                rows.extend_from_slice(&features[s]);
                rows.extend(table.embed_phrase(&relation_phrase(rel)));
            }
            EdgeInputs::Dense(Tensor::matrix(augmented.len(), 2 * d, rows)?)
        };
        Ok(PreparedGraph {
            nodes: n,
            src,
            dst,
            inputs,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn edge_count(&self) -> usize {
        self.src.len()
    }
}

fn activate(tape: &mut Tape<'_>, x: Var, nl: Nonlinearity) -> Result<Var> {
    match nl {
        Nonlinearity::Relu => tape.relu(x),
        Nonlinearity::Sigmoid => tape.sigmoid(x),
    }
}

/// Initial node states on the tape. `table` is the trainable word-vector
/// node when embeddings are learned.
pub fn encode_on_tape(
    tape: &mut Tape<'_>,
    g: &PreparedGraph,
    w_enc: Var,
    table: Option<Var>,
    nl: Nonlinearity,
) -> Result<Var> {
    let hidden = tape.shape(w_enc)[0];
    if g.nodes == 0 {
        return tape.constant(Tensor::zeros(&[0, hidden]));
    }
    let z = match (&g.inputs, table) {
        (EdgeInputs::Dense(t), _) => tape.constant(t.clone())?,
        (EdgeInputs::Weighted { node, relation }, Some(table)) => {
            let x = tape.row_combine(table, node.clone())?;
            let e = tape.row_combine(table, relation.clone())?;
            tape.concat_cols(x, e)?
        }
        (EdgeInputs::Weighted { .. }, None) => {
            return Err(Error::Config("graph prepared for trainable embeddings".into()))
        }
    };
    let messages = tape.matmul_bt(z, w_enc)?;
    let pooled = tape.scatter_mean(messages, &g.dst, g.nodes)?;
    activate(tape, pooled, nl)
}

/// One GCN layer on the tape.
pub fn gcn_on_tape(tape: &mut Tape<'_>, states: Var, g: &PreparedGraph, w: Var, nl: Nonlinearity) -> Result<Var> {
    let rows = tape.shape(states)[0];
    if rows != g.nodes {
        return Err(Error::dim("gcn_layer", tape.shape(states), &[g.nodes]));
    }
    if g.nodes == 0 {
        return Ok(states);
    }
    let transformed = tape.matmul_bt(states, w)?;
    let messages = tape.gather_rows(transformed, &g.src)?;
    let pooled = tape.scatter_mean(messages, &g.dst, g.nodes)?;
    activate(tape, pooled, nl)
}

/// Fuses the two readouts. Returns the fused vector and, for attention
/// modes, the weight vector `[α_kg, α_sg]`.
pub fn fuse_on_tape(
    tape: &mut Tape<'_>,
    kg: Var,
    sg: Var,
    mode: FusionMode,
    score_weights: Option<Var>,
) -> Result<(Var, Option<Var>)> {
    if tape.shape(kg) != tape.shape(sg) || tape.value(kg).rank() != 1 {
        return Err(Error::dim("fusion", tape.shape(kg), tape.shape(sg)));
    }
    match mode {
        FusionMode::Concat => {
            let product = tape.mul(kg, sg)?;
            Ok((tape.concat(&[kg, sg, product])?, None))
        }
        FusionMode::Attention | FusionMode::AttentionLearned => {
            let (s_kg, s_sg) = match (mode, score_weights) {
                (FusionMode::AttentionLearned, Some(w)) => (tape.dot(w, kg)?, tape.dot(w, sg)?),
                (FusionMode::AttentionLearned, None) => {
                    return Err(Error::Config("learned attention needs a score vector".into()))
                }
                _ => (tape.dot(kg, kg)?, tape.dot(sg, sg)?),
            };
            let scores = tape.concat(&[s_kg, s_sg])?;
            let alpha = tape.softmax(scores)?;
            let a_kg = tape.index(alpha, 0)?;
            let a_sg = tape.index(alpha, 1)?;
            let wk = tape.scale_by(kg, a_kg)?;
            let ws = tape.scale_by(sg, a_sg)?;
            Ok((tape.add(wk, ws)?, Some(alpha)))
        }
    }
}

/// MLP head: hidden layers with `nl`, then a linear layer. Returns logits
/// and output probabilities.
pub fn head_on_tape(
    tape: &mut Tape<'_>,
    fused: Var,
    hidden: &[(Var, Var)],
    out: (Var, Var),
    nl: Nonlinearity,
    output: OutputKind,
) -> Result<(Var, Var)> {
    let mut h = fused;
    for &(w, b) in hidden {
        let z = tape.matvec(w, h)?;
        let z = tape.add(z, b)?;
        h = activate(tape, z, nl)?;
    }
    let z = tape.matvec(out.0, h)?;
    let logits = tape.add(z, out.1)?;
    let probs = match output {
        OutputKind::Softmax => tape.softmax(logits)?,
        OutputKind::Sigmoid => tape.sigmoid(logits)?,
    };
    Ok((logits, probs))
}

#[derive(Clone, Debug)]
struct TowerIds {
    enc: ParamId,
    gcn: Vec<ParamId>,
}

#[derive(Clone, Debug)]
struct Layout {
    scene: Option<TowerIds>,
    knowledge: Option<TowerIds>,
    hidden: Vec<(ParamId, ParamId)>,
    out: (ParamId, ParamId),
    score: Option<ParamId>,
    embeddings: Option<ParamId>,
}

#[derive(Clone, Debug)]
enum Init {
    Xavier { fan_in: usize, fan_out: usize },
    Zero,
    Embeddings,
}

#[derive(Clone, Debug)]
pub(crate) struct ParamSpec {
    pub(crate) name: String,
    pub(crate) shape: Vec<usize>,
    init: Init,
}

fn tower_specs(prefix: &str, config: &ModelConfig) -> Vec<ParamSpec> {
    let (e, h) = (config.embed_dim, config.hidden_dim);
    let mut specs = vec![ParamSpec {
        name: format!("{prefix}.enc"),
        shape: vec![h, 2 * e],
        init: Init::Xavier { fan_in: 2 * e, fan_out: h },
    }];
    for l in 1..=config.gcn_layers {
        specs.push(ParamSpec {
            name: format!("{prefix}.gcn{l}"),
            shape: vec![h, h],
            init: Init::Xavier { fan_in: h, fan_out: h },
        });
    }
    specs
}

/// Parameters implied by `config`, in creation order.
pub(crate) fn param_specs(config: &ModelConfig, vocab_rows: Option<usize>) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    match (config.graphs, config.share_towers) {
        (GraphMode::Both, false) => {
            specs.extend(tower_specs("sg", config));
            specs.extend(tower_specs("kg", config));
        }
        (GraphMode::Both, true) => specs.extend(tower_specs("tower", config)),
        (GraphMode::SgOnly, _) => specs.extend(tower_specs("sg", config)),
        (GraphMode::KgOnly, _) => specs.extend(tower_specs("kg", config)),
    }
    let mut width = config.fusion_width();
    for (i, w) in config.mlp_widths().into_iter().enumerate() {
        specs.push(ParamSpec {
            name: format!("mlp{i}.w"),
            shape: vec![w, width],
            init: Init::Xavier { fan_in: width, fan_out: w },
        });
        specs.push(ParamSpec {
            name: format!("mlp{i}.b"),
            shape: vec![w],
            init: Init::Zero,
        });
        width = w;
    }
    let c = config.num_labels;
    specs.push(ParamSpec {
        name: "out.w".into(),
        shape: vec![c, width],
        init: Init::Xavier { fan_in: width, fan_out: c },
    });
    specs.push(ParamSpec {
        name: "out.b".into(),
        shape: vec![c],
        init: Init::Zero,
    });
    if config.fusion == FusionMode::AttentionLearned {
        specs.push(ParamSpec {
            name: "attn.score".into(),
            shape: vec![config.hidden_dim],
            init: Init::Xavier { fan_in: config.hidden_dim, fan_out: 1 },
        });
    }
    if let (true, Some(rows)) = (config.train_embeddings, vocab_rows) {
        specs.push(ParamSpec {
            name: "embeddings".into(),
            shape: vec![rows, config.embed_dim],
            init: Init::Embeddings,
        });
    }
    specs
}

/// Readouts and attention weights of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    /// `[α_kg, α_sg]` in attention modes.
    pub alpha: Option<[f64; 2]>,
    pub kg_readout: Vec<f64>,
    pub sg_readout: Vec<f64>,
    pub kg_node_norms: Vec<f64>,
    pub sg_node_norms: Vec<f64>,
}

/// Tape handles produced by [`Model::forward_on_tape`].
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub logits: Var,
    pub probs: Var,
    pub fused: Var,
    pub alpha: Option<Var>,
    pub kg_readout: Var,
    pub sg_readout: Var,
    pub kg_states: Option<Var>,
    pub sg_states: Option<Var>,
}

/// Both graphs of one image, prepared for the model.
#[derive(Clone, Debug)]
pub struct PreparedPair {
    pub scene: PreparedGraph,
    pub knowledge: PreparedGraph,
}

/// Network configuration plus its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    layout: Layout,
}

impl Model {
    /// Fresh model with seeded Xavier-uniform weights and zero biases.
    ///
    /// `table` is needed only when embeddings are trainable; it supplies the
    /// initial values of the `embeddings` parameter.
    pub fn new(config: ModelConfig, table: Option<&EmbeddingTable>) -> Result<Self> {
        config.validate()?;
        if config.train_embeddings && table.is_none() {
            return Err(Error::Config("trainable embeddings need the word-vector table".into()));
        }
        let rows = table.map(EmbeddingTable::len);
        let seed = config.seed;
        Model::build(config, rows, |spec| {
            Ok(match &spec.init {
                Init::Zero => Tensor::zeros(&spec.shape),
                Init::Embeddings => table.expect("checked above").to_tensor(),
                Init::Xavier { fan_in, fan_out } => {
                    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let mut rng = child_rng(seed, &format!("init/{}", spec.name));
                    let n: usize = spec.shape.iter().product();
                    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
                    Tensor::new(spec.shape.clone(), data)?
                }
            })
        })
    }

    fn build(
        config: ModelConfig,
        vocab_rows: Option<usize>,
        mut value: impl FnMut(&ParamSpec) -> Result<Tensor>,
    ) -> Result<Self> {
        let mut params = ParamStore::new();
        for spec in param_specs(&config, vocab_rows) {
            let v = value(&spec)?;
            if v.shape() != spec.shape.as_slice() {
                return Err(Error::dim("parameter", v.shape(), &spec.shape));
            }
            params.insert(spec.name.clone(), v)?;
        }
        let tower = |prefix: &str| TowerIds {
            enc: params.id(&format!("{prefix}.enc")).expect("created"),
            gcn: (1..=config.gcn_layers)
                .map(|l| params.id(&format!("{prefix}.gcn{l}")).expect("created"))
                .collect(),
        };
        let (scene, knowledge) = match (config.graphs, config.share_towers) {
            (GraphMode::Both, false) => (Some(tower("sg")), Some(tower("kg"))),
            (GraphMode::Both, true) => (Some(tower("tower")), Some(tower("tower"))),
            (GraphMode::SgOnly, _) => (Some(tower("sg")), None),
            (GraphMode::KgOnly, _) => (None, Some(tower("kg"))),
        };
        let hidden = (0..config.mlp_widths().len())
            .map(|i| {
                (
                    params.id(&format!("mlp{i}.w")).expect("created"),
                    params.id(&format!("mlp{i}.b")).expect("created"),
                )
            })
            .collect();
        let layout = Layout {
            scene,
            knowledge,
            hidden,
            out: (params.id("out.w").expect("created"), params.id("out.b").expect("created")),
            score: params.id("attn.score"),
            embeddings: params.id("embeddings"),
        };
        Ok(Model { config, params, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Resolves both graphs of an image against `table`.
    pub fn prepare(&self, scene: &LabeledGraph, knowledge: &LabeledGraph, table: &EmbeddingTable) -> Result<PreparedPair> {
        if table.dim() != self.config.embed_dim {
            return Err(Error::dim("embedding width", &[table.dim()], &[self.config.embed_dim]));
        }
        let trainable = self.config.train_embeddings;
        Ok(PreparedPair {
            scene: PreparedGraph::new(scene, table, trainable)?,
            knowledge: PreparedGraph::new(knowledge, table, trainable)?,
        })
    }

    fn tower_on_tape<'p>(
        &'p self,
        tape: &mut Tape<'p>,
        ids: &TowerIds,
        g: &PreparedGraph,
        table: Option<Var>,
    ) -> Result<(Var, Var)> {
        let nl = self.config.nonlinearity;
        let w_enc = tape.param(&self.params, ids.enc);
        let mut states = encode_on_tape(tape, g, w_enc, table, nl)?;
        for &id in &ids.gcn {
            let w = tape.param(&self.params, id);
            states = gcn_on_tape(tape, states, g, w, nl)?;
        }
        let readout = tape.sum_rows(states)?;
        Ok((states, readout))
    }

    /// Records the full forward pass of one image on `tape`.
    pub fn forward_on_tape<'p>(&'p self, tape: &mut Tape<'p>, input: &PreparedPair) -> Result<ForwardVars> {
        let h = self.config.hidden_dim;
        let table = self.layout.embeddings.map(|id| tape.param(&self.params, id));
        let (sg_states, sg_readout) = match &self.layout.scene {
            Some(ids) => {
                let (s, r) = self.tower_on_tape(tape, ids, &input.scene, table)?;
                (Some(s), r)
            }
            None => (None, tape.constant(Tensor::zeros(&[h]))?),
        };
        let (kg_states, kg_readout) = match &self.layout.knowledge {
            Some(ids) => {
                let (s, r) = self.tower_on_tape(tape, ids, &input.knowledge, table)?;
                (Some(s), r)
            }
            None => (None, tape.constant(Tensor::zeros(&[h]))?),
        };
        let score = self.layout.score.map(|id| tape.param(&self.params, id));
        let (fused, alpha) = fuse_on_tape(tape, kg_readout, sg_readout, self.config.fusion, score)?;
        let hidden: Vec<(Var, Var)> = self
            .layout
            .hidden
            .iter()
            .map(|&(w, b)| (tape.param(&self.params, w), tape.param(&self.params, b)))
            .collect();
        let out = (
            tape.param(&self.params, self.layout.out.0),
            tape.param(&self.params, self.layout.out.1),
        );
        let (logits, probs) = head_on_tape(tape, fused, &hidden, out, self.config.nonlinearity, self.config.output)?;
        Ok(ForwardVars {
            logits,
            probs,
            fused,
            alpha,
            kg_readout,
            sg_readout,
            kg_states,
            sg_states,
        })
    }

    /// Output probabilities and diagnostics for one image.
    pub fn forward(&self, input: &PreparedPair) -> Result<(Vec<f64>, Diagnostics)> {
        let mut tape = Tape::new();
        let vars = self.forward_on_tape(&mut tape, input)?;
        let norms = |v: Option<Var>| -> Vec<f64> {
            v.map(|v| {
                let t = tape.value(v);
                let (n, _) = t.dims2().expect("state matrix");
                (0..n).map(|i| t.row(i).iter().map(|x| x * x).sum::<f64>().sqrt()).collect()
            })
            .unwrap_or_default()
        };
        let diagnostics = Diagnostics {
            alpha: vars.alpha.map(|a| {
                let d = tape.value(a).data();
                [d[0], d[1]]
            }),
            kg_readout: tape.value(vars.kg_readout).data().to_vec(),
            sg_readout: tape.value(vars.sg_readout).data().to_vec(),
            kg_node_norms: norms(vars.kg_states),
            sg_node_norms: norms(vars.sg_states),
        };
        Ok((tape.value(vars.probs).data().to_vec(), diagnostics))
    }

    /// Runs only the MLP head on an already fused vector.
    pub fn classify(&self, fused: &[f64]) -> Result<Vec<f64>> {
        if fused.len() != self.config.fusion_width() {
            return Err(Error::dim("classify", &[fused.len()], &[self.config.fusion_width()]));
        }
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(fused.to_vec()))?;
        let hidden: Vec<(Var, Var)> = self
            .layout
            .hidden
            .iter()
            .map(|&(w, b)| (tape.param(&self.params, w), tape.param(&self.params, b)))
            .collect();
        let out = (
            tape.param(&self.params, self.layout.out.0),
            tape.param(&self.params, self.layout.out.1),
        );
        let (_, probs) = head_on_tape(&mut tape, x, &hidden, out, self.config.nonlinearity, self.config.output)?;
        Ok(tape.value(probs).data().to_vec())
    }

    /// Overwrites one parameter's value, keeping its shape.
    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self
            .params
            .id(name)
            .ok_or_else(|| Error::Config(format!("no parameter named {name}")))?;
        let p = self.params.get_mut(id);
        if p.value.shape() != value.shape() {
            return Err(Error::dim("set_param", value.shape(), p.value.shape()));
        }
        p.value = value;
        Ok(())
    }

    /// Encoder output of the scene tower (or the shared tower) for `g`.
    pub fn encode_scene(&self, g: &PreparedGraph) -> Result<Tensor> {
        let ids = self
            .layout
            .scene
            .as_ref()
            .or(self.layout.knowledge.as_ref())
            .expect("at least one tower");
        let mut tape = Tape::new();
        let table = self.layout.embeddings.map(|id| tape.param(&self.params, id));
        let w = tape.param(&self.params, ids.enc);
        let v = encode_on_tape(&mut tape, g, w, table, self.config.nonlinearity)?;
        Ok(tape.value(v).clone())
    }

    /// GCN stack of the scene tower applied to given initial states.
    pub fn propagate_scene(&self, initial: &Tensor, g: &PreparedGraph) -> Result<Tensor> {
        let ids = self
            .layout
            .scene
            .as_ref()
            .or(self.layout.knowledge.as_ref())
            .expect("at least one tower");
        let mut tape = Tape::new();
        let mut v = tape.constant(initial.clone())?;
        for &id in &ids.gcn {
            let w = tape.param(&self.params, id);
            v = gcn_on_tape(&mut tape, v, g, w, self.config.nonlinearity)?;
        }
        Ok(tape.value(v).clone())
    }
}

/// Initial node states of `g` under encoder weights `w_enc [hidden x 2·embed]`.
pub fn encode_nodes(g: &LabeledGraph, table: &EmbeddingTable, w_enc: &Tensor, nl: Nonlinearity) -> Result<Tensor> {
    let prepared = PreparedGraph::new(g, table, false)?;
    let mut tape = Tape::new();
    let w = tape.constant(w_enc.clone())?;
    let v = encode_on_tape(&mut tape, &prepared, w, None, nl)?;
    Ok(tape.value(v).clone())
}

/// One GCN layer: `v_i = σ(mean over in-neighbors j of W v_j)`.
pub fn gcn_layer(states: &Tensor, g: &LabeledGraph, w: &Tensor, nl: Nonlinearity) -> Result<Tensor> {
    let n = g.node_count();
    let augmented = g.augmented_edges();
    let prepared = PreparedGraph {
        nodes: n,
        src: augmented.iter().map(|e| e.0).collect(),
        dst: augmented.iter().map(|e| e.1).collect(),
        inputs: EdgeInputs::Dense(Tensor::zeros(&[augmented.len(), 0])),
    };
    let mut tape = Tape::new();
    let s = tape.constant(states.clone())?;
    let wv = tape.constant(w.clone())?;
    let v = gcn_on_tape(&mut tape, s, &prepared, wv, nl)?;
    Ok(tape.value(v).clone())
}

/// Column sum of node states; zeros of width `d` for a `[0 x d]` input.
pub fn readout_sum(states: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let s = tape.constant(states.clone())?;
    let r = tape.sum_rows(s)?;
    Ok(tape.value(r).clone())
}

/// `[kg ; sg ; kg ⊙ sg]`.
pub fn fuse_concat(kg: &[f64], sg: &[f64]) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::vector(kg.to_vec()))?;
    let b = tape.constant(Tensor::vector(sg.to_vec()))?;
    let (f, _) = fuse_on_tape(&mut tape, a, b, FusionMode::Concat, None)?;
    Ok(tape.value(f).data().to_vec())
}

/// Squared-norm attention fusion; returns the fused vector and `[α_kg, α_sg]`.
pub fn attention_fuse(kg: &[f64], sg: &[f64]) -> Result<(Vec<f64>, [f64; 2])> {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::vector(kg.to_vec()))?;
    let b = tape.constant(Tensor::vector(sg.to_vec()))?;
    let (f, alpha) = fuse_on_tape(&mut tape, a, b, FusionMode::Attention, None)?;
    let alpha = tape.value(alpha.expect("attention weights")).data();
    Ok((tape.value(f).data().to_vec(), [alpha[0], alpha[1]]))
}

#[cfg(test)]
mod tests;
