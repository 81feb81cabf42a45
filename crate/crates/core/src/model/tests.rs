use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::graphs::{GraphEdge, GraphKind, GraphNode};
use crate::numerics::{central_difference, sgd_step, DEFAULT_STEP};

const WORDS: &[&str] = &["car", "red", "bottle", "sit", "in", "on", "self", "related", "to", "dog", "big"];

fn table(dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = EmbeddingTable::new(dim);
    for w in WORDS {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        t.insert(w, &v).unwrap();
    }
    t
}

fn random_graph(rng: &mut ChaCha8Rng, max_nodes: usize, kind: GraphKind) -> LabeledGraph {
    let objects = ["car", "bottle", "dog", "red car", "big dog"];
    let relations = ["sit in", "on", "RelatedTo", "in"];
    let n = rng.gen_range(1..=max_nodes);
    let nodes = (0..n)
        .map(|_| {
            let mut node = GraphNode::new(objects[rng.gen_range(0..objects.len())]);
            if rng.gen_bool(0.4) {
                node.attributes.push("red".into());
            }
            node
        })
        .collect();
    let m = rng.gen_range(0..=2 * n);
    let edges = (0..m)
        .map(|_| {
            GraphEdge::new(
                rng.gen_range(0..n),
                rng.gen_range(0..n),
                relations[rng.gen_range(0..relations.len())],
            )
        })
        .collect();
    LabeledGraph { kind, nodes, edges }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// In-edge lists `(src, relation)` with a self loop for in-degree 0, built
/// directly from the edge list.
fn incoming(g: &LabeledGraph) -> Vec<Vec<(usize, String)>> {
    (0..g.node_count())
        .map(|i| {
            let list: Vec<(usize, String)> = g
                .edges
                .iter()
                .filter(|e| e.dst == i)
                .map(|e| (e.src, e.relation.clone()))
                .collect();
            if list.is_empty() {
                vec![(i, "self".to_string())]
            } else {
                list
            }
        })
        .collect()
}

fn max_diff(a: &Tensor, b: &[Vec<f64>]) -> f64 {
    let (n, d) = a.dims2().unwrap();
    assert_eq!(n, b.len());
    let mut m: f64 = 0.0;
    for i in 0..n {
        for k in 0..d {
            m = m.max((a.get2(i, k) - b[i][k]).abs());
        }
    }
    m
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn toy_config() -> ModelConfig {
    ModelConfig {
        embed_dim: 4,
        hidden_dim: 5,
        gcn_layers: 2,
        num_labels: 3,
        mlp_hidden: Some(vec![4]),
        seed: 7,
        ..ModelConfig::default()
    }
}

fn node(object: &str) -> GraphNode {
    GraphNode::new(object)
}

#[test]
fn single_node_self_loop_recovers_relu_of_features() {
    let t = table(3, 1);
    let g = LabeledGraph {
        kind: GraphKind::Scene,
        nodes: vec![node("car")],
        edges: vec![],
    };
    // [I | 0] selects the node features.
    let mut w = Tensor::zeros(&[3, 6]);
    for i in 0..3 {
        w.data_mut()[i * 6 + i] = 1.0;
    }
    let v = encode_nodes(&g, &t, &w, Nonlinearity::Relu).unwrap();
    let x = t.get("car").unwrap();
    let expected: Vec<f64> = x.iter().map(|&a| relu(a)).collect();
    assert_eq!(v.row(0), expected.as_slice());
}

#[test]
fn zero_encoder_gives_zero_states() {
    let t = table(3, 1);
    let g = LabeledGraph {
        kind: GraphKind::Scene,
        nodes: vec![node("car"), node("bottle")],
        edges: vec![GraphEdge::new(0, 1, "in")],
    };
    let v = encode_nodes(&g, &t, &Tensor::zeros(&[4, 6]), Nonlinearity::Relu).unwrap();
    assert!(v.data().iter().all(|&x| x == 0.0));
    assert_eq!(v.shape(), &[2, 4]);
}

#[test]
fn empty_graph_encodes_to_empty_matrix() {
    let t = table(3, 1);
    let g = LabeledGraph::empty(GraphKind::Scene);
    let v = encode_nodes(&g, &t, &Tensor::zeros(&[4, 6]), Nonlinearity::Relu).unwrap();
    assert_eq!(v.shape(), &[0, 4]);
    assert_eq!(readout_sum(&v).unwrap().data(), &[0.0; 4]);
}

#[test]
fn encoder_matches_dense_loop_reference() {
    let (d, h) = (3, 4);
    let t = table(d, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let g = random_graph(&mut rng, 4, GraphKind::Scene);
        let w = random_matrix(&mut rng, h, 2 * d);
        let got = encode_nodes(&g, &t, &w, Nonlinearity::Relu).unwrap();

        let features: Vec<Vec<f64>> = g
            .nodes
            .iter()
            .map(|nd| {
                let mut parts = vec![t.embed_phrase(&nd.object)];
                parts.extend(nd.attributes.iter().map(|a| t.embed_phrase(a)));
                (0..d).map(|k| parts.iter().map(|p| p[k]).sum::<f64>() / parts.len() as f64).collect()
            })
            .collect();
        let mut expected = Vec::new();
        for list in incoming(&g) {
            let mut acc = vec![0.0; h];
            for (j, rel) in &list {
                let e = t.embed_phrase(&relation_phrase(rel));
                let input: Vec<f64> = features[*j].iter().chain(e.iter()).copied().collect();
                for (r, slot) in acc.iter_mut().enumerate() {
                    *slot += (0..2 * d).map(|c| w.get2(r, c) * input[c]).sum::<f64>();
                }
            }
            expected.push(acc.iter().map(|s| relu(s / list.len() as f64)).collect());
        }
        assert!(max_diff(&got, &expected) < 1e-12);
    }
}

#[test]
fn gcn_single_edge_identity() {
    let g = LabeledGraph {
        kind: GraphKind::Scene,
        nodes: vec![node("a"), node("b")],
        edges: vec![GraphEdge::new(0, 1, "on")],
    };
    let states = Tensor::from_rows(&[vec![1.0, -1.0, 2.0], vec![5.0, 5.0, 5.0]]).unwrap();
    let out = gcn_layer(&states, &g, &Tensor::identity(3), Nonlinearity::Relu).unwrap();
    assert_eq!(out.row(1), &[1.0, 0.0, 2.0]);
    // node 0 has only its self loop
    assert_eq!(out.row(0), &[1.0, 0.0, 2.0]);
}

#[test]
fn gcn_opposite_neighbors_cancel() {
    let g = LabeledGraph {
        kind: GraphKind::Scene,
        nodes: vec![node("a"), node("b"), node("c")],
        edges: vec![GraphEdge::new(0, 2, "on"), GraphEdge::new(1, 2, "on")],
    };
    let states = Tensor::from_rows(&[vec![0.3, -2.0], vec![-0.3, 2.0], vec![9.0, 9.0]]).unwrap();
    let out = gcn_layer(&states, &g, &Tensor::identity(2), Nonlinearity::Relu).unwrap();
    assert_eq!(out.row(2), &[0.0, 0.0]);
}

/// `σ(Â · (V Wᵀ))` with an explicit row-normalized adjacency matrix.
pub(crate) fn dense_gcn(states: &Tensor, g: &LabeledGraph, w: &Tensor) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let (_, h) = states.dims2().unwrap();
    let mut adj = vec![vec![0.0; n]; n];
    for e in &g.edges {
        adj[e.dst][e.src] += 1.0;
    }
    for (i, row) in adj.iter_mut().enumerate() {
        let deg: f64 = row.iter().sum();
        if deg == 0.0 {
            row[i] = 1.0;
        } else {
            row.iter_mut().for_each(|a| *a /= deg);
        }
    }
    let transformed: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..h).map(|r| (0..h).map(|c| w.get2(r, c) * states.get2(j, c)).sum()).collect())
        .collect();
    (0..n)
        .map(|i| (0..h).map(|k| relu((0..n).map(|j| adj[i][j] * transformed[j][k]).sum())).collect())
        .collect()
}

#[test]
fn gcn_matches_dense_adjacency_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..30 {
        let g = random_graph(&mut rng, 6, GraphKind::Scene);
        let h = 4;
        let states = random_matrix(&mut rng, g.node_count(), h);
        let w = random_matrix(&mut rng, h, h);
        let got = gcn_layer(&states, &g, &w, Nonlinearity::Relu).unwrap();
        assert!(max_diff(&got, &dense_gcn(&states, &g, &w)) < 1e-12);
    }
}

#[test]
fn gcn_rejects_row_mismatch() {
    let g = LabeledGraph {
        kind: GraphKind::Scene,
        nodes: vec![node("a")],
        edges: vec![],
    };
    assert!(gcn_layer(&Tensor::zeros(&[2, 3]), &g, &Tensor::identity(3), Nonlinearity::Relu).is_err());
}

#[test]
fn readout_cases() {
    let one = Tensor::from_rows(&[vec![1.5, -2.0]]).unwrap();
    assert_eq!(readout_sum(&one).unwrap().data(), &[1.5, -2.0]);
    let empty = Tensor::zeros(&[0, 3]);
    assert_eq!(readout_sum(&empty).unwrap().data(), &[0.0, 0.0, 0.0]);
    let rows = vec![vec![0.1, 0.2], vec![0.3, -0.7], vec![1e-3, 5.0]];
    let a = readout_sum(&Tensor::from_rows(&rows).unwrap()).unwrap();
    let rev: Vec<Vec<f64>> = rows.iter().rev().cloned().collect();
    let b = readout_sum(&Tensor::from_rows(&rev).unwrap()).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-9);
}

#[test]
fn concat_fusion_cases() {
    assert_eq!(fuse_concat(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 3.0, 8.0]);
    assert_eq!(fuse_concat(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), vec![0.0, 0.0, 3.0, 4.0, 0.0, 0.0]);
    assert!(fuse_concat(&[1.0], &[1.0, 2.0]).is_err());
    let c = ModelConfig::default();
    assert_eq!(c.fusion_width(), 1536);
}

#[test]
fn attention_equal_norms_is_midpoint() {
    let (fused, alpha) = attention_fuse(&[3.0, 4.0], &[5.0, 0.0]).unwrap();
    assert_eq!(alpha, [0.5, 0.5]);
    assert_eq!(fused, vec![4.0, 2.0]);
}

#[test]
fn attention_analytic_thirds() {
    let (_, alpha) = attention_fuse(&[1.0, 0.0], &[0.0, (1.0 + 2f64.ln()).sqrt()]).unwrap();
    assert!((alpha[0] - 1.0 / 3.0).abs() < 1e-12);
    assert!((alpha[1] - 2.0 / 3.0).abs() < 1e-12);
    assert!(attention_fuse(&[1.0], &[1.0, 2.0]).is_err());
}

proptest! {
    #[test]
    fn attention_weights_form_a_simplex(
        kg in prop::collection::vec(-3.0f64..3.0, 4),
        sg in prop::collection::vec(-3.0f64..3.0, 4),
    ) {
        let (_, alpha) = attention_fuse(&kg, &sg).unwrap();
        prop_assert!(alpha[0] >= 0.0 && alpha[1] >= 0.0);
        prop_assert!((alpha[0] + alpha[1] - 1.0).abs() <= 1e-12);
        // a sign flip and a coordinate swap keep both squared norms
        let kg2: Vec<f64> = kg.iter().rev().map(|x| -x).collect();
        let sg2: Vec<f64> = sg.iter().rev().copied().collect();
        let (_, beta) = attention_fuse(&kg2, &sg2).unwrap();
        prop_assert!((alpha[0] - beta[0]).abs() <= 1e-12);
    }
}

#[test]
fn zero_head_is_uniform() {
    let config = ModelConfig {
        num_labels: 4,
        ..toy_config()
    };
    let mut m = Model::new(config.clone(), None).unwrap();
    for name in ["mlp0.w", "out.w"] {
        let shape = m.params().by_name(name).unwrap().value.shape().to_vec();
        m.set_param(name, Tensor::zeros(&shape)).unwrap();
    }
    let p = m.classify(&vec![0.7; config.fusion_width()]).unwrap();
    assert_eq!(p, vec![0.25; 4]);
    assert!(m.classify(&[1.0]).is_err());
}

#[test]
fn head_outputs_sum_to_one() {
    let m = Model::new(toy_config(), None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let x: Vec<f64> = (0..15).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let p = m.classify(&x).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn hand_sized_head() {
    let config = ModelConfig {
        embed_dim: 1,
        hidden_dim: 2,
        gcn_layers: 1,
        num_labels: 2,
        fusion: FusionMode::Attention,
        mlp_hidden: Some(vec![2]),
        ..ModelConfig::default()
    };
    let mut m = Model::new(config, None).unwrap();
    m.set_param("mlp0.w", Tensor::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0]]).unwrap()).unwrap();
    m.set_param("mlp0.b", Tensor::vector(vec![0.0, -1.0])).unwrap();
    m.set_param("out.w", Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()).unwrap();
    m.set_param("out.b", Tensor::vector(vec![0.5, 0.0])).unwrap();
    // hidden = relu([1-2, 0.5+4-1]) = [0, 3.5]; logits = [0.5, 3.5]
    let p = m.classify(&[1.0, 2.0]).unwrap();
    let z = 0.5f64.exp() + 3.5f64.exp();
    assert!((p[0] - 0.5f64.exp() / z).abs() < 1e-15);
    assert!((p[1] - 3.5f64.exp() / z).abs() < 1e-15);
}

fn prepared(m: &Model, sg: &LabeledGraph, kg: &LabeledGraph, t: &EmbeddingTable) -> PreparedPair {
    m.prepare(sg, kg, t).unwrap()
}

#[test]
fn empty_graphs_reduce_to_bias_path() {
    let config = toy_config();
    let t = table(config.embed_dim, 4);
    let mut m = Model::new(config, None).unwrap();
    m.set_param("mlp0.b", Tensor::vector(vec![0.3, -0.2, 1.0, 0.0])).unwrap();
    m.set_param("out.b", Tensor::vector(vec![0.1, 0.0, -0.4])).unwrap();
    let empty_sg = LabeledGraph::empty(GraphKind::Scene);
    let empty_kg = LabeledGraph::empty(GraphKind::Knowledge);
    let (p, diag) = m.forward(&prepared(&m, &empty_sg, &empty_kg, &t)).unwrap();
    assert!(diag.kg_readout.iter().chain(&diag.sg_readout).all(|&x| x == 0.0));

    let b0 = m.params().by_name("mlp0.b").unwrap().value.clone();
    let hidden: Vec<f64> = b0.data().iter().map(|&x| relu(x)).collect();
    let w = &m.params().by_name("out.w").unwrap().value;
    let b = m.params().by_name("out.b").unwrap().value.data().to_vec();
    let logits: Vec<f64> = (0..3).map(|r| (0..4).map(|c| w.get2(r, c) * hidden[c]).sum::<f64>() + b[r]).collect();
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    for (pi, li) in p.iter().zip(&logits) {
        assert!((pi - li.exp() / z).abs() < 1e-14);
    }
}

#[test]
fn extra_layer_is_one_more_activation() {
    let t = table(4, 6);
    let g = LabeledGraph {
        kind: GraphKind::Scene,
        nodes: vec![GraphNode::with_attributes("car", &["red"])],
        edges: vec![],
    };
    let kg = LabeledGraph::empty(GraphKind::Knowledge);
    let k1 = Model::new(ModelConfig { gcn_layers: 1, ..toy_config() }, None).unwrap();
    let k2 = Model::new(ModelConfig { gcn_layers: 2, ..toy_config() }, None).unwrap();
    let (_, d1) = k1.forward(&prepared(&k1, &g, &kg, &t)).unwrap();
    let (_, d2) = k2.forward(&prepared(&k2, &g, &kg, &t)).unwrap();
    let w2 = &k2.params().by_name("sg.gcn2").unwrap().value;
    let h = w2.shape()[0];
    let unrolled: Vec<f64> = (0..h)
        .map(|r| relu((0..h).map(|c| w2.get2(r, c) * d1.sg_readout[c]).sum()))
        .collect();
    for (a, b) in unrolled.iter().zip(&d2.sg_readout) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn shared_towers_with_identical_inputs_fuse_to_the_readout() {
    let config = ModelConfig {
        share_towers: true,
        fusion: FusionMode::Attention,
        ..toy_config()
    };
    let t = table(config.embed_dim, 8);
    let m = Model::new(config, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = random_graph(&mut rng, 4, GraphKind::Scene);
    let input = prepared(&m, &g, &g, &t);
    let mut tape = Tape::new();
    let vars = m.forward_on_tape(&mut tape, &input).unwrap();
    assert_eq!(tape.value(vars.fused), tape.value(vars.sg_readout));
    assert_eq!(tape.value(vars.fused), tape.value(vars.kg_readout));
}

#[test]
fn kg_only_concat_zeroes_scene_blocks() {
    let config = ModelConfig {
        graphs: GraphMode::KgOnly,
        ..toy_config()
    };
    let t = table(config.embed_dim, 8);
    let m = Model::new(config.clone(), None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sg = random_graph(&mut rng, 4, GraphKind::Scene);
    let kg = random_graph(&mut rng, 4, GraphKind::Knowledge);
    let input = prepared(&m, &sg, &kg, &t);
    let mut tape = Tape::new();
    let vars = m.forward_on_tape(&mut tape, &input).unwrap();
    let h = config.hidden_dim;
    let fused = tape.value(vars.fused).data();
    assert!(fused[h..].iter().all(|&x| x == 0.0));
    assert!(m.params().by_name("sg.enc").is_none());
}

#[test]
fn node_permutation_leaves_probabilities_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for fusion in [FusionMode::Concat, FusionMode::Attention] {
        let config = ModelConfig { fusion, ..toy_config() };
        let t = table(config.embed_dim, 12);
        let m = Model::new(config, None).unwrap();
        for _ in 0..10 {
            let sg = random_graph(&mut rng, 6, GraphKind::Scene);
            let kg = random_graph(&mut rng, 6, GraphKind::Knowledge);
            let (p, _) = m.forward(&prepared(&m, &sg, &kg, &t)).unwrap();
            let mut perm_s: Vec<usize> = (0..sg.node_count()).collect();
            let mut perm_k: Vec<usize> = (0..kg.node_count()).collect();
            perm_s.reverse();
            perm_k.rotate_left(1);
            let (q, _) = m
                .forward(&prepared(&m, &sg.permuted(&perm_s), &kg.permuted(&perm_k), &t))
                .unwrap();
            for (a, b) in p.iter().zip(&q) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn relation_tokens_only_reach_the_encoder() {
    let config = toy_config();
    let t = table(config.embed_dim, 13);
    let m = Model::new(config, None).unwrap();
    let g = LabeledGraph {
        kind: GraphKind::Scene,
        nodes: vec![node("car"), node("bottle"), node("dog")],
        edges: vec![GraphEdge::new(0, 1, "in"), GraphEdge::new(2, 1, "on"), GraphEdge::new(1, 2, "sit in")],
    };
    let mut changed = g.clone();
    changed.edges[1].relation = "RelatedTo".into();
    let pg = PreparedGraph::new(&g, &t, false).unwrap();
    let pc = PreparedGraph::new(&changed, &t, false).unwrap();

    let v0 = m.encode_scene(&pg).unwrap();
    let v0_changed = m.encode_scene(&pc).unwrap();
    assert!(v0.max_abs_diff(&v0_changed) > 0.0);
    // patch the changed encoding into the original graph's propagation
    let patched = m.propagate_scene(&v0_changed, &pg).unwrap();
    let direct = m.propagate_scene(&v0_changed, &pc).unwrap();
    assert_eq!(patched, direct);
}

#[test]
fn forward_never_fails_on_empty_graphs() {
    for fusion in [FusionMode::Concat, FusionMode::Attention, FusionMode::AttentionLearned] {
        for graphs in [GraphMode::Both, GraphMode::SgOnly, GraphMode::KgOnly] {
            let config = ModelConfig { fusion, graphs, ..toy_config() };
            let t = table(config.embed_dim, 1);
            let m = Model::new(config, None).unwrap();
            let input = prepared(&m, &LabeledGraph::empty(GraphKind::Scene), &LabeledGraph::empty(GraphKind::Knowledge), &t);
            let (p, _) = m.forward(&input).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

fn gradcheck_model(config: ModelConfig, table: Option<&EmbeddingTable>) {
    let t = table.cloned().unwrap_or_else(|| self::table(config.embed_dim, 31));
    let mut model = Model::new(config, table).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let sg = random_graph(&mut rng, 4, GraphKind::Scene);
    let kg = random_graph(&mut rng, 4, GraphKind::Knowledge);
    let input = model.prepare(&sg, &kg, &t).unwrap();

    let grads = {
        let mut tape = Tape::new();
        let vars = model.forward_on_tape(&mut tape, &input).unwrap();
        let l = nll_first(&mut tape, vars.probs);
        tape.backward(l).unwrap()
    };
    let config = model.config().clone();
    let layout_model = model.clone();
    let errors = central_difference(model.params_mut(), &grads, DEFAULT_STEP, |store| {
        let mut m = layout_model.clone();
        *m.params_mut() = store.clone();
        let mut tape = Tape::new();
        let vars = m.forward_on_tape(&mut tape, &input)?;
        let l = nll_first(&mut tape, vars.probs);
        Ok(tape.value(l).item().expect("scalar loss"))
    })
    .unwrap();
    for e in errors {
        assert!(e.max_rel_error < 1e-4, "{:?} {:?}", config.fusion, e);
    }
}

fn nll_first(tape: &mut Tape<'_>, probs: Var) -> Var {
    let p0 = tape.index(probs, 0).unwrap();
    let p0 = tape.add_scalar(p0, 1e-12).unwrap();
    let l = tape.log(p0).unwrap();
    tape.scale(l, -1.0).unwrap()
}

#[test]
fn full_model_gradients_match_finite_differences() {
    for fusion in [FusionMode::Concat, FusionMode::Attention, FusionMode::AttentionLearned] {
        gradcheck_model(ModelConfig { fusion, nonlinearity: Nonlinearity::Sigmoid, ..toy_config() }, None);
    }
    gradcheck_model(ModelConfig { fusion: FusionMode::Concat, ..toy_config() }, None);
}

#[test]
fn trainable_embedding_gradients_match_finite_differences() {
    let config = ModelConfig {
        train_embeddings: true,
        nonlinearity: Nonlinearity::Sigmoid,
        ..toy_config()
    };
    let t = table(config.embed_dim, 31);
    gradcheck_model(config, Some(&t));
}

#[test]
fn param_count_matches_scalars_moved_by_sgd() {
    let configs = [
        toy_config(),
        ModelConfig { fusion: FusionMode::Attention, ..toy_config() },
        ModelConfig { fusion: FusionMode::AttentionLearned, share_towers: true, ..toy_config() },
        ModelConfig { graphs: GraphMode::SgOnly, mlp_hidden: Some(vec![3, 2]), ..toy_config() },
        ModelConfig {
            embed_dim: 2,
            hidden_dim: 3,
            gcn_layers: 1,
            num_labels: 2,
            mlp_hidden: Some(vec![3]),
            ..ModelConfig::default()
        },
    ];
    for config in configs {
        let mut m = Model::new(config.clone(), None).unwrap();
        let before: Vec<Vec<f64>> = m.params().iter().map(|p| p.value.data().to_vec()).collect();
        for p in m.params_mut().iter_mut() {
            p.grad = Tensor::full(p.value.shape(), 1.0);
        }
        sgd_step(m.params_mut(), 0.5).unwrap();
        let changed: usize = m
            .params()
            .iter()
            .zip(&before)
            .map(|(p, b)| p.value.data().iter().zip(b).filter(|(x, y)| x != y).count())
            .sum();
        assert_eq!(changed, param_count(&config));
        assert_eq!(m.params().scalar_count(), param_count(&config));
    }
}

#[test]
fn init_is_seeded_and_per_name() {
    let a = Model::new(toy_config(), None).unwrap();
    let b = Model::new(toy_config(), None).unwrap();
    assert_eq!(a.params().by_name("sg.enc"), b.params().by_name("sg.enc"));
    assert_ne!(a.params().by_name("sg.enc").unwrap().value, a.params().by_name("kg.enc").unwrap().value);
    let bound = (6.0f64 / (8 + 5) as f64).sqrt();
    let enc = &a.params().by_name("sg.enc").unwrap().value;
    assert!(enc.data().iter().all(|x| x.abs() <= bound));
    assert!(a.params().by_name("out.b").unwrap().value.data().iter().all(|&x| x == 0.0));
    // the scene tower does not depend on which other factors are ablated
    let k = Model::new(ModelConfig { graphs: GraphMode::SgOnly, ..toy_config() }, None).unwrap();
    assert_eq!(a.params().by_name("sg.enc"), k.params().by_name("sg.enc"));
}

#[test]
fn prepare_rejects_wrong_table_width() {
    let m = Model::new(toy_config(), None).unwrap();
    let t = table(3, 1);
    let g = LabeledGraph::empty(GraphKind::Scene);
    assert!(m.prepare(&g, &g, &t).is_err());
}

#[test]
fn relation_phrases() {
    assert_eq!(relation_phrase("RelatedTo"), "Related To");
    assert_eq!(relation_phrase("sit in"), "sit in");
    assert_eq!(relation_phrase("self"), "self");
}

#[test]
fn checkpoint_rejects_foreign_documents() {
    let m = Model::new(toy_config(), None).unwrap();
    let json = Checkpoint::from_model(&m, &["a".into(), "b".into(), "c".into()]).to_json();
    assert!(Checkpoint::from_json(&json.replace("symgraph-checkpoint", "other")).is_err());
    assert!(Checkpoint::from_json("{").is_err());
    let mut ckpt = Checkpoint::from_json(&json).unwrap();
    ckpt.config.gcn_layers = 3;
    assert!(ckpt.to_model().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn checkpoint_round_trip_is_bit_exact(
        seed in any::<u64>(),
        special in prop::sample::select(vec![0.1, -0.0, 1e-310, f64::MAX, f64::MIN_POSITIVE, 1.0 / 3.0]),
        fusion in prop::sample::select(vec![FusionMode::Concat, FusionMode::Attention, FusionMode::AttentionLearned]),
    ) {
        let config = ModelConfig { seed, fusion, ..toy_config() };
        let mut m = Model::new(config, None).unwrap();
        let mut b = m.params().by_name("out.b").unwrap().value.clone();
        b.data_mut()[0] = special;
        m.set_param("out.b", b).unwrap();
        let labels = vec!["x".to_string(), "y".into(), "z".into()];
        let text = Checkpoint::from_model(&m, &labels).to_json();
        let back = Checkpoint::from_json(&text).unwrap();
        prop_assert_eq!(&back.labels, &labels);
        let restored = back.to_model().unwrap();
        prop_assert_eq!(restored.config(), m.config());
        for (p, q) in m.params().iter().zip(restored.params().iter()) {
            prop_assert_eq!(&p.name, &q.name);
            let bits_p: Vec<u64> = p.value.data().iter().map(|x| x.to_bits()).collect();
            let bits_q: Vec<u64> = q.value.data().iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(bits_p, bits_q);
        }
    }
}
