use std::collections::BTreeSet;

use crate::graphs::{
    normalize_concept, validate_graph, FactStore, GraphEdge, GraphKind, GraphNode, LabeledGraph,
    RelationWhitelist, Vocabulary,
};

/// Knobs for knowledge-graph construction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct KnowledgeOptions {
    /// Also admit facts whose tail is a seed (head must then be in vocab).
    pub match_tail: bool,
    /// Add the reverse of every admitted edge.
    pub add_reverse: bool,
}

/// One-hop knowledge graph around the seed objects and attributes.
///
/// A fact `(r, a, b)` is admitted when `r` is whitelisted, `a` is a seed
/// token and `b` is in `vocab`; it contributes node `b` and edge `a -> b`
/// labeled `r`. The result is canonical (see [`validate_graph`]).
pub fn build_knowledge_graph(
    seeds: &[GraphNode],
    store: &FactStore,
    whitelist: &RelationWhitelist,
    vocab: &Vocabulary,
    options: KnowledgeOptions,
) -> LabeledGraph {
    let seed_tokens: BTreeSet<String> = seeds
        .iter()
        .flat_map(|n| std::iter::once(&n.object).chain(&n.attributes))
        .map(|t| normalize_concept(t))
        .filter(|t| !t.is_empty())
        .collect();

    let mut facts: BTreeSet<(String, String, String)> = BTreeSet::new();
    for seed in &seed_tokens {
        for t in store.with_head(seed) {
            if whitelist.contains(&t.relation) && vocab.contains(&t.tail) {
                facts.insert((t.head.clone(), t.tail.clone(), t.relation.clone()));
            }
        }
        if options.match_tail {
            for t in store.with_tail(seed) {
                if whitelist.contains(&t.relation) && vocab.contains(&t.head) {
                    facts.insert((t.head.clone(), t.tail.clone(), t.relation.clone()));
                }
            }
        }
    }

    let mut concepts = seed_tokens.clone();
    for (a, b, _) in &facts {
        concepts.insert(a.clone());
        concepts.insert(b.clone());
    }
    let nodes: Vec<GraphNode> = concepts.iter().map(GraphNode::new).collect();
    let position = |c: &str| concepts.iter().position(|x| x == c).expect("concept indexed");
    let mut edges = Vec::with_capacity(facts.len());
    for (a, b, r) in &facts {
        let (src, dst) = (position(a), position(b));
        edges.push(GraphEdge::new(src, dst, r.clone()));
        if options.add_reverse {
            edges.push(GraphEdge::new(dst, src, r.clone()));
        }
    }
    let g = LabeledGraph {
        kind: GraphKind::Knowledge,
        nodes,
        edges,
    };
    validate_graph(&g).expect("constructed graph is valid")
}
