//! Scene graphs and per-image knowledge graphs.

mod facts;
mod knowledge;
mod scene;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::embeddings::normalize_token;
use crate::error::{Error, Result};

pub use facts::{load_vocabulary, FactStore, RelationWhitelist, Triple, Vocabulary, DEFAULT_RELATIONS};
pub use knowledge::{build_knowledge_graph, KnowledgeOptions};
pub use scene::{load_scene_graph, load_scene_graph_file, SceneDocument, SceneObject, SceneRecord, SceneRelation};

/// Relation token of the self-loop added to nodes without in-edges.
pub const SELF_RELATION: &str = "self";

/// Normalizes a concept or object token: underscores become spaces, then
/// the text is lowercased, trimmed and inner whitespace collapsed.
pub fn normalize_concept(token: &str) -> String {
    normalize_token(&token.replace('_', " "))
}

/// Relation tokens keep their case (`RelatedTo`) but not stray whitespace.
pub fn normalize_relation(token: &str) -> String {
    token.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GraphNode {
    pub object: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attributes: Vec<String>,
}

impl GraphNode {
    pub fn new(object: impl Into<String>) -> Self {
        GraphNode {
            object: object.into(),
            attributes: Vec::new(),
        }
    }

    pub fn with_attributes(object: impl Into<String>, attributes: &[&str]) -> Self {
        GraphNode {
            object: object.into(),
            attributes: attributes.iter().map(|a| a.to_string()).collect(),
        }
    }
}

/// Directed edge `src -> dst` labeled with a relation token.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GraphEdge {
    pub src: usize,
    pub dst: usize,
    pub relation: String,
}

impl GraphEdge {
    pub fn new(src: usize, dst: usize, relation: impl Into<String>) -> Self {
        GraphEdge {
            src,
            dst,
            relation: relation.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Scene,
    Knowledge,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledGraph {
    pub kind: GraphKind,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl LabeledGraph {
    pub fn empty(kind: GraphKind) -> Self {
        LabeledGraph {
            kind,
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// In-edges of every node as `(src, relation)`, with a `self` loop for
    /// nodes that have none. Edges are listed in graph order.
    pub fn in_edges_with_self_loops(&self) -> Vec<Vec<(usize, &str)>> {
        let mut incoming: Vec<Vec<(usize, &str)>> = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            incoming[e.dst].push((e.src, e.relation.as_str()));
        }
        for (i, list) in incoming.iter_mut().enumerate() {
            if list.is_empty() {
                list.push((i, SELF_RELATION));
            }
        }
        incoming
    }

    /// Flattened augmented edge list `(src, dst, relation)` grouped by
    /// destination node.
    pub fn augmented_edges(&self) -> Vec<(usize, usize, &str)> {
        self.in_edges_with_self_loops()
            .into_iter()
            .enumerate()
            .flat_map(|(dst, list)| list.into_iter().map(move |(src, rel)| (src, dst, rel)))
            .collect()
    }

    /// Applies a node permutation: node `i` moves to position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> LabeledGraph {
        assert_eq!(perm.len(), self.nodes.len());
        let mut nodes = vec![GraphNode::new(""); self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            nodes[perm[i]] = node.clone();
        }
        let edges = self
            .edges
            .iter()
            .map(|e| GraphEdge::new(perm[e.src], perm[e.dst], e.relation.clone()))
            .collect();
        LabeledGraph {
            kind: self.kind,
            nodes,
            edges,
        }
    }

    /// Adds the reverse of every edge, keeping the relation token.
    pub fn with_reverse_edges(&self) -> LabeledGraph {
        let mut g = self.clone();
        for e in &self.edges {
            g.edges.push(GraphEdge::new(e.dst, e.src, e.relation.clone()));
        }
        g
    }
}

/// Canonical form of a graph.
///
/// Tokens are normalized and exact duplicate edges dropped. Scene graphs
/// keep their node order. Knowledge graphs merge nodes with equal tokens,
/// sort them by token and sort edges, so the result does not depend on
/// construction order.
pub fn validate_graph(g: &LabeledGraph) -> Result<LabeledGraph> {
    let n = g.nodes.len();
    for (k, e) in g.edges.iter().enumerate() {
        if e.src >= n || e.dst >= n {
            return Err(Error::Validation(format!(
                "edge {k} ({} -> {}) out of range for {n} nodes",
                e.src, e.dst
            )));
        }
    }
    let mut nodes = Vec::with_capacity(n);
    for (i, node) in g.nodes.iter().enumerate() {
        let object = normalize_concept(&node.object);
        if object.is_empty() {
            return Err(Error::Validation(format!("node {i} has an empty object token")));
        }
        let mut seen = HashSet::new();
        let attributes = node
            .attributes
            .iter()
            .map(|a| normalize_concept(a))
            .filter(|a| !a.is_empty() && seen.insert(a.clone()))
            .collect();
        nodes.push(GraphNode { object, attributes });
    }
    let mut edges = Vec::with_capacity(g.edges.len());
    for (k, e) in g.edges.iter().enumerate() {
        let relation = normalize_relation(&e.relation);
        if relation.is_empty() {
            return Err(Error::Validation(format!("edge {k} has an empty relation token")));
        }
        edges.push(GraphEdge::new(e.src, e.dst, relation));
    }

    match g.kind {
        GraphKind::Scene => {
            let mut seen = HashSet::new();
            edges.retain(|e| seen.insert(e.clone()));
            Ok(LabeledGraph {
                kind: GraphKind::Scene,
                nodes,
                edges,
            })
        }
        GraphKind::Knowledge => {
            let mut merged: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for node in &nodes {
                let attrs = merged.entry(node.object.clone()).or_default();
                for a in &node.attributes {
                    if !attrs.contains(a) {
                        attrs.push(a.clone());
                    }
                }
            }
            let position: BTreeMap<&str, usize> = merged
                .keys()
                .enumerate()
                .map(|(i, k)| (k.as_str(), i))
                .collect();
            let remap: Vec<usize> = nodes.iter().map(|nd| position[nd.object.as_str()]).collect();
            let mut edges: Vec<GraphEdge> = edges
                .into_iter()
                .map(|e| GraphEdge::new(remap[e.src], remap[e.dst], e.relation))
                .collect();
            edges.sort();
            edges.dedup();
            let nodes = merged
                .into_iter()
                .map(|(object, attributes)| GraphNode { object, attributes })
                .collect();
            Ok(LabeledGraph {
                kind: GraphKind::Knowledge,
                nodes,
                edges,
            })
        }
    }
}
