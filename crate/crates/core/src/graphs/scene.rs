use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{normalize_concept, validate_graph, GraphEdge, GraphKind, GraphNode, LabeledGraph};

/// Per-image scene-graph document as exported by an upstream detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDocument {
    pub image_id: String,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub relations: Vec<SceneRelation>,
    #[serde(default)]
    pub labels: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub name: String,
    #[serde(default)]
    pub attributes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneRelation {
    pub subj: usize,
    pub pred: String,
    pub obj: usize,
}

/// A parsed scene-graph document.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneRecord {
    pub image_id: String,
    pub graph: LabeledGraph,
    pub labels: Vec<String>,
}

impl SceneDocument {
    /// Checks references and converts to a canonical scene graph.
    pub fn into_record(self) -> Result<SceneRecord> {
        let n = self.objects.len();
        for (i, o) in self.objects.iter().enumerate() {
            if normalize_concept(&o.name).is_empty() {
                return Err(schema(format!("objects[{i}].name"), "missing object token"));
            }
        }
        for (i, r) in self.relations.iter().enumerate() {
            if r.subj >= n {
                return Err(schema(format!("relations[{i}].subj"), format!("index {} of {n} objects", r.subj)));
            }
            if r.obj >= n {
                return Err(schema(format!("relations[{i}].obj"), format!("index {} of {n} objects", r.obj)));
            }
            if r.pred.trim().is_empty() {
                return Err(schema(format!("relations[{i}].pred"), "empty predicate"));
            }
        }
        let graph = LabeledGraph {
            kind: GraphKind::Scene,
            nodes: self
                .objects
                .into_iter()
                .map(|o| GraphNode {
                    object: o.name,
                    attributes: o.attributes,
                })
                .collect(),
            edges: self
                .relations
                .into_iter()
                .map(|r| GraphEdge::new(r.subj, r.obj, r.pred))
                .collect(),
        };
        Ok(SceneRecord {
            image_id: self.image_id,
            graph: validate_graph(&graph)?,
            labels: self.labels.iter().map(|l| normalize_concept(l)).collect(),
        })
    }
}

fn schema(path: String, reason: impl Into<String>) -> Error {
    Error::Schema {
        path,
        reason: reason.into(),
    }
}

/// Parses one scene-graph JSON document.
pub fn load_scene_graph(text: &str) -> Result<SceneRecord> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: SceneDocument = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema(path, e.into_inner().to_string())
    })?;
    doc.into_record()
}

pub fn load_scene_graph_file(path: &Path) -> Result<SceneRecord> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_scene_graph(&text).map_err(|e| match e {
        Error::Schema { path: p, reason } => Error::Schema {
            path: format!("{}: {p}", path.display()),
            reason,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eggs_sit_in_car() {
        let doc = r#"{"image_id": "ad1",
            "objects": [{"name": "car", "attributes": ["blue"]}, {"name": "eggs", "attributes": ["not broken"]}],
            "relations": [{"subj": 1, "pred": "sit in", "obj": 0}],
            "labels": ["safety"]}"#;
        let rec = load_scene_graph(doc).unwrap();
        assert_eq!(rec.graph.nodes.len(), 2);
        assert_eq!(rec.graph.edges, vec![GraphEdge::new(1, 0, "sit in")]);
        assert_eq!(rec.graph.kind, GraphKind::Scene);
        assert_eq!(rec.labels, vec!["safety"]);
    }

    #[test]
    fn empty_objects_accepted() {
        let rec = load_scene_graph(r#"{"image_id": "x", "objects": []}"#).unwrap();
        assert_eq!(rec.graph.node_count(), 0);
    }

    #[test]
    fn dangling_index_names_path() {
        let doc = r#"{"image_id": "x", "objects": [{"name": "a"}, {"name": "b"}],
            "relations": [{"subj": 0, "pred": "on", "obj": 5}]}"#;
        match load_scene_graph(doc) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "relations[0].obj"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_field_names_path() {
        let doc = r#"{"image_id": "x", "objects": [{"name": "a", "score": 0.9}]}"#;
        match load_scene_graph(doc) {
            Err(Error::Schema { path, .. }) => assert!(path.starts_with("objects[0]"), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_object_token() {
        let doc = r#"{"image_id": "x", "objects": [{"name": "a"}, {"name": " "}]}"#;
        match load_scene_graph(doc) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "objects[1].name"),
            other => panic!("{other:?}"),
        }
        let doc = r#"{"image_id": "x", "objects": [{"attributes": []}]}"#;
        assert!(matches!(load_scene_graph(doc), Err(Error::Schema { .. })));
    }
}
