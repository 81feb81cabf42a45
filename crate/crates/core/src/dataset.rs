//! Examples, label spaces and the on-disk dataset bundle.
//!
//! A bundle is a directory holding `labels.txt`, `splits.json` and one JSON
//! document per image under `examples/`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{
    build_knowledge_graph, normalize_concept, FactStore, KnowledgeOptions, LabeledGraph,
    RelationWhitelist, SceneRecord, Vocabulary,
};
use crate::rng::child_rng;

/// One image: its scene graph, knowledge graph and label names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub image_id: String,
    pub labels: Vec<String>,
    pub scene_graph: LabeledGraph,
    pub knowledge_graph: LabeledGraph,
}

/// Ordered list of label names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSpace {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSpace {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out = LabelSpace {
            names: Vec::new(),
            index: HashMap::new(),
        };
        for name in names {
            let n = normalize_concept(name.as_ref());
            if n.is_empty() {
                continue;
            }
            if out.index.contains_key(&n) {
                return Err(Error::Config(format!("duplicate label {n:?}")));
            }
            out.index.insert(n.clone(), out.names.len());
            out.names.push(n);
        }
        if out.names.len() < 2 {
            return Err(Error::Config("at least two labels are required".into()));
        }
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        LabelSpace::new(text.lines())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LabelSpace::parse(&text)
    }

    pub fn to_text(&self) -> String {
        self.names.iter().map(|n| format!("{n}\n")).collect()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(&normalize_concept(label)).copied()
    }

    /// Label indices of `labels`, failing on names outside the space.
    pub fn indices(&self, labels: &[String]) -> Result<BTreeSet<usize>> {
        labels
            .iter()
            .map(|l| {
                self.index_of(l)
                    .ok_or_else(|| Error::Config(format!("label {l:?} is not in the label list")))
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// Image ids per split.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Splits {
    /// Seeded 60/20/20 partition of the sorted ids.
    pub fn sixty_twenty_twenty(ids: &[String], seed: u64) -> Splits {
        let mut ids: Vec<String> = ids.to_vec();
        ids.sort();
        ids.shuffle(&mut child_rng(seed, "split"));
        let n = ids.len();
        let n_train = n * 3 / 5;
        let n_val = n / 5;
        let mut train = ids[..n_train].to_vec();
        let mut val = ids[n_train..n_train + n_val].to_vec();
        let mut test = ids[n_train + n_val..].to_vec();
        train.sort();
        val.sort();
        test.sort();
        Splits { train, val, test }
    }

    pub fn ids(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Inputs for building knowledge graphs from scene graphs.
pub struct KnowledgeSource<'a> {
    pub store: &'a FactStore,
    pub whitelist: &'a RelationWhitelist,
    pub vocab: &'a Vocabulary,
    pub options: KnowledgeOptions,
}

/// Examples plus their label list and split assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub labels: LabelSpace,
    pub examples: Vec<Example>,
    pub splits: Splits,
}

impl Bundle {
    /// Builds one example per scene record, with knowledge graphs seeded
    /// from its objects and attributes. The fact vocabulary is extended with
    /// the label names. Examples are ordered by image id.
    pub fn prepare(records: Vec<SceneRecord>, knowledge: &KnowledgeSource<'_>, labels: LabelSpace, seed: u64) -> Result<Bundle> {
        let mut vocab = knowledge.vocab.clone();
        vocab.extend(labels.names());
        let mut by_id: BTreeMap<String, Example> = BTreeMap::new();
        for rec in records {
            labels.indices(&rec.labels).map_err(|e| {
                Error::Config(format!("image {}: {e}", rec.image_id))
            })?;
            if rec.graph.node_count() == 0 {
                log::warn!("image {} has no detected objects; keeping it with empty graphs", rec.image_id);
            }
            let kg = build_knowledge_graph(&rec.graph.nodes, knowledge.store, knowledge.whitelist, &vocab, knowledge.options);
            let ex = Example {
                image_id: rec.image_id.clone(),
                labels: rec.labels,
                scene_graph: rec.graph,
                knowledge_graph: kg,
            };
            if by_id.insert(rec.image_id.clone(), ex).is_some() {
                return Err(Error::Config(format!("duplicate image id {:?}", rec.image_id)));
            }
        }
        let ids: Vec<String> = by_id.keys().cloned().collect();
        Ok(Bundle {
            labels,
            examples: by_id.into_values().collect(),
            splits: Splits::sixty_twenty_twenty(&ids, seed),
        })
    }

    pub fn split(&self, split: Split) -> Result<Vec<Example>> {
        let by_id: HashMap<&str, &Example> =
            self.examples.iter().map(|e| (e.image_id.as_str(), e)).collect();
        self.splits
            .ids(split)
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|e| (*e).clone())
                    .ok_or_else(|| Error::Config(format!("split lists unknown image {id:?}")))
            })
            .collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let examples_dir = dir.join("examples");
        fs::create_dir_all(&examples_dir).map_err(|e| Error::io(&examples_dir, e))?;
        let write = |path: &Path, text: String| fs::write(path, text).map_err(|e| Error::io(path, e));
        write(&dir.join("labels.txt"), self.labels.to_text())?;
        let splits = serde_json::to_string_pretty(&self.splits).expect("splits serialize") + "\n";
        write(&dir.join("splits.json"), splits)?;
        let mut used = BTreeSet::new();
        for ex in &self.examples {
            let file = file_stem(&ex.image_id);
            if !used.insert(file.clone()) {
                return Err(Error::Config(format!("image ids collide on file name {file}")));
            }
            let text = serde_json::to_string_pretty(ex).expect("example serializes") + "\n";
            write(&examples_dir.join(format!("{file}.json")), text)?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Bundle> {
        let labels = LabelSpace::load(&dir.join("labels.txt"))?;
        let splits_path = dir.join("splits.json");
        let text = fs::read_to_string(&splits_path).map_err(|e| Error::io(&splits_path, e))?;
        let splits: Splits = serde_json::from_str(&text).map_err(|e| Error::Schema {
            path: splits_path.display().to_string(),
            reason: e.to_string(),
        })?;
        let examples_dir = dir.join("examples");
        let mut files: Vec<_> = fs::read_dir(&examples_dir)
            .map_err(|e| Error::io(&examples_dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let mut examples = Vec::with_capacity(files.len());
        for path in files {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            let ex: Example = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
                path: format!("{}: {}", path.display(), e.path()),
                reason: e.into_inner().to_string(),
            })?;
            labels
                .indices(&ex.labels)
                .map_err(|e| Error::Config(format!("image {}: {e}", ex.image_id)))?;
            examples.push(ex);
        }
        examples.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        Ok(Bundle {
            labels,
            examples,
            splits,
        })
    }
}

fn file_stem(image_id: &str) -> String {
    image_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_images_split_six_two_two() {
        let ids: Vec<String> = (0..10).map(|i| format!("img{i}")).collect();
        let s = Splits::sixty_twenty_twenty(&ids, 3);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (6, 2, 2));
        let again = Splits::sixty_twenty_twenty(&ids, 3);
        assert_eq!(s, again);
        let mut all: Vec<_> = s.train.iter().chain(&s.val).chain(&s.test).cloned().collect();
        all.sort();
        let mut expected = ids.clone();
        expected.sort();
        assert_eq!(all, expected);
    }

    #[test]
    fn label_space_rules() {
        let l = LabelSpace::parse("safety\nAnimal Cruelty\n\n").unwrap();
        assert_eq!(l.len(), 2);
        assert_eq!(l.index_of("animal cruelty"), Some(1));
        assert!(l.indices(&["fun".to_string()]).is_err());
        assert!(LabelSpace::parse("a\na\n").is_err());
        assert!(LabelSpace::parse("only\n").is_err());
    }
}
