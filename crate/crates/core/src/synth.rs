//! Synthetic datasets with planted label signals.
//!
//! Every image carries the pattern of one label: a scene relation and,
//! depending on the signal kind, a knowledge fact reachable from one of its
//! objects. With probability `noise` the pattern of a uniformly drawn label
//! is planted instead, so `noise = 1` makes inputs independent of labels.
//! The generator also writes the fact store, vocabulary and word vectors the
//! images need.
//!
//! A node's state after a GCN layer comes only from its in-neighbors, so a
//! pattern survives `K` layers only where it has a `K`-step walk downstream
//! of it. The generators place patterns on cycles, on sources, or ahead of
//! long enough chains for that reason.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Bundle, KnowledgeSource, LabelSpace};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graphs::{
    FactStore, KnowledgeOptions, RelationWhitelist, SceneDocument, SceneObject, SceneRelation, Triple, Vocabulary,
};
use crate::rng::child_rng;

const OBJECT_POOL: usize = 6;
const ATTRIBUTE_POOL: usize = 4;
const LINK_POOL: usize = 2;
const CATEGORY_POOL: usize = 3;
/// Fact relations carrying the knowledge code of [`Signal::Dual`].
const DUAL_FACT_RELATIONS: [&str; 2] = ["IsA", "UsedFor"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    /// Label `ℓ` plants a `cue{ℓ}` object linked by relation `pattern{ℓ}`,
    /// plus the fact `RelatedTo(cue{ℓ}, concept{ℓ})`.
    Planted,
    /// Needs an even label count. Label `ℓ` splits into a scene code `ℓ / 2`,
    /// carried only by the relation of a 2-cycle between objects without
    /// word vectors, and a knowledge code `ℓ % 2`, carried only by a fact
    /// about one of those objects. Either graph alone identifies half of
    /// the label. The knowledge side is visible only with reverse edges.
    Dual,
    /// The pattern relation opens a four-node chain of `step` objects, two
    /// hops upstream of its end.
    Chain,
}

impl std::str::FromStr for Signal {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "planted" => Ok(Signal::Planted),
            "dual" => Ok(Signal::Dual),
            "chain" => Ok(Signal::Chain),
            other => Err(Error::Config(format!("unknown signal kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub num_labels: usize,
    pub examples: usize,
    /// Probability of planting a random label's pattern.
    pub noise: f64,
    pub seed: u64,
    pub embed_dim: usize,
    /// Extra pool objects per image, each linked to an earlier node.
    pub distractors: usize,
    pub signal: Signal,
    /// Word-vector entries are uniform in `[-scale, scale]`.
    pub scale: f64,
    /// Add reverse edges when building knowledge graphs.
    pub add_reverse: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_labels: 2,
            examples: 200,
            noise: 0.0,
            seed: 0,
            embed_dim: 64,
            distractors: 2,
            signal: Signal::Planted,
            scale: 2.0,
            add_reverse: false,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_labels < 2 {
            return Err(Error::Config("synthetic data needs at least two labels".into()));
        }
        if self.examples < 1 {
            return Err(Error::Config("synthetic data needs at least one example".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Config(format!("noise must lie in [0, 1], got {}", self.noise)));
        }
        if self.embed_dim < 1 || !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config("embed_dim and scale must be positive".into()));
        }
        if self.signal == Signal::Dual && self.num_labels % 2 != 0 {
            return Err(Error::Config("the dual signal needs an even label count".into()));
        }
        Ok(())
    }
}

/// Generated raw inputs: scene documents plus the resources to build
/// knowledge graphs and features for them.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    pub spec: SynthSpec,
    pub scenes: Vec<SceneDocument>,
    pub facts: FactStore,
    pub vocab: Vocabulary,
    pub labels: LabelSpace,
    pub table: EmbeddingTable,
}

fn label_name(l: usize) -> String {
    format!("symbol{l}")
}

fn object(name: String, rng: &mut ChaCha8Rng) -> SceneObject {
    let attributes = if rng.gen_bool(0.3) {
        vec![format!("attr{}", rng.gen_range(0..ATTRIBUTE_POOL))]
    } else {
        Vec::new()
    };
    SceneObject { name, attributes }
}

fn relation(subj: usize, pred: String, obj: usize) -> SceneRelation {
    SceneRelation { subj, pred, obj }
}

fn pool_object(rng: &mut ChaCha8Rng) -> SceneObject {
    let k = rng.gen_range(0..OBJECT_POOL);
    object(format!("object{k}"), rng)
}

impl SynthData {
    pub fn generate(spec: &SynthSpec) -> Result<Self> {
        spec.validate()?;
        let c = spec.num_labels;
        let mut rng = child_rng(spec.seed, "synth");
        let mut scenes = Vec::with_capacity(spec.examples);
        for i in 0..spec.examples {
            let label = i % c;
            let planted = if rng.gen_bool(spec.noise) { rng.gen_range(0..c) } else { label };
            let mut objects = Vec::new();
            let mut relations = Vec::new();
            match spec.signal {
                Signal::Planted => {
                    objects.push(object(format!("cue{planted}"), &mut rng));
                    objects.push(pool_object(&mut rng));
                    relations.push(relation(0, format!("pattern{planted}"), 1));
                }
                Signal::Dual => {
                    objects.push(SceneObject {
                        name: format!("item{}", planted % 2),
                        attributes: Vec::new(),
                    });
                    objects.push(SceneObject {
                        name: "item".into(),
                        attributes: Vec::new(),
                    });
                    let code = planted / 2;
                    relations.push(relation(0, format!("pattern{code}"), 1));
                    relations.push(relation(1, format!("pattern{code}"), 0));
                }
                Signal::Chain => {
                    for _ in 0..4 {
                        objects.push(SceneObject {
                            name: "step".into(),
                            attributes: Vec::new(),
                        });
                    }
                    relations.push(relation(0, format!("pattern{planted}"), 1));
                    relations.push(relation(1, "link0".into(), 2));
                    relations.push(relation(2, "link0".into(), 3));
                }
            }
            for _ in 0..spec.distractors {
                let target = rng.gen_range(0..objects.len());
                objects.push(pool_object(&mut rng));
                let link = format!("link{}", rng.gen_range(0..LINK_POOL));
                relations.push(relation(objects.len() - 1, link, target));
            }
            scenes.push(SceneDocument {
                image_id: format!("synth{i:05}"),
                objects,
                relations,
                labels: vec![label_name(label)],
            });
        }

        let mut triples = Vec::new();
        for k in 0..OBJECT_POOL {
            triples.push(Triple::new("IsA", &format!("object{k}"), &format!("category{}", k % CATEGORY_POOL)));
        }
        match spec.signal {
            Signal::Planted | Signal::Chain => {
                for l in 0..c {
                    let cue = format!("cue{l}");
                    triples.push(Triple::new("RelatedTo", &cue, &format!("concept{l}")));
                    // filtered out: relation not whitelisted, tail not in vocabulary
                    triples.push(Triple::new("Synonym", &cue, &format!("concept{l}")));
                    triples.push(Triple::new("RelatedTo", &cue, &format!("unlisted{l}")));
                }
            }
            Signal::Dual => {
                for (b, rel) in DUAL_FACT_RELATIONS.iter().enumerate() {
                    triples.push(Triple::new(rel, &format!("item{b}"), &format!("concept{b}")));
                    triples.push(Triple::new("Synonym", &format!("item{b}"), &format!("concept{}", 1 - b)));
                }
            }
        }
        let facts = FactStore::from_triples(triples);

        let mut vocab_tokens: Vec<String> = (0..c).map(|l| format!("concept{l}")).collect();
        vocab_tokens.extend((0..CATEGORY_POOL).map(|k| format!("category{k}")));
        let vocab = Vocabulary::new(&vocab_tokens);

        // Word vectors for every token except the dual signal's items.
        let mut words: Vec<String> = Vec::new();
        words.extend((0..OBJECT_POOL).map(|k| format!("object{k}")));
        words.extend((0..ATTRIBUTE_POOL).map(|k| format!("attr{k}")));
        words.extend((0..LINK_POOL).map(|k| format!("link{k}")));
        words.extend((0..c).map(|l| format!("pattern{l}")));
        words.extend((0..c).map(|l| format!("cue{l}")));
        words.push("step".into());
        words.extend(vocab_tokens.iter().cloned());
        for w in ["self", "related", "to", "is", "a", "used", "for", "synonym"] {
            words.push(w.into());
        }
        let mut vec_rng = child_rng(spec.seed, "synth/vectors");
        let mut table = EmbeddingTable::new(spec.embed_dim);
        for w in &words {
            let v: Vec<f64> = (0..spec.embed_dim)
                .map(|_| vec_rng.gen_range(-spec.scale..=spec.scale))
                .collect();
            table.insert(w, &v)?;
        }

        Ok(SynthData {
            spec: spec.clone(),
            scenes,
            facts,
            vocab,
            labels: LabelSpace::new((0..c).map(label_name))?,
            table,
        })
    }

    /// Prepared bundle with knowledge graphs built under the default
    /// relation whitelist.
    pub fn bundle(&self) -> Result<Bundle> {
        let records = self
            .scenes
            .iter()
            .cloned()
            .map(SceneDocument::into_record)
            .collect::<Result<Vec<_>>>()?;
        let whitelist = RelationWhitelist::default();
        let source = KnowledgeSource {
            store: &self.facts,
            whitelist: &whitelist,
            vocab: &self.vocab,
            options: KnowledgeOptions {
                match_tail: false,
                add_reverse: self.spec.add_reverse,
            },
        };
        Bundle::prepare(records, &source, self.labels.clone(), self.spec.seed)
    }

    /// Writes `scenes/`, `facts.tsv`, `vocab.txt`, `labels.txt`,
    /// `embeddings.txt` and the prepared `bundle/` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let scenes_dir = dir.join("scenes");
        fs::create_dir_all(&scenes_dir).map_err(|e| Error::io(&scenes_dir, e))?;
        let write = |path: &Path, text: String| fs::write(path, text).map_err(|e| Error::io(path, e));
        for doc in &self.scenes {
            let text = serde_json::to_string_pretty(doc).expect("scene serializes") + "\n";
            write(&scenes_dir.join(format!("{}.json", doc.image_id)), text)?;
        }
        write(&dir.join("facts.tsv"), self.facts.to_tsv())?;
        write(&dir.join("vocab.txt"), self.vocab.iter().map(|t| format!("{t}\n")).collect())?;
        write(&dir.join("labels.txt"), self.labels.to_text())?;
        write(&dir.join("embeddings.txt"), self.table.to_text())?;
        self.bundle()?.write(&dir.join("bundle"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Split;

    #[test]
    fn clean_planted_data_is_decided_by_its_pattern() {
        let data = SynthData::generate(&SynthSpec::default()).unwrap();
        assert_eq!(data.scenes.len(), 200);
        for doc in &data.scenes {
            let pattern = doc.relations.iter().find(|r| r.pred.starts_with("pattern")).unwrap();
            let rule = format!("symbol{}", &pattern.pred["pattern".len()..]);
            assert_eq!(doc.labels, vec![rule]);
        }
    }

    #[test]
    fn same_spec_same_bytes() {
        let spec = SynthSpec { examples: 20, noise: 0.3, ..SynthSpec::default() };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        SynthData::generate(&spec).unwrap().write(a.path()).unwrap();
        SynthData::generate(&spec).unwrap().write(b.path()).unwrap();
        for file in ["facts.tsv", "vocab.txt", "labels.txt", "embeddings.txt", "bundle/splits.json", "scenes/synth00007.json", "bundle/examples/synth00007.json"] {
            assert_eq!(
                fs::read(a.path().join(file)).unwrap(),
                fs::read(b.path().join(file)).unwrap(),
                "{file}"
            );
        }
        let bundle = Bundle::read(&b.path().join("bundle")).unwrap();
        assert_eq!(bundle, SynthData::generate(&spec).unwrap().bundle().unwrap());
        assert_eq!(bundle.split(Split::Train).unwrap().len(), 12);
    }

    #[test]
    fn planted_knowledge_graph_holds_the_concept() {
        let data = SynthData::generate(&SynthSpec { examples: 4, ..SynthSpec::default() }).unwrap();
        let bundle = data.bundle().unwrap();
        let ex = &bundle.examples[1];
        let tokens: Vec<&str> = ex.knowledge_graph.nodes.iter().map(|n| n.object.as_str()).collect();
        assert!(tokens.contains(&"concept1"));
        assert!(!tokens.contains(&"unlisted1"));
        assert!(ex.knowledge_graph.edges.iter().all(|e| e.relation != "Synonym"));
    }

    #[test]
    fn dual_codes_are_split_between_graphs() {
        let spec = SynthSpec { num_labels: 4, examples: 8, signal: Signal::Dual, ..SynthSpec::default() };
        let data = SynthData::generate(&spec).unwrap();
        assert!(data.table.get("item0").is_none());
        let bundle = data.bundle().unwrap();
        for ex in &bundle.examples {
            let l: usize = ex.labels[0]["symbol".len()..].parse().unwrap();
            let scene_rel = &ex.scene_graph.edges.iter().find(|e| e.relation.starts_with("pattern")).unwrap().relation;
            assert_eq!(scene_rel, &format!("pattern{}", l / 2));
            let fact = ex
                .knowledge_graph
                .edges
                .iter()
                .find(|e| ex.knowledge_graph.nodes[e.dst].object.starts_with("concept"))
                .unwrap();
            assert_eq!(fact.relation, DUAL_FACT_RELATIONS[l % 2]);
            assert_eq!(ex.knowledge_graph.nodes[fact.dst].object, format!("concept{}", l % 2));
        }
        assert!(SynthData::generate(&SynthSpec { num_labels: 3, ..spec }).is_err());
    }

    #[test]
    fn full_noise_decouples_patterns() {
        let spec = SynthSpec { noise: 1.0, examples: 400, ..SynthSpec::default() };
        let data = SynthData::generate(&spec).unwrap();
        let agree = data
            .scenes
            .iter()
            .filter(|d| {
                let p = d.relations.iter().find(|r| r.pred.starts_with("pattern")).unwrap();
                d.labels[0] == format!("symbol{}", &p.pred["pattern".len()..])
            })
            .count();
        // agreement is Binomial(400, 1/2)
        assert!((150..=250).contains(&agree), "{agree}");
    }
}
