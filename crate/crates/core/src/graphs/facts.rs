use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{normalize_concept, normalize_relation};

/// The relation whitelist used when no other is configured.
pub const DEFAULT_RELATIONS: [&str; 20] = [
    "RelatedTo",
    "IsA",
    "HasA",
    "PartOf",
    "MadeOf",
    "FormOf",
    "AtLocation",
    "Causes",
    "HasProperty",
    "HasFirstSubevent",
    "HasPrerequisite",
    "HasSubevent",
    "UsedFor",
    "CapableOf",
    "DefinedAs",
    "SimilarTo",
    "CausesDesire",
    "Desires",
    "MotivatedByGoal",
    "DerivedFrom",
];

/// `(relation, head, tail)` with normalized concepts.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub relation: String,
    pub head: String,
    pub tail: String,
}

impl Triple {
    pub fn new(relation: &str, head: &str, tail: &str) -> Self {
        Triple {
            relation: normalize_relation(relation),
            head: normalize_concept(head),
            tail: normalize_concept(tail),
        }
    }
}

/// Set of facts indexed by head and by tail concept.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FactStore {
    triples: Vec<Triple>,
    by_head: HashMap<String, Vec<usize>>,
    by_tail: HashMap<String, Vec<usize>>,
}

impl FactStore {
    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Self {
        let set: BTreeSet<Triple> = triples.into_iter().collect();
        let triples: Vec<Triple> = set.into_iter().collect();
        let mut by_head: HashMap<String, Vec<usize>> = HashMap::new();
        let mut by_tail: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, t) in triples.iter().enumerate() {
            by_head.entry(t.head.clone()).or_default().push(i);
            by_tail.entry(t.tail.clone()).or_default().push(i);
        }
        FactStore {
            triples,
            by_head,
            by_tail,
        }
    }

    /// Parses `relation<TAB>head<TAB>tail` lines; blank lines are skipped.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut triples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let err = |reason: &str| Error::Parse {
                source_name: source_name.to_string(),
                line: i + 1,
                reason: reason.to_string(),
            };
            if fields.len() != 3 {
                return Err(err("expected relation<TAB>head<TAB>tail"));
            }
            let t = Triple::new(fields[0], fields[1], fields[2]);
            if t.relation.is_empty() || t.head.is_empty() || t.tail.is_empty() {
                return Err(err("empty field"));
            }
            triples.push(t);
        }
        Ok(FactStore::from_triples(triples))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        FactStore::parse(&text, &path.display().to_string())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                t.relation,
                t.head.replace(' ', "_"),
                t.tail.replace(' ', "_")
            ));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// All triples in sorted order.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn with_head<'a>(&'a self, concept: &str) -> impl Iterator<Item = &'a Triple> + 'a {
        lookup(&self.by_head, &self.triples, concept)
    }

    pub fn with_tail<'a>(&'a self, concept: &str) -> impl Iterator<Item = &'a Triple> + 'a {
        lookup(&self.by_tail, &self.triples, concept)
    }
}

fn lookup<'a>(
    index: &'a HashMap<String, Vec<usize>>,
    triples: &'a [Triple],
    concept: &str,
) -> impl Iterator<Item = &'a Triple> + 'a {
    index
        .get(&normalize_concept(concept))
        .into_iter()
        .flatten()
        .map(move |&i| &triples[i])
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationWhitelist {
    allowed: BTreeSet<String>,
}

impl Default for RelationWhitelist {
    fn default() -> Self {
        RelationWhitelist::new(DEFAULT_RELATIONS)
    }
}

impl RelationWhitelist {
    pub fn new<I, S>(relations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        RelationWhitelist {
            allowed: relations
                .into_iter()
                .map(|r| normalize_relation(r.as_ref()))
                .collect(),
        }
    }

    pub fn contains(&self, relation: &str) -> bool {
        self.allowed.contains(&normalize_relation(relation))
    }

    pub fn len(&self) -> usize {
        self.allowed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allowed.is_empty()
    }
}

/// Set of normalized concepts admitted as knowledge-graph tails.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    concepts: BTreeSet<String>,
}

impl Vocabulary {
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Vocabulary::default();
        v.extend(tokens);
        v
    }

    pub fn extend<I, S>(&mut self, tokens: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.concepts.extend(
            tokens
                .into_iter()
                .map(|t| normalize_concept(t.as_ref()))
                .filter(|t| !t.is_empty()),
        );
    }

    pub fn contains(&self, concept: &str) -> bool {
        self.concepts.contains(&normalize_concept(concept))
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &String> {
        self.concepts.iter()
    }
}

/// Reads a vocabulary file with one token per line.
pub fn load_vocabulary(path: &Path) -> Result<Vocabulary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(Vocabulary::new(text.lines()))
}
