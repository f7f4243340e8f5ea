//! Coupled scene/concept graphs and the entities they share.

mod corpus;
mod stats;
mod validate;
mod vocab;

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use corpus::{
    load_corpus, load_manifest, record_checksum, save_corpus, save_manifest, verify_manifest, CorpusError, Manifest,
    ManifestEntry,
};
pub use stats::{format_histogram, relation_histogram, RelationHistogram};
pub use validate::{validate, GraphSide, ValidationReport, Violation, ViolationCode};
pub use vocab::{RelationCategory, RelationVocabulary};

/// Case-folded, whitespace-trimmed entity identifier. The same surface form in
/// both graphs names the same entity.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct EntityId(String);

impl EntityId {
    pub fn new(raw: &str) -> Self {
        EntityId(raw.trim().to_lowercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<String> for EntityId {
    fn from(s: String) -> Self {
        EntityId::new(&s)
    }
}

impl From<&str> for EntityId {
    fn from(s: &str) -> Self {
        EntityId::new(s)
    }
}

impl From<EntityId> for String {
    fn from(e: EntityId) -> Self {
        e.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Relation identifier, normalised like [`EntityId`].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct RelationId(String);

impl RelationId {
    pub fn new(raw: &str) -> Self {
        RelationId(raw.trim().to_lowercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<String> for RelationId {
    fn from(s: String) -> Self {
        RelationId::new(&s)
    }
}

impl From<&str> for RelationId {
    fn from(s: &str) -> Self {
        RelationId::new(s)
    }
}

impl From<RelationId> for String {
    fn from(r: RelationId) -> Self {
        r.0
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: &str, relation: &str, tail: &str) -> Self {
        Triple {
            head: EntityId::new(head),
            relation: RelationId::new(relation),
            tail: EntityId::new(tail),
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub entities: BTreeSet<EntityId>,
    pub triples: Vec<Triple>,
    /// Mentioned entities in caption order.
    pub mentions: Vec<EntityId>,
}

impl SceneGraph {
    /// Builds a scene graph whose entity set is the mentions plus every
    /// triple endpoint. Duplicate triples are dropped.
    pub fn from_parts(mentions: Vec<EntityId>, triples: Vec<Triple>) -> Self {
        let mut entities: BTreeSet<EntityId> = mentions.iter().cloned().collect();
        let mut seen = HashSet::new();
        let mut kept = Vec::with_capacity(triples.len());
        for t in triples {
            if seen.insert(t.clone()) {
                entities.insert(t.head.clone());
                entities.insert(t.tail.clone());
                kept.push(t);
            }
        }
        SceneGraph {
            entities,
            triples: kept,
            mentions,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Kg,
    Synthetic,
}

/// Commonsense facts linked to the mentioned and topic entities. The entity
/// set doubles as the candidate answer set.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptGraph {
    pub entities: BTreeSet<EntityId>,
    pub triples: Vec<Triple>,
    /// Source tag per triple, parallel to `triples`.
    pub provenance: Vec<Provenance>,
}

impl ConceptGraph {
    pub fn add_entity(&mut self, e: EntityId) {
        self.entities.insert(e);
    }

    /// Adds a fact and its endpoints; returns false for a duplicate triple.
    pub fn add_fact(&mut self, triple: Triple, source: Provenance) -> bool {
        if self.triples.contains(&triple) {
            return false;
        }
        self.entities.insert(triple.head.clone());
        self.entities.insert(triple.tail.clone());
        self.triples.push(triple);
        self.provenance.push(source);
        true
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldAnswer {
    pub entity: EntityId,
    /// Credit in (0, 1].
    pub weight: f64,
}

impl GoldAnswer {
    pub fn new(entity: &str, weight: f64) -> Self {
        GoldAnswer {
            entity: EntityId::new(entity),
            weight,
        }
    }
}

/// One question about one image, with both derived graphs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledInstance {
    pub id: String,
    pub scene: SceneGraph,
    pub concept: ConceptGraph,
    pub question: String,
    pub topic_entities: Vec<EntityId>,
    pub gold_answers: Vec<GoldAnswer>,
}

impl CoupledInstance {
    pub fn mediums(&self) -> Vec<EntityId> {
        mediums(&self.scene, &self.concept)
    }
}

/// Mentioned scene entities that also occur in the concept graph, in mention
/// order with duplicates collapsed to their first occurrence.
pub fn mediums(scene: &SceneGraph, concept: &ConceptGraph) -> Vec<EntityId> {
    let mut seen = HashSet::new();
    scene
        .mentions
        .iter()
        .filter(|m| concept.entities.contains(*m) && seen.insert((*m).clone()))
        .cloned()
        .collect()
}
