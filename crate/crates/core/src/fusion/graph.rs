use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coupled_graph::{EntityId, RelationId, Triple};
use crate::numeric::Tensor;
use crate::seeding::labelled_rng;

/// Prefix marking the reciprocal of a relation.
pub const RECIPROCAL_PREFIX: &str = "~";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Scene,
    Concept,
}

impl Side {
    pub fn prefix(self) -> &'static str {
        match self {
            Side::Scene => "scene",
            Side::Concept => "concept",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.prefix())
    }
}

/// Fixed initial entity embeddings: a loaded vector when one is available,
/// otherwise a deterministic draw from N(0, 1/d) keyed by the entity name.
#[derive(Clone, Debug)]
pub struct EntityTable {
    dim: usize,
    seed: u64,
    overrides: HashMap<EntityId, Tensor>,
}

impl EntityTable {
    pub fn new(dim: usize, seed: u64) -> Self {
        EntityTable {
            dim,
            seed,
            overrides: HashMap::new(),
        }
    }

    /// Uses `vectors` (already sized to `dim`) for the named entities.
    pub fn with_vectors(mut self, vectors: BTreeMap<String, Vec<f64>>) -> Self {
        for (name, v) in vectors {
            let mut v = v;
            v.resize(self.dim, 0.0);
            self.overrides.insert(EntityId::new(&name), Tensor::vector(v));
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embedding(&self, entity: &EntityId) -> Tensor {
        if let Some(t) = self.overrides.get(entity) {
            return t.clone();
        }
        seeded_vector(
            self.seed,
            &format!("entity/{entity}"),
            self.dim,
            1.0 / (self.dim as f64).sqrt(),
        )
    }
}

pub(crate) fn seeded_vector(seed: u64, label: &str, len: usize, std: f64) -> Tensor {
    let mut rng = labelled_rng(seed, label);
    Tensor::vector(
        (0..len)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * std
            })
            .collect(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

/// One side of a coupled instance, indexed for message passing. Entities are
/// in identifier order; every triple also appears reversed under the
/// reciprocal relation, so information flows both ways.
#[derive(Clone, Debug)]
pub struct PreparedGraph {
    pub side: Side,
    pub entities: Vec<EntityId>,
    pub relations: Vec<RelationId>,
    pub edges: Vec<Edge>,
    /// Outgoing edge indices per entity.
    pub neighbourhoods: Vec<Vec<usize>>,
    pub initial: Vec<Tensor>,
    index: HashMap<EntityId, usize>,
}

impl PreparedGraph {
    pub fn new(side: Side, entities: &BTreeSet<EntityId>, triples: &[Triple], table: &EntityTable) -> Self {
        let mut all: BTreeSet<EntityId> = entities.clone();
        for t in triples {
            all.insert(t.head.clone());
            all.insert(t.tail.clone());
        }
        let entities: Vec<EntityId> = all.into_iter().collect();
        let index: HashMap<EntityId, usize> = entities.iter().cloned().enumerate().map(|(i, e)| (e, i)).collect();

        let mut rel_index: BTreeMap<RelationId, usize> = BTreeMap::new();
        let mut relations = Vec::new();
        let mut rel_id = |r: RelationId| -> usize {
            *rel_index.entry(r.clone()).or_insert_with(|| {
                relations.push(r);
                relations.len() - 1
            })
        };
        let mut edges = Vec::with_capacity(triples.len() * 2);
        for t in triples {
            let (h, tl) = (index[&t.head], index[&t.tail]);
            let r = rel_id(t.relation.clone());
            let inv = rel_id(reciprocal(&t.relation));
            edges.push(Edge {
                head: h,
                relation: r,
                tail: tl,
            });
            edges.push(Edge {
                head: tl,
                relation: inv,
                tail: h,
            });
        }
        let mut neighbourhoods = vec![Vec::new(); entities.len()];
        for (i, e) in edges.iter().enumerate() {
            neighbourhoods[e.head].push(i);
        }
        let initial = entities.iter().map(|e| table.embedding(e)).collect();
        PreparedGraph {
            side,
            entities,
            relations,
            edges,
            neighbourhoods,
            initial,
            index,
        }
    }

    pub fn index_of(&self, entity: &EntityId) -> Option<usize> {
        self.index.get(entity).copied()
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn relation_param(&self, relation: usize) -> String {
        relation_param_name(self.side, &self.relations[relation])
    }
}

pub fn reciprocal(r: &RelationId) -> RelationId {
    RelationId::new(&format!("{RECIPROCAL_PREFIX}{r}"))
}

pub fn relation_param_name(side: Side, relation: &RelationId) -> String {
    format!("{}/rel/{relation}", side.prefix())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reciprocal_edges_are_added() {
        let table = EntityTable::new(4, 1);
        let g = PreparedGraph::new(
            Side::Scene,
            &BTreeSet::new(),
            &[Triple::new("woman", "holds", "cup")],
            &table,
        );
        assert_eq!(g.entities, vec![EntityId::new("cup"), EntityId::new("woman")]);
        assert_eq!(g.edges.len(), 2);
        assert_eq!(g.relations[1].as_str(), "~holds");
        assert_eq!(g.neighbourhoods[0], vec![1]);
        assert_eq!(g.neighbourhoods[1], vec![0]);
    }

    #[test]
    fn entity_table_is_keyed_by_name() {
        let t = EntityTable::new(8, 3);
        assert_eq!(t.embedding(&"coat".into()), t.embedding(&"coat".into()));
        assert_ne!(t.embedding(&"coat".into()), t.embedding(&"tree".into()));
        let loaded = t.with_vectors(BTreeMap::from([("coat".to_string(), vec![1.0; 3])]));
        assert_eq!(
            loaded.embedding(&"coat".into()).data(),
            &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
    }
}
