use serde::{Deserialize, Serialize};

use crate::coupled_graph::{ConceptGraph, EntityId, Provenance};

use super::client::KnowledgeGraph;
use super::ConstructionError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkResult {
    pub graph: ConceptGraph,
    /// One entry per seed whose query failed.
    pub warnings: Vec<String>,
}

/// Unions the knowledge-graph neighbourhoods of every mention and topic
/// entity. Seeds are always present, even with no facts. If every query
/// fails the last error is returned.
pub fn link_concepts(
    mentions: &[EntityId],
    topic_entities: &[EntityId],
    kg: &dyn KnowledgeGraph,
    hop_limit: u32,
) -> Result<LinkResult, ConstructionError> {
    if hop_limit == 0 {
        return Err(ConstructionError::InvalidHopLimit);
    }
    let mut seeds: Vec<&EntityId> = Vec::new();
    for s in mentions.iter().chain(topic_entities) {
        if !s.is_empty() && !seeds.contains(&s) {
            seeds.push(s);
        }
    }
    let mut graph = ConceptGraph::default();
    let mut warnings = Vec::new();
    let mut last_err = None;
    let mut succeeded = 0;
    for seed in &seeds {
        match kg.neighbourhood(seed, hop_limit) {
            Ok(triples) => {
                succeeded += 1;
                graph.add_entity((*seed).clone());
                for t in triples {
                    graph.add_fact(t, Provenance::Kg);
                }
            }
            Err(e) => {
                warnings.push(format!("seed `{seed}`: {e}"));
                last_err = Some(e);
            }
        }
    }
    match last_err {
        Some(e) if succeeded == 0 => Err(e),
        _ => {
            for seed in seeds {
                graph.add_entity(seed.clone());
            }
            Ok(LinkResult { graph, warnings })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::client::{StubKnowledgeGraph, UnavailableKnowledgeGraph};
    use crate::coupled_graph::Triple;

    fn ids(xs: &[&str]) -> Vec<EntityId> {
        xs.iter().map(|x| EntityId::new(x)).collect()
    }

    #[test]
    fn single_fact_for_coat() {
        let kg = StubKnowledgeGraph::new(vec![Triple::new("coat", "used_for", "keep warm")]);
        let r = link_concepts(&ids(&["coat"]), &[], &kg, 1).unwrap();
        assert_eq!(r.graph.entities.len(), 2);
        assert_eq!(r.graph.triples.len(), 1);
        assert_eq!(r.graph.provenance, vec![Provenance::Kg]);
    }

    #[test]
    fn empty_kg_keeps_seeds() {
        let kg = StubKnowledgeGraph::new(vec![]);
        let r = link_concepts(&ids(&["coat", "tree"]), &ids(&["season"]), &kg, 1).unwrap();
        assert_eq!(r.graph.entities, ids(&["coat", "season", "tree"]).into_iter().collect());
        assert!(r.graph.triples.is_empty());
    }

    #[test]
    fn zero_hops_is_rejected() {
        let kg = StubKnowledgeGraph::new(vec![]);
        assert!(matches!(
            link_concepts(&ids(&["coat"]), &[], &kg, 0),
            Err(ConstructionError::InvalidHopLimit)
        ));
    }

    #[test]
    fn partial_failure_warns_total_failure_errors() {
        let kg = StubKnowledgeGraph::new(vec![Triple::new("tree", "related_to", "plant")]).failing_on("coat");
        let r = link_concepts(&ids(&["coat", "tree"]), &[], &kg, 1).unwrap();
        assert_eq!(r.warnings.len(), 1);
        assert!(r.graph.entities.contains(&EntityId::new("coat")));
        assert!(matches!(
            link_concepts(&ids(&["coat"]), &[], &UnavailableKnowledgeGraph, 1),
            Err(ConstructionError::ServiceUnavailable { .. })
        ));
    }
}
