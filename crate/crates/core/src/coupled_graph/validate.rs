use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{mediums, CoupledInstance, RelationVocabulary, Triple};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    EmptyId,
    EmptyEntity,
    UnknownRelation,
    DanglingEndpoint,
    DuplicateTriple,
    MentionNotEntity,
    ProvenanceMismatch,
    NoMediums,
    NoGold,
    GoldNotCandidate,
    GoldWeightRange,
    TopicNotLinked,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::EmptyId => "EMPTY_ID",
            ViolationCode::EmptyEntity => "EMPTY_ENTITY",
            ViolationCode::UnknownRelation => "UNKNOWN_RELATION",
            ViolationCode::DanglingEndpoint => "DANGLING_ENDPOINT",
            ViolationCode::DuplicateTriple => "DUPLICATE_TRIPLE",
            ViolationCode::MentionNotEntity => "MENTION_NOT_ENTITY",
            ViolationCode::ProvenanceMismatch => "PROVENANCE_MISMATCH",
            ViolationCode::NoMediums => "NO_MEDIUMS",
            ViolationCode::NoGold => "NO_GOLD",
            ViolationCode::GoldNotCandidate => "GOLD_NOT_CANDIDATE",
            ViolationCode::GoldWeightRange => "GOLD_WEIGHT_RANGE",
            ViolationCode::TopicNotLinked => "TOPIC_NOT_LINKED",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphSide {
    Scene,
    Concept,
    Instance,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub side: GraphSide,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{:?}] {}", self.code, self.side, self.detail)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    pub fn codes(&self) -> Vec<ViolationCode> {
        self.violations.iter().map(|v| v.code).collect()
    }

    fn push(&mut self, code: ViolationCode, side: GraphSide, detail: impl Into<String>) {
        self.violations.push(Violation {
            code,
            side,
            detail: detail.into(),
        });
    }
}

fn check_triples<'a>(
    report: &mut ValidationReport,
    side: GraphSide,
    triples: &'a [Triple],
    entities: &std::collections::BTreeSet<super::EntityId>,
    vocab: Option<&RelationVocabulary>,
) {
    let mut seen: HashSet<&'a Triple> = HashSet::new();
    for (i, t) in triples.iter().enumerate() {
        if t.head.is_empty() || t.tail.is_empty() {
            report.push(ViolationCode::EmptyEntity, side, format!("triple {i}: {t}"));
        }
        if let Some(v) = vocab {
            if !v.contains(t.relation.as_str()) {
                report.push(
                    ViolationCode::UnknownRelation,
                    side,
                    format!("triple {i}: relation `{}`", t.relation),
                );
            }
        }
        for end in [&t.head, &t.tail] {
            if !end.is_empty() && !entities.contains(end) {
                report.push(
                    ViolationCode::DanglingEndpoint,
                    side,
                    format!("triple {i}: `{end}` not in entity set"),
                );
            }
        }
        if !seen.insert(t) {
            report.push(ViolationCode::DuplicateTriple, side, format!("triple {i}: {t}"));
        }
    }
}

/// Lists every structural invariant the instance breaks. Pure.
pub fn validate(instance: &CoupledInstance) -> ValidationReport {
    let vocab = RelationVocabulary::standard();
    let mut report = ValidationReport::default();
    if instance.id.trim().is_empty() {
        report.push(ViolationCode::EmptyId, GraphSide::Instance, "instance id is empty");
    }

    let scene = &instance.scene;
    if scene.entities.iter().any(|e| e.is_empty()) {
        report.push(ViolationCode::EmptyEntity, GraphSide::Scene, "empty entity identifier");
    }
    check_triples(
        &mut report,
        GraphSide::Scene,
        &scene.triples,
        &scene.entities,
        Some(&vocab),
    );
    for m in &scene.mentions {
        if !scene.entities.contains(m) {
            report.push(
                ViolationCode::MentionNotEntity,
                GraphSide::Scene,
                format!("mention `{m}` not in entity set"),
            );
        }
    }

    let concept = &instance.concept;
    if concept.entities.iter().any(|e| e.is_empty()) {
        report.push(
            ViolationCode::EmptyEntity,
            GraphSide::Concept,
            "empty entity identifier",
        );
    }
    check_triples(
        &mut report,
        GraphSide::Concept,
        &concept.triples,
        &concept.entities,
        None,
    );
    if concept.provenance.len() != concept.triples.len() {
        report.push(
            ViolationCode::ProvenanceMismatch,
            GraphSide::Concept,
            format!(
                "{} provenance tags for {} triples",
                concept.provenance.len(),
                concept.triples.len()
            ),
        );
    }
    for t in &instance.topic_entities {
        if !concept.entities.contains(t) {
            report.push(
                ViolationCode::TopicNotLinked,
                GraphSide::Concept,
                format!("topic entity `{t}` not in concept graph"),
            );
        }
    }

    if mediums(scene, concept).is_empty() {
        report.push(
            ViolationCode::NoMediums,
            GraphSide::Instance,
            "no mentioned entity occurs in the concept graph",
        );
    }
    if instance.gold_answers.is_empty() {
        report.push(ViolationCode::NoGold, GraphSide::Instance, "no gold answers");
    }
    for g in &instance.gold_answers {
        if !concept.entities.contains(&g.entity) {
            report.push(
                ViolationCode::GoldNotCandidate,
                GraphSide::Instance,
                format!("gold `{}` is not a concept-graph entity", g.entity),
            );
        }
        if !(g.weight > 0.0 && g.weight <= 1.0) {
            report.push(
                ViolationCode::GoldWeightRange,
                GraphSide::Instance,
                format!("gold `{}` weight {} outside (0, 1]", g.entity, g.weight),
            );
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupled_graph::{ConceptGraph, EntityId, GoldAnswer, Provenance, SceneGraph};

    pub(crate) fn sakura_instance() -> CoupledInstance {
        let scene = SceneGraph::from_parts(
            vec![EntityId::new("woman"), EntityId::new("coat"), EntityId::new("sakura")],
            vec![
                Triple::new("sakura", "at_location", "tree"),
                Triple::new("woman", "wears", "coat"),
            ],
        );
        let mut concept = ConceptGraph::default();
        concept.add_fact(Triple::new("coat", "used_for", "keep warm"), Provenance::Kg);
        concept.add_fact(Triple::new("sakura", "type_of", "spring blooming"), Provenance::Kg);
        concept.add_fact(Triple::new("season", "related_to", "spring"), Provenance::Kg);
        CoupledInstance {
            id: "okvqa-1".into(),
            scene,
            concept,
            question: "What season is it?".into(),
            topic_entities: vec![EntityId::new("season")],
            gold_answers: vec![GoldAnswer::new("spring", 1.0)],
        }
    }

    #[test]
    fn valid_instance_has_empty_report() {
        let report = validate(&sakura_instance());
        assert!(report.is_valid(), "{:?}", report);
    }

    #[test]
    fn off_vocabulary_relation_is_flagged() {
        let mut inst = sakura_instance();
        inst.scene.triples.push(Triple::new("woman", "near", "tree"));
        inst.scene.entities.insert(EntityId::new("tree"));
        let report = validate(&inst);
        assert_eq!(report.codes(), vec![ViolationCode::UnknownRelation]);
    }

    #[test]
    fn gold_outside_concept_graph_is_flagged() {
        let mut inst = sakura_instance();
        inst.gold_answers = vec![GoldAnswer::new("summer", 1.0)];
        assert!(validate(&inst).has(ViolationCode::GoldNotCandidate));
    }

    #[test]
    fn structural_breakages_are_all_reported() {
        let mut inst = sakura_instance();
        inst.scene.triples.push(Triple::new("sakura", "at_location", "tree"));
        inst.scene.mentions.push(EntityId::new("ghost"));
        inst.concept.provenance.pop();
        inst.gold_answers.push(GoldAnswer::new("spring blooming", 1.5));
        let codes = validate(&inst).codes();
        for want in [
            ViolationCode::DuplicateTriple,
            ViolationCode::MentionNotEntity,
            ViolationCode::ProvenanceMismatch,
            ViolationCode::GoldWeightRange,
        ] {
            assert!(codes.contains(&want), "missing {want} in {codes:?}");
        }
    }

    #[test]
    fn validate_is_pure() {
        let mut inst = sakura_instance();
        inst.scene.triples.push(Triple::new("x", "near", "y"));
        assert_eq!(validate(&inst), validate(&inst));
    }
}
