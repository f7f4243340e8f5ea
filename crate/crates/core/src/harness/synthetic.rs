use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coupled_graph::{ConceptGraph, CoupledInstance, EntityId, GoldAnswer, Provenance, SceneGraph, Triple};
use crate::seeding::labelled_rng;

use super::HarnessError;

/// Scene relation marking the medium the question is about.
pub const MARKER_RELATION: &str = "holds";
pub const MARKER_ENTITY: &str = "person";

/// (answer relation, question, topic entity, answer prefix)
pub const QUESTION_TEMPLATES: [(&str, &str, &str, &str); 2] = [
    (
        "used_for",
        "What is the thing the person holds used for?",
        "purpose",
        "use",
    ),
    (
        "capable_of",
        "What can the thing the person holds do?",
        "ability",
        "skill",
    ),
];

const FILLER_RELATIONS: [(&str, &str, usize); 3] = [
    ("has_color", "hue", 8),
    ("at_location", "place", 8),
    ("made_of", "material", 6),
];

/// Parameters of the synthetic coupled-graph family.
///
/// Every instance shows a person holding one of several objects. The scene
/// graph marks which object is held; the concept graph lists what each object
/// is for and what it can do. The question asks about the held object, so the
/// concept graph alone leaves the answer ambiguous among the mediums.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_instances: usize,
    /// Scene-graph entity count: the person, the mediums and filler entities.
    pub scene_entities: usize,
    pub mediums: usize,
    /// Extra concept-graph entities linked to random mediums.
    pub distractors: usize,
    /// Concept-graph hops from the held medium to the answer, 1 or 2.
    pub hop_depth: usize,
    /// Distinct objects in the world the mediums are drawn from.
    pub world_objects: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_instances: 200,
            scene_entities: 8,
            mediums: 3,
            distractors: 2,
            hop_depth: 1,
            world_objects: 40,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn check(&self) -> Result<(), HarnessError> {
        let fail = |why: String| Err(HarnessError::InfeasibleSpec(why));
        if self.n_instances == 0 {
            return fail("n_instances must be positive".into());
        }
        if self.mediums == 0 {
            return fail("at least one medium is required".into());
        }
        if self.mediums + 1 > self.scene_entities {
            return fail(format!(
                "{} mediums plus the marker entity exceed {} scene entities",
                self.mediums, self.scene_entities
            ));
        }
        if !(1..=2).contains(&self.hop_depth) {
            return fail(format!("hop depth {} not in 1..=2", self.hop_depth));
        }
        if self.mediums > self.world_objects {
            return fail(format!(
                "{} mediums but only {} world objects",
                self.mediums, self.world_objects
            ));
        }
        Ok(())
    }
}

fn object_name(i: usize) -> String {
    format!("object_{i:03}")
}

/// Answer of `relation` for world object `obj`, plus the intermediate entity
/// on a two-hop path.
fn answer_chain(obj: usize, template: usize, depth: usize) -> Vec<String> {
    let (_, _, _, prefix) = QUESTION_TEMPLATES[template];
    let mut chain = vec![object_name(obj)];
    if depth == 2 {
        chain.push(format!("{prefix}_via_{obj:03}"));
    }
    chain.push(format!("{prefix}_{obj:03}"));
    chain
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<CoupledInstance>, HarnessError> {
    spec.check()?;
    let mut rng = labelled_rng(spec.seed, "synthetic");
    let objects: Vec<usize> = (0..spec.world_objects).collect();
    let mut out = Vec::with_capacity(spec.n_instances);
    for i in 0..spec.n_instances {
        let mediums: Vec<usize> = objects.choose_multiple(&mut rng, spec.mediums).copied().collect();
        let held = rng.random_range(0..mediums.len());
        let template = rng.random_range(0..QUESTION_TEMPLATES.len());
        let (_, question, topic, _) = QUESTION_TEMPLATES[template];

        let mut scene_triples = vec![Triple::new(MARKER_ENTITY, MARKER_RELATION, &object_name(mediums[held]))];
        let mut mentions: Vec<String> = std::iter::once(MARKER_ENTITY.to_string())
            .chain(mediums.iter().map(|&m| object_name(m)))
            .collect();
        for f in 0..spec.scene_entities - 1 - spec.mediums {
            let (rel, prefix, pool) = FILLER_RELATIONS[f % FILLER_RELATIONS.len()];
            let filler = format!("{prefix}_{}", rng.random_range(0..pool));
            if mentions.contains(&filler) {
                continue;
            }
            let owner = mediums[rng.random_range(0..mediums.len())];
            scene_triples.push(Triple::new(&object_name(owner), rel, &filler));
            mentions.push(filler);
        }
        mentions.shuffle(&mut rng);
        let scene = SceneGraph::from_parts(mentions.iter().map(|m| EntityId::new(m)).collect(), scene_triples);

        let mut concept = ConceptGraph::default();
        for &m in &mediums {
            for (t, (relation, ..)) in QUESTION_TEMPLATES.iter().enumerate() {
                let chain = answer_chain(m, t, spec.hop_depth);
                for w in chain.windows(2) {
                    concept.add_fact(Triple::new(&w[0], relation, &w[1]), Provenance::Synthetic);
                }
            }
            concept.add_fact(Triple::new(topic, "related_to", &object_name(m)), Provenance::Synthetic);
        }
        for _ in 0..spec.distractors {
            let owner = mediums[rng.random_range(0..mediums.len())];
            let other = format!("concept_{:03}", rng.random_range(0..64));
            concept.add_fact(
                Triple::new(&object_name(owner), "related_to", &other),
                Provenance::Synthetic,
            );
        }

        let gold = answer_chain(mediums[held], template, spec.hop_depth);
        out.push(CoupledInstance {
            id: format!("syn-{}-{i:04}", spec.seed),
            scene,
            concept,
            question: question.to_string(),
            topic_entities: vec![EntityId::new(topic)],
            gold_answers: vec![GoldAnswer::new(gold.last().expect("nonempty chain"), 1.0)],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupled_graph::validate;

    #[test]
    fn default_instances_are_valid() {
        let corpus = generate_synthetic(&SyntheticSpec {
            n_instances: 20,
            ..SyntheticSpec::default()
        })
        .unwrap();
        for inst in &corpus {
            assert!(validate(inst).is_valid(), "{:?}", validate(inst));
            assert_eq!(inst.mediums().len(), 3);
        }
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        for spec in [
            SyntheticSpec {
                mediums: 0,
                ..SyntheticSpec::default()
            },
            SyntheticSpec {
                mediums: 8,
                ..SyntheticSpec::default()
            },
            SyntheticSpec {
                hop_depth: 3,
                ..SyntheticSpec::default()
            },
        ] {
            assert!(matches!(
                generate_synthetic(&spec),
                Err(HarnessError::InfeasibleSpec(_))
            ));
        }
    }
}
