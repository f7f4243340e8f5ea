use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use medium_fusion::construction::{
    extract_scene_triples, link_concepts, CaptionRecord, PromptSet, StubKnowledgeGraph, StubLanguageModel,
};
use medium_fusion::coupled_graph::{
    load_corpus, mediums, relation_histogram, save_corpus, ConceptGraph, EntityId, Provenance, RelationVocabulary,
    SceneGraph, Triple,
};
use medium_fusion::fusion::{
    attention_from_scores, attention_weights, ensure_relation, init_parameters, layer_update, medium_exchange,
    AttentionNorm, EntityTable, FusionConfig, GraphState, LayerVars, PreparedInstance, Side,
};
use medium_fusion::harness::{generate_synthetic, SyntheticSpec};
use medium_fusion::numeric::{ParameterStore, Tape, Tensor};
use medium_fusion::objectives::predict;
use medium_fusion::CoupledInstance;

const POOL: [&str; 8] = ["coat", "tree", "woman", "dog", "cup", "bench", "sky", "car"];
const SCENE_RELS: [&str; 4] = ["holds", "next_to", "has_color", "wears"];
const CONCEPT_RELS: [&str; 3] = ["used_for", "is_a", "at_location"];

fn triple_strategy(rels: &'static [&'static str]) -> impl Strategy<Value = Triple> {
    (0..POOL.len(), 0..rels.len(), 0..POOL.len())
        .prop_filter("no self loops", |(h, _, t)| h != t)
        .prop_map(move |(h, r, t)| Triple::new(POOL[h], rels[r], POOL[t]))
}

prop_compose! {
    fn coupled()(
        scene in prop::collection::vec(triple_strategy(&SCENE_RELS), 1..8),
        concept in prop::collection::vec(triple_strategy(&CONCEPT_RELS), 1..8),
        extra in prop::collection::vec(0..POOL.len(), 0..3),
    ) -> CoupledInstance {
        let mut mentions: Vec<EntityId> = scene.iter().map(|t| t.head.clone()).collect();
        mentions.extend(extra.iter().map(|&i| EntityId::new(POOL[i])));
        let scene = SceneGraph::from_parts(mentions, scene);
        let mut graph = ConceptGraph::default();
        for t in concept {
            graph.add_fact(t, Provenance::Kg);
        }
        CoupledInstance {
            id: "p".into(),
            scene,
            concept: graph,
            question: "what is it?".into(),
            topic_entities: Vec::new(),
            gold_answers: Vec::new(),
        }
    }
}

fn small_config(layers: usize) -> FusionConfig {
    FusionConfig {
        layers,
        dim: 4,
        context_dim: 2,
        ..FusionConfig::default()
    }
}

fn store_for(inst: &PreparedInstance, cfg: &FusionConfig, seed: u64) -> ParameterStore {
    let mut store = ParameterStore::new();
    init_parameters(&mut store, cfg, seed);
    for (side, rel) in inst.relations() {
        ensure_relation(&mut store, side, &rel, cfg.dim, seed);
    }
    store
}

proptest! {
    #[test]
    fn attention_sums_to_one_and_ignores_shifts(
        scores in prop::collection::vec(-30.0f64..30.0, 1..12),
        shift in -50.0f64..50.0,
    ) {
        let alpha = attention_from_scores(&scores, AttentionNorm::Exp);
        prop_assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let beta = attention_from_scores(&shifted, AttentionNorm::Exp);
        for (a, b) in alpha.iter().zip(&beta) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn tape_attention_is_normalised(
        messages in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 1..10),
        seed in 0u64..1000,
    ) {
        let cfg = small_config(1);
        let mut store = ParameterStore::new();
        init_parameters(&mut store, &cfg, seed);
        let mut tape = Tape::new();
        let w = LayerVars::load(&mut tape, &store, Side::Scene, 0).unwrap();
        let c = tape.constant(Tensor::vector(vec![0.3, -0.8]));
        let ms: Vec<_> = messages.iter().map(|m| tape.constant(Tensor::vector(m.clone()))).collect();
        let alpha = attention_weights(&mut tape, &ms, c, &w, &cfg).unwrap();
        let a = tape.value(alpha).data();
        prop_assert_eq!(a.len(), messages.len());
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(a.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn predict_survives_monotone_maps(
        scores in prop::collection::btree_map("[a-f]{1,3}", -10.0f64..10.0, 1..10),
        k in -100.0f64..100.0,
        a in 0.5f64..4.0,
    ) {
        let base: BTreeMap<EntityId, f64> = scores.iter().map(|(n, v)| (EntityId::new(n), *v)).collect();
        let shifted: BTreeMap<EntityId, f64> = base.iter().map(|(e, v)| (e.clone(), v + k)).collect();
        let cubed: BTreeMap<EntityId, f64> = base.iter().map(|(e, v)| (e.clone(), a * v * v * v + v)).collect();
        let p = predict(&base);
        prop_assert_eq!(&predict(&shifted), &p);
        prop_assert_eq!(&predict(&cubed), &p);
    }

    #[test]
    fn exchange_is_local_and_an_involution(inst in coupled(), layer in 1usize..6, seed in 0u64..50) {
        let cfg = small_config(1);
        let table = EntityTable::new(cfg.dim, seed);
        let prepared = PreparedInstance::new(&inst, &table);
        let store = store_for(&prepared, &cfg, seed);
        let mut tape = Tape::new();
        let mut s = GraphState::initial(&mut tape, &store, &prepared.scene).unwrap();
        let mut c = GraphState::initial(&mut tape, &store, &prepared.concept).unwrap();
        let (s0, c0) = (s.entities.clone(), c.entities.clone());
        let snapshot = |st: &GraphState, tape: &Tape| -> Vec<Vec<u64>> {
            st.entities.iter().map(|v| tape.value(*v).data().iter().map(|x| x.to_bits()).collect()).collect()
        };
        let (sv, cv) = (snapshot(&s, &tape), snapshot(&c, &tape));

        medium_exchange(&mut s, &mut c, &prepared.mediums, layer).unwrap();
        let (sv1, cv1) = (snapshot(&s, &tape), snapshot(&c, &tape));
        for (i, e) in prepared.scene.entities.iter().enumerate() {
            if prepared.mediums.contains(e) {
                let j = prepared.concept.index_of(e).unwrap();
                prop_assert_eq!(&sv1[i], &cv[j]);
            } else {
                prop_assert_eq!(&sv1[i], &sv[i]);
            }
        }
        for (j, e) in prepared.concept.entities.iter().enumerate() {
            if !prepared.mediums.contains(e) {
                prop_assert_eq!(&cv1[j], &cv[j]);
            }
        }

        medium_exchange(&mut s, &mut c, &prepared.mediums, layer).unwrap();
        prop_assert_eq!(&s.entities, &s0);
        prop_assert_eq!(&c.entities, &c0);
    }

    #[test]
    fn scene_weights_never_reach_concept_before_exchange(inst in coupled(), seed in 0u64..50, bump in 0.1f64..5.0) {
        let cfg = small_config(2);
        let table = EntityTable::new(cfg.dim, seed);
        let prepared = PreparedInstance::new(&inst, &table);
        let store = store_for(&prepared, &cfg, seed);
        let mut mutated = store.clone();
        let scene_names: Vec<String> = mutated.names().filter(|n| n.starts_with("scene/")).map(str::to_string).collect();
        for n in scene_names {
            for x in mutated.value_mut(&n).unwrap().data_mut() {
                *x += bump;
            }
        }
        let concept_after_layer0 = |store: &ParameterStore| -> Vec<Vec<u64>> {
            let mut tape = Tape::new();
            let c = tape.constant(Tensor::vector(vec![0.2, -0.4]));
            let s0 = GraphState::initial(&mut tape, store, &prepared.scene).unwrap();
            let c0 = GraphState::initial(&mut tape, store, &prepared.concept).unwrap();
            let ws = LayerVars::load(&mut tape, store, Side::Scene, 0).unwrap();
            let wc = LayerVars::load(&mut tape, store, Side::Concept, 0).unwrap();
            let _ = layer_update(&mut tape, &s0, c, &ws, &cfg, None).unwrap();
            let c1 = layer_update(&mut tape, &c0, c, &wc, &cfg, None).unwrap();
            c1.entities.iter().map(|v| tape.value(*v).data().iter().map(|x| x.to_bits()).collect()).collect()
        };
        prop_assert_eq!(concept_after_layer0(&store), concept_after_layer0(&mutated));
    }

    #[test]
    fn mediums_lie_in_both_graphs(inst in coupled()) {
        let m = mediums(&inst.scene, &inst.concept);
        let unique: BTreeSet<_> = m.iter().collect();
        prop_assert_eq!(unique.len(), m.len());
        for e in &m {
            prop_assert!(inst.scene.mentions.contains(e));
            prop_assert!(inst.concept.entities.contains(e));
        }
    }

    #[test]
    fn histogram_total_counts_every_scene_triple(insts in prop::collection::vec(coupled(), 0..6)) {
        let hist = relation_histogram(&insts);
        let total: usize = insts.iter().map(|i| i.scene.triples.len()).sum();
        prop_assert_eq!(hist.total(), total);
        prop_assert_eq!(hist.counts.len(), 12);
    }

    #[test]
    fn extraction_never_leaves_the_vocabulary(
        lines in prop::collection::vec(
            (0..POOL.len(), prop::sample::select(vec!["holds", "next_to", "near", "under", "has_color", "is_a"]), 0..POOL.len()),
            1..10,
        ),
    ) {
        let response: String = lines
            .iter()
            .map(|(h, r, t)| format!("({}, {r}, {})\n", POOL[*h], POOL[*t]))
            .collect();
        let llm = StubLanguageModel::new(response);
        let mentions: Vec<EntityId> = POOL.iter().map(|e| EntityId::new(e)).collect();
        let vocab = RelationVocabulary::standard();
        let caption = CaptionRecord { image_ref: "img".into(), text: "a scene".into(), model_tag: "stub".into() };
        if let Ok(result) = extract_scene_triples(&caption, &mentions, &vocab, &PromptSet::default().scene_graph, &llm) {
            prop_assert!(result.accepted.iter().all(|t| vocab.contains(t.relation.as_str())));
        }
    }

    #[test]
    fn linking_keeps_every_seed(
        facts in prop::collection::vec(triple_strategy(&CONCEPT_RELS), 0..10),
        seeds in prop::collection::vec(0..POOL.len(), 1..4),
        hops in 1u32..3,
    ) {
        let kg = StubKnowledgeGraph::new(facts);
        let mentions: Vec<EntityId> = seeds.iter().map(|&i| EntityId::new(POOL[i])).collect();
        let linked = link_concepts(&mentions, &[], &kg, hops).unwrap();
        for m in &mentions {
            prop_assert!(linked.graph.entities.contains(m));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn corpus_round_trip_is_identity(seed in 0u64..10_000, n in 1usize..6) {
        let corpus = generate_synthetic(&SyntheticSpec { n_instances: n, seed, ..SyntheticSpec::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        save_corpus(&corpus, &path).unwrap();
        prop_assert_eq!(load_corpus(&path).unwrap(), corpus);
    }
}
