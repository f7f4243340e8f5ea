use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use medium_fusion::construction::{
    extract_mentions, link_concepts, parse_triple_line, CacheMode, CachedKnowledgeGraph, CachedLanguageModel,
    CaptionRecord, ConstructionError, ConstructionRequest, EndpointConfig, HttpKnowledgeGraph, HttpLanguageModel,
    KnowledgeGraph, LanguageModel, LlmRequest, Pipeline, RejectReason, ResponseCache, StubKnowledgeGraph,
    StubLanguageModel, UnavailableKnowledgeGraph, UnavailableLanguageModel,
};
use medium_fusion::coupled_graph::{EntityId, GoldAnswer, RelationVocabulary, Triple};

type Log = Arc<Mutex<Vec<String>>>;

/// Serves the canned `(status, body)` replies in order, one per connection,
/// and records each raw request (request line, headers and body).
fn serve(replies: Vec<(u16, &'static str)>) -> (String, Log) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/api", listener.local_addr().unwrap());
    let log: Log = Arc::default();
    let seen = log.clone();
    thread::spawn(move || {
        for (status, body) in replies {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut raw = String::new();
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                raw.push_str(&line);
                if line.trim().is_empty() {
                    break;
                }
            }
            let mut payload = vec![0u8; length];
            reader.read_exact(&mut payload).unwrap();
            raw.push_str(&String::from_utf8(payload).unwrap());
            seen.lock().unwrap().push(raw);
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    (url, log)
}

fn endpoint(url: &str) -> EndpointConfig {
    EndpointConfig {
        backoff_ms: 1,
        timeout_ms: 5_000,
        ..EndpointConfig::new(url)
    }
}

#[test]
fn http_llm_posts_prompt_and_image() {
    let (url, log) = serve(vec![(200, "A dog on a bench.")]);
    let llm = HttpLanguageModel::new(endpoint(&url));
    let out = llm
        .complete(&LlmRequest {
            prompt: "describe".into(),
            image_ref: Some("img-3".into()),
        })
        .unwrap();
    assert_eq!(out, "A dog on a bench.");
    let req = &log.lock().unwrap()[0];
    assert!(req.starts_with("POST /api"));
    let body: serde_json::Value = serde_json::from_str(req.rsplit("\r\n\r\n").next().unwrap()).unwrap();
    assert_eq!(body["prompt"], "describe");
    assert_eq!(body["image"], "img-3");
}

#[test]
fn http_llm_retries_then_succeeds() {
    let (url, log) = serve(vec![(503, "busy"), (200, "ok")]);
    let llm = HttpLanguageModel::new(endpoint(&url));
    let req = LlmRequest {
        prompt: "p".into(),
        image_ref: None,
    };
    assert_eq!(llm.complete(&req).unwrap(), "ok");
    assert_eq!(log.lock().unwrap().len(), 2);
}

#[test]
fn http_llm_gives_up_after_configured_attempts() {
    let (url, log) = serve(vec![(500, "a"), (500, "b"), (500, "c")]);
    let llm = HttpLanguageModel::new(endpoint(&url));
    let err = llm
        .complete(&LlmRequest {
            prompt: "p".into(),
            image_ref: None,
        })
        .unwrap_err();
    assert!(
        matches!(err, ConstructionError::ServiceUnavailable { attempts: 3, .. }),
        "{err}"
    );
    assert_eq!(log.lock().unwrap().len(), 3);
}

#[test]
fn http_kg_queries_entity_and_hops_with_token() {
    std::env::set_var("MFUSE_TEST_KG_TOKEN", "sekret");
    let (url, log) = serve(vec![(
        200,
        r#"{"triples":[{"head":"coat","relation":"used_for","tail":"keep warm"}]}"#,
    )]);
    let kg = HttpKnowledgeGraph::new(EndpointConfig {
        token_env: Some("MFUSE_TEST_KG_TOKEN".into()),
        ..endpoint(&url)
    });
    let triples = kg.neighbourhood(&EntityId::new("coat"), 2).unwrap();
    assert_eq!(triples, vec![Triple::new("coat", "used_for", "keep warm")]);
    let req = &log.lock().unwrap()[0];
    assert!(req.starts_with("GET /api?entity=coat&hops=2"), "{req}");
    assert!(req.to_ascii_lowercase().contains("authorization: bearer sekret"));
}

#[test]
fn http_kg_rejects_malformed_body() {
    let (url, _) = serve(vec![(200, "not json")]);
    let kg = HttpKnowledgeGraph::new(endpoint(&url));
    assert!(kg.neighbourhood(&EntityId::new("coat"), 1).is_err());
}

#[test]
fn parser_accepts_vocabulary_triple_and_rejects_others() {
    let vocab = RelationVocabulary::standard();
    assert_eq!(
        parse_triple_line("(woman, in_front_of, car)", &vocab).unwrap(),
        Triple::new("woman", "in_front_of", "car")
    );
    assert_eq!(
        parse_triple_line("(woman, near, car)", &vocab),
        Err(RejectReason::UnknownRelation)
    );
    assert_eq!(parse_triple_line("(car; blue)", &vocab), Err(RejectReason::Malformed));
}

#[test]
fn mentions_follow_noun_phrase_oracle() {
    let caption = CaptionRecord {
        image_ref: "i".into(),
        text: "a woman in a coat under a sakura tree".into(),
        model_tag: "t".into(),
    };
    let got = extract_mentions(&caption);
    let names: Vec<&str> = got.iter().map(EntityId::as_str).collect();
    assert_eq!(names, ["woman", "coat", "sakura", "tree"]);
}

/// Undirected reachability within `hops` from each seed, unioned.
fn union_oracle(facts: &[Triple], seeds: &[&str], hops: u32) -> (BTreeSet<String>, BTreeSet<Triple>) {
    let mut entities: BTreeSet<String> = seeds.iter().map(|s| s.to_string()).collect();
    let mut triples = BTreeSet::new();
    for seed in seeds {
        let mut frontier: BTreeSet<String> = [seed.to_string()].into();
        let mut seen = frontier.clone();
        for _ in 0..hops {
            let mut next = BTreeSet::new();
            for f in facts {
                let (h, t) = (f.head.as_str(), f.tail.as_str());
                if frontier.contains(h) || frontier.contains(t) {
                    triples.insert(f.clone());
                    entities.insert(h.to_string());
                    entities.insert(t.to_string());
                    for e in [h, t] {
                        if seen.insert(e.to_string()) {
                            next.insert(e.to_string());
                        }
                    }
                }
            }
            frontier = next;
        }
    }
    (entities, triples)
}

#[test]
fn shared_neighbour_is_linked_once_and_matches_union_oracle() {
    let facts = vec![
        Triple::new("coat", "used_for", "keep warm"),
        Triple::new("scarf", "used_for", "keep warm"),
        Triple::new("scarf", "made_of", "wool"),
        Triple::new("tree", "has_a", "leaf"),
    ];
    let kg = StubKnowledgeGraph::new(facts.clone());
    let seeds = [EntityId::new("coat"), EntityId::new("scarf")];
    let linked = link_concepts(&seeds, &[], &kg, 1).unwrap();
    let (entities, triples) = union_oracle(&facts, &["coat", "scarf"], 1);
    let got: BTreeSet<String> = linked.graph.entities.iter().map(|e| e.as_str().to_string()).collect();
    assert_eq!(got, entities);
    let got_triples: BTreeSet<Triple> = linked.graph.triples.iter().cloned().collect();
    assert_eq!(got_triples, triples);
    assert_eq!(linked.graph.triples.len(), triples.len());
    assert_eq!(
        linked
            .graph
            .entities
            .iter()
            .filter(|e| e.as_str() == "keep warm")
            .count(),
        1
    );
}

#[test]
fn two_hop_linking_matches_union_oracle() {
    let facts = vec![
        Triple::new("coat", "used_for", "keep warm"),
        Triple::new("keep warm", "related_to", "winter"),
        Triple::new("winter", "related_to", "snow"),
        Triple::new("dog", "capable_of", "bark"),
    ];
    let kg = StubKnowledgeGraph::new(facts.clone());
    let linked = link_concepts(&[EntityId::new("coat")], &[EntityId::new("dog")], &kg, 2).unwrap();
    let (entities, _) = union_oracle(&facts, &["coat", "dog"], 2);
    let got: BTreeSet<String> = linked.graph.entities.iter().map(|e| e.as_str().to_string()).collect();
    assert_eq!(got, entities);
    assert!(!got.contains("snow"));
}

fn requests() -> Vec<ConstructionRequest> {
    vec![
        ConstructionRequest {
            id: "a".into(),
            image_ref: "img-a".into(),
            question: "What is the woman wearing used for?".into(),
            caption: None,
            topic_entities: Vec::new(),
            gold_answers: vec![GoldAnswer::new("keep warm", 1.0)],
        },
        ConstructionRequest {
            id: "b".into(),
            image_ref: "img-b".into(),
            question: "What is next to the dog?".into(),
            caption: Some("A dog next to a bench in a park.".into()),
            topic_entities: vec![EntityId::new("dog")],
            gold_answers: vec![GoldAnswer::new("bench", 1.0)],
        },
    ]
}

fn stub_llm() -> StubLanguageModel {
    StubLanguageModel::new("(dog, next_to, bench)\n(bench, at_location, park)\n(dog, near, bench)")
        .with_rule("Describe the image", "A woman wears a red coat under a sakura tree.")
        .with_rule(
            "Caption: A woman",
            "(woman, wears, coat)\n(coat, has_color, red)\n(woman, under, tree)",
        )
}

fn stub_kg() -> StubKnowledgeGraph {
    StubKnowledgeGraph::new(vec![
        Triple::new("coat", "used_for", "keep warm"),
        Triple::new("sakura", "at_location", "spring"),
        Triple::new("dog", "capable_of", "bark"),
        Triple::new("bench", "used_for", "sitting"),
    ])
}

fn build_all(llm: &dyn LanguageModel, kg: &dyn KnowledgeGraph) -> Vec<String> {
    let pipeline = Pipeline::new(llm, kg);
    requests()
        .iter()
        .map(|r| serde_json::to_string(&pipeline.build_instance(r).unwrap()).unwrap())
        .collect()
}

#[test]
fn cache_replay_is_byte_identical_without_services() {
    let dir = tempfile::tempdir().unwrap();
    let cache = ResponseCache::open(dir.path()).unwrap();
    let llm = CachedLanguageModel::new(stub_llm(), cache.clone(), CacheMode::Record);
    let kg = CachedKnowledgeGraph::new(stub_kg(), cache.clone(), CacheMode::Record);
    let live = build_all(&llm, &kg);
    assert!(llm.inner().calls() > 0);
    assert!(live[0].contains("keep warm"));
    assert!(live[1].contains("UNKNOWN_RELATION"));

    // A replay-only layer over dead services must answer every request from disk.
    let stub_tag = stub_llm().model_tag();
    struct Dead(String);
    impl LanguageModel for Dead {
        fn model_tag(&self) -> String {
            self.0.clone()
        }
        fn complete(&self, r: &LlmRequest) -> Result<String, ConstructionError> {
            UnavailableLanguageModel.complete(r)
        }
    }
    let llm = CachedLanguageModel::new(Dead(stub_tag), cache.clone(), CacheMode::ReplayOnly);
    let kg = CachedKnowledgeGraph::new(UnavailableKnowledgeGraph, cache, CacheMode::ReplayOnly);
    let replay = build_all(&llm, &kg);
    assert_eq!(live, replay);

    let again = build_all(&llm, &kg);
    assert_eq!(replay, again);
}
