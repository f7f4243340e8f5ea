use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::coupled_graph::{EntityId, Triple};

use super::ConstructionError;

/// One completion request. `image_ref` is forwarded opaquely for
/// vision-capable endpoints.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LlmRequest {
    pub prompt: String,
    pub image_ref: Option<String>,
}

pub trait LanguageModel: Send + Sync {
    fn model_tag(&self) -> String;
    fn complete(&self, request: &LlmRequest) -> Result<String, ConstructionError>;
}

pub trait KnowledgeGraph: Send + Sync {
    /// Facts within `hops` edges of `entity`, in either direction.
    fn neighbourhood(&self, entity: &EntityId, hops: u32) -> Result<Vec<Triple>, ConstructionError>;
}

impl<T: LanguageModel + ?Sized> LanguageModel for &T {
    fn model_tag(&self) -> String {
        (**self).model_tag()
    }
    fn complete(&self, request: &LlmRequest) -> Result<String, ConstructionError> {
        (**self).complete(request)
    }
}

impl<T: KnowledgeGraph + ?Sized> KnowledgeGraph for &T {
    fn neighbourhood(&self, entity: &EntityId, hops: u32) -> Result<Vec<Triple>, ConstructionError> {
        (**self).neighbourhood(entity, hops)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub base_url: String,
    /// Environment variable holding a bearer token, if the service needs one.
    pub token_env: Option<String>,
    pub timeout_ms: u64,
    /// Extra attempts after the first failure.
    pub retries: u32,
    pub backoff_ms: u64,
    /// Model tag recorded with generated captions.
    pub model_tag: String,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: String::new(),
            token_env: None,
            timeout_ms: 30_000,
            retries: 2,
            backoff_ms: 250,
            model_tag: "remote".into(),
        }
    }
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            ..EndpointConfig::default()
        }
    }

    fn agent(&self) -> ureq::Agent {
        ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(self.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into()
    }

    fn token(&self) -> Option<String> {
        self.token_env.as_deref().and_then(|v| std::env::var(v).ok())
    }

    fn with_retries<T>(
        &self,
        service: &str,
        mut attempt: impl FnMut() -> Result<T, String>,
    ) -> Result<T, ConstructionError> {
        let total = self.retries + 1;
        let mut last = String::new();
        for n in 0..total {
            match attempt() {
                Ok(v) => return Ok(v),
                Err(e) => {
                    log::warn!("{service} attempt {}/{total} failed: {e}", n + 1);
                    last = e;
                    if n + 1 < total && self.backoff_ms > 0 {
                        thread::sleep(Duration::from_millis(self.backoff_ms << n));
                    }
                }
            }
        }
        Err(ConstructionError::ServiceUnavailable {
            service: service.into(),
            attempts: total,
            detail: last,
        })
    }
}

fn read_ok(resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Result<String, String> {
    let mut resp = resp.map_err(|e| e.to_string())?;
    let status = resp.status();
    let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
    if status.is_success() {
        Ok(body)
    } else {
        Err(format!("HTTP {status}: {}", body.trim()))
    }
}

/// Completion endpoint: `POST base_url` with `{"prompt", "image"}` JSON,
/// plain-text completion in the response body.
pub struct HttpLanguageModel {
    config: EndpointConfig,
    agent: ureq::Agent,
}

impl HttpLanguageModel {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = config.agent();
        HttpLanguageModel { config, agent }
    }
}

impl LanguageModel for HttpLanguageModel {
    fn model_tag(&self) -> String {
        self.config.model_tag.clone()
    }

    fn complete(&self, request: &LlmRequest) -> Result<String, ConstructionError> {
        let body = serde_json::json!({ "prompt": request.prompt, "image": request.image_ref }).to_string();
        self.config.with_retries("llm", || {
            let mut req = self
                .agent
                .post(&self.config.base_url)
                .header("Content-Type", "application/json");
            if let Some(tok) = self.config.token() {
                req = req.header("Authorization", format!("Bearer {tok}"));
            }
            read_ok(req.send(body.as_str()))
        })
    }
}

#[derive(Deserialize)]
struct TripleList {
    triples: Vec<Triple>,
}

/// Knowledge-graph endpoint: `GET base_url?entity=<e>&hops=<k>` returning
/// `{"triples": [{"head", "relation", "tail"}, ...]}`.
pub struct HttpKnowledgeGraph {
    config: EndpointConfig,
    agent: ureq::Agent,
}

impl HttpKnowledgeGraph {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = config.agent();
        HttpKnowledgeGraph { config, agent }
    }
}

impl KnowledgeGraph for HttpKnowledgeGraph {
    fn neighbourhood(&self, entity: &EntityId, hops: u32) -> Result<Vec<Triple>, ConstructionError> {
        let body = self.config.with_retries("kg", || {
            let mut req = self
                .agent
                .get(&self.config.base_url)
                .query("entity", entity.as_str())
                .query("hops", hops.to_string());
            if let Some(tok) = self.config.token() {
                req = req.header("Authorization", format!("Bearer {tok}"));
            }
            read_ok(req.call())
        })?;
        let parsed: TripleList =
            serde_json::from_str(&body).map_err(|e| ConstructionError::BadResponse(format!("kg: {e}")))?;
        Ok(parsed.triples)
    }
}

/// Offline model with canned responses. The first rule whose needle occurs in
/// the prompt wins; otherwise the default response is returned.
#[derive(Default)]
pub struct StubLanguageModel {
    rules: Vec<(String, String)>,
    default: String,
    calls: AtomicUsize,
}

impl StubLanguageModel {
    pub fn new(default: impl Into<String>) -> Self {
        StubLanguageModel {
            default: default.into(),
            ..StubLanguageModel::default()
        }
    }

    pub fn with_rule(mut self, needle: impl Into<String>, response: impl Into<String>) -> Self {
        self.rules.push((needle.into(), response.into()));
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl LanguageModel for StubLanguageModel {
    fn model_tag(&self) -> String {
        "stub".into()
    }

    fn complete(&self, request: &LlmRequest) -> Result<String, ConstructionError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let hit = self
            .rules
            .iter()
            .find(|(needle, _)| request.prompt.contains(needle.as_str()));
        Ok(hit.map_or(&self.default, |(_, r)| r).clone())
    }
}

/// In-memory fact table answering neighbourhood queries by breadth-first
/// search over edges in both directions.
#[derive(Default)]
pub struct StubKnowledgeGraph {
    facts: Vec<Triple>,
    failing: HashSet<EntityId>,
    calls: AtomicUsize,
}

impl StubKnowledgeGraph {
    pub fn new(facts: Vec<Triple>) -> Self {
        StubKnowledgeGraph {
            facts,
            ..StubKnowledgeGraph::default()
        }
    }

    /// Queries for `entity` fail with SERVICE_UNAVAILABLE.
    pub fn failing_on(mut self, entity: &str) -> Self {
        self.failing.insert(EntityId::new(entity));
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl KnowledgeGraph for StubKnowledgeGraph {
    fn neighbourhood(&self, entity: &EntityId, hops: u32) -> Result<Vec<Triple>, ConstructionError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.failing.contains(entity) {
            return Err(ConstructionError::ServiceUnavailable {
                service: "kg".into(),
                attempts: 1,
                detail: format!("stub refuses `{entity}`"),
            });
        }
        let mut adjacency: BTreeMap<&EntityId, Vec<usize>> = BTreeMap::new();
        for (i, t) in self.facts.iter().enumerate() {
            adjacency.entry(&t.head).or_default().push(i);
            adjacency.entry(&t.tail).or_default().push(i);
        }
        let mut visited: HashSet<&EntityId> = HashSet::from([entity]);
        let mut frontier = VecDeque::from([(entity, 0u32)]);
        let mut picked = BTreeSet::new();
        while let Some((node, depth)) = frontier.pop_front() {
            if depth >= hops {
                continue;
            }
            for &i in adjacency.get(node).into_iter().flatten() {
                picked.insert(i);
                let t = &self.facts[i];
                let other = if &t.head == node { &t.tail } else { &t.head };
                if visited.insert(other) {
                    frontier.push_back((other, depth + 1));
                }
            }
        }
        Ok(picked.into_iter().map(|i| self.facts[i].clone()).collect())
    }
}

/// Always fails; stands in for an unreachable service in offline runs.
pub struct UnavailableLanguageModel;

impl LanguageModel for UnavailableLanguageModel {
    fn model_tag(&self) -> String {
        "unavailable".into()
    }

    fn complete(&self, _request: &LlmRequest) -> Result<String, ConstructionError> {
        Err(ConstructionError::ServiceUnavailable {
            service: "llm".into(),
            attempts: 0,
            detail: "no language model configured".into(),
        })
    }
}

pub struct UnavailableKnowledgeGraph;

impl KnowledgeGraph for UnavailableKnowledgeGraph {
    fn neighbourhood(&self, _entity: &EntityId, _hops: u32) -> Result<Vec<Triple>, ConstructionError> {
        Err(ConstructionError::ServiceUnavailable {
            service: "kg".into(),
            attempts: 0,
            detail: "no knowledge graph configured".into(),
        })
    }
}
