//! Record/replay cache for service responses, keyed by a SHA-256 digest of
//! the request. One file per key; writes go through a temporary file and a
//! rename so concurrent writers never leave a torn entry.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coupled_graph::{EntityId, Triple};

use super::client::{KnowledgeGraph, LanguageModel, LlmRequest};
use super::ConstructionError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    /// Serve hits, forward misses and store their responses.
    #[default]
    Record,
    /// Serve hits; a miss is an error and the service is never contacted.
    ReplayOnly,
    /// Bypass the cache entirely.
    Off,
}

#[derive(Clone, Debug)]
pub struct ResponseCache {
    dir: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ResponseCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Hex digest over length-prefixed parts, so part boundaries cannot be
    /// shifted to collide.
    pub fn key(parts: &[&str]) -> String {
        let mut h = Sha256::new();
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p.as_bytes());
        }
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> io::Result<Option<String>> {
        match fs::read_to_string(self.path(key)) {
            Ok(s) => Ok(Some(s)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn put(&self, key: &str, value: &str) -> io::Result<()> {
        let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
        let tmp = self.dir.join(format!(".{key}.{}.{n}.tmp", std::process::id()));
        fs::write(&tmp, value)?;
        fs::rename(&tmp, self.path(key))
    }

    pub fn len(&self) -> io::Result<usize> {
        let mut n = 0;
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if name.ends_with(".json") && !name.starts_with('.') {
                n += 1;
            }
        }
        Ok(n)
    }

    pub fn is_empty(&self) -> io::Result<bool> {
        Ok(self.len()? == 0)
    }

    fn through(
        &self,
        mode: CacheMode,
        service: &str,
        key: &str,
        fetch: impl FnOnce() -> Result<String, ConstructionError>,
    ) -> Result<String, ConstructionError> {
        if mode == CacheMode::Off {
            return fetch();
        }
        if let Some(hit) = self.get(key)? {
            log::debug!("{service} cache hit {key}");
            return Ok(hit);
        }
        if mode == CacheMode::ReplayOnly {
            return Err(ConstructionError::ServiceUnavailable {
                service: service.into(),
                attempts: 0,
                detail: format!("replay-only cache miss for key {key}"),
            });
        }
        let value = fetch()?;
        self.put(key, &value)?;
        Ok(value)
    }
}

pub struct CachedLanguageModel<L> {
    inner: L,
    cache: ResponseCache,
    mode: CacheMode,
}

impl<L: LanguageModel> CachedLanguageModel<L> {
    pub fn new(inner: L, cache: ResponseCache, mode: CacheMode) -> Self {
        CachedLanguageModel { inner, cache, mode }
    }

    pub fn inner(&self) -> &L {
        &self.inner
    }
}

impl<L: LanguageModel> LanguageModel for CachedLanguageModel<L> {
    fn model_tag(&self) -> String {
        self.inner.model_tag()
    }

    fn complete(&self, request: &LlmRequest) -> Result<String, ConstructionError> {
        let tag = self.inner.model_tag();
        let key = ResponseCache::key(&["llm", &tag, request.image_ref.as_deref().unwrap_or(""), &request.prompt]);
        let raw = self.cache.through(self.mode, "llm", &key, || {
            self.inner
                .complete(request)
                .map(|text| serde_json::Value::String(text).to_string())
        })?;
        match serde_json::from_str::<serde_json::Value>(&raw) {
            Ok(serde_json::Value::String(s)) => Ok(s),
            _ => Err(ConstructionError::BadResponse(format!("corrupt llm cache entry {key}"))),
        }
    }
}

pub struct CachedKnowledgeGraph<K> {
    inner: K,
    cache: ResponseCache,
    mode: CacheMode,
}

impl<K: KnowledgeGraph> CachedKnowledgeGraph<K> {
    pub fn new(inner: K, cache: ResponseCache, mode: CacheMode) -> Self {
        CachedKnowledgeGraph { inner, cache, mode }
    }

    pub fn inner(&self) -> &K {
        &self.inner
    }
}

impl<K: KnowledgeGraph> KnowledgeGraph for CachedKnowledgeGraph<K> {
    fn neighbourhood(&self, entity: &EntityId, hops: u32) -> Result<Vec<Triple>, ConstructionError> {
        let key = ResponseCache::key(&["kg", entity.as_str(), &hops.to_string()]);
        let raw = self.cache.through(self.mode, "kg", &key, || {
            let triples = self.inner.neighbourhood(entity, hops)?;
            serde_json::to_string(&triples).map_err(|e| ConstructionError::BadResponse(e.to_string()))
        })?;
        serde_json::from_str(&raw)
            .map_err(|e| ConstructionError::BadResponse(format!("corrupt kg cache entry {key}: {e}")))
    }
}
