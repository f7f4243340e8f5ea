//! Coupled-graph construction: dense caption → mentions → scene triples, and
//! mentions + topic entities → concept graph.
//!
//! Every external call goes through [`LanguageModel`] or [`KnowledgeGraph`];
//! wrap either in a [`cache`] layer to record responses and replay them
//! offline.

pub mod cache;
mod client;
mod extract;
mod link;
mod mentions;
mod pipeline;
mod prompt;

pub use cache::{CacheMode, CachedKnowledgeGraph, CachedLanguageModel, ResponseCache};
pub use client::{
    EndpointConfig, HttpKnowledgeGraph, HttpLanguageModel, KnowledgeGraph, LanguageModel, LlmRequest,
    StubKnowledgeGraph, StubLanguageModel, UnavailableKnowledgeGraph, UnavailableLanguageModel,
};
pub use extract::{extract_scene_triples, parse_triple_line, ExtractionResult, RejectReason, RejectedLine};
pub use link::{link_concepts, LinkResult};
pub use mentions::extract_mentions;
pub use pipeline::{generate_caption, load_requests, ConstructionOutput, ConstructionRequest, Pipeline};
pub use prompt::{PromptKind, PromptSet, PromptTemplate};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConstructionError {
    #[error("SERVICE_UNAVAILABLE: {service} failed after {attempts} attempt(s): {detail}")]
    ServiceUnavailable {
        service: String,
        attempts: u32,
        detail: String,
    },
    #[error("EMPTY_RESPONSE from {service}")]
    EmptyResponse { service: String },
    #[error("ALL_LINES_REJECTED: none of {lines} response line(s) parsed to a vocabulary triple")]
    AllLinesRejected { lines: usize },
    #[error("invalid prompt template `{name}`: {detail}")]
    InvalidTemplate { name: String, detail: String },
    #[error("hop limit must be at least 1")]
    InvalidHopLimit,
    #[error("no mentioned entities to extract triples for")]
    NoMentions,
    #[error("bad service response: {0}")]
    BadResponse(String),
    #[error("request file record {record}: {detail}")]
    BadRequest { record: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Caption produced for one image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub image_ref: String,
    pub text: String,
    pub model_tag: String,
}
