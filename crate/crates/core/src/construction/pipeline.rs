use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coupled_graph::{CoupledInstance, EntityId, GoldAnswer, RelationVocabulary, SceneGraph};

use super::client::{KnowledgeGraph, LanguageModel, LlmRequest};
use super::extract::{extract_scene_triples, ExtractionResult};
use super::link::link_concepts;
use super::mentions::{extract_mentions, mentions_in};
use super::prompt::{PromptSet, PromptTemplate};
use super::{CaptionRecord, ConstructionError};

/// Asks the model for a dense caption of `image_ref`, returned verbatim.
pub fn generate_caption(
    image_ref: &str,
    template: &PromptTemplate,
    llm: &dyn LanguageModel,
) -> Result<CaptionRecord, ConstructionError> {
    let text = llm.complete(&LlmRequest {
        prompt: template.body.clone(),
        image_ref: Some(image_ref.to_string()),
    })?;
    if text.trim().is_empty() {
        return Err(ConstructionError::EmptyResponse { service: "llm".into() });
    }
    Ok(CaptionRecord {
        image_ref: image_ref.to_string(),
        text,
        model_tag: llm.model_tag(),
    })
}

/// One line of a construction request file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionRequest {
    pub id: String,
    pub image_ref: String,
    pub question: String,
    /// Pre-computed caption; when absent one is generated.
    #[serde(default)]
    pub caption: Option<String>,
    /// Question entities; when empty they are taken from the question text.
    #[serde(default)]
    pub topic_entities: Vec<EntityId>,
    #[serde(default)]
    pub gold_answers: Vec<GoldAnswer>,
}

/// Reads a JSONL request file, skipping blank lines.
pub fn load_requests(path: &Path) -> Result<Vec<ConstructionRequest>, ConstructionError> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (record, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let req = serde_json::from_str(line).map_err(|e| ConstructionError::BadRequest {
            record,
            detail: e.to_string(),
        })?;
        out.push(req);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionOutput {
    pub instance: CoupledInstance,
    pub caption: CaptionRecord,
    pub extraction: ExtractionResult,
    pub warnings: Vec<String>,
}

pub struct Pipeline<'a> {
    pub llm: &'a dyn LanguageModel,
    pub kg: &'a dyn KnowledgeGraph,
    pub prompts: PromptSet,
    pub vocab: RelationVocabulary,
    pub hop_limit: u32,
}

impl<'a> Pipeline<'a> {
    pub fn new(llm: &'a dyn LanguageModel, kg: &'a dyn KnowledgeGraph) -> Self {
        Pipeline {
            llm,
            kg,
            prompts: PromptSet::default(),
            vocab: RelationVocabulary::standard(),
            hop_limit: 1,
        }
    }

    /// Caption, mentions, scene triples and concept linking for one request.
    pub fn build_instance(&self, req: &ConstructionRequest) -> Result<ConstructionOutput, ConstructionError> {
        let caption = match &req.caption {
            Some(text) if !text.trim().is_empty() => CaptionRecord {
                image_ref: req.image_ref.clone(),
                text: text.clone(),
                model_tag: "provided".into(),
            },
            _ => generate_caption(&req.image_ref, &self.prompts.caption, self.llm)?,
        };
        let mentions = extract_mentions(&caption);
        let extraction = extract_scene_triples(&caption, &mentions, &self.vocab, &self.prompts.scene_graph, self.llm)?;
        let topic_entities = if req.topic_entities.is_empty() {
            mentions_in(&req.question)
        } else {
            req.topic_entities.clone()
        };
        let linked = link_concepts(&mentions, &topic_entities, self.kg, self.hop_limit)?;
        let mut warnings = extraction.warnings.clone();
        warnings.extend(linked.warnings);
        let scene = SceneGraph::from_parts(mentions, extraction.accepted.clone());
        Ok(ConstructionOutput {
            instance: CoupledInstance {
                id: req.id.clone(),
                scene,
                concept: linked.graph,
                question: req.question.clone(),
                topic_entities,
                gold_answers: req.gold_answers.clone(),
            },
            caption,
            extraction,
            warnings,
        })
    }
}
