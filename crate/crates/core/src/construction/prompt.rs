use std::fs;
use std::path::Path;

use super::ConstructionError;

pub const RELATIONS_SLOT: &str = "{relations}";
pub const CAPTION_SLOT: &str = "{caption}";
pub const MENTIONS_SLOT: &str = "{mentions}";

const DEFAULT_CAPTION: &str = "Describe the image with as many details as possible. Generally, identify the objects and their spatial relations with each other. Specifically, include the visual outlook of different objects, e.g., color, style as well as the appearance for human beings.";

const DEFAULT_SCENE_GRAPH: &str = "Given the image caption, based on your comprehensive understanding, construct a high-quality scene graph with as many meaningful details of the mentioned entities as possible in the form of a triple (head entity, relation, tail entity).\nStrictly use the twelve predefined relations from: {relations}, e.g., (woman, in_front_of, car), (car, has_color, blue), only return the triples with no other content.\nCaption: {caption}\nMentioned Entities: {mentions}.";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PromptKind {
    Caption,
    SceneGraph,
}

impl PromptKind {
    pub fn file_name(self) -> &'static str {
        match self {
            PromptKind::Caption => "caption.txt",
            PromptKind::SceneGraph => "scene_graph.txt",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    pub kind: PromptKind,
    pub body: String,
}

impl PromptTemplate {
    pub fn new(kind: PromptKind, body: impl Into<String>) -> Result<Self, ConstructionError> {
        let t = PromptTemplate {
            kind,
            body: body.into(),
        };
        t.check()?;
        Ok(t)
    }

    fn check(&self) -> Result<(), ConstructionError> {
        if self.body.trim().is_empty() {
            return Err(ConstructionError::InvalidTemplate {
                name: self.kind.file_name().into(),
                detail: "empty body".into(),
            });
        }
        if self.kind == PromptKind::SceneGraph {
            for slot in [RELATIONS_SLOT, CAPTION_SLOT, MENTIONS_SLOT] {
                if !self.body.contains(slot) {
                    return Err(ConstructionError::InvalidTemplate {
                        name: self.kind.file_name().into(),
                        detail: format!("missing placeholder {slot}"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Substitutes the three placeholders. Unused slots are ignored.
    pub fn render(&self, relations: &str, caption: &str, mentions: &str) -> String {
        self.body
            .replace(RELATIONS_SLOT, relations)
            .replace(CAPTION_SLOT, caption)
            .replace(MENTIONS_SLOT, mentions)
    }
}

/// Caption and scene-graph templates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptSet {
    pub caption: PromptTemplate,
    pub scene_graph: PromptTemplate,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            caption: PromptTemplate {
                kind: PromptKind::Caption,
                body: DEFAULT_CAPTION.into(),
            },
            scene_graph: PromptTemplate {
                kind: PromptKind::SceneGraph,
                body: DEFAULT_SCENE_GRAPH.into(),
            },
        }
    }
}

impl PromptSet {
    /// Loads `caption.txt` and `scene_graph.txt` from `dir`, falling back to
    /// the built-in template for any missing file.
    pub fn from_dir(dir: &Path) -> Result<Self, ConstructionError> {
        let defaults = PromptSet::default();
        let load = |kind: PromptKind, fallback: PromptTemplate| -> Result<PromptTemplate, ConstructionError> {
            let path = dir.join(kind.file_name());
            if path.exists() {
                let body = fs::read_to_string(&path)?;
                PromptTemplate::new(kind, body.trim_end().to_string())
            } else {
                Ok(fallback)
            }
        };
        Ok(PromptSet {
            caption: load(PromptKind::Caption, defaults.caption)?,
            scene_graph: load(PromptKind::SceneGraph, defaults.scene_graph)?,
        })
    }

    pub fn write_to_dir(&self, dir: &Path) -> Result<(), ConstructionError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(PromptKind::Caption.file_name()), &self.caption.body)?;
        fs::write(dir.join(PromptKind::SceneGraph.file_name()), &self.scene_graph.body)?;
        Ok(())
    }
}
