use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationCategory {
    Spatial,
    Object,
}

impl fmt::Display for RelationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelationCategory::Spatial => f.write_str("spatial"),
            RelationCategory::Object => f.write_str("object"),
        }
    }
}

const ENTRIES: [(&str, RelationCategory); 12] = [
    ("at_location", RelationCategory::Spatial),
    ("next_to", RelationCategory::Spatial),
    ("in_front_of", RelationCategory::Spatial),
    ("surrounded_by", RelationCategory::Spatial),
    ("covered_by", RelationCategory::Spatial),
    ("includes", RelationCategory::Spatial),
    ("holds", RelationCategory::Spatial),
    ("has_property", RelationCategory::Object),
    ("has_color", RelationCategory::Object),
    ("made_of", RelationCategory::Object),
    ("wears", RelationCategory::Object),
    ("intends_to", RelationCategory::Object),
];

/// The twelve condensed scene relations, spatial first.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RelationVocabulary;

impl RelationVocabulary {
    pub fn standard() -> Self {
        RelationVocabulary
    }

    pub fn len(&self) -> usize {
        ENTRIES.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn entries(&self) -> impl Iterator<Item = (&'static str, RelationCategory)> {
        ENTRIES.iter().copied()
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> {
        ENTRIES.iter().map(|(n, _)| *n)
    }

    pub fn contains(&self, relation: &str) -> bool {
        ENTRIES.iter().any(|(n, _)| *n == relation)
    }

    pub fn category(&self, relation: &str) -> Option<RelationCategory> {
        ENTRIES.iter().find(|(n, _)| *n == relation).map(|(_, c)| *c)
    }

    pub fn position(&self, relation: &str) -> Option<usize> {
        ENTRIES.iter().position(|(n, _)| *n == relation)
    }

    /// Comma-separated list used to fill prompt templates.
    pub fn prompt_list(&self) -> String {
        self.names().collect::<Vec<_>>().join(", ")
    }
}
