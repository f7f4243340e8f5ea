use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::coupled_graph::{EntityId, RelationVocabulary, Triple};

use super::client::{LanguageModel, LlmRequest};
use super::prompt::PromptTemplate;
use super::{CaptionRecord, ConstructionError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectReason {
    /// Not a parenthesised, comma-separated three-field line.
    Malformed,
    UnknownRelation,
    EmptyField,
    Duplicate,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RejectReason::Malformed => "MALFORMED",
            RejectReason::UnknownRelation => "UNKNOWN_RELATION",
            RejectReason::EmptyField => "EMPTY_FIELD",
            RejectReason::Duplicate => "DUPLICATE",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedLine {
    pub line: String,
    pub reason: RejectReason,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub raw_response: String,
    pub accepted: Vec<Triple>,
    pub rejected: Vec<RejectedLine>,
    /// Accepted triples whose head is not a mentioned entity.
    pub warnings: Vec<String>,
}

/// Parses one response line of the form `(head, relation, tail)`.
///
/// Parsing is strict: the trimmed line must open and close with parentheses
/// and split into exactly three comma-separated fields.
pub fn parse_triple_line(line: &str, vocab: &RelationVocabulary) -> Result<Triple, RejectReason> {
    let trimmed = line.trim();
    let inner = trimmed
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or(RejectReason::Malformed)?;
    let fields: Vec<&str> = inner.split(',').map(str::trim).collect();
    if fields.len() != 3 {
        return Err(RejectReason::Malformed);
    }
    if fields.iter().any(|f| f.is_empty()) {
        return Err(RejectReason::EmptyField);
    }
    let triple = Triple::new(fields[0], fields[1], fields[2]);
    if !vocab.contains(triple.relation.as_str()) {
        return Err(RejectReason::UnknownRelation);
    }
    Ok(triple)
}

pub(crate) fn parse_response(raw: &str, mentions: &[EntityId], vocab: &RelationVocabulary) -> ExtractionResult {
    let mention_set: HashSet<&EntityId> = mentions.iter().collect();
    let mut seen = HashSet::new();
    let mut result = ExtractionResult {
        raw_response: raw.to_string(),
        accepted: Vec::new(),
        rejected: Vec::new(),
        warnings: Vec::new(),
    };
    for line in raw.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_triple_line(line, vocab) {
            Ok(t) if !seen.insert(t.clone()) => result.rejected.push(RejectedLine {
                line: line.to_string(),
                reason: RejectReason::Duplicate,
            }),
            Ok(t) => {
                if !mention_set.contains(&t.head) {
                    result
                        .warnings
                        .push(format!("head `{}` of {t} is not a mentioned entity", t.head));
                }
                result.accepted.push(t);
            }
            Err(reason) => result.rejected.push(RejectedLine {
                line: line.to_string(),
                reason,
            }),
        }
    }
    result
}

/// Fills the scene-graph template with the caption, mentions and relation
/// list, queries the model and keeps only vocabulary triples.
pub fn extract_scene_triples(
    caption: &CaptionRecord,
    mentions: &[EntityId],
    vocab: &RelationVocabulary,
    template: &PromptTemplate,
    llm: &dyn LanguageModel,
) -> Result<ExtractionResult, ConstructionError> {
    if mentions.is_empty() {
        return Err(ConstructionError::NoMentions);
    }
    let mention_list = mentions.iter().map(EntityId::as_str).collect::<Vec<_>>().join(", ");
    let prompt = template.render(&vocab.prompt_list(), &caption.text, &mention_list);
    let raw = llm.complete(&LlmRequest {
        prompt,
        image_ref: None,
    })?;
    let result = parse_response(&raw, mentions, vocab);
    if result.accepted.is_empty() {
        let lines = raw.lines().filter(|l| !l.trim().is_empty()).count();
        return Err(ConstructionError::AllLinesRejected { lines });
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> RelationVocabulary {
        RelationVocabulary::standard()
    }

    #[test]
    fn accepts_vocabulary_triple() {
        let t = parse_triple_line("(woman, in_front_of, car)", &vocab()).unwrap();
        assert_eq!(t, Triple::new("woman", "in_front_of", "car"));
    }

    #[test]
    fn rejects_semicolon_pair_as_malformed() {
        assert_eq!(parse_triple_line("(car; blue)", &vocab()), Err(RejectReason::Malformed));
    }

    #[test]
    fn rejects_off_vocabulary_relation() {
        assert_eq!(
            parse_triple_line("(car, parked_near, tree)", &vocab()),
            Err(RejectReason::UnknownRelation)
        );
    }

    #[test]
    fn rejects_unrepaired_variants() {
        for line in [
            "woman, in_front_of, car",
            "1. (woman, in_front_of, car)",
            "(woman, in_front_of, car, street)",
            "(woman, in_front_of)",
        ] {
            assert_eq!(
                parse_triple_line(line, &vocab()),
                Err(RejectReason::Malformed),
                "{line}"
            );
        }
        assert_eq!(
            parse_triple_line("(, holds, cup)", &vocab()),
            Err(RejectReason::EmptyField)
        );
    }

    #[test]
    fn duplicate_lines_accept_once() {
        let mentions = vec![EntityId::new("woman")];
        let r = parse_response("(woman, holds, cup)\n(woman, holds, cup)\n", &mentions, &vocab());
        assert_eq!(r.accepted.len(), 1);
        assert_eq!(r.rejected[0].reason, RejectReason::Duplicate);
    }

    #[test]
    fn new_head_is_a_warning_not_a_rejection() {
        let mentions = vec![EntityId::new("woman")];
        let r = parse_response("(car, has_color, blue)", &mentions, &vocab());
        assert_eq!(r.accepted.len(), 1);
        assert_eq!(r.warnings.len(), 1);
    }
}
