use std::collections::HashSet;

use crate::coupled_graph::EntityId;

use super::CaptionRecord;

// Function words, plus frequent caption verbs, adjectives and colour words
// that never name an object on their own.
const NON_NOUNS: &[&str] = &[
    // articles, determiners, pronouns
    "a",
    "an",
    "the",
    "this",
    "that",
    "these",
    "those",
    "some",
    "any",
    "each",
    "every",
    "all",
    "both",
    "few",
    "many",
    "much",
    "more",
    "most",
    "several",
    "other",
    "another",
    "such",
    "no",
    "i",
    "you",
    "he",
    "she",
    "it",
    "we",
    "they",
    "me",
    "him",
    "her",
    "us",
    "them",
    "his",
    "its",
    "our",
    "their",
    "your",
    "my",
    "mine",
    "hers",
    "theirs",
    "who",
    "whom",
    "whose",
    "which",
    "what",
    "where",
    "when",
    "why",
    "how",
    "there",
    "here",
    "one",
    "ones",
    "someone",
    "something",
    // prepositions and conjunctions
    "in",
    "on",
    "at",
    "of",
    "to",
    "for",
    "from",
    "with",
    "without",
    "by",
    "about",
    "above",
    "below",
    "under",
    "over",
    "behind",
    "beside",
    "besides",
    "between",
    "among",
    "around",
    "near",
    "into",
    "onto",
    "through",
    "across",
    "along",
    "against",
    "inside",
    "outside",
    "next",
    "front",
    "top",
    "beneath",
    "underneath",
    "toward",
    "towards",
    "upon",
    "within",
    "and",
    "or",
    "but",
    "nor",
    "so",
    "yet",
    "while",
    "as",
    "than",
    "then",
    "if",
    "because",
    "also",
    "too",
    "very",
    "just",
    "only",
    "not",
    "up",
    "down",
    "off",
    "out",
    "back",
    "nearby",
    "slightly",
    "closely",
    "likely",
    "possibly",
    "really",
    "partially",
    "fully",
    // auxiliaries and frequent verbs
    "is",
    "are",
    "was",
    "were",
    "be",
    "been",
    "being",
    "am",
    "has",
    "have",
    "had",
    "do",
    "does",
    "did",
    "can",
    "could",
    "will",
    "would",
    "may",
    "might",
    "should",
    "must",
    "appears",
    "appear",
    "seems",
    "seem",
    "looks",
    "look",
    "looking",
    "sitting",
    "sits",
    "sit",
    "standing",
    "stands",
    "stand",
    "wearing",
    "wears",
    "holding",
    "holds",
    "walking",
    "walks",
    "lying",
    "laying",
    "riding",
    "rides",
    "parked",
    "placed",
    "covered",
    "surrounded",
    "filled",
    "made",
    "playing",
    "eating",
    "smiling",
    "waiting",
    "hanging",
    "flying",
    "running",
    "carrying",
    "shows",
    "show",
    "showing",
    "depicts",
    "features",
    "featuring",
    "visible",
    "seen",
    "includes",
    "including",
    "blooming",
    "located",
    "posing",
    "using",
    "leaning",
    "crossing",
    // adjectives and colours
    "red",
    "blue",
    "green",
    "yellow",
    "white",
    "black",
    "brown",
    "gray",
    "grey",
    "orange",
    "pink",
    "purple",
    "dark",
    "light",
    "bright",
    "big",
    "small",
    "large",
    "little",
    "tall",
    "short",
    "long",
    "old",
    "young",
    "new",
    "wooden",
    "metal",
    "plastic",
    "several",
    "various",
    "different",
    "clear",
    "sunny",
    "cloudy",
    "busy",
    "empty",
    "full",
    "open",
    "closed",
    "beautiful",
    "pretty",
    "colorful",
    "colourful",
    "wide",
    "narrow",
    "high",
    "low",
    "sleek",
    "modern",
    "vintage",
    "striped",
    "casual",
    "warm",
    "cold",
    "wet",
    "dry",
    "close",
    "far",
    "left",
    "right",
    "middle",
    "center",
    "centre",
    "side",
    "background",
    "foreground",
    "image",
    "picture",
    "photo",
    "scene",
    "view",
];

/// Candidate mentioned entities of a caption: lower-cased word tokens that are
/// not function words, common verbs or adjectives, deduplicated in order of
/// first appearance.
pub fn extract_mentions(caption: &CaptionRecord) -> Vec<EntityId> {
    mentions_in(&caption.text)
}

pub(crate) fn mentions_in(text: &str) -> Vec<EntityId> {
    let stop: HashSet<&str> = NON_NOUNS.iter().copied().collect();
    let lower = text.to_lowercase();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for tok in lower.split(|c: char| !(c.is_alphanumeric() || c == '-')) {
        let tok = tok.trim_matches('-');
        if tok.len() < 2 || tok.chars().any(|c| c.is_ascii_digit()) || stop.contains(tok) {
            continue;
        }
        if seen.insert(tok.to_string()) {
            out.push(EntityId::new(tok));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caption(text: &str) -> CaptionRecord {
        CaptionRecord {
            image_ref: "img".into(),
            text: text.into(),
            model_tag: "stub".into(),
        }
    }

    fn strs(ids: Vec<EntityId>) -> Vec<String> {
        ids.into_iter().map(String::from).collect()
    }

    #[test]
    fn noun_tokens_in_order() {
        let got = strs(extract_mentions(&caption("a woman in a coat under a sakura tree")));
        assert_eq!(got, ["woman", "coat", "sakura", "tree"]);
    }

    #[test]
    fn empty_caption_has_no_mentions() {
        assert!(extract_mentions(&caption("")).is_empty());
    }

    #[test]
    fn repeated_mentions_collapse() {
        let got = strs(extract_mentions(&caption("A coat by the door; the coat is red.")));
        assert_eq!(got, ["coat", "door"]);
    }

    #[test]
    fn is_pure() {
        let c = caption("Two dogs play with a frisbee on the grass.");
        assert_eq!(extract_mentions(&c), extract_mentions(&c));
    }
}
