use std::fmt::Write;

use super::{CoupledInstance, RelationVocabulary};

/// Scene-graph triple counts for each of the twelve relations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationHistogram {
    /// `(relation, count)` in vocabulary order; zero counts included.
    pub counts: Vec<(String, usize)>,
}

impl RelationHistogram {
    pub fn get(&self, relation: &str) -> Option<usize> {
        self.counts.iter().find(|(r, _)| r == relation).map(|(_, c)| *c)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|(_, c)| c).sum()
    }
}

pub fn relation_histogram(corpus: &[CoupledInstance]) -> RelationHistogram {
    let vocab = RelationVocabulary::standard();
    let mut counts: Vec<(String, usize)> = vocab.names().map(|n| (n.to_string(), 0)).collect();
    for inst in corpus {
        for t in &inst.scene.triples {
            if let Some(i) = vocab.position(t.relation.as_str()) {
                counts[i].1 += 1;
            }
        }
    }
    RelationHistogram { counts }
}

/// Fixed-width table: category, relation, count.
pub fn format_histogram(hist: &RelationHistogram) -> String {
    let vocab = RelationVocabulary::standard();
    let mut out = String::new();
    let _ = writeln!(out, "{:<10} {:<16} {:>10}", "category", "relation", "count");
    let _ = writeln!(out, "{}", "-".repeat(38));
    for (rel, count) in &hist.counts {
        let cat = vocab.category(rel).map(|c| c.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{cat:<10} {rel:<16} {count:>10}");
    }
    let _ = writeln!(out, "{}", "-".repeat(38));
    let _ = writeln!(out, "{:<10} {:<16} {:>10}", "", "total", hist.total());
    out
}
