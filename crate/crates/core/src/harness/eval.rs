use serde::{Deserialize, Serialize};

use crate::coupled_graph::{CoupledInstance, EntityId, GoldAnswer};
use crate::fusion::AttentionRecord;
use crate::objectives::LossBreakdown;

use super::model::Model;
use super::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub predicted: Option<EntityId>,
    pub golds: Vec<EntityId>,
    pub correct: bool,
    pub soft: f64,
    pub loss: LossBreakdown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub exact_accuracy: f64,
    pub soft_accuracy: f64,
    pub mean_loss: LossBreakdown,
    pub predictions: Vec<PredictionRecord>,
    /// Training loss per epoch, when the report belongs to a training run.
    #[serde(default)]
    pub loss_curve: Vec<LossBreakdown>,
}

/// min(3 · Σ weight of golds equal to the prediction, 3) / 3.
pub fn soft_score(predicted: Option<&EntityId>, golds: &[GoldAnswer]) -> f64 {
    let Some(p) = predicted else { return 0.0 };
    let matched: f64 = golds.iter().filter(|g| &g.entity == p).map(|g| g.weight).sum();
    ((matched * 3.0).min(3.0) / 3.0).clamp(0.0, 1.0)
}

/// Scores `corpus` with the model's parameters. The model is not modified;
/// any relation or context the model has not seen gets its seeded
/// initialisation in a private copy.
pub fn evaluate(model: &Model, corpus: &[CoupledInstance]) -> Result<EvalReport, HarnessError> {
    Ok(evaluate_with_trace(model, corpus, false)?.0)
}

pub fn evaluate_with_trace(
    model: &Model,
    corpus: &[CoupledInstance],
    record_trace: bool,
) -> Result<(EvalReport, Vec<(String, Vec<AttentionRecord>)>), HarnessError> {
    let mut local = model.clone();
    let items = local.prepare(corpus);
    local.register(&items);
    let mut predictions = Vec::with_capacity(items.len());
    let mut traces = Vec::new();
    let (mut exact, mut soft, mut inf, mut med) = (0.0, 0.0, 0.0, 0.0);
    for (item, inst) in items.iter().zip(corpus) {
        let pass = local.pass(item, record_trace)?;
        let correct = pass.prediction.as_ref().is_some_and(|p| item.golds.contains(p));
        let s = soft_score(pass.prediction.as_ref(), &inst.gold_answers);
        exact += f64::from(u8::from(correct));
        soft += s;
        inf += pass.breakdown.inference;
        med += pass.breakdown.medium;
        if record_trace {
            traces.push((item.inner.id.clone(), pass.trace));
        }
        predictions.push(PredictionRecord {
            id: item.inner.id.clone(),
            predicted: pass.prediction,
            golds: item.golds.clone(),
            correct,
            soft: s,
            loss: pass.breakdown,
        });
    }
    let n = items.len().max(1) as f64;
    Ok((
        EvalReport {
            exact_accuracy: exact / n,
            soft_accuracy: soft / n,
            mean_loss: LossBreakdown::new(inf / n, med / n, model.config.lambda),
            predictions,
            loss_curve: Vec::new(),
        },
        traces,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_score_convention() {
        let golds = vec![GoldAnswer::new("a", 1.0)];
        assert_eq!(soft_score(Some(&EntityId::new("a")), &golds), 1.0);
        assert_eq!(soft_score(Some(&EntityId::new("b")), &golds), 0.0);
        assert_eq!(soft_score(None, &golds), 0.0);
        let partial = vec![GoldAnswer::new("a", 0.3), GoldAnswer::new("b", 0.6)];
        assert!((soft_score(Some(&EntityId::new("b")), &partial) - 0.6).abs() < 1e-15);
    }
}
