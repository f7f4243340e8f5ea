use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::coupled_graph::{validate, CoupledInstance, ViolationCode};
use crate::fusion::{AttentionNorm, FusionConfig};
use crate::numeric::{save_checkpoint, Adam, AdamConfig, DEFAULT_LEAKY_SLOPE};
use crate::objectives::LossBreakdown;

use super::model::{Model, PreparedItem};
use super::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub layers: usize,
    pub dim: usize,
    pub context_dim: usize,
    pub sigma: f64,
    pub exchange_enabled: bool,
    pub exchange_after_final: bool,
    /// When false the medium loss is never built and joint = inference.
    pub medium_loss_enabled: bool,
    pub attention_norm: AttentionNorm,
    pub leaky_slope: f64,
    /// Stop once an epoch's training accuracy reaches this value.
    pub target_accuracy: Option<f64>,
    /// Where the lowest-loss parameters are written when training ends.
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 1,
            epochs: 500,
            learning_rate: 1e-3,
            lambda: 1e-3,
            layers: 3,
            dim: 64,
            context_dim: 32,
            sigma: 1.0,
            exchange_enabled: true,
            exchange_after_final: true,
            medium_loss_enabled: true,
            attention_norm: AttentionNorm::Exp,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            target_accuracy: None,
            checkpoint: None,
        }
    }
}

impl TrainConfig {
    pub fn fusion(&self) -> FusionConfig {
        FusionConfig {
            layers: self.layers,
            dim: self.dim,
            context_dim: self.context_dim,
            leaky_slope: self.leaky_slope,
            exchange_enabled: self.exchange_enabled,
            exchange_after_final: self.exchange_after_final,
            attention_norm: self.attention_norm,
        }
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        self.fusion().validate()?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(HarnessError::InvalidConfig(format!(
                "lambda {} must be a finite value ≥ 0",
                self.lambda
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(HarnessError::InvalidConfig(format!(
                "learning rate {}",
                self.learning_rate
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(HarnessError::InvalidConfig(format!("kernel width {}", self.sigma)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Corpus means of the per-instance losses.
    pub loss: LossBreakdown,
    pub train_accuracy: f64,
}

pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochLog>,
    /// Epoch with the lowest joint loss, if any epoch ran.
    pub best_epoch: Option<usize>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> Option<LossBreakdown> {
        self.history.last().map(|h| h.loss)
    }
}

/// Instances must be structurally valid; an instance without mediums is
/// accepted and simply contributes no medium loss.
fn check_corpus(corpus: &[CoupledInstance]) -> Result<(), HarnessError> {
    if corpus.is_empty() {
        return Err(HarnessError::EmptyCorpus);
    }
    for inst in corpus {
        let report = validate(inst);
        let blocking: Vec<String> = report
            .violations
            .iter()
            .filter(|v| v.code != ViolationCode::NoMediums)
            .map(|v| v.to_string())
            .collect();
        if !blocking.is_empty() {
            return Err(HarnessError::InvalidInstance {
                id: inst.id.clone(),
                detail: blocking.join("; "),
            });
        }
    }
    Ok(())
}

/// Full-batch training: each epoch accumulates the mean gradient over the
/// corpus and takes one Adam step.
pub fn train(corpus: &[CoupledInstance], config: &TrainConfig) -> Result<TrainOutcome, HarnessError> {
    let model = Model::new(config.clone())?;
    train_model(model, corpus)
}

/// Trains an existing model, e.g. one built with loaded vectors.
pub fn train_model(mut model: Model, corpus: &[CoupledInstance]) -> Result<TrainOutcome, HarnessError> {
    let config = model.config.clone();
    config.check()?;
    check_corpus(corpus)?;
    let items: Vec<PreparedItem> = model.prepare(corpus);
    model.register(&items);

    let mut adam = Adam::new(AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    });
    let n = items.len() as f64;
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, crate::numeric::ParameterStore)> = None;

    for epoch in 1..=config.epochs {
        model.store.zero_grad();
        let (mut inf, mut med, mut correct) = (0.0, 0.0, 0usize);
        for item in &items {
            let pass = model.pass(item, false)?;
            if !pass.breakdown.joint.is_finite() {
                return Err(HarnessError::NonFiniteLoss {
                    epoch,
                    instance: item.inner.id.clone(),
                    detail: pass
                        .tape
                        .first_non_finite()
                        .unwrap_or_else(|| format!("joint loss {}", pass.breakdown.joint)),
                });
            }
            let grads = pass.tape.backward(pass.joint);
            pass.tape.accumulate_into(&grads, &mut model.store, 1.0 / n);
            inf += pass.breakdown.inference;
            med += pass.breakdown.medium;
            if pass.prediction.as_ref().is_some_and(|p| item.golds.contains(p)) {
                correct += 1;
            }
        }
        let loss = LossBreakdown::new(inf / n, med / n, config.lambda);
        let train_accuracy = correct as f64 / n;
        log::info!(
            "epoch {epoch}: joint {:.6} inference {:.6} medium {:.6} train acc {:.4}",
            loss.joint,
            loss.inference,
            loss.medium,
            train_accuracy
        );
        if best.as_ref().is_none_or(|(_, b, _)| loss.joint < *b) {
            best = Some((epoch, loss.joint, model.store.clone()));
        }
        history.push(EpochLog {
            epoch,
            loss,
            train_accuracy,
        });
        if config.target_accuracy.is_some_and(|t| train_accuracy >= t) {
            break;
        }
        adam.step(&mut model.store);
    }
    model.store.zero_grad();

    if let (Some(path), Some((_, _, store))) = (&config.checkpoint, &best) {
        save_checkpoint(store, path)?;
    }
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: best.map(|(e, _, _)| e),
    })
}
