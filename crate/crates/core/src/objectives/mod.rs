//! Answer scoring, the inference loss over concept-graph candidates, the
//! Gaussian-kernel MMD between the two sides' medium embeddings, and the
//! joint objective.
//!
//! The kernel's feature map is never materialised: squared MMD is computed
//! from kernel evaluations alone.

use std::collections::BTreeMap;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coupled_graph::EntityId;
use crate::fusion::GraphState;
use crate::numeric::{log_sum_exp, NumericError, ParameterStore, Tape, Tensor, Var};
use crate::seeding::labelled_rng;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("GOLD_NOT_CANDIDATE: `{0}` is not a concept-graph entity")]
    GoldNotCandidate(EntityId),
    #[error("LENGTH_MISMATCH: {scene} scene vs {concept} concept mediums")]
    LengthMismatch { scene: usize, concept: usize },
    #[error("DIMENSION_MISMATCH: {0}")]
    DimensionMismatch(String),
    #[error("no gold answers")]
    NoGold,
    #[error("kernel width must be positive, got {0}")]
    BadSigma(f64),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub sigma: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { sigma: 1.0 }
    }
}

impl KernelConfig {
    pub fn new(sigma: f64) -> Result<Self, ObjectiveError> {
        if sigma > 0.0 && sigma.is_finite() {
            Ok(KernelConfig { sigma })
        } else {
            Err(ObjectiveError::BadSigma(sigma))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub inference: f64,
    pub medium: f64,
    pub lambda: f64,
    pub joint: f64,
}

impl LossBreakdown {
    pub fn new(inference: f64, medium: f64, lambda: f64) -> Self {
        LossBreakdown {
            inference,
            medium,
            lambda,
            joint: inference + lambda * medium,
        }
    }
}

/// Names of the answer head parameters.
pub mod head_params {
    pub const CTX_PROJ: &str = "head/ctx_proj";
    pub const W1: &str = "head/w1";
    pub const B1: &str = "head/b1";
    pub const W2: &str = "head/w2";
    pub const B2: &str = "head/b2";
}

/// Perceptron scoring a candidate from e_a + P·c, where P projects the
/// context to the embedding dimension.
#[derive(Clone, Copy, Debug)]
pub struct AnswerHead {
    pub ctx_proj: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub leaky_slope: f64,
}

impl AnswerHead {
    pub fn init(store: &mut ParameterStore, dim: usize, context_dim: usize, seed: u64) {
        let mut add = |name: &str, shape: &[usize], std: f64| {
            if store.contains(name) {
                return;
            }
            let n: usize = shape.iter().product();
            let value = if std == 0.0 {
                Tensor::zeros(shape)
            } else {
                let mut rng = labelled_rng(seed, name);
                let normal = Normal::new(0.0, std).expect("positive std");
                Tensor::new(shape.to_vec(), (0..n).map(|_| normal.sample(&mut rng)).collect()).expect("shape")
            };
            store.insert(name, value);
        };
        add(
            head_params::CTX_PROJ,
            &[dim, context_dim],
            1.0 / (context_dim as f64).sqrt(),
        );
        add(head_params::W1, &[dim, dim], 1.0 / (dim as f64).sqrt());
        add(head_params::B1, &[dim], 0.0);
        add(head_params::W2, &[1, dim], 1.0 / (dim as f64).sqrt());
        add(head_params::B2, &[1], 0.0);
    }

    pub fn load(tape: &mut Tape, store: &ParameterStore, leaky_slope: f64) -> Result<Self, ObjectiveError> {
        Ok(AnswerHead {
            ctx_proj: tape.param(store, head_params::CTX_PROJ)?,
            w1: tape.param(store, head_params::W1)?,
            b1: tape.param(store, head_params::B1)?,
            w2: tape.param(store, head_params::W2)?,
            b2: tape.param(store, head_params::B2)?,
            leaky_slope,
        })
    }
}

/// Scores every concept entity, in the graph's entity order, as one vector.
pub fn answer_scores(
    tape: &mut Tape,
    concept: &GraphState,
    context: Var,
    head: &AnswerHead,
) -> Result<Var, ObjectiveError> {
    let dim = tape.value(head.w1).dims2().map(|(_, c)| c).unwrap_or(0);
    let projected = tape
        .matvec(head.ctx_proj, context)
        .map_err(|e| ObjectiveError::DimensionMismatch(e.to_string()))?;
    let mut scores = Vec::with_capacity(concept.entities.len());
    for &e in &concept.entities {
        if tape.value(e).len() != dim {
            return Err(ObjectiveError::DimensionMismatch(format!(
                "entity embedding of length {} for a head of width {dim}",
                tape.value(e).len()
            )));
        }
        let x = tape.add(e, projected)?;
        let h = tape.linear(x, head.w1, head.b1)?;
        let h = tape.leaky_relu(h, head.leaky_slope);
        scores.push(tape.linear(h, head.w2, head.b2)?);
    }
    Ok(tape.concat(&scores)?)
}

/// Candidate-index form of the gold answers.
pub fn gold_indices(concept: &GraphState, golds: &[EntityId]) -> Result<Vec<usize>, ObjectiveError> {
    if golds.is_empty() {
        return Err(ObjectiveError::NoGold);
    }
    golds
        .iter()
        .map(|g| {
            concept
                .graph
                .index_of(g)
                .ok_or_else(|| ObjectiveError::GoldNotCandidate(g.clone()))
        })
        .collect()
}

/// Mean over golds of −log softmax(scores)[gold].
pub fn inference_loss(tape: &mut Tape, scores: Var, golds: &[usize]) -> Result<Var, ObjectiveError> {
    if golds.is_empty() {
        return Err(ObjectiveError::NoGold);
    }
    let mut terms = Vec::with_capacity(golds.len());
    for &g in golds {
        terms.push(tape.softmax_nll(scores, g)?);
    }
    if terms.len() == 1 {
        return Ok(terms[0]);
    }
    Ok(tape.mean(&terms)?)
}

/// Plain-value inference loss over a score map.
pub fn inference_loss_value(scores: &BTreeMap<EntityId, f64>, golds: &[EntityId]) -> Result<f64, ObjectiveError> {
    if golds.is_empty() {
        return Err(ObjectiveError::NoGold);
    }
    let values: Vec<f64> = scores.values().copied().collect();
    let lse = log_sum_exp(&values);
    let mut total = 0.0;
    for g in golds {
        let s = scores
            .get(g)
            .ok_or_else(|| ObjectiveError::GoldNotCandidate(g.clone()))?;
        total += lse - s;
    }
    Ok(total / golds.len() as f64)
}

/// exp(−‖x − y‖² / 2σ²).
pub fn gaussian_kernel(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Biased squared MMD between two aligned medium lists:
/// mean k(S,S) + mean k(C,C) − 2 mean k(S,C).
pub fn mmd_loss(scene: &[Vec<f64>], concept: &[Vec<f64>], kernel: KernelConfig) -> Result<f64, ObjectiveError> {
    check_lengths(scene.len(), concept.len())?;
    let n2 = (scene.len() * scene.len()) as f64;
    let sum = |a: &[Vec<f64>], b: &[Vec<f64>]| -> f64 {
        a.iter()
            .flat_map(|x| b.iter().map(move |y| gaussian_kernel(x, y, kernel.sigma)))
            .sum()
    };
    Ok(sum(scene, scene) / n2 + sum(concept, concept) / n2 - 2.0 * sum(scene, concept) / n2)
}

fn check_lengths(scene: usize, concept: usize) -> Result<(), ObjectiveError> {
    if scene != concept || scene == 0 {
        return Err(ObjectiveError::LengthMismatch { scene, concept });
    }
    Ok(())
}

fn kernel_on_tape(tape: &mut Tape, x: Var, y: Var, sigma: f64) -> Result<Var, ObjectiveError> {
    let diff = tape.sub(x, y)?;
    let d2 = tape.sq_norm(diff);
    let arg = tape.scale(d2, -1.0 / (2.0 * sigma * sigma));
    Ok(tape.exp(arg))
}

/// Differentiable form of [`mmd_loss`].
pub fn mmd_loss_tape(
    tape: &mut Tape,
    scene: &[Var],
    concept: &[Var],
    kernel: KernelConfig,
) -> Result<Var, ObjectiveError> {
    check_lengths(scene.len(), concept.len())?;
    let n2 = (scene.len() * scene.len()) as f64;
    let mut block = |a: &[Var], b: &[Var]| -> Result<Var, ObjectiveError> {
        let mut ks = Vec::with_capacity(a.len() * b.len());
        for &x in a {
            for &y in b {
                ks.push(kernel_on_tape(tape, x, y, kernel.sigma)?);
            }
        }
        let stacked = tape.concat(&ks)?;
        let total = tape.sum(stacked);
        Ok(tape.scale(total, 1.0 / n2))
    };
    let ss = block(scene, scene)?;
    let cc = block(concept, concept)?;
    let sc = block(scene, concept)?;
    let within = tape.add(ss, cc)?;
    let cross = tape.scale(sc, 2.0);
    Ok(tape.sub(within, cross)?)
}

/// inference + λ·medium on the tape; the value equals
/// [`LossBreakdown::new`] bit for bit.
pub fn joint_loss(tape: &mut Tape, inference: Var, medium: Var, lambda: f64) -> Result<Var, ObjectiveError> {
    let weighted = tape.scale(medium, lambda);
    Ok(tape.add(inference, weighted)?)
}

/// Highest-scoring entity; ties go to the smallest identifier.
pub fn predict(scores: &BTreeMap<EntityId, f64>) -> Option<EntityId> {
    let mut best: Option<(&EntityId, f64)> = None;
    for (e, &s) in scores {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((e, s)),
        }
    }
    best.map(|(e, _)| e.clone())
}

/// Pairs candidate identifiers with a score vector in graph order.
pub fn score_map(concept: &GraphState, scores: &[f64]) -> BTreeMap<EntityId, f64> {
    concept
        .graph
        .entities
        .iter()
        .cloned()
        .zip(scores.iter().copied())
        .collect()
}
