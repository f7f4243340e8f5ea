//! Pseudo-siamese graph attention over the coupled graphs, with layerwise
//! medium exchange.
//!
//! Each side runs its own stack of layers. A layer builds one message per
//! outgoing edge, weighs the messages of a head with context-aware attention,
//! and adds a perceptron of their weighted sum back onto the head embedding.
//! After every layer index ≥ 1 the medium embeddings swap sides.

mod graph;
mod trace;

pub use graph::{reciprocal, relation_param_name, Edge, EntityTable, PreparedGraph, Side, RECIPROCAL_PREFIX};
pub use trace::{write_trace, AttentionRecord};

pub(crate) use graph::seeded_vector;

use std::collections::BTreeSet;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coupled_graph::{CoupledInstance, EntityId, RelationId};
use crate::numeric::{
    leaky_relu_scalar, softmax, NumericError, ParameterStore, Tape, Tensor, Var, DEFAULT_LEAKY_SLOPE,
};
use crate::seeding::labelled_rng;

pub const MAX_LAYERS: usize = 8;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("MISSING_EMBEDDING: {0}")]
    MissingEmbedding(String),
    #[error("MEDIUM_MISSING: `{entity}` is not an entity of the {side} graph")]
    MediumMissing { entity: EntityId, side: Side },
    #[error("invalid fusion config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// How raw attention scores become weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionNorm {
    /// exp(â_i) / Σ exp(â_j).
    #[default]
    Exp,
    /// â_i / Σ â_j, undefined when the sum is zero or scores change sign.
    Plain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub layers: usize,
    pub dim: usize,
    pub context_dim: usize,
    pub leaky_slope: f64,
    pub exchange_enabled: bool,
    /// Also exchange after the last layer.
    pub exchange_after_final: bool,
    pub attention_norm: AttentionNorm,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            layers: 3,
            dim: 64,
            context_dim: 32,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            exchange_enabled: true,
            exchange_after_final: true,
            attention_norm: AttentionNorm::Exp,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        if !(1..=MAX_LAYERS).contains(&self.layers) {
            return Err(FusionError::InvalidConfig(format!(
                "layer count {} outside 1..={MAX_LAYERS}",
                self.layers
            )));
        }
        if self.dim == 0 || self.context_dim == 0 {
            return Err(FusionError::InvalidConfig("dimensions must be positive".into()));
        }
        if !self.leaky_slope.is_finite() || self.leaky_slope < 0.0 {
            return Err(FusionError::InvalidConfig(format!("leaky slope {}", self.leaky_slope)));
        }
        Ok(())
    }

    /// Layer indices after which mediums are exchanged.
    pub fn exchange_schedule(&self) -> Vec<usize> {
        if !self.exchange_enabled {
            return Vec::new();
        }
        (1..self.layers)
            .filter(|&l| self.exchange_after_final || l + 1 < self.layers)
            .collect()
    }
}

pub fn layer_param(side: Side, layer: usize, name: &str) -> String {
    format!("{}/layer{layer}/{name}", side.prefix())
}

const LAYER_PARAMS: [&str; 6] = ["w_msg", "a_att", "j_w1", "j_b1", "j_w2", "j_b2"];

fn gaussian(seed: u64, name: &str, shape: &[usize], std: f64) -> Tensor {
    let mut rng = labelled_rng(seed, name);
    let normal = Normal::new(0.0, std).expect("positive std");
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| normal.sample(&mut rng)).collect()).expect("shape")
}

/// Adds every layer weight of both sub-networks. Each tensor is drawn from an
/// RNG keyed by its own name, so the result does not depend on call order.
pub fn init_parameters(store: &mut ParameterStore, config: &FusionConfig, seed: u64) {
    let d = config.dim;
    let dc = config.context_dim;
    for side in [Side::Scene, Side::Concept] {
        for l in 0..config.layers {
            for p in LAYER_PARAMS {
                let name = layer_param(side, l, p);
                if store.contains(&name) {
                    continue;
                }
                let value = match p {
                    "w_msg" => gaussian(seed, &name, &[d, 3 * d], 1.0 / (3.0 * d as f64).sqrt()),
                    "a_att" => gaussian(seed, &name, &[d + dc], 1.0 / ((d + dc) as f64).sqrt()),
                    "j_w1" | "j_w2" => gaussian(seed, &name, &[d, d], 1.0 / (d as f64).sqrt()),
                    _ => Tensor::zeros(&[d]),
                };
                store.insert(name, value);
            }
        }
    }
}

/// Adds a trainable embedding for `relation` on `side` unless present.
pub fn ensure_relation(store: &mut ParameterStore, side: Side, relation: &RelationId, dim: usize, seed: u64) {
    let name = relation_param_name(side, relation);
    if !store.contains(&name) {
        let value = graph::seeded_vector(seed, &name, dim, 1.0 / (dim as f64).sqrt());
        store.insert(name, value);
    }
}

/// Tape handles for one layer of one sub-network.
#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub w_msg: Var,
    pub a_att: Var,
    pub j_w1: Var,
    pub j_b1: Var,
    pub j_w2: Var,
    pub j_b2: Var,
}

impl LayerVars {
    pub fn load(tape: &mut Tape, store: &ParameterStore, side: Side, layer: usize) -> Result<Self, FusionError> {
        let mut get = |p: &str| tape.param(store, &layer_param(side, layer, p));
        Ok(LayerVars {
            w_msg: get("w_msg")?,
            a_att: get("a_att")?,
            j_w1: get("j_w1")?,
            j_b1: get("j_b1")?,
            j_w2: get("j_w2")?,
            j_b2: get("j_b2")?,
        })
    }
}

/// Entity and relation embeddings of one side at some layer.
#[derive(Clone, Debug)]
pub struct GraphState<'g> {
    pub graph: &'g PreparedGraph,
    pub entities: Vec<Var>,
    pub relations: Vec<Var>,
    pub layer: usize,
}

impl<'g> GraphState<'g> {
    /// Layer-0 state: fixed entity inputs and the side's relation embeddings.
    pub fn initial(tape: &mut Tape, store: &ParameterStore, graph: &'g PreparedGraph) -> Result<Self, FusionError> {
        let entities = graph.initial.iter().map(|t| tape.constant(t.clone())).collect();
        let mut relations = Vec::with_capacity(graph.relations.len());
        for r in 0..graph.relations.len() {
            let name = graph.relation_param(r);
            if !store.contains(&name) {
                return Err(FusionError::MissingEmbedding(format!("relation parameter `{name}`")));
            }
            relations.push(tape.param(store, &name)?);
        }
        Ok(GraphState {
            graph,
            entities,
            relations,
            layer: 0,
        })
    }

    pub fn embedding<'a>(&self, tape: &'a Tape, entity: &EntityId) -> Option<&'a Tensor> {
        self.graph.index_of(entity).map(|i| tape.value(self.entities[i]))
    }
}

/// m = W_msg · (e_h ‖ e_r ‖ e_t) for one edge, computed literally.
pub fn compute_message(
    tape: &mut Tape,
    state: &GraphState,
    edge: &Edge,
    weights: &LayerVars,
) -> Result<Var, FusionError> {
    let (h, r, t) = lookup(state, edge)?;
    let x = tape.concat(&[h, r, t])?;
    Ok(tape.matvec(weights.w_msg, x)?)
}

fn lookup(state: &GraphState, edge: &Edge) -> Result<(Var, Var, Var), FusionError> {
    let get = |v: &[Var], i: usize, what: &str| {
        v.get(i)
            .copied()
            .ok_or_else(|| FusionError::MissingEmbedding(format!("{what} index {i}")))
    };
    Ok((
        get(&state.entities, edge.head, "entity")?,
        get(&state.relations, edge.relation, "relation")?,
        get(&state.entities, edge.tail, "entity")?,
    ))
}

/// Attention weights of one neighbourhood:
/// â_i = LeakyReLU(a · (m_i ‖ c)), normalised per `norm`.
pub fn attention_weights(
    tape: &mut Tape,
    messages: &[Var],
    context: Var,
    weights: &LayerVars,
    config: &FusionConfig,
) -> Result<Var, FusionError> {
    let mut scores = Vec::with_capacity(messages.len());
    for &m in messages {
        let mc = tape.concat(&[m, context])?;
        let s = tape.dot(weights.a_att, mc)?;
        scores.push(tape.leaky_relu(s, config.leaky_slope));
    }
    let stacked = tape.concat(&scores)?;
    Ok(match config.attention_norm {
        AttentionNorm::Exp => tape.softmax(stacked),
        AttentionNorm::Plain => tape.normalize_sum(stacked),
    })
}

/// Plain-value attention, for inspection and tests.
pub fn attention_from_scores(scores: &[f64], norm: AttentionNorm) -> Vec<f64> {
    match norm {
        AttentionNorm::Exp => softmax(scores),
        AttentionNorm::Plain => {
            let total: f64 = scores.iter().sum();
            scores.iter().map(|s| s / total).collect()
        }
    }
}

/// Raw score â for a message and context.
pub fn attention_score(message: &[f64], context: &[f64], a_att: &[f64], slope: f64) -> f64 {
    let raw: f64 = message.iter().chain(context).zip(a_att).map(|(x, a)| x * a).sum();
    leaky_relu_scalar(raw, slope)
}

/// One synchronous layer: every head with outgoing edges becomes
/// J(Σ α·m) + e_h, all computed from the incoming state. Heads without edges
/// keep their embedding. Messages are assembled from per-block projections
/// W_h·e_h + W_r·e_r + W_t·e_t, which equals the literal concatenated form.
pub fn layer_update<'g>(
    tape: &mut Tape,
    state: &GraphState<'g>,
    context: Var,
    weights: &LayerVars,
    config: &FusionConfig,
    mut trace: Option<&mut Vec<AttentionRecord>>,
) -> Result<GraphState<'g>, FusionError> {
    let graph = state.graph;
    let d = config.dim;
    let mut next = state.entities.clone();
    if !graph.edges.is_empty() {
        let wh = tape.column_block(weights.w_msg, 0, d)?;
        let wr = tape.column_block(weights.w_msg, d, d)?;
        let wt = tape.column_block(weights.w_msg, 2 * d, d)?;
        let mut ph: Vec<Option<Var>> = vec![None; graph.len()];
        let mut pt: Vec<Option<Var>> = vec![None; graph.len()];
        let mut pr: Vec<Option<Var>> = vec![None; graph.relations.len()];
        for (h, nbrs) in graph.neighbourhoods.iter().enumerate() {
            if nbrs.is_empty() {
                continue;
            }
            let head_proj = cached(tape, &mut ph, h, wh, &state.entities)?;
            let mut messages = Vec::with_capacity(nbrs.len());
            for &ei in nbrs {
                let e = graph.edges[ei];
                let rp = cached(tape, &mut pr, e.relation, wr, &state.relations)?;
                let tp = cached(tape, &mut pt, e.tail, wt, &state.entities)?;
                let hr = tape.add(head_proj, rp)?;
                messages.push(tape.add(hr, tp)?);
            }
            let alpha = attention_weights(tape, &messages, context, weights, config)?;
            if let Some(records) = trace.as_deref_mut() {
                let a = tape.value(alpha).data();
                for (k, &ei) in nbrs.iter().enumerate() {
                    let e = graph.edges[ei];
                    records.push(AttentionRecord {
                        side: graph.side,
                        layer: state.layer,
                        head: graph.entities[e.head].to_string(),
                        relation: graph.relations[e.relation].to_string(),
                        neighbour: graph.entities[e.tail].to_string(),
                        alpha: a[k],
                    });
                }
            }
            let agg = tape.weighted_sum(&messages, alpha)?;
            let hidden = tape.linear(agg, weights.j_w1, weights.j_b1)?;
            let hidden = tape.leaky_relu(hidden, config.leaky_slope);
            let out = tape.linear(hidden, weights.j_w2, weights.j_b2)?;
            next[h] = tape.add(out, state.entities[h])?;
        }
    }
    Ok(GraphState {
        graph,
        entities: next,
        relations: state.relations.clone(),
        layer: state.layer + 1,
    })
}

fn cached(tape: &mut Tape, slots: &mut [Option<Var>], i: usize, w: Var, inputs: &[Var]) -> Result<Var, FusionError> {
    if let Some(v) = slots[i] {
        return Ok(v);
    }
    let v = tape.matvec(w, inputs[i])?;
    slots[i] = Some(v);
    Ok(v)
}

/// Swaps the embeddings of every medium between the two sides when
/// `layer ≥ 1`; layer 0 is the identity. Returns whether a swap happened.
/// The swap only exchanges tape handles, so gradients pass straight through.
pub fn medium_exchange(
    scene: &mut GraphState,
    concept: &mut GraphState,
    mediums: &[EntityId],
    layer: usize,
) -> Result<bool, FusionError> {
    let mut pairs = Vec::with_capacity(mediums.len());
    for m in mediums {
        let s = scene.graph.index_of(m).ok_or_else(|| FusionError::MediumMissing {
            entity: m.clone(),
            side: Side::Scene,
        })?;
        let c = concept.graph.index_of(m).ok_or_else(|| FusionError::MediumMissing {
            entity: m.clone(),
            side: Side::Concept,
        })?;
        pairs.push((s, c));
    }
    if layer == 0 {
        return Ok(false);
    }
    for (s, c) in pairs {
        std::mem::swap(&mut scene.entities[s], &mut concept.entities[c]);
    }
    Ok(true)
}

/// Both sides of one instance, ready for repeated forward passes.
#[derive(Clone, Debug)]
pub struct PreparedInstance {
    pub id: String,
    pub scene: PreparedGraph,
    pub concept: PreparedGraph,
    pub mediums: Vec<EntityId>,
    pub question: String,
}

impl PreparedInstance {
    pub fn new(instance: &CoupledInstance, table: &EntityTable) -> Self {
        PreparedInstance {
            id: instance.id.clone(),
            scene: PreparedGraph::new(Side::Scene, &instance.scene.entities, &instance.scene.triples, table),
            concept: PreparedGraph::new(
                Side::Concept,
                &instance.concept.entities,
                &instance.concept.triples,
                table,
            ),
            mediums: instance.mediums(),
            question: instance.question.clone(),
        }
    }

    /// Relation parameters this instance needs, per side.
    pub fn relations(&self) -> BTreeSet<(Side, RelationId)> {
        let mut out = BTreeSet::new();
        for g in [&self.scene, &self.concept] {
            for r in &g.relations {
                out.insert((g.side, r.clone()));
            }
        }
        out
    }
}

pub struct ForwardOutput<'g> {
    pub scene: GraphState<'g>,
    pub concept: GraphState<'g>,
    /// Layer indices after which an exchange happened.
    pub exchanges: Vec<usize>,
    pub trace: Vec<AttentionRecord>,
}

/// Runs L layers on both sides, exchanging mediums after each layer per the
/// schedule. `record_trace` collects every attention weight.
pub fn forward<'g>(
    tape: &mut Tape,
    store: &ParameterStore,
    instance: &'g PreparedInstance,
    context: Var,
    config: &FusionConfig,
    record_trace: bool,
) -> Result<ForwardOutput<'g>, FusionError> {
    config.validate()?;
    let mut scene = GraphState::initial(tape, store, &instance.scene)?;
    let mut concept = GraphState::initial(tape, store, &instance.concept)?;
    let mut exchanges = Vec::new();
    let mut trace = Vec::new();
    for l in 0..config.layers {
        let ws = LayerVars::load(tape, store, Side::Scene, l)?;
        let wc = LayerVars::load(tape, store, Side::Concept, l)?;
        let t = record_trace.then_some(&mut trace);
        scene = layer_update(tape, &scene, context, &ws, config, t)?;
        let t = record_trace.then_some(&mut trace);
        concept = layer_update(tape, &concept, context, &wc, config, t)?;
        let scheduled = config.exchange_enabled && (config.exchange_after_final || l + 1 < config.layers);
        if scheduled && medium_exchange(&mut scene, &mut concept, &instance.mediums, l)? {
            exchanges.push(l);
        }
    }
    Ok(ForwardOutput {
        scene,
        concept,
        exchanges,
        trace,
    })
}
