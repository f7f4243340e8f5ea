use std::collections::BTreeMap;

use crate::coupled_graph::{CoupledInstance, EntityId};
use crate::fusion::{self, forward, AttentionRecord, EntityTable, FusionConfig, PreparedInstance};
use crate::numeric::{ParameterStore, Tape, Tensor, Var};
use crate::objectives::{
    answer_scores, inference_loss, joint_loss, mmd_loss_tape, predict, AnswerHead, KernelConfig, LossBreakdown,
};

use super::{HarnessError, TrainConfig};

pub fn context_param(question: &str) -> String {
    format!("context/{question}")
}

/// Trained parameters plus everything needed to rebuild the fixed inputs.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: TrainConfig,
    pub store: ParameterStore,
    entity_vectors: BTreeMap<String, Vec<f64>>,
    context_vectors: BTreeMap<String, Vec<f64>>,
}

/// One instance with its graphs indexed and gold answers resolved.
#[derive(Clone, Debug)]
pub struct PreparedItem {
    pub inner: PreparedInstance,
    pub golds: Vec<EntityId>,
    pub gold_weights: Vec<f64>,
    pub context: String,
}

/// Result of one forward pass, with the tape kept for a backward pass.
pub struct Pass {
    pub tape: Tape,
    pub joint: Var,
    pub breakdown: LossBreakdown,
    pub scores: BTreeMap<EntityId, f64>,
    pub prediction: Option<EntityId>,
    pub exchanges: Vec<usize>,
    pub trace: Vec<AttentionRecord>,
}

impl Model {
    pub fn new(config: TrainConfig) -> Result<Self, HarnessError> {
        Self::with_vectors(config, BTreeMap::new(), BTreeMap::new())
    }

    /// Uses loaded entity vectors (by entity name) and context vectors (by
    /// question text) in place of seeded ones where available.
    pub fn with_vectors(
        config: TrainConfig,
        entity_vectors: BTreeMap<String, Vec<f64>>,
        context_vectors: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self, HarnessError> {
        let fusion = config.fusion();
        fusion.validate()?;
        let mut store = ParameterStore::new();
        fusion::init_parameters(&mut store, &fusion, config.seed);
        AnswerHead::init(&mut store, fusion.dim, fusion.context_dim, config.seed);
        Ok(Model {
            config,
            store,
            entity_vectors,
            context_vectors,
        })
    }

    /// Rebuilds a model around stored parameters, e.g. a loaded checkpoint.
    pub fn from_store(
        config: TrainConfig,
        store: ParameterStore,
        entity_vectors: BTreeMap<String, Vec<f64>>,
        context_vectors: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self, HarnessError> {
        let mut model = Self::with_vectors(config, entity_vectors, context_vectors)?;
        for name in model.store.names().map(str::to_string).collect::<Vec<_>>() {
            let expected = model.store.value(&name).map(|t| t.shape().to_vec());
            let found = store.value(&name).map(|t| t.shape().to_vec());
            if found != expected {
                return Err(HarnessError::InvalidConfig(format!(
                    "checkpoint parameter `{name}` has shape {found:?}, config needs {expected:?}"
                )));
            }
        }
        model.store = store;
        Ok(model)
    }

    pub fn fusion(&self) -> FusionConfig {
        self.config.fusion()
    }

    pub fn entity_table(&self) -> EntityTable {
        EntityTable::new(self.config.dim, self.config.seed).with_vectors(self.entity_vectors.clone())
    }

    fn context_vector(&self, question: &str) -> Tensor {
        let dc = self.config.context_dim;
        match self.context_vectors.get(question) {
            Some(v) => {
                let mut v = v.clone();
                v.resize(dc, 0.0);
                Tensor::vector(v)
            }
            None => fusion::seeded_vector(self.config.seed, &context_param(question), dc, 1.0 / (dc as f64).sqrt()),
        }
    }

    /// Adds relation embeddings and frozen context vectors that `corpus`
    /// needs and the store lacks.
    pub fn register(&mut self, corpus: &[PreparedItem]) {
        for item in corpus {
            for (side, rel) in item.inner.relations() {
                fusion::ensure_relation(&mut self.store, side, &rel, self.config.dim, self.config.seed);
            }
            let name = context_param(&item.context);
            if !self.store.contains(&name) {
                let v = self.context_vector(&item.context);
                self.store.insert_frozen(name, v);
            }
        }
    }

    pub fn prepare(&self, corpus: &[CoupledInstance]) -> Vec<PreparedItem> {
        let table = self.entity_table();
        corpus
            .iter()
            .map(|inst| PreparedItem {
                inner: PreparedInstance::new(inst, &table),
                golds: inst.gold_answers.iter().map(|g| g.entity.clone()).collect(),
                gold_weights: inst.gold_answers.iter().map(|g| g.weight).collect(),
                context: inst.question.clone(),
            })
            .collect()
    }

    /// Forward pass and losses for one instance.
    pub fn pass(&self, item: &PreparedItem, record_trace: bool) -> Result<Pass, HarnessError> {
        run_pass(&self.store, &self.config, item, record_trace)
    }
}

/// Records the forward pass and joint loss for `item` on `tape`.
pub fn record_pass<'a>(
    tape: &mut Tape,
    store: &ParameterStore,
    config: &TrainConfig,
    item: &'a PreparedItem,
    record_trace: bool,
) -> Result<Recorded<'a>, HarnessError> {
    let fusion = config.fusion();
    let context = tape.param(store, &context_param(&item.context))?;
    let out = forward(tape, store, &item.inner, context, &fusion, record_trace)?;
    let head = AnswerHead::load(tape, store, fusion.leaky_slope)?;
    let scores = answer_scores(tape, &out.concept, context, &head)?;
    let golds = crate::objectives::gold_indices(&out.concept, &item.golds)?;
    let inference = inference_loss(tape, scores, &golds)?;

    let mediums = &item.inner.mediums;
    let (joint, medium) = if config.medium_loss_enabled && !mediums.is_empty() {
        let pick = |state: &fusion::GraphState| -> Vec<Var> {
            mediums
                .iter()
                .map(|m| state.entities[state.graph.index_of(m).expect("medium present")])
                .collect()
        };
        let (s, c) = (pick(&out.scene), pick(&out.concept));
        let kernel = KernelConfig::new(config.sigma)?;
        let medium = mmd_loss_tape(tape, &s, &c, kernel)?;
        (joint_loss(tape, inference, medium, config.lambda)?, Some(medium))
    } else {
        (inference, None)
    };
    Ok(Recorded {
        joint,
        inference,
        medium,
        scores,
        concept: out.concept,
        exchanges: out.exchanges,
        trace: out.trace,
    })
}

/// Handles produced by [`record_pass`].
pub struct Recorded<'a> {
    pub joint: Var,
    pub inference: Var,
    /// Absent when the medium loss is disabled or there are no mediums.
    pub medium: Option<Var>,
    pub scores: Var,
    pub concept: fusion::GraphState<'a>,
    pub exchanges: Vec<usize>,
    pub trace: Vec<AttentionRecord>,
}

pub(crate) fn run_pass(
    store: &ParameterStore,
    config: &TrainConfig,
    item: &PreparedItem,
    record_trace: bool,
) -> Result<Pass, HarnessError> {
    let mut tape = Tape::new();
    let rec = record_pass(&mut tape, store, config, item, record_trace)?;
    let breakdown = LossBreakdown {
        inference: tape.scalar(rec.inference),
        medium: rec.medium.map_or(0.0, |m| tape.scalar(m)),
        lambda: config.lambda,
        joint: tape.scalar(rec.joint),
    };
    let scores = crate::objectives::score_map(&rec.concept, tape.value(rec.scores).data());
    let prediction = predict(&scores);
    Ok(Pass {
        tape,
        joint: rec.joint,
        breakdown,
        scores,
        prediction,
        exchanges: rec.exchanges,
        trace: rec.trace,
    })
}
