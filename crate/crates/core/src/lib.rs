//! Coupled scene/concept graph reasoning.
//!
//! The crate is organised bottom-up:
//!
//! - [`coupled_graph`]: data model, validation, corpus files and statistics.
//! - [`construction`]: caption/triple extraction prompts, record/replay service
//!   clients and concept-graph linking.
//! - [`numeric`]: dense tensors, a reverse-mode tape, parameter store,
//!   optimizers and a finite-difference gradient checker.
//! - [`fusion`]: the two-branch graph attention network with context-aware
//!   messages and the medium exchange schedule.
//! - [`objectives`]: answer scoring, inference loss, Gaussian-kernel MMD and the
//!   joint objective.
//! - [`harness`]: synthetic tasks, training, evaluation, sweeps and ablations.

pub mod construction;
pub mod coupled_graph;
pub mod fusion;
pub mod harness;
pub mod numeric;
pub mod objectives;

mod seeding;

pub use coupled_graph::{
    mediums, ConceptGraph, CoupledInstance, EntityId, RelationId, RelationVocabulary, SceneGraph, Triple,
};
pub use fusion::FusionConfig;
pub use harness::{evaluate, train, TrainConfig};
