//! Synthetic tasks, training, evaluation, hyperparameter sweeps and the
//! exchange ablation.

mod eval;
mod model;
mod sweep;
mod synthetic;
mod train;

pub use eval::{evaluate, evaluate_with_trace, soft_score, EvalReport, PredictionRecord};
pub use model::{context_param, record_pass, Model, Pass, PreparedItem, Recorded};
pub use sweep::{
    ablate_gmf, sweep_lambda, sweep_layers, AblationReport, SweepParameter, SweepTable, LAMBDA_GRID, LAYER_GRID,
};
pub use synthetic::{generate_synthetic, SyntheticSpec, MARKER_ENTITY, MARKER_RELATION, QUESTION_TEMPLATES};
pub use train::{train, train_model, EpochLog, TrainConfig, TrainOutcome};

use thiserror::Error;

use crate::fusion::FusionError;
use crate::numeric::NumericError;
use crate::objectives::ObjectiveError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("INFEASIBLE_SPEC: {0}")]
    InfeasibleSpec(String),
    #[error("NON_FINITE_LOSS at epoch {epoch}, instance `{instance}`: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        instance: String,
        detail: String,
    },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid instance `{id}`: {detail}")]
    InvalidInstance { id: String, detail: String },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}
