//! A return-conditioned transformer policy that writes tool plans.
//!
//! The policy reads a task's cost context and descriptor as memory rows,
//! then `(return-to-go, state, action)` triples, and predicts the next plan
//! token with one of two heads. It is trained offline on plan trajectories
//! and decodes with the plan-language mask so that every plan it emits is
//! valid.

pub mod autograd;
pub mod checkpoint;
pub mod features;
pub mod generate;
pub mod policy;
pub mod tensor;
pub mod train;

use catp_core::context::ContextError;
use catp_core::cost::CostError;
use catp_core::executor::ExecError;
use catp_core::tpl::TplError;
use catp_core::universe::UniverseError;
use thiserror::Error;

pub use checkpoint::Checkpoint;
pub use generate::{generate_plan, Decoding, Generated, InferenceConfig, PlanningContext, PlanningMeta};
pub use policy::{init_policy, PolicyConfig, PolicyNet, StepInput};
pub use train::{grad_check, train, LrSchedule, TargetReturn, TrainConfig, TrainReport, TrainingSet};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite values: {0}")]
    NonFinite(String),
    #[error("universe digest mismatch: expected {expected}, found {found}")]
    DigestMismatch { expected: String, found: String },
    #[error("dataset has no trajectories")]
    EmptyDataset,
    #[error("trajectory {trajectory}, step {step}: action is outside the recorded mask")]
    ActionOutsideMask { trajectory: usize, step: usize },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("task `{task}` has no valid plan within {max_tools} tools")]
    NoValidPlan { task: String, max_tools: usize },
    #[error("task `{task}`: no legal token at step {step}")]
    DeadEnd { task: String, step: usize },
    #[error(transparent)]
    Plan(#[from] TplError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Universe(#[from] UniverseError),
    #[error("cannot access {path}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
