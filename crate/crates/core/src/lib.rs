//! Cost-aware tool planning.
//!
//! Plans are DAGs of tools wired by their data dependencies. They are
//! serialized as token sequences (see [`tpl`]), priced with a tiered
//! pay-per-use model (see [`cost`]), executed against a simulated tool
//! universe (see [`executor`]) and collected into offline-RL trajectories
//! (see [`datagen`]).

pub mod context;
pub mod cost;
pub mod datagen;
pub mod enumerate;
pub mod executor;
pub mod presets;
pub mod seed;
pub mod tpl;
pub mod universe;

pub use cost::{CostRecord, NormBounds, PriceTable, QopReport};
pub use tpl::{Head, PlanDag, PlanSequence, Token, TokenMask};
pub use universe::{DataKind, RequiredOutput, TaskInput, TaskSpec, ToolSpec, ToolUniverse};

/// Default performance/price trade-off weight.
pub const DEFAULT_ALPHA: f64 = 0.5;
