//! Learning schemes, the primal and dual cycles, evaluation and the epoch loop.

mod config;
mod cycle;
mod eval;
mod run;
mod scheme;

pub use config::{JointInput, TrainConfig};
pub use cycle::{CycleOptions, DualModels, DualTrainer, RewardModels, StepReport};
pub use eval::{batched_map, cycle_traces, evaluate, evaluate_with, CycleTrace, Generate, ModelPair, Understand};
pub use run::{epoch_dir, train, EpochRecord, TrainOutcome};
pub use scheme::LearningScheme;
