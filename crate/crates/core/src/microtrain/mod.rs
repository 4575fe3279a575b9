//! A two-layer MLP trained on synthetic teacher tasks: pretrain with one
//! optimizer, fine-tune with another, and compare.

mod grid;
mod mlp;
mod task;
mod train;

pub use grid::{
    log_space, mismatch_grid, ExperimentConfig, GridCell, GridResult, GridRun, MismatchNote,
    OptKind, PerOptimizer, PretrainSummary, ReportTable, SeedResult, TableRow, TaskChoice,
};
pub use mlp::{gradient_check, Mlp, MlpGrads};
pub use task::{synth_tasks, Task, TaskShape};
pub use train::{train, FinetuneMode, LoraSpec, RunSpec, StepRecord, TrainOutcome, DIVERGENCE_LOSS};
