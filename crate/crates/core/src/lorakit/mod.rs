//! Low-rank adapters and the norm-budget theory of single-example fine-tuning.

mod adapter;
mod budget;
pub mod oracle;

pub use adapter::{LoraAdapter, LoraScaling};
pub use budget::{
    budget_error_max, budget_error_spec, exact_fit_max, exact_fit_spec, old_task_damage,
    support_size, surrogate_damage, surrogate_fixed_points, thresholds, BudgetAnalysis,
    DamageReport, SurrogateDamage, SUPPORT_SNAP,
};
