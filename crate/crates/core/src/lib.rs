//! Verification-grade kernels for the Muon / Adam / SignGD optimizer family.
//!
//! * [`linalg`]: SVD, polar factor, Newton-Schulz and spectral diagnostics.
//! * [`optim`]: Adam, SignGD and Muon step rules plus step-size schedules.
//! * [`biaslab`]: underdetermined regression, closed-form implicit-bias limits
//!   and convergence drivers.
//! * [`lorakit`]: LoRA adapters and the budgeted fine-tuning closed forms.
//! * [`microtrain`]: a tiny two-layer MLP for the pretrain/fine-tune mismatch grid.

pub mod biaslab;
pub mod error;
pub mod linalg;
pub mod lorakit;
pub mod microtrain;
pub mod optim;
pub mod rng;

pub use error::{Error, Result};
pub use linalg::Matrix;
