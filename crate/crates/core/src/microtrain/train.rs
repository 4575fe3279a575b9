use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Mlp, Task};
use crate::error::{Error, Result};
use crate::linalg::{spectral_report, Matrix};
use crate::lorakit::{LoraAdapter, LoraScaling};
use crate::optim::{Optimizer, OptimizerSpec, StepSchedule};
use crate::rng::substream;

/// Losses above this are treated as divergence.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneMode {
    Full,
    Lora,
}

impl FinetuneMode {
    pub fn label(self) -> &'static str {
        match self {
            FinetuneMode::Full => "full",
            FinetuneMode::Lora => "lora",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoraSpec {
    pub rank: usize,
    pub alpha: f64,
    pub scaling: LoraScaling,
}

impl Default for LoraSpec {
    fn default() -> Self {
        Self {
            rank: 4,
            alpha: 8.0,
            scaling: LoraScaling::Classic,
        }
    }
}

/// One training run. Under LoRA both layers get an adapter and the base stays frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub optimizer: OptimizerSpec,
    pub schedule: StepSchedule,
    pub steps: usize,
    pub log_every: usize,
    pub mode: FinetuneMode,
    pub lora: LoraSpec,
    /// Seeds the adapter `A` factors.
    pub seed: u64,
}

/// Spectral columns are filled every `log_every` steps and on the final row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub w1_stable_rank: Option<f64>,
    pub w1_svd_entropy: Option<f64>,
    pub w2_stable_rank: Option<f64>,
    pub w2_svd_entropy: Option<f64>,
}

const HEADER: [&str; 8] = [
    "step",
    "lr",
    "train_loss",
    "val_loss",
    "w1_stable_rank",
    "w1_svd_entropy",
    "w2_stable_rank",
    "w2_svd_entropy",
];

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<StepRecord>,
    /// Effective weights at each logged step.
    pub checkpoints: Vec<(usize, Mlp)>,
    /// Effective weights at the end of the run (or at divergence).
    pub final_model: Mlp,
    /// Base weights as held by the adapters at the end of a LoRA run.
    pub frozen_base: Option<Mlp>,
    pub diverged_at: Option<usize>,
    pub final_train_loss: Option<f64>,
    pub final_val_loss: Option<f64>,
}

impl TrainOutcome {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(HEADER)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(buf)
    }
}

enum Params {
    Full {
        model: Mlp,
        opts: [Optimizer; 2],
    },
    Lora {
        adapters: [LoraAdapter; 2],
        /// `[B1, A1, B2, A2]`.
        opts: [Optimizer; 4],
    },
}

impl Params {
    fn effective(&self) -> Mlp {
        match self {
            Params::Full { model, .. } => model.clone(),
            Params::Lora { adapters, .. } => Mlp {
                w1: adapters[0].forward(),
                w2: adapters[1].forward(),
            },
        }
    }

    fn step(&mut self, grads: [&Matrix; 2], lr: f64) -> Result<()> {
        match self {
            Params::Full { model, opts } => {
                let w1 = opts[0].step(&model.w1, grads[0], lr)?;
                let w2 = opts[1].step(&model.w2, grads[1], lr)?;
                model.w1 = w1;
                model.w2 = w2;
            }
            Params::Lora { adapters, opts } => {
                for (layer, adapter) in adapters.iter_mut().enumerate() {
                    let (d_b, d_a) = adapter.grads(grads[layer])?;
                    let b = opts[2 * layer].step(adapter.b(), &d_b, lr)?;
                    let a = opts[2 * layer + 1].step(adapter.a(), &d_a, lr)?;
                    adapter.set_b(b)?;
                    adapter.set_a(a)?;
                }
            }
        }
        Ok(())
    }
}

pub fn train(model: &Mlp, task: &Task, run: &RunSpec) -> Result<TrainOutcome> {
    run.optimizer.validate()?;
    run.schedule.validate()?;
    if run.log_every == 0 {
        return Err(Error::InvalidConfig("log_every must be >= 1".into()));
    }
    let mut params = match run.mode {
        FinetuneMode::Full => Params::Full {
            model: model.clone(),
            opts: [
                run.optimizer.build(model.w1.rows(), model.w1.cols())?,
                run.optimizer.build(model.w2.rows(), model.w2.cols())?,
            ],
        },
        FinetuneMode::Lora => {
            let LoraSpec { rank, alpha, scaling } = run.lora;
            let a1 = LoraAdapter::new(model.w1.clone(), rank, alpha, scaling, &mut substream(run.seed, 2))?;
            let a2 = LoraAdapter::new(model.w2.clone(), rank, alpha, scaling, &mut substream(run.seed, 3))?;
            let opts = [
                run.optimizer.build(a1.b().rows(), a1.b().cols())?,
                run.optimizer.build(a1.a().rows(), a1.a().cols())?,
                run.optimizer.build(a2.b().rows(), a2.b().cols())?,
                run.optimizer.build(a2.a().rows(), a2.a().cols())?,
            ];
            Params::Lora {
                adapters: [a1, a2],
                opts,
            }
        }
    };

    let mut records = Vec::new();
    let mut checkpoints = Vec::new();
    let mut diverged_at = None;
    let mut final_train_loss = None;
    if run.steps == 0 {
        final_train_loss = Some(task.train_loss(model)?);
    } else {
        for t in 0..=run.steps {
            let current = params.effective();
            let (loss, grads) = current.loss_and_grads(&task.train_x, &task.train_y)?;
            if !loss.is_finite() || loss > DIVERGENCE_LOSS {
                diverged_at = Some(t);
                break;
            }
            let lr = run.schedule.eta(t);
            let mut record = StepRecord {
                step: t,
                lr,
                train_loss: loss,
                val_loss: None,
                w1_stable_rank: None,
                w1_svd_entropy: None,
                w2_stable_rank: None,
                w2_svd_entropy: None,
            };
            if t % run.log_every == 0 || t == run.steps {
                record.val_loss = Some(task.val_loss(&current)?);
                if let Ok(r) = spectral_report(&current.w1) {
                    record.w1_stable_rank = Some(r.stable_rank);
                    record.w1_svd_entropy = Some(r.svd_entropy);
                }
                if let Ok(r) = spectral_report(&current.w2) {
                    record.w2_stable_rank = Some(r.stable_rank);
                    record.w2_svd_entropy = Some(r.svd_entropy);
                }
                checkpoints.push((t, current));
            }
            records.push(record);
            if t == run.steps {
                final_train_loss = Some(loss);
                break;
            }
            match params.step([&grads.w1, &grads.w2], lr) {
                Ok(()) => {}
                Err(e) if e.is_numerical() => {
                    diverged_at = Some(t);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }

    let final_model = params.effective();
    let final_val_loss = if diverged_at.is_some() {
        None
    } else {
        Some(task.val_loss(&final_model)?)
    };
    let frozen_base = match &params {
        Params::Full { .. } => None,
        Params::Lora { adapters, .. } => Some(Mlp {
            w1: adapters[0].w0().clone(),
            w2: adapters[1].w0().clone(),
        }),
    };
    Ok(TrainOutcome {
        records,
        checkpoints,
        final_model,
        frozen_base,
        diverged_at,
        final_train_loss,
        final_val_loss,
    })
}
