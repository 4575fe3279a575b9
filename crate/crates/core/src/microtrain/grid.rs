use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{synth_tasks, train, FinetuneMode, LoraSpec, Mlp, RunSpec, Task, TaskShape, TrainOutcome};
use crate::error::{Error, Result};
use crate::optim::{AdamConfig, MuonConfig, OptimizerSpec, StepSchedule};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptKind {
    Adam,
    Muon,
}

impl OptKind {
    pub fn label(self) -> &'static str {
        match self {
            OptKind::Adam => "adam",
            OptKind::Muon => "muon",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerOptimizer<T> {
    pub adam: T,
    pub muon: T,
}

impl<T> PerOptimizer<T> {
    pub fn get(&self, kind: OptKind) -> &T {
        match kind {
            OptKind::Adam => &self.adam,
            OptKind::Muon => &self.muon,
        }
    }
}

/// Which task fine-tuning targets. `A` reuses the pretraining task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskChoice {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub task: TaskShape,
    pub pretrain_steps: usize,
    pub finetune_steps: usize,
    pub pretrain_optimizers: Vec<OptKind>,
    pub finetune_optimizers: Vec<OptKind>,
    pub adam: AdamConfig,
    pub muon: MuonConfig,
    /// Peak step size used for pretraining.
    pub pretrain_lr: PerOptimizer<f64>,
    /// Peak step sizes swept during fine-tuning.
    pub lr_sweep: PerOptimizer<Vec<f64>>,
    pub warmup_ratio: f64,
    pub modes: Vec<FinetuneMode>,
    pub lora: LoraSpec,
    pub finetune_task: TaskChoice,
    pub log_every: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            task: TaskShape::default(),
            pretrain_steps: 2000,
            finetune_steps: 500,
            pretrain_optimizers: vec![OptKind::Adam, OptKind::Muon],
            finetune_optimizers: vec![OptKind::Adam, OptKind::Muon],
            adam: AdamConfig::default(),
            muon: MuonConfig::default(),
            pretrain_lr: PerOptimizer {
                adam: 3e-3,
                muon: 2e-2,
            },
            lr_sweep: PerOptimizer {
                adam: log_space(1e-4, 3e-2, 6),
                muon: log_space(3e-4, 1e-1, 6),
            },
            warmup_ratio: 0.03,
            modes: vec![FinetuneMode::Full, FinetuneMode::Lora],
            lora: LoraSpec::default(),
            finetune_task: TaskChoice::B,
            log_every: 25,
        }
    }
}

/// `n` points from `lo` to `hi` inclusive, evenly spaced in log scale.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        let TaskShape {
            d,
            h,
            o,
            train_samples,
            val_samples,
        } = self.task;
        if d < 2 || h < 2 || o < 2 {
            return bad("task dims d, h, o must all be >= 2");
        }
        if train_samples == 0 || val_samples == 0 {
            return bad("sample counts must be >= 1");
        }
        if self.pretrain_steps == 0 || self.finetune_steps == 0 {
            return bad("pretrain_steps and finetune_steps must be >= 1");
        }
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty");
        }
        if self.pretrain_optimizers.is_empty() || self.finetune_optimizers.is_empty() {
            return bad("optimizer lists must be non-empty");
        }
        if self.modes.is_empty() {
            return bad("modes must be non-empty");
        }
        if self.log_every == 0 {
            return bad("log_every must be >= 1");
        }
        for kind in [OptKind::Adam, OptKind::Muon] {
            let sweep = self.lr_sweep.get(kind);
            if sweep.is_empty() {
                return bad("lr_sweep lists must be non-empty");
            }
            if sweep
                .iter()
                .chain([self.pretrain_lr.get(kind)])
                .any(|lr| !(*lr >= 0.0 && lr.is_finite()))
            {
                return bad("learning rates must be finite and >= 0");
            }
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return bad("warmup_ratio must lie in [0, 1]");
        }
        if self.modes.contains(&FinetuneMode::Lora) {
            let max_rank = d.min(h).min(o);
            if self.lora.rank == 0 || self.lora.rank > max_rank {
                return Err(Error::InvalidConfig(format!(
                    "lora.rank must lie in 1..={max_rank}"
                )));
            }
            if !self.lora.alpha.is_finite() {
                return bad("lora.alpha must be finite");
            }
        }
        self.adam.validate()?;
        self.muon.validate()
    }

    pub fn optimizer(&self, kind: OptKind) -> OptimizerSpec {
        match kind {
            OptKind::Adam => OptimizerSpec::Adam(self.adam),
            OptKind::Muon => OptimizerSpec::Muon(self.muon.clone()),
        }
    }

    fn schedule(&self, peak: f64, steps: usize) -> StepSchedule {
        StepSchedule::CosineWarmup {
            eta0: peak,
            warmup_ratio: self.warmup_ratio,
            total_steps: steps,
        }
    }

    /// Number of fine-tuning runs the grid performs.
    pub fn run_count(&self) -> usize {
        let per_seed: usize = self
            .finetune_optimizers
            .iter()
            .map(|k| self.lr_sweep.get(*k).len())
            .sum();
        self.seeds.len() * self.pretrain_optimizers.len() * self.modes.len() * per_seed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainSummary {
    pub seed: u64,
    pub optimizer: OptKind,
    /// Validation loss on the pretraining task.
    pub pretrain_val_loss: f64,
    /// Validation loss on the fine-tuning task before fine-tuning.
    pub baseline_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub baseline_loss: f64,
    /// `None` when every learning rate diverged.
    pub best_lr: Option<f64>,
    pub best_loss: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub mode: FinetuneMode,
    pub pretrain: OptKind,
    pub finetune: OptKind,
    /// Mean over seeds of `best_loss / baseline_loss`. `None` if any seed fully diverged.
    pub normalized_loss: Option<f64>,
    pub diverged_runs: usize,
    pub total_runs: usize,
    pub seeds: Vec<SeedResult>,
}

/// Table row: one fine-tuning method, one value per pretraining optimizer column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    pub mode: FinetuneMode,
    pub finetune: OptKind,
    pub values: Vec<Option<f64>>,
}

/// Matched versus mismatched fine-tuning for one pretrained model. Informational only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchNote {
    pub mode: FinetuneMode,
    pub pretrain: OptKind,
    pub matched: Option<f64>,
    pub mismatched: Option<f64>,
    pub matched_better: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub columns: Vec<OptKind>,
    pub rows: Vec<TableRow>,
    pub cells: Vec<GridCell>,
    pub pretrain: Vec<PretrainSummary>,
    pub mismatch: Vec<MismatchNote>,
}

#[derive(Debug, Clone)]
pub struct GridRun {
    pub seed: u64,
    pub mode: FinetuneMode,
    pub pretrain: OptKind,
    pub finetune: OptKind,
    pub lr_index: usize,
    pub lr: f64,
    pub outcome: TrainOutcome,
}

impl GridRun {
    pub fn file_stem(&self) -> String {
        format!(
            "{}_pre-{}_ft-{}_seed{}_lr{}",
            self.mode.label(),
            self.pretrain.label(),
            self.finetune.label(),
            self.seed,
            self.lr_index
        )
    }
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub table: ReportTable,
    pub runs: Vec<GridRun>,
}

struct Pretrained {
    seed: u64,
    optimizer: OptKind,
    model: Mlp,
    finetune_task: Task,
    summary: PretrainSummary,
}

/// Pretrains on task A with each optimizer, fine-tunes with each optimizer,
/// mode and learning rate, and aggregates into a normalized table.
/// Results do not depend on the number of worker threads.
pub fn mismatch_grid(config: &ExperimentConfig) -> Result<GridResult> {
    config.validate()?;

    let pre_jobs: Vec<(u64, OptKind)> = config
        .seeds
        .iter()
        .flat_map(|&s| config.pretrain_optimizers.iter().map(move |&k| (s, k)))
        .collect();
    let pretrained: Vec<Pretrained> = pre_jobs
        .par_iter()
        .map(|&(seed, kind)| pretrain(config, seed, kind))
        .collect::<Result<_>>()?;

    let mut jobs = Vec::with_capacity(config.run_count());
    for pi in 0..pretrained.len() {
        for &mode in &config.modes {
            for &finetune in &config.finetune_optimizers {
                for (lr_index, &lr) in config.lr_sweep.get(finetune).iter().enumerate() {
                    jobs.push((pi, mode, finetune, lr_index, lr));
                }
            }
        }
    }
    let runs: Vec<GridRun> = jobs
        .par_iter()
        .map(|&(pi, mode, finetune, lr_index, lr)| {
            let p = &pretrained[pi];
            let spec = RunSpec {
                optimizer: config.optimizer(finetune),
                schedule: config.schedule(lr, config.finetune_steps),
                steps: config.finetune_steps,
                log_every: config.log_every,
                mode,
                lora: config.lora,
                seed: p.seed,
            };
            Ok(GridRun {
                seed: p.seed,
                mode,
                pretrain: p.optimizer,
                finetune,
                lr_index,
                lr,
                outcome: train(&p.model, &p.finetune_task, &spec)?,
            })
        })
        .collect::<Result<_>>()?;

    let table = aggregate(config, &pretrained, &runs);
    Ok(GridResult { table, runs })
}

fn pretrain(config: &ExperimentConfig, seed: u64, kind: OptKind) -> Result<Pretrained> {
    let (task_a, task_b) = synth_tasks(seed, &config.task)?;
    let TaskShape { d, h, o, .. } = config.task;
    let student = Mlp::random(&mut substream(seed, 1), d, h, o);
    let spec = RunSpec {
        optimizer: config.optimizer(kind),
        schedule: config.schedule(*config.pretrain_lr.get(kind), config.pretrain_steps),
        steps: config.pretrain_steps,
        log_every: config.pretrain_steps,
        mode: FinetuneMode::Full,
        lora: config.lora,
        seed,
    };
    let out = train(&student, &task_a, &spec)?;
    if let Some(step) = out.diverged_at {
        return Err(Error::Diverged { step });
    }
    let finetune_task = match config.finetune_task {
        TaskChoice::A => task_a.clone(),
        TaskChoice::B => task_b,
    };
    let model = out.final_model;
    let summary = PretrainSummary {
        seed,
        optimizer: kind,
        pretrain_val_loss: task_a.val_loss(&model)?,
        baseline_loss: finetune_task.val_loss(&model)?,
    };
    Ok(Pretrained {
        seed,
        optimizer: kind,
        model,
        finetune_task,
        summary,
    })
}

fn aggregate(config: &ExperimentConfig, pretrained: &[Pretrained], runs: &[GridRun]) -> ReportTable {
    let mut cells = Vec::new();
    for &mode in &config.modes {
        for &pre in &config.pretrain_optimizers {
            for &ft in &config.finetune_optimizers {
                let mut seeds = Vec::new();
                let mut diverged_runs = 0;
                let mut total_runs = 0;
                for p in pretrained.iter().filter(|p| p.optimizer == pre) {
                    let mut best: Option<(f64, f64)> = None;
                    for r in runs.iter().filter(|r| {
                        r.seed == p.seed && r.mode == mode && r.pretrain == pre && r.finetune == ft
                    }) {
                        total_runs += 1;
                        match r.outcome.final_val_loss {
                            None => diverged_runs += 1,
                            Some(loss) if best.is_none_or(|(_, b)| loss < b) => best = Some((r.lr, loss)),
                            Some(_) => {}
                        }
                    }
                    let baseline = p.summary.baseline_loss;
                    seeds.push(SeedResult {
                        seed: p.seed,
                        baseline_loss: baseline,
                        best_lr: best.map(|b| b.0),
                        best_loss: best.map(|b| b.1),
                        ratio: best.map(|b| b.1 / baseline),
                    });
                }
                let ratios: Option<Vec<f64>> = seeds.iter().map(|s| s.ratio).collect();
                let normalized_loss = ratios.map(|r| r.iter().sum::<f64>() / r.len() as f64);
                cells.push(GridCell {
                    mode,
                    pretrain: pre,
                    finetune: ft,
                    normalized_loss,
                    diverged_runs,
                    total_runs,
                    seeds,
                });
            }
        }
    }

    let find = |mode, pre, ft| {
        cells
            .iter()
            .find(|c| c.mode == mode && c.pretrain == pre && c.finetune == ft)
            .and_then(|c| c.normalized_loss)
    };
    let mut rows = Vec::new();
    let mut mismatch = Vec::new();
    for &mode in &config.modes {
        for &ft in &config.finetune_optimizers {
            rows.push(TableRow {
                method: format!("{}/{}", mode.label(), ft.label()),
                mode,
                finetune: ft,
                values: config
                    .pretrain_optimizers
                    .iter()
                    .map(|&pre| find(mode, pre, ft))
                    .collect(),
            });
        }
        for &pre in &config.pretrain_optimizers {
            let other = match pre {
                OptKind::Adam => OptKind::Muon,
                OptKind::Muon => OptKind::Adam,
            };
            if !config.finetune_optimizers.contains(&pre) || !config.finetune_optimizers.contains(&other) {
                continue;
            }
            let matched = find(mode, pre, pre);
            let mismatched = find(mode, pre, other);
            mismatch.push(MismatchNote {
                mode,
                pretrain: pre,
                matched,
                mismatched,
                matched_better: matched.zip(mismatched).map(|(a, b)| a < b),
            });
        }
    }

    ReportTable {
        columns: config.pretrain_optimizers.clone(),
        rows,
        cells,
        pretrain: pretrained.iter().map(|p| p.summary.clone()).collect(),
        mismatch,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            task: TaskShape {
                d: 4,
                h: 6,
                o: 3,
                train_samples: 32,
                val_samples: 16,
            },
            pretrain_steps: 40,
            finetune_steps: 10,
            lr_sweep: PerOptimizer {
                adam: vec![1e-3, 1e-2],
                muon: vec![1e-2, 3e-2],
            },
            lora: LoraSpec {
                rank: 2,
                ..LoraSpec::default()
            },
            log_every: 5,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn log_space_endpoints() {
        let v = log_space(1e-4, 1e-1, 4);
        assert_eq!(v.len(), 4);
        assert!((v[0] - 1e-4).abs() < 1e-18 && (v[3] - 1e-1).abs() < 1e-15);
        assert!((v[1] - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn zero_lr_on_same_task_gives_unit_ratios() {
        let config = ExperimentConfig {
            finetune_task: TaskChoice::A,
            lr_sweep: PerOptimizer {
                adam: vec![0.0],
                muon: vec![0.0],
            },
            ..tiny()
        };
        let result = mismatch_grid(&config).unwrap();
        assert_eq!(result.table.cells.len(), 8);
        for cell in &result.table.cells {
            assert_eq!(cell.normalized_loss, Some(1.0), "{cell:?}");
        }
    }

    #[test]
    fn run_and_row_counts() {
        let config = ExperimentConfig {
            seeds: vec![1, 2],
            ..tiny()
        };
        let result = mismatch_grid(&config).unwrap();
        assert_eq!(result.runs.len(), config.run_count());
        assert_eq!(result.runs.len(), 2 * 2 * 2 * 2 * 2);
        assert_eq!(result.table.rows.len(), 4);
        assert_eq!(result.table.mismatch.len(), 4);
    }

    #[test]
    fn mode_filter_drops_cells() {
        let config = ExperimentConfig {
            modes: vec![FinetuneMode::Lora],
            ..tiny()
        };
        let result = mismatch_grid(&config).unwrap();
        assert!(result.table.cells.iter().all(|c| c.mode == FinetuneMode::Lora));
        assert_eq!(result.table.cells.len(), 4);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = tiny();
        c.task.d = 1;
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.lr_sweep.adam.clear();
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.lora.rank = 5;
        assert!(c.validate().is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"seedz":[1]}"#).is_err());
    }
}
