use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use muonlab::biaslab::{random_problem, run_descent, DescentConfig, ResidualProblem, Target};
use muonlab::linalg::{
    l2_norm, linf_norm, matrix_norms, ns_scan, spectral_report, CoefficientSchedule, MatrixNorms,
    NsEnvelope, SpectralReport,
};
use muonlab::lorakit::{
    budget_error_max, budget_error_spec, exact_fit_max, exact_fit_spec,
    oracle::{projected_descent_max, projected_descent_spec},
    surrogate_damage, surrogate_fixed_points, thresholds, BudgetAnalysis, SurrogateDamage,
};
use muonlab::microtrain::{mismatch_grid, ExperimentConfig, ReportTable};
use muonlab::optim::{OptimizerSpec, StepSchedule};
use muonlab::rng::{gaussian_matrix, substream, uniform_matrix, uniform_vec};
use muonlab::Matrix;

use crate::error::{CliError, CliResult};
use crate::output::Outputs;

/// What a command hands back before anything touches the disk.
pub struct Report {
    pub outputs: Outputs,
    pub seeds: Vec<u64>,
    /// Set when a certification run exhausted its budget.
    pub not_converged: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImplicitBiasConfig {
    pub seeds: Vec<u64>,
    pub problems: usize,
    pub m: usize,
    pub n: usize,
    /// Entries of `W0` are uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    pub optimizers: Vec<OptimizerSpec>,
    pub schedule: StepSchedule,
    pub steps: usize,
    pub tol: f64,
    pub log_every: usize,
}

impl Default for ImplicitBiasConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            problems: 1,
            m: 4,
            n: 8,
            init_scale: 0.0,
            optimizers: vec![OptimizerSpec::Signgd, OptimizerSpec::idealized_muon()],
            schedule: StepSchedule::Harmonic { eta0: 0.5, tau: 1.0 },
            steps: 20_000,
            tol: 1e-3,
            log_every: 100,
        }
    }
}

#[derive(Debug, Serialize)]
struct BiasRun {
    seed: u64,
    problem: usize,
    optimizer: String,
    target: Target,
    final_distance: f64,
    converged: bool,
    first_hit: Option<usize>,
    dist_max: f64,
    dist_spec: f64,
    final_loss: f64,
    correction_max_norm: f64,
    correction_spectral_norm: f64,
    /// `||r0||_inf / ||x||_1`, the max-norm of the SignGD correction.
    max_norm_bound: f64,
    /// `||r0||_2 / ||x||_2`, the spectral norm of the Muon correction.
    spectral_bound: f64,
    trajectory: String,
}

#[derive(Debug, Serialize)]
struct BiasSummary {
    all_converged: bool,
    runs: Vec<BiasRun>,
}

pub fn implicit_bias(cfg: &ImplicitBiasConfig) -> CliResult<Report> {
    if cfg.seeds.is_empty() || cfg.problems == 0 || cfg.m == 0 || cfg.n == 0 || cfg.optimizers.is_empty() {
        return Err(CliError::Usage(
            "implicit-bias needs non-empty seeds and optimizers and positive problems, m, n".into(),
        ));
    }
    if !(cfg.init_scale >= 0.0 && cfg.init_scale.is_finite()) {
        return Err(CliError::Usage("init_scale must be finite and >= 0".into()));
    }
    let jobs: Vec<(u64, usize, usize)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| (0..cfg.problems).flat_map(move |p| (0..cfg.optimizers.len()).map(move |k| (s, p, k))))
        .collect();

    let results: Vec<(BiasRun, Vec<u8>)> = jobs
        .par_iter()
        .map(|&(seed, problem, k)| -> CliResult<_> {
            let mut rng = substream(seed, problem as u64);
            let base = random_problem(&mut rng, cfg.m, cfg.n);
            let w0 = if cfg.init_scale > 0.0 {
                uniform_matrix(&mut rng, cfg.m, cfg.n, -cfg.init_scale, cfg.init_scale)
            } else {
                Matrix::zeros(cfg.m, cfg.n)
            };
            let p = base.with_init(w0)?;
            let optimizer = cfg.optimizers[k].clone();
            let label = optimizer.label();
            let descent = DescentConfig {
                optimizer,
                schedule: cfg.schedule,
                steps: cfg.steps,
                tol: cfg.tol,
                log_every: cfg.log_every,
            };
            let out = run_descent(&p, &descent)?;
            let last = out.trajectory.last().copied().expect("trajectory has the final row");
            let correction = out.final_weights.sub(p.w0())?;
            let norms = matrix_norms(&correction)?;
            let r0 = p.initial_residual();
            let name = format!("seed{seed}/problem{problem}_opt{k}_{label}.csv");
            let run = BiasRun {
                seed,
                problem,
                optimizer: label.to_string(),
                target: out.target,
                final_distance: out.final_distance,
                converged: out.converged,
                first_hit: out.first_hit,
                dist_max: last.dist_max,
                dist_spec: last.dist_spec,
                final_loss: last.loss,
                correction_max_norm: norms.max,
                correction_spectral_norm: norms.spectral,
                max_norm_bound: linf_norm(&r0) / muonlab::linalg::l1_norm(p.x()),
                spectral_bound: l2_norm(&r0) / l2_norm(p.x()),
                trajectory: name,
            };
            Ok((run, out.trajectory.to_csv_bytes()?))
        })
        .collect::<CliResult<_>>()?;

    let mut outputs = Outputs::default();
    let mut runs = Vec::with_capacity(results.len());
    for (run, csv) in results {
        outputs.add(run.trajectory.clone(), csv);
        runs.push(run);
    }
    let failed: Vec<String> = runs
        .iter()
        .filter(|r| !r.converged)
        .map(|r| format!("seed {} problem {} {} at distance {:.3e}", r.seed, r.problem, r.optimizer, r.final_distance))
        .collect();
    let summary = BiasSummary {
        all_converged: failed.is_empty(),
        runs,
    };
    outputs.add_json("summary.json", &summary)?;
    Ok(Report {
        outputs,
        seeds: cfg.seeds.clone(),
        not_converged: (!failed.is_empty()).then(|| failed.join("; ")),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetCurvesConfig {
    pub seeds: Vec<u64>,
    pub instances: usize,
    pub m: usize,
    pub n: usize,
    /// Evenly spaced budgets from 0 to `rho_max_factor * max(rho*_A, rho*_mu)`.
    pub rho_points: usize,
    pub rho_max_factor: f64,
    pub oracle_iters: usize,
    /// Adapter ranks for the frozen-`A` surrogate.
    pub surrogate_ranks: Vec<usize>,
}

impl Default for BudgetCurvesConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            instances: 5,
            m: 4,
            n: 8,
            rho_points: 7,
            rho_max_factor: 1.5,
            oracle_iters: 2000,
            surrogate_ranks: vec![1, 2],
        }
    }
}

#[derive(Debug, Serialize)]
struct CurveRow {
    seed: u64,
    instance: usize,
    rho: f64,
    marker: &'static str,
    closed_max: f64,
    oracle_max: f64,
    closed_spec: f64,
    oracle_spec: f64,
}

#[derive(Debug, Serialize)]
struct SurrogateEntry {
    rank: usize,
    analysis: BudgetAnalysis,
    fixed_points_equal: bool,
    fixed_point_gap: f64,
    damage: SurrogateDamage,
}

#[derive(Debug, Serialize)]
struct InstanceEntry {
    seed: u64,
    instance: usize,
    full: BudgetAnalysis,
    surrogates: Vec<SurrogateEntry>,
}

pub fn budget_curves(cfg: &BudgetCurvesConfig) -> CliResult<Report> {
    if cfg.seeds.is_empty() || cfg.instances == 0 || cfg.m == 0 || cfg.n == 0 || cfg.rho_points == 0 {
        return Err(CliError::Usage(
            "budget-curves needs non-empty seeds and positive instances, m, n, rho_points".into(),
        ));
    }
    if !(cfg.rho_max_factor > 0.0 && cfg.rho_max_factor.is_finite()) {
        return Err(CliError::Usage("rho_max_factor must be finite and > 0".into()));
    }
    if let Some(r) = cfg.surrogate_ranks.iter().find(|&&r| r == 0 || r > cfg.n) {
        return Err(CliError::Usage(format!("surrogate rank {r} must lie in 1..={}", cfg.n)));
    }
    let jobs: Vec<(u64, usize)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| (0..cfg.instances).map(move |i| (s, i)))
        .collect();
    let results: Vec<(Vec<CurveRow>, InstanceEntry)> = jobs
        .par_iter()
        .map(|&(seed, instance)| budget_instance(cfg, seed, instance))
        .collect::<CliResult<_>>()?;

    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut entries = Vec::new();
    for (rows, entry) in results {
        for row in rows {
            writer.serialize(row)?;
        }
        entries.push(entry);
    }
    let mut outputs = Outputs::default();
    outputs.add("curves.csv", writer.into_inner().map_err(|e| CliError::Io(e.into_error()))?);
    outputs.add_json("thresholds.json", &entries)?;
    Ok(Report {
        outputs,
        seeds: cfg.seeds.clone(),
        not_converged: None,
    })
}

fn budget_instance(cfg: &BudgetCurvesConfig, seed: u64, instance: usize) -> CliResult<(Vec<CurveRow>, InstanceEntry)> {
    let mut rng = substream(seed, instance as u64);
    let (m, n) = (cfg.m, cfg.n);
    let problem = loop {
        let w0 = uniform_matrix(&mut rng, m, n, -1.0, 1.0);
        let z = uniform_vec(&mut rng, n, -1.0, 1.0);
        let b = uniform_vec(&mut rng, m, -1.0, 1.0);
        let p = ResidualProblem::new(w0, z, b)?;
        if l2_norm(p.r0()) > 0.0 {
            break p;
        }
    };
    let (r0, z) = (problem.r0(), problem.z());
    let rho_a = exact_fit_max(r0, z)?;
    let rho_mu = exact_fit_spec(r0, z)?;
    let top = cfg.rho_max_factor * rho_a.max(rho_mu);

    let mut budgets: Vec<(f64, &'static str)> = (0..cfg.rho_points)
        .map(|k| {
            let rho = if cfg.rho_points == 1 {
                0.0
            } else {
                top * k as f64 / (cfg.rho_points - 1) as f64
            };
            (rho, "grid")
        })
        .collect();
    budgets.push((rho_a, "rho_a_star"));
    budgets.push((rho_mu, "rho_mu_star"));
    budgets.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut rows = Vec::with_capacity(budgets.len());
    for (rho, marker) in budgets {
        rows.push(CurveRow {
            seed,
            instance,
            rho,
            marker,
            closed_max: budget_error_max(r0, z, rho)?,
            oracle_max: projected_descent_max(r0, z, rho, cfg.oracle_iters)?,
            closed_spec: budget_error_spec(r0, z, rho)?,
            oracle_spec: projected_descent_spec(r0, z, rho, cfg.oracle_iters)?,
        });
    }

    let x_old = uniform_vec(&mut rng, n, -1.0, 1.0);
    let mut surrogates = Vec::new();
    for &rank in &cfg.surrogate_ranks {
        let a = gaussian_matrix(&mut rng, rank, n, 1.0 / (n as f64).sqrt());
        let u = a.apply(z)?;
        let (bs, bmu) = surrogate_fixed_points(r0, &u)?;
        let gap = bs.sub(&bmu)?.max_norm();
        surrogates.push(SurrogateEntry {
            rank,
            analysis: thresholds(r0, &u)?,
            fixed_points_equal: gap <= 1e-12,
            fixed_point_gap: gap,
            damage: surrogate_damage(r0, &a, z, &x_old)?,
        });
    }
    let entry = InstanceEntry {
        seed,
        instance,
        full: thresholds(r0, z)?,
        surrogates,
    };
    Ok((rows, entry))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NsScanConfig {
    /// Number of fixed-quintic steps; ignored when `schedule_file` is set.
    pub steps: usize,
    pub schedule_file: Option<PathBuf>,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for NsScanConfig {
    fn default() -> Self {
        Self {
            steps: 5,
            schedule_file: None,
            lo: 1e-3,
            hi: 1.0,
            points: 1000,
        }
    }
}

#[derive(Debug, Serialize)]
struct EnvelopeFile {
    schedule: CoefficientSchedule,
    envelope: NsEnvelope,
}

pub fn ns_scan_cmd(cfg: &NsScanConfig) -> CliResult<Report> {
    let schedule = match &cfg.schedule_file {
        Some(path) => CoefficientSchedule::load(path)
            .map_err(|e| CliError::Usage(format!("cannot load schedule {}: {e}", path.display())))?,
        None => CoefficientSchedule::fixed_quintic(cfg.steps)?,
    };
    let (rows, envelope) = ns_scan(&schedule, cfg.lo, cfg.hi, cfg.points)?;
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["x", "value"])?;
    for (x, v) in rows {
        writer.serialize((x, v))?;
    }
    let mut outputs = Outputs::default();
    outputs.add("scan.csv", writer.into_inner().map_err(|e| CliError::Io(e.into_error()))?);
    outputs.add_json("envelope.json", &EnvelopeFile { schedule, envelope })?;
    Ok(Report {
        outputs,
        seeds: Vec::new(),
        not_converged: None,
    })
}

pub fn microtrain(cfg: &ExperimentConfig) -> CliResult<Report> {
    let result = mismatch_grid(cfg)?;
    let mut outputs = Outputs::default();
    for run in &result.runs {
        outputs.add(
            format!("trajectories/{}.csv", run.file_stem()),
            run.outcome.to_csv_bytes()?,
        );
    }
    let table: &ReportTable = &result.table;
    outputs.add_json("table.json", table)?;
    Ok(Report {
        outputs,
        seeds: cfg.seeds.clone(),
        not_converged: None,
    })
}

#[derive(Debug, Serialize)]
pub struct SpectraFile {
    pub m: usize,
    pub n: usize,
    pub report: SpectralReport,
    pub norms: MatrixNorms,
}

pub fn spectra(weights: &Matrix) -> CliResult<SpectraFile> {
    Ok(SpectraFile {
        m: weights.rows(),
        n: weights.cols(),
        report: spectral_report(weights)?,
        norms: matrix_norms(weights)?,
    })
}
