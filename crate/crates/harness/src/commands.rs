use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use glad_core::baselines::{solve, SolverConfig, SolverKind};
use glad_core::datagen::{gen_dataset, save_dataset, DatasetManifest, GraphFamilyConfig, ProblemInstance};
use glad_core::glad_model::{glad_cell, GladParams, GladState};
use glad_core::theory::{
    check_am_contraction, check_linear_convergence, check_scalar_lemma, check_sqrt_contraction, default_sqrt,
    SqrtFn, SuiteReport,
};
use glad_core::training::{finite_diff_check, train_with_observer, EpochLog, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{
    experiment_hash, sha256_hex, CommandConfig, DatasetSource, EvalConfig, GenConfig, MetricOptions, SolveConfig,
    Suite, SweepConfig, TrainCommandConfig, VerifyConfig,
};
use crate::error::{io_at, HarnessError, Result};
use crate::report::{write_json, BatchMetrics, CsvOut, InstanceScore, Num, ResultRow, RowContext};

pub const RESULTS_FILE: &str = "results.csv";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.json";
pub const VERIFY_FILE: &str = "verify.json";
pub const BEST_CHECKPOINT: &str = "best.json";
pub const LAST_CHECKPOINT: &str = "last.json";

/// Creates the output directory and echoes the effective config into it.
fn prepare<C: CommandConfig>(command: &str, config: &C) -> Result<(PathBuf, String)> {
    let out = config
        .out_dir()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("glad-output").join(command));
    fs::create_dir_all(&out).map_err(io_at(&out))?;
    let hash = experiment_hash(config)?;
    #[derive(Serialize)]
    struct Echo<'a, C> {
        command: &'a str,
        config_sha256: &'a str,
        config: &'a C,
    }
    write_json(&out.join(EFFECTIVE_CONFIG_FILE), &Echo { command, config_sha256: &hash, config })?;
    Ok((out, hash))
}

fn require<'a, T>(value: &'a Option<T>, field: &str) -> Result<&'a T> {
    value.as_ref().ok_or_else(|| HarnessError::Usage(format!("config field `{field}` is required")))
}

fn short(hash: &str) -> String {
    hash[..16].to_string()
}

fn context(experiment_id: &str, hash: &str, instances: &[ProblemInstance], seed: u64, model: &str) -> Result<RowContext> {
    let first = instances
        .first()
        .ok_or_else(|| HarnessError::Usage("dataset has no instances".into()))?;
    Ok(RowContext {
        experiment_id: experiment_id.to_string(),
        config_hash: short(hash),
        generator_tag: first.generator_tag.name().to_string(),
        d: first.dim(),
        m: first.num_samples(),
        model: model.to_string(),
        rho: Num::NA,
        lambda: Num::NA,
        checkpoint_hash: "NA".into(),
        seed,
    })
}

/// Scores of one instance at each recorded iterate, with elapsed times.
type Trajectory = std::result::Result<Vec<(InstanceScore, f64)>, String>;

/// Batch rows for iterates `first_k..`, padding instances that stopped early
/// with their last iterate, plus an optional `final` row and one NA row per
/// failed instance.
fn trajectory_rows(
    ctx: &RowContext,
    runs: &[Trajectory],
    first_k: usize,
    per_iteration: bool,
    with_final: bool,
    timing: bool,
) -> Vec<ResultRow> {
    let ok: Vec<&Vec<(InstanceScore, f64)>> = runs.iter().filter_map(|r| r.as_ref().ok()).filter(|r| !r.is_empty()).collect();
    let mut rows = Vec::new();
    let at = |pick: &dyn Fn(&Vec<(InstanceScore, f64)>) -> (InstanceScore, f64)| {
        let picked: Vec<(InstanceScore, f64)> = ok.iter().map(|r| pick(r)).collect();
        let scores: Vec<InstanceScore> = picked.iter().map(|p| p.0).collect();
        let wall = if timing && !picked.is_empty() {
            Num::from(picked.iter().map(|p| p.1).sum::<f64>() / picked.len() as f64)
        } else {
            Num::NA
        };
        (BatchMetrics::aggregate(&scores), wall)
    };
    if !ok.is_empty() {
        if per_iteration {
            let len = ok.iter().map(|r| r.len()).max().unwrap_or(0);
            for i in 0..len {
                let (m, wall) = at(&|r| r[i.min(r.len() - 1)]);
                rows.push(ctx.row(first_k + i, &m, wall));
            }
        }
        if with_final {
            let (m, wall) = at(&|r| *r.last().expect("non-empty"));
            rows.push(ctx.row("final", &m, wall));
        }
    }
    for (i, r) in runs.iter().enumerate() {
        if let Err(e) = r {
            rows.push(ctx.failure(i, e));
        }
    }
    rows
}

fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    for row in rows {
        out.write(row)?;
    }
    out.finish()
}

fn solver_trajectory(kind: SolverKind, inst: &ProblemInstance, cfg: &SolverConfig, opts: &MetricOptions) -> Trajectory {
    let trace = solve(kind, &inst.sigma_hat, cfg).map_err(|e| e.to_string())?;
    trace
        .iterates
        .iter()
        .map(|step| {
            InstanceScore::new(&step.theta, step.sparse_estimate(), &inst.theta_star, opts)
                .map(|s| (s, step.elapsed_ms))
                .map_err(|e| e.to_string())
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GenOutcome {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
}

pub fn cmd_gen(config: &GenConfig) -> Result<GenOutcome> {
    config.family.validate()?;
    let (dir, _) = prepare("gen", config)?;
    let instances = gen_dataset(&config.family, config.seed)?;
    let manifest = save_dataset(&dir, &config.family, config.seed, &instances)?;
    Ok(GenOutcome { dir, manifest })
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub config_hash: String,
    pub rows: Vec<ResultRow>,
}

pub fn cmd_solve(config: &SolveConfig) -> Result<RunOutcome> {
    config.solver_config.validate()?;
    let source = require(&config.dataset, "dataset")?;
    let (dir, hash) = prepare("solve", config)?;
    let data = source.load()?;
    let kind = config.solver;
    let mut ctx = context(&config.experiment_id, &hash, &data.instances, data.seed, kind.name())?;
    ctx.rho = config.solver_config.rho.into();
    ctx.lambda = config.solver_config.lambda.into();
    // BCD is only meaningful at its final output.
    let per_iteration = kind != SolverKind::Bcd;
    let solver_cfg = SolverConfig { record_iterates: per_iteration, ..config.solver_config.clone() };
    let runs: Vec<Trajectory> = data
        .instances
        .par_iter()
        .map(|inst| solver_trajectory(kind, inst, &solver_cfg, &config.metrics))
        .collect();
    let rows = trajectory_rows(&ctx, &runs, 0, per_iteration, true, config.metrics.record_timing);
    write_rows(&dir.join(RESULTS_FILE), &rows)?;
    Ok(RunOutcome { dir, config_hash: hash, rows })
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub run: RunOutcome,
    /// Cell with the lowest final NMSE: `(ρ, λ, dB)`.
    pub best: Option<(f64, f64, f64)>,
}

pub fn cmd_sweep(config: &SweepConfig) -> Result<SweepOutcome> {
    if config.rho_grid.is_empty() || config.lambda_grid.is_empty() {
        return Err(HarnessError::Usage("rho_grid and lambda_grid must be non-empty".into()));
    }
    let source = require(&config.dataset, "dataset")?;
    let (dir, hash) = prepare("sweep", config)?;
    let data = source.load()?;
    let kind = config.solver;
    let base = context(&config.experiment_id, &hash, &data.instances, data.seed, kind.name())?;
    let mut rows = Vec::new();
    let mut best: Option<(f64, f64, f64)> = None;
    for &rho in &config.rho_grid {
        for &lambda in &config.lambda_grid {
            let cell = SolverConfig { rho, lambda, record_iterates: false, ..config.base.clone() };
            let ctx = RowContext { rho: rho.into(), lambda: lambda.into(), ..base.clone() };
            let runs: Vec<Trajectory> = match cell.validate() {
                Ok(()) => data
                    .instances
                    .par_iter()
                    .map(|inst| solver_trajectory(kind, inst, &cell, &config.metrics))
                    .collect(),
                Err(e) => vec![Err(e.to_string()); data.instances.len()],
            };
            let cell_rows = trajectory_rows(&ctx, &runs, 0, false, true, config.metrics.record_timing);
            if let Some(db) = cell_rows.first().filter(|r| r.instance == "all").and_then(|r| r.nmse_db.get()) {
                if best.map_or(true, |b| db < b.2) {
                    best = Some((rho, lambda, db));
                }
            }
            rows.extend(cell_rows);
        }
    }
    write_rows(&dir.join(RESULTS_FILE), &rows)?;
    Ok(SweepOutcome { run: RunOutcome { dir, config_hash: hash, rows }, best })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub schema_version: u32,
    pub experiment_id: String,
    pub config_hash: String,
    pub epoch: usize,
    pub mean_train_loss: f64,
    #[serde(serialize_with = "na")]
    pub val_nmse_db: Option<f64>,
    pub lr: f64,
    #[serde(serialize_with = "na")]
    pub wall_time_ms: Option<f64>,
    pub seed: u64,
}

fn na<S: serde::Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    Num(*v).serialize(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub best_epoch: usize,
    pub best_val_nmse_db: Option<f64>,
    pub epochs_run: usize,
    pub checkpoint_sha256: String,
}

#[derive(Debug, Clone)]
pub struct TrainCommandOutcome {
    pub dir: PathBuf,
    pub best: GladParams,
    pub last: GladParams,
    pub log: Vec<EpochLog>,
    pub summary: TrainSummary,
}

pub fn cmd_train(config: &TrainCommandConfig) -> Result<TrainCommandOutcome> {
    config.training.validate()?;
    let train_src = require(&config.train, "train")?;
    let (dir, hash) = prepare("train", config)?;
    let train_set = train_src.load()?.instances;
    let val_set = match &config.val {
        Some(v) => v.load()?.instances,
        None => Vec::new(),
    };
    let init = match &config.init_checkpoint {
        Some(p) => Some(GladParams::load(p)?),
        None => None,
    };
    let log_path = dir.join(TRAIN_LOG_FILE);
    let mut log_out = CsvOut::create(&log_path)?;
    let mut write_err = None;
    let tc: &TrainConfig = &config.training;
    let outcome = train_with_observer(&train_set, &val_set, tc, init, |row| {
        let r = TrainLogRow {
            schema_version: crate::report::RESULTS_SCHEMA_VERSION,
            experiment_id: config.experiment_id.clone(),
            config_hash: short(&hash),
            epoch: row.epoch,
            mean_train_loss: row.mean_train_loss,
            val_nmse_db: row.val_nmse_db,
            lr: row.lr,
            wall_time_ms: config.record_timing.then_some(row.wall_time_ms),
            seed: tc.seed,
        };
        if write_err.is_none() {
            write_err = log_out.write(&r).err();
        }
    });
    if let Some(e) = write_err {
        return Err(e);
    }
    log_out.finish()?;
    let outcome = outcome?;
    let best_path = dir.join(BEST_CHECKPOINT);
    outcome.best_params.save(&best_path)?;
    outcome.final_params.save(&dir.join(LAST_CHECKPOINT))?;
    let summary = TrainSummary {
        best_epoch: outcome.best_epoch,
        best_val_nmse_db: outcome.log[outcome.best_epoch].val_nmse_db,
        epochs_run: outcome.log.len() - 1,
        checkpoint_sha256: sha256_hex(&fs::read(&best_path).map_err(io_at(&best_path))?),
    };
    write_json(&dir.join("train_summary.json"), &summary)?;
    Ok(TrainCommandOutcome {
        dir,
        best: outcome.best_params,
        last: outcome.final_params,
        log: outcome.log,
        summary,
    })
}

fn glad_trajectory(inst: &ProblemInstance, params: &GladParams, k: usize, opts: &MetricOptions) -> Trajectory {
    let run = || -> glad_core::Result<Vec<(InstanceScore, f64)>> {
        let started = Instant::now();
        let mut state = GladState::initial(&inst.sigma_hat, params.init_offset_t)?;
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            state = glad_cell(&inst.sigma_hat, &state, params)?;
            let elapsed = started.elapsed().as_secs_f64() * 1e3;
            out.push((InstanceScore::new(&state.theta, &state.z, &inst.theta_star, opts).map_err(core_err)?, elapsed));
        }
        Ok(out)
    };
    run().map_err(|e| e.to_string())
}

fn core_err(e: HarnessError) -> glad_core::Error {
    match e {
        HarnessError::Core(c) => c,
        other => glad_core::Error::NumericalFailure(other.to_string()),
    }
}

pub fn cmd_eval(config: &EvalConfig) -> Result<RunOutcome> {
    if config.num_unrolls == 0 {
        return Err(HarnessError::Usage("num_unrolls must be at least 1".into()));
    }
    let source = require(&config.dataset, "dataset")?;
    let ckpt = require(&config.checkpoint, "checkpoint")?;
    let (dir, hash) = prepare("eval", config)?;
    let bytes = fs::read(ckpt).map_err(io_at(ckpt))?;
    let params = GladParams::from_json(std::str::from_utf8(&bytes).map_err(|e| HarnessError::Usage(e.to_string()))?)?;
    let data = source.load()?;
    let mut ctx = context(&config.experiment_id, &hash, &data.instances, data.seed, "glad")?;
    ctx.checkpoint_hash = short(&sha256_hex(&bytes));
    let runs: Vec<Trajectory> = data
        .instances
        .par_iter()
        .map(|inst| glad_trajectory(inst, &params, config.num_unrolls, &config.metrics))
        .collect();
    let rows = trajectory_rows(&ctx, &runs, 1, true, false, config.metrics.record_timing);
    write_rows(&dir.join(RESULTS_FILE), &rows)?;
    Ok(RunOutcome { dir, config_hash: hash, rows })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

pub fn cmd_verify(config: &VerifyConfig) -> Result<VerifyReport> {
    cmd_verify_with(config, default_sqrt)
}

/// As [`cmd_verify`] with a replaceable matrix square root in the
/// contraction suite.
pub fn cmd_verify_with(config: &VerifyConfig, sqrt: SqrtFn) -> Result<VerifyReport> {
    let (dir, _) = prepare("verify", config)?;
    let selected: Vec<Suite> = if config.suites.is_empty() { Suite::ALL.to_vec() } else { config.suites.clone() };
    let seed = config.seed;
    let mut suites = Vec::new();
    for suite in selected {
        let report = match suite {
            Suite::ScalarInequality => check_scalar_lemma(config.scalar_cases, seed),
            Suite::SqrtContraction => check_sqrt_contraction(config.sqrt_pairs, &config.lambdas, seed, sqrt)?,
            Suite::AmContraction => check_am_contraction(config.am_runs, &config.am, seed)?,
            Suite::LinearRate => check_linear_convergence(config.rate_runs, &config.am, config.rate_range, seed)?,
            Suite::Gradient => gradient_suite(config)?,
        };
        suites.push(report);
    }
    let report = VerifyReport { passed: suites.iter().all(|s| s.passed), suites };
    write_json(&dir.join(VERIFY_FILE), &report)?;
    Ok(report)
}

fn gradient_suite(config: &VerifyConfig) -> Result<SuiteReport> {
    let family = GraphFamilyConfig::erdos(config.fd_dim, 0.3, 10 * config.fd_dim, config.fd_instances);
    let instances = gen_dataset(&family, config.seed)?;
    let tc = TrainConfig { num_unrolls: config.fd_unrolls, ..TrainConfig::default() };
    let mut report = SuiteReport {
        suite: "gradient_finite_difference".into(),
        cases: 0,
        violations: 0,
        worst_excess: f64::NEG_INFINITY,
        passed: false,
        stats: Default::default(),
    };
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    for (i, inst) in instances.iter().enumerate() {
        let params = GladParams::init(config.seed.wrapping_add(i as u64));
        let fd = finite_diff_check(&inst.sigma_hat, &inst.theta_star, &params, &tc, config.fd_probes, config.seed)?;
        report.cases += fd.probes.len();
        skipped += fd.skipped;
        worst = worst.max(fd.max_rel_error);
        if !(fd.max_rel_error < config.fd_tolerance) {
            report.violations += 1;
        }
    }
    report.worst_excess = worst - config.fd_tolerance;
    report.stats.insert("max_rel_error".into(), worst);
    report.stats.insert("skipped_probes".into(), skipped as f64);
    report.passed = report.cases > 0 && report.violations == 0;
    Ok(report)
}

/// Loads a dataset through the same path the commands use.
pub fn load_source(source: &DatasetSource) -> Result<Vec<ProblemInstance>> {
    Ok(source.load()?.instances)
}
