//! Command configuration files. Every command reads one JSON document; CLI
//! flags override individual fields and the merged result is written next
//! to the outputs together with its SHA-256.

use std::fs;
use std::path::{Path, PathBuf};

use glad_core::baselines::{SolverConfig, SolverKind};
use glad_core::datagen::{gen_dataset, load_dataset, GraphFamilyConfig, ProblemInstance};
use glad_core::metrics::DEFAULT_EDGE_THRESHOLD;
use glad_core::theory::AmCheckConfig;
use glad_core::training::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_at, HarnessError, Result};

/// Where a command gets its instances from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// A directory written by `glad gen`.
    Path(PathBuf),
    /// Generated in memory on every run.
    Generate { family: GraphFamilyConfig, seed: u64 },
}

pub struct Dataset {
    pub instances: Vec<ProblemInstance>,
    pub seed: u64,
}

impl DatasetSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            Self::Path(dir) => {
                if !dir.join("manifest.json").is_file() {
                    return Err(HarnessError::Io {
                        path: dir.join("manifest.json"),
                        source: std::io::Error::new(std::io::ErrorKind::NotFound, "dataset manifest not found"),
                    });
                }
                let (manifest, instances) = load_dataset(dir)?;
                Ok(Dataset { instances, seed: manifest.seed })
            }
            Self::Generate { family, seed } => Ok(Dataset { instances: gen_dataset(family, *seed)?, seed: *seed }),
        }
    }

    fn set_seed(&mut self, s: u64) {
        if let Self::Generate { seed, .. } = self {
            *seed = s;
        }
    }
}

fn default_threshold() -> f64 {
    DEFAULT_EDGE_THRESHOLD
}

/// Support-recovery settings shared by the evaluating commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricOptions {
    /// `|Θ_ij|` at or below this counts as a non-edge.
    #[serde(default = "default_threshold")]
    pub edge_threshold: f64,
    /// Only require true edges to carry the right sign.
    #[serde(default)]
    pub signs_only: bool,
    /// Fill `wall_time_ms`; off by default so reruns are byte-identical.
    #[serde(default)]
    pub record_timing: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self { edge_threshold: DEFAULT_EDGE_THRESHOLD, signs_only: false, record_timing: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub family: GraphFamilyConfig,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self { family: GraphFamilyConfig::erdos(10, 0.1, 100, 10), seed: 0, out: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub experiment_id: String,
    pub dataset: Option<DatasetSource>,
    pub solver: SolverKind,
    pub solver_config: SolverConfig,
    pub metrics: MetricOptions,
    pub out: Option<PathBuf>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            experiment_id: "solve".into(),
            dataset: None,
            solver: SolverKind::Am,
            solver_config: SolverConfig::default(),
            metrics: MetricOptions::default(),
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub experiment_id: String,
    pub dataset: Option<DatasetSource>,
    pub solver: SolverKind,
    /// Settings shared by every cell; its `rho` and `lambda` are replaced.
    pub base: SolverConfig,
    pub rho_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub metrics: MetricOptions,
    pub out: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            experiment_id: "sweep".into(),
            dataset: None,
            solver: SolverKind::Admm,
            base: SolverConfig { record_iterates: false, ..SolverConfig::default() },
            rho_grid: vec![0.01, 0.03, 0.07, 0.1, 0.2],
            lambda_grid: vec![5.0, 1.0, 0.5, 0.1, 0.01],
            metrics: MetricOptions::default(),
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCommandConfig {
    pub experiment_id: String,
    pub train: Option<DatasetSource>,
    pub val: Option<DatasetSource>,
    pub training: TrainConfig,
    /// Start from this checkpoint instead of a fresh initialisation.
    pub init_checkpoint: Option<PathBuf>,
    pub record_timing: bool,
    pub out: Option<PathBuf>,
}

impl Default for TrainCommandConfig {
    fn default() -> Self {
        Self {
            experiment_id: "train".into(),
            train: None,
            val: None,
            training: TrainConfig::default(),
            init_checkpoint: None,
            record_timing: false,
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub experiment_id: String,
    pub dataset: Option<DatasetSource>,
    pub checkpoint: Option<PathBuf>,
    pub num_unrolls: usize,
    pub metrics: MetricOptions,
    pub out: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            experiment_id: "eval".into(),
            dataset: None,
            checkpoint: None,
            num_unrolls: 30,
            metrics: MetricOptions::default(),
            out: None,
        }
    }
}

/// Property suites run by `glad verify`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Suite {
    ScalarInequality,
    SqrtContraction,
    AmContraction,
    LinearRate,
    Gradient,
}

impl Suite {
    pub const ALL: [Suite; 5] =
        [Self::ScalarInequality, Self::SqrtContraction, Self::AmContraction, Self::LinearRate, Self::Gradient];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Suites to run; empty runs all of them.
    pub suites: Vec<Suite>,
    pub seed: u64,
    pub scalar_cases: usize,
    pub sqrt_pairs: usize,
    pub lambdas: Vec<f64>,
    pub am_runs: usize,
    pub am: AmCheckConfig,
    pub rate_runs: usize,
    pub rate_range: (usize, usize),
    pub fd_instances: usize,
    pub fd_dim: usize,
    pub fd_unrolls: usize,
    pub fd_probes: usize,
    pub fd_tolerance: f64,
    pub out: Option<PathBuf>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            suites: Vec::new(),
            seed: 0,
            scalar_cases: 10_000,
            sqrt_pairs: 200,
            lambdas: vec![0.1, 1.0, 10.0],
            am_runs: 20,
            am: AmCheckConfig::default(),
            rate_runs: 5,
            rate_range: (5, 50),
            fd_instances: 5,
            fd_dim: 5,
            fd_unrolls: 5,
            fd_probes: 50,
            fd_tolerance: 1e-4,
            out: None,
        }
    }
}

/// Overrides a command accepts from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub trait CommandConfig: Serialize + DeserializeOwned + Default {
    fn apply(&mut self, o: &Overrides);
    fn out_dir(&self) -> Option<&Path>;
}

macro_rules! out_field {
    () => {
        fn out_dir(&self) -> Option<&Path> {
            self.out.as_deref()
        }
    };
}

fn set_out(out: &mut Option<PathBuf>, o: &Overrides) {
    if let Some(p) = &o.out {
        *out = Some(p.clone());
    }
}

impl CommandConfig for GenConfig {
    fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        set_out(&mut self.out, o);
    }
    out_field!();
}

impl CommandConfig for SolveConfig {
    fn apply(&mut self, o: &Overrides) {
        if let (Some(s), Some(d)) = (o.seed, self.dataset.as_mut()) {
            d.set_seed(s);
        }
        set_out(&mut self.out, o);
    }
    out_field!();
}

impl CommandConfig for SweepConfig {
    fn apply(&mut self, o: &Overrides) {
        if let (Some(s), Some(d)) = (o.seed, self.dataset.as_mut()) {
            d.set_seed(s);
        }
        set_out(&mut self.out, o);
    }
    out_field!();
}

impl CommandConfig for TrainCommandConfig {
    fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.training.seed = s;
        }
        set_out(&mut self.out, o);
    }
    out_field!();
}

impl CommandConfig for EvalConfig {
    fn apply(&mut self, o: &Overrides) {
        if let (Some(s), Some(d)) = (o.seed, self.dataset.as_mut()) {
            d.set_seed(s);
        }
        set_out(&mut self.out, o);
    }
    out_field!();
}

impl CommandConfig for VerifyConfig {
    fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        set_out(&mut self.out, o);
    }
    out_field!();
}

/// Reads a config file, or the defaults when no path is given.
pub fn load_config<C: CommandConfig>(path: Option<&Path>) -> Result<C> {
    match path {
        None => Ok(C::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io_at(p))?;
            serde_json::from_str(&text).map_err(|source| HarnessError::BadConfig { path: p.to_path_buf(), source })
        }
    }
}

/// Canonical JSON of a config and its SHA-256 in hex.
pub fn config_digest<C: Serialize>(config: &C) -> Result<(String, String)> {
    let json = serde_json::to_string_pretty(config).map_err(glad_core::Error::from)?;
    Ok((sha256_hex(json.as_bytes()), json))
}

/// Hash identifying an experiment: the config digest without the output
/// path, so the same experiment written to two places hashes the same.
pub fn experiment_hash<C: Serialize>(config: &C) -> Result<String> {
    let mut value = serde_json::to_value(config).map_err(glad_core::Error::from)?;
    if let Some(map) = value.as_object_mut() {
        map.remove("out");
    }
    Ok(config_digest(&value)?.0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}
