//! Tidy CSV results. Every numeric field is finite or the literal `NA`.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use glad_core::matcore::SymmetricMatrix;
use glad_core::metrics::{auc, edge_stats, signed_support_recovered, NMSE_FLOOR_DB};
use serde::{Serialize, Serializer};

use crate::config::MetricOptions;
use crate::error::{io_at, Result};

pub const RESULTS_SCHEMA_VERSION: u32 = 1;

/// A number that is written as `NA` when missing or non-finite.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Num(pub Option<f64>);

impl Num {
    pub const NA: Num = Num(None);

    pub fn get(self) -> Option<f64> {
        self.0.filter(|v| v.is_finite())
    }
}

impl From<f64> for Num {
    fn from(v: f64) -> Self {
        Num(Some(v))
    }
}

impl From<Option<f64>> for Num {
    fn from(v: Option<f64>) -> Self {
        Num(v)
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.get() {
            Some(v) => s.serialize_f64(v),
            None => s.serialize_str("NA"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub schema_version: u32,
    pub experiment_id: String,
    pub config_hash: String,
    pub generator_tag: String,
    pub d: usize,
    pub m: usize,
    pub model: String,
    pub rho: Num,
    pub lambda: Num,
    pub checkpoint_hash: String,
    /// Instance index, or `all` for a batch aggregate.
    pub instance: String,
    /// Iteration index, or `final`.
    pub k: String,
    pub nmse_db: Num,
    pub ps: Num,
    pub auc: Num,
    pub fdr: Num,
    pub tpr: Num,
    pub fpr: Num,
    pub wall_time_ms: Num,
    pub seed: u64,
    /// Empty on success, otherwise the failure that produced the NA values.
    pub error: String,
}

/// Fields shared by all rows of one command invocation.
#[derive(Debug, Clone)]
pub struct RowContext {
    pub experiment_id: String,
    pub config_hash: String,
    pub generator_tag: String,
    pub d: usize,
    pub m: usize,
    pub model: String,
    pub rho: Num,
    pub lambda: Num,
    pub checkpoint_hash: String,
    pub seed: u64,
}

impl RowContext {
    pub fn row(&self, k: impl ToString, m: &BatchMetrics, wall_time_ms: Num) -> ResultRow {
        ResultRow {
            schema_version: RESULTS_SCHEMA_VERSION,
            experiment_id: self.experiment_id.clone(),
            config_hash: self.config_hash.clone(),
            generator_tag: self.generator_tag.clone(),
            d: self.d,
            m: self.m,
            model: self.model.clone(),
            rho: self.rho,
            lambda: self.lambda,
            checkpoint_hash: self.checkpoint_hash.clone(),
            instance: "all".into(),
            k: k.to_string(),
            nmse_db: m.nmse_db,
            ps: m.ps,
            auc: m.auc,
            fdr: m.fdr,
            tpr: m.tpr,
            fpr: m.fpr,
            wall_time_ms,
            seed: self.seed,
            error: String::new(),
        }
    }

    pub fn failure(&self, instance: usize, error: &str) -> ResultRow {
        ResultRow {
            instance: instance.to_string(),
            k: "final".into(),
            error: error.to_string(),
            ..self.row("final", &BatchMetrics::default(), Num::NA)
        }
    }
}

/// Per-instance ingredients of the batch metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceScore {
    pub err_sq: f64,
    pub norm_sq: f64,
    pub recovered: bool,
    pub auc: Option<f64>,
    pub fdr: f64,
    pub tpr: f64,
    pub fpr: f64,
}

impl InstanceScore {
    /// `theta` drives NMSE; `sparse` (the thresholded iterate where the
    /// method has one) drives the support metrics.
    pub fn new(theta: &SymmetricMatrix, sparse: &SymmetricMatrix, truth: &SymmetricMatrix, opts: &MetricOptions) -> Result<Self> {
        let stats = edge_stats(sparse, truth, opts.edge_threshold)?;
        Ok(Self {
            err_sq: theta.distance(truth).powi(2),
            norm_sq: truth.frobenius_norm_sq(),
            recovered: signed_support_recovered(sparse, truth, opts.edge_threshold, opts.signs_only),
            auc: auc(sparse, truth).ok(),
            fdr: stats.fdr,
            tpr: stats.tpr,
            fpr: stats.fpr,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchMetrics {
    pub nmse_db: Num,
    pub ps: Num,
    pub auc: Num,
    pub fdr: Num,
    pub tpr: Num,
    pub fpr: Num,
}

impl BatchMetrics {
    /// NMSE of the batch (ratio of mean errors), PS as a success fraction,
    /// the rest as plain means. AUC averages over instances where it is
    /// defined.
    pub fn aggregate(scores: &[InstanceScore]) -> Self {
        if scores.is_empty() {
            return Self::default();
        }
        let n = scores.len() as f64;
        let err: f64 = scores.iter().map(|s| s.err_sq).sum();
        let norm: f64 = scores.iter().map(|s| s.norm_sq).sum();
        let nmse = if norm == 0.0 {
            None
        } else if err == 0.0 {
            Some(NMSE_FLOOR_DB)
        } else {
            Some((10.0 * (err / norm).log10()).max(NMSE_FLOOR_DB))
        };
        let aucs: Vec<f64> = scores.iter().filter_map(|s| s.auc).collect();
        let mean = |f: fn(&InstanceScore) -> f64| Num::from(scores.iter().map(f).sum::<f64>() / n);
        Self {
            nmse_db: nmse.into(),
            ps: Num::from(scores.iter().filter(|s| s.recovered).count() as f64 / n),
            auc: if aucs.is_empty() { Num::NA } else { Num::from(aucs.iter().sum::<f64>() / aucs.len() as f64) },
            fdr: mean(|s| s.fdr),
            tpr: mean(|s| s.tpr),
            fpr: mean(|s| s.fpr),
        }
    }
}

/// CSV writer that flushes after every row, so partial results survive a
/// failing run.
pub struct CsvOut {
    inner: csv::Writer<File>,
}

impl CsvOut {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(io_at(path))?;
        Ok(Self { inner: csv::Writer::from_writer(file) })
    }

    pub fn write<T: Serialize>(&mut self, row: &T) -> Result<()> {
        self.inner.serialize(row)?;
        self.inner.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Writes pretty JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path).map_err(io_at(path))?;
    serde_json::to_writer_pretty(&mut f, value).map_err(glad_core::Error::from)?;
    f.write_all(b"\n").map_err(io_at(path))?;
    Ok(())
}
