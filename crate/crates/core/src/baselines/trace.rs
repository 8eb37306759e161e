use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::matcore::SymmetricMatrix;
use crate::metrics::nmse_db;

use super::SolverKind;

/// One recorded iterate. `k == 0` is the initialisation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceStep {
    pub k: usize,
    pub theta: SymmetricMatrix,
    /// Sparse split variable, for solvers that carry one (AM, ADMM).
    pub z: Option<SymmetricMatrix>,
    pub objective: f64,
    pub nmse_db: Option<f64>,
    /// Wall time since the solver started.
    pub elapsed_ms: f64,
}

impl TraceStep {
    /// The iterate used for support decisions: `Z` when present, else `Θ`.
    pub fn sparse_estimate(&self) -> &SymmetricMatrix {
        self.z.as_ref().unwrap_or(&self.theta)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverTrace {
    pub solver: SolverKind,
    pub iterates: Vec<TraceStep>,
    /// Objective at every iteration, recorded even when iterates are not kept.
    pub objectives: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_ms: f64,
}

impl SolverTrace {
    pub fn final_step(&self) -> &TraceStep {
        self.iterates.last().expect("trace always holds the initial iterate")
    }

    pub fn final_theta(&self) -> &SymmetricMatrix {
        &self.final_step().theta
    }

    pub fn final_objective(&self) -> f64 {
        self.final_step().objective
    }

    /// Fills `nmse_db` of every recorded iterate against a known truth.
    pub fn attach_nmse(&mut self, theta_star: &SymmetricMatrix) {
        for step in &mut self.iterates {
            step.nmse_db = nmse_db(std::slice::from_ref(&step.theta), std::slice::from_ref(theta_star))
                .ok()
                .map(|n| n.db);
        }
    }
}

pub(crate) struct Recorder {
    solver: SolverKind,
    keep_all: bool,
    start: Instant,
    iterates: Vec<TraceStep>,
    objectives: Vec<f64>,
}

impl Recorder {
    pub fn new(solver: SolverKind, keep_all: bool) -> Self {
        Self {
            solver,
            keep_all,
            start: Instant::now(),
            iterates: Vec::new(),
            objectives: Vec::new(),
        }
    }

    pub fn push(&mut self, k: usize, theta: &SymmetricMatrix, z: Option<&SymmetricMatrix>, objective: f64) {
        let step = TraceStep {
            k,
            theta: theta.clone(),
            z: z.cloned(),
            objective,
            nmse_db: None,
            elapsed_ms: self.start.elapsed().as_secs_f64() * 1e3,
        };
        self.objectives.push(objective);
        if !self.keep_all && !self.iterates.is_empty() {
            self.iterates.pop();
        }
        self.iterates.push(step);
    }

    pub fn finish(self, iterations: usize, converged: bool) -> SolverTrace {
        SolverTrace {
            solver: self.solver,
            iterates: self.iterates,
            objectives: self.objectives,
            iterations,
            converged,
            wall_time_ms: self.start.elapsed().as_secs_f64() * 1e3,
        }
    }
}
