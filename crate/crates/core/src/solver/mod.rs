//! A uniform contract over LP/MILP solvers, plus model export.
//!
//! Floating point lives here and in the encoders that call it; exact checks
//! happen afterwards on rationalized solutions.

mod export;
mod highs;

use serde::{Deserialize, Serialize};

pub use self::export::{export, write_model, ExportFormat};
pub use self::highs::{read_and_solve, HighsBackend, ImportedModel};

use crate::error::{Error, Result};
use crate::model::OptModel;

/// Environment variable naming the backend to use.
pub const SOLVER_ENV: &str = "CORE_FORGE_SOLVER";

/// Relative/absolute optimality tolerance used unless overridden.
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub solver: String,
    pub tolerance: f64,
    /// Seconds; `None` means no limit.
    pub time_limit: Option<f64>,
    pub threads: Option<u32>,
    pub seed: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            solver: HighsBackend::ID.to_string(),
            tolerance: DEFAULT_TOLERANCE,
            time_limit: None,
            threads: None,
            seed: 0,
        }
    }
}

impl BackendConfig {
    /// Defaults, with the solver id taken from `CORE_FORGE_SOLVER` when set.
    pub fn from_env() -> Self {
        let mut cfg = BackendConfig::default();
        if let Ok(id) = std::env::var(SOLVER_ENV) {
            if !id.trim().is_empty() {
                cfg.solver = id.trim().to_ascii_lowercase();
            }
        }
        cfg
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_time_limit(mut self, seconds: f64) -> Self {
        self.time_limit = Some(seconds);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Parameter(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if let Some(t) = self.time_limit {
            if !(t > 0.0) {
                return Err(Error::Parameter(format!("time limit must be positive, got {t}")));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Parameter("thread count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Stopped on the clock. `incumbent` is absent when no feasible point was found.
    TimeLimit { best_bound: f64, incumbent: Option<f64> },
    Infeasible,
    Unbounded,
    Error { message: String },
}

impl SolveStatus {
    pub fn is_optimal(&self) -> bool {
        matches!(self, SolveStatus::Optimal)
    }
}

/// What a backend returns. `values` and `row_duals` are empty unless a
/// primal point (resp. LP duals) is available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    /// Proven bound on the optimum (equal to `objective` for LPs).
    pub best_bound: Option<f64>,
    pub values: Vec<f64>,
    pub row_duals: Vec<f64>,
}

impl Solution {
    pub fn error(message: impl Into<String>) -> Self {
        Solution {
            status: SolveStatus::Error {
                message: message.into(),
            },
            objective: None,
            best_bound: None,
            values: Vec::new(),
            row_duals: Vec::new(),
        }
    }

    /// The objective when the solve finished optimally, else an error describing the status.
    pub fn optimal_objective(&self) -> Result<f64> {
        match (&self.status, self.objective) {
            (SolveStatus::Optimal, Some(v)) => Ok(v),
            (status, _) => Err(Error::Solver(format!("no optimal solution: {status:?}"))),
        }
    }
}

/// A solver behind the common contract. A handle is used by one thread at a time.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    fn supports_bilinear(&self) -> bool {
        false
    }

    /// Solves `model`. `warm_start`, when given, is a full primal assignment
    /// the backend may use as an initial incumbent.
    fn solve_with_start(&self, model: &OptModel, cfg: &BackendConfig, warm_start: Option<&[f64]>) -> Solution;

    fn solve(&self, model: &OptModel, cfg: &BackendConfig) -> Solution {
        self.solve_with_start(model, cfg, None)
    }
}

/// Backend for a solver id (`highs` is the only one built in).
pub fn backend(id: &str) -> Result<Box<dyn Backend>> {
    match id {
        HighsBackend::ID => Ok(Box::new(HighsBackend)),
        other => Err(Error::Parameter(format!(
            "unknown solver backend {other:?} (available: {})",
            HighsBackend::ID
        ))),
    }
}

/// Front door used by the encoders: validates the config and model, then
/// refuses bilinear rows on linear-only backends before any work starts.
pub fn solve(model: &OptModel, cfg: &BackendConfig) -> Solution {
    solve_with_start(model, cfg, None)
}

pub fn solve_with_start(model: &OptModel, cfg: &BackendConfig, warm_start: Option<&[f64]>) -> Solution {
    if let Err(e) = cfg.validate() {
        return Solution::error(e.to_string());
    }
    let backend = match backend(&cfg.solver) {
        Ok(b) => b,
        Err(e) => return Solution::error(e.to_string()),
    };
    solve_on(backend.as_ref(), model, cfg, warm_start)
}

pub fn solve_on(backend: &dyn Backend, model: &OptModel, cfg: &BackendConfig, warm_start: Option<&[f64]>) -> Solution {
    if let Err(e) = model.validate() {
        return Solution::error(e.to_string());
    }
    if model.has_bilinear() && !backend.supports_bilinear() {
        return Solution::error(format!("bilinear unsupported by backend {}", backend.id()));
    }
    if let Some(start) = warm_start {
        if start.len() != model.variables.len() {
            return Solution::error("warm start has the wrong length");
        }
    }
    backend.solve_with_start(model, cfg, warm_start)
}
