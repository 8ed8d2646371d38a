use std::ffi::CString;
use std::num::NonZeroU32;
use std::path::Path;

use highs::{HighsModelStatus, RowProblem, Sense};

use super::{Backend, BackendConfig, Solution, SolveStatus};
use crate::error::{Error, Result};
use crate::model::{ObjectiveSense, OptModel, RowSense, VarKind};

/// The open-source HiGHS LP/MIP solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct HighsBackend;

impl HighsBackend {
    pub const ID: &'static str = "highs";
}

fn bounds(lower: f64, upper: f64) -> (std::ops::Bound<f64>, std::ops::Bound<f64>) {
    use std::ops::Bound::*;
    let lo = if lower == f64::NEG_INFINITY { Unbounded } else { Included(lower) };
    let hi = if upper == f64::INFINITY { Unbounded } else { Included(upper) };
    (lo, hi)
}

impl Backend for HighsBackend {
    fn id(&self) -> &str {
        Self::ID
    }

    fn solve_with_start(&self, model: &OptModel, cfg: &BackendConfig, warm_start: Option<&[f64]>) -> Solution {
        if model.has_bilinear() {
            return Solution::error("bilinear unsupported by backend highs");
        }
        let mut costs = vec![0.0; model.variables.len()];
        for (v, c) in &model.objective.terms {
            costs[v.0] += c;
        }

        let mut problem = RowProblem::default();
        let cols: Vec<_> = model
            .variables
            .iter()
            .zip(&costs)
            .map(|(v, &cost)| match v.kind {
                VarKind::Continuous => problem.add_column(cost, bounds(v.lower, v.upper)),
                VarKind::Binary => problem.add_integer_column(cost, 0.0..=1.0),
            })
            .collect();
        for c in &model.constraints {
            let row: Vec<_> = c.terms.iter().map(|(v, coef)| (cols[v.0], *coef)).collect();
            match c.sense {
                RowSense::Le => problem.add_row(..=c.rhs, row),
                RowSense::Ge => problem.add_row(c.rhs.., row),
                RowSense::Eq => problem.add_row(c.rhs..=c.rhs, row),
            }
        }

        let sense = match model.objective.sense {
            ObjectiveSense::Minimize => Sense::Minimise,
            ObjectiveSense::Maximize => Sense::Maximise,
        };
        let mut solver = match problem.try_optimise(sense) {
            Ok(s) => s,
            Err(e) => return Solution::error(format!("highs rejected the model: {e:?}")),
        };
        solver.make_quiet();
        solver.set_option("mip_rel_gap", cfg.tolerance);
        solver.set_option("mip_abs_gap", cfg.tolerance);
        solver.set_option("random_seed", (cfg.seed % i32::MAX as u64) as i32);
        if let Some(t) = cfg.time_limit {
            solver.set_option("time_limit", t);
        }
        if let Some(n) = cfg.threads.and_then(NonZeroU32::new) {
            solver.set_threads(n);
        }
        if let Some(start) = warm_start {
            if solver.try_set_solution(Some(start), None, None, None).is_err() {
                return Solution::error("highs rejected the warm start");
            }
        }

        let solved = match solver.try_solve() {
            Ok(s) => s,
            Err(e) => return Solution::error(format!("highs failed: {e:?}")),
        };
        let is_mip = model.has_integers();
        let has_point = solved.primal_solution_status() == highs::HighsSolutionStatus::Feasible;
        let objective = has_point.then(|| solved.objective_value());
        let bound = if is_mip {
            solved.double_info_value(c"mip_dual_bound").ok()
        } else {
            objective
        };
        let status = match solved.status() {
            HighsModelStatus::Optimal => SolveStatus::Optimal,
            HighsModelStatus::ModelEmpty => SolveStatus::Optimal,
            HighsModelStatus::Infeasible => SolveStatus::Infeasible,
            HighsModelStatus::Unbounded => SolveStatus::Unbounded,
            HighsModelStatus::ReachedTimeLimit => SolveStatus::TimeLimit {
                best_bound: bound.unwrap_or(f64::NAN),
                incumbent: objective,
            },
            other => SolveStatus::Error {
                message: format!("highs finished with status {other:?}"),
            },
        };
        let (values, row_duals) = if has_point {
            let s = solved.get_solution();
            let duals = if is_mip { Vec::new() } else { s.dual_rows().to_vec() };
            (s.columns().to_vec(), duals)
        } else {
            (Vec::new(), Vec::new())
        };
        Solution {
            objective: if status.is_optimal() && objective.is_none() && model.variables.is_empty() {
                Some(0.0)
            } else {
                objective
            },
            status,
            best_bound: bound,
            values,
            row_duals,
        }
    }
}

/// Result of reading a model file with HiGHS' own LP/MPS parser and solving it.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportedModel {
    pub rows: usize,
    pub columns: usize,
    pub optimal: bool,
    pub objective: f64,
}

/// Reads `path` (format chosen by extension: `.lp` or `.mps`) with HiGHS'
/// reader, which shares no code with [`export`](super::export), then solves it.
pub fn read_and_solve(path: &Path) -> Result<ImportedModel> {
    let c_path = CString::new(path.to_string_lossy().as_bytes())
        .map_err(|_| Error::Parameter("path contains a NUL byte".into()))?;
    unsafe {
        let h = highs_sys::Highs_create();
        if h.is_null() {
            return Err(Error::Solver("could not create a highs instance".into()));
        }
        let off = CString::new("output_flag").expect("static string");
        highs_sys::Highs_setBoolOptionValue(h, off.as_ptr(), 0);
        let status = highs_sys::Highs_readModel(h, c_path.as_ptr());
        if status == highs_sys::STATUS_ERROR {
            highs_sys::Highs_destroy(h);
            return Err(Error::Solver(format!("highs could not read {}", path.display())));
        }
        let rows = highs_sys::Highs_getNumRow(h) as usize;
        let columns = highs_sys::Highs_getNumCol(h) as usize;
        let run = highs_sys::Highs_run(h);
        let model_status = highs_sys::Highs_getModelStatus(h);
        let objective = highs_sys::Highs_getObjectiveValue(h);
        highs_sys::Highs_destroy(h);
        if run == highs_sys::STATUS_ERROR {
            return Err(Error::Solver(format!("highs failed to solve {}", path.display())));
        }
        Ok(ImportedModel {
            rows,
            columns,
            optimal: model_status == highs_sys::MODEL_STATUS_OPTIMAL,
            objective,
        })
    }
}
