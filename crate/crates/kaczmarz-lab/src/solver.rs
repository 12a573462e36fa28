//! The iteration engine: selection, projection, stopping, tracing.
//!
//! Trace CSV format (one row per step): header
//! `k,selected_row,residual_used,residuals_evaluated,error`, floats at 17
//! significant digits, preceded by comment lines `# seed=…`, `# strategy=…`
//! and `# m=…, n=…`.

use std::collections::BTreeMap;
use std::io::{self, Write};

use crate::linalg::{fmt17, kaczmarz_update, DenseSystem, StateVector, LinalgError};
use crate::rng::SeededRng;
use crate::selection::{select, SelectionError, SelectionStrategy};
use thiserror::Error;

/// Row-norm slack accepted by the solver before refusing a system.
pub const STANDARDIZED_TOL: f64 = 1e-9;

/// Residual slack for a claimed exact solution.
pub const SOLUTION_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("system is not standardized: row {row} norm deviates from 1 by {deviation:e}")]
    NotStandardized { row: usize, deviation: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("x_true is not a solution: residual sup-norm {0:e} exceeds {SOLUTION_TOL:e}")]
    NotASolution(f64),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("selection failed: {0}")]
    Selection(SelectionError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Everything a run needs besides the system and the starting point.
#[derive(Clone, Copy, Debug)]
pub struct SolverConfig {
    pub strategy: SelectionStrategy,
    pub max_iterations: usize,
    /// Stopping tolerance on the residual sup-norm; 0 runs the full budget.
    pub tolerance: f64,
    pub seed: u64,
    /// Stride for recording the error column (1 = every step).
    pub trace_every: usize,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.max_iterations == 0 {
            return Err(SolverError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.tolerance < 0.0 || !self.tolerance.is_finite() {
            return Err(SolverError::InvalidConfig(
                "tolerance must be finite and non-negative".into(),
            ));
        }
        if self.trace_every == 0 {
            return Err(SolverError::InvalidConfig(
                "trace_every must be at least 1".into(),
            ));
        }
        self.strategy
            .validate()
            .map_err(SolverError::Selection)?;
        Ok(())
    }
}

/// One performed iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    /// 0-based iteration index; the step maps `x_k` to `x_{k+1}`.
    pub k: usize,
    /// Selected row, 1-based.
    pub selected_row: usize,
    /// `r_k(selected_row)`, the residual driving the update.
    pub residual_used: f64,
    /// Residual entries consumed by this step (selection plus, for the
    /// cheap rules, the one evaluation the update itself needs).
    pub residuals_evaluated: usize,
    /// `‖x_k − x⋆‖₂` when the solution is known and `k` lies on the
    /// recording stride.
    pub error: Option<f64>,
}

/// Full record of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationTrace {
    pub steps: Vec<StepRecord>,
    pub final_x: StateVector,
    /// `‖final_x − x⋆‖₂` when the solution is known.
    pub final_error: Option<f64>,
    pub converged: bool,
    /// Sum of per-step counts plus all stopping-check evaluations.
    pub total_residual_evaluations: u64,
    /// Residuals spent purely on stopping checks (periodic full residuals
    /// for the cheap strategies, plus the final full evaluation on which a
    /// residual-aware strategy detected convergence). Excluded from
    /// per-step statistics.
    pub stopping_check_evaluations: u64,
}

/// Runs the configured strategy from `x0` until the budget is exhausted or
/// the stopping rule fires.
///
/// Each step performs exactly one selection, one residual evaluation for
/// the selected row if the strategy did not already provide it, and one
/// projection. Strategies that compute the full residual during selection
/// (weighted-p, greedy) stop as soon as `max_i |r(i)|` is within tolerance;
/// the other strategies run a full residual check every `m` steps, whose
/// cost is accounted separately so per-step counts stay comparable.
pub fn run(
    system: &DenseSystem,
    x0: &StateVector,
    config: &SolverConfig,
    x_true: Option<&StateVector>,
) -> Result<IterationTrace, SolverError> {
    config.validate()?;
    let deviation = system.max_row_norm_deviation();
    if deviation > STANDARDIZED_TOL {
        let row = (1..=system.m())
            .max_by(|&a, &b| {
                let da = (crate::linalg::norm2(system.row(a)) - 1.0).abs();
                let db = (crate::linalg::norm2(system.row(b)) - 1.0).abs();
                da.total_cmp(&db)
            })
            .unwrap_or(1);
        return Err(SolverError::NotStandardized { row, deviation });
    }
    if x0.len() != system.n() {
        return Err(SolverError::DimensionMismatch(format!(
            "x0 has length {}, system needs {}",
            x0.len(),
            system.n()
        )));
    }
    if let Some(solution) = x_true {
        if solution.len() != system.n() {
            return Err(SolverError::DimensionMismatch(format!(
                "x_true has length {}, system needs {}",
                solution.len(),
                system.n()
            )));
        }
        let worst = system
            .full_residual(solution)
            .iter()
            .fold(0.0f64, |acc, r| acc.max(r.abs()));
        if worst > SOLUTION_TOL {
            return Err(SolverError::NotASolution(worst));
        }
    }

    let m = system.m();
    let full_residual_strategy = config.strategy.computes_full_residual();
    let mut rng = SeededRng::new(config.seed);
    let mut x = x0.clone();
    let mut steps = Vec::new();
    let mut step_evals: u64 = 0;
    let mut check_evals: u64 = 0;
    let mut converged = false;

    for k in 0..config.max_iterations {
        // Periodic stopping check for strategies that never see the whole
        // residual vector.
        if !full_residual_strategy && k > 0 && k % m == 0 {
            let sup = system
                .full_residual(&x)
                .iter()
                .fold(0.0f64, |acc, r| acc.max(r.abs()));
            check_evals += m as u64;
            if sup <= config.tolerance {
                converged = true;
                break;
            }
        }

        let outcome = match select(config.strategy, system, &x, k, config.tolerance, &mut rng) {
            Ok(outcome) => outcome,
            Err(SelectionError::Converged) => {
                // Weighted-p saw the full residual within tolerance; those m
                // evaluations acted as the stopping check.
                check_evals += m as u64;
                converged = true;
                break;
            }
            Err(other) => return Err(SolverError::Selection(other)),
        };

        if let (SelectionStrategy::Greedy, Some(r)) = (config.strategy, outcome.residual_at_row) {
            if r.abs() <= config.tolerance {
                check_evals += m as u64;
                converged = true;
                break;
            }
        }

        let (residual_used, evals) = match outcome.residual_at_row {
            Some(r) => (r, outcome.residuals_evaluated),
            // Cyclic and uniform select blindly; the update itself costs one
            // residual evaluation, counted here.
            None => (
                system.residual_at(&x, outcome.row - 1),
                outcome.residuals_evaluated + 1,
            ),
        };

        let error = match (x_true, k % config.trace_every) {
            (Some(solution), 0) => Some(x.distance(solution)),
            _ => None,
        };

        steps.push(StepRecord {
            k,
            selected_row: outcome.row,
            residual_used,
            residuals_evaluated: evals,
            error,
        });
        step_evals += evals as u64;

        x = kaczmarz_update(&x, system.row(outcome.row), residual_used);
    }

    let final_error = x_true.map(|solution| x.distance(solution));
    Ok(IterationTrace {
        steps,
        final_x: x,
        final_error,
        converged,
        total_residual_evaluations: step_evals + check_evals,
        stopping_check_evaluations: check_evals,
    })
}

/// Frequency table of per-step residual counts, keyed by count.
pub fn residual_count_histogram(trace: &IterationTrace) -> BTreeMap<usize, u64> {
    let mut histogram = BTreeMap::new();
    for step in &trace.steps {
        *histogram.entry(step.residuals_evaluated).or_insert(0) += 1;
    }
    histogram
}

/// Header metadata echoed into every trace CSV.
#[derive(Clone, Debug)]
pub struct TraceMeta {
    pub seed: u64,
    pub strategy: SelectionStrategy,
    pub m: usize,
    pub n: usize,
    /// Extra comment lines (version, scenario) emitted before the standard
    /// ones; each is written verbatim after `# `.
    pub extra_comments: Vec<String>,
}

/// Writes a trace in the documented CSV format.
pub fn write_trace_csv(
    w: &mut impl Write,
    trace: &IterationTrace,
    meta: &TraceMeta,
) -> io::Result<()> {
    for line in &meta.extra_comments {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "# seed={}", meta.seed)?;
    writeln!(w, "# strategy={}", meta.strategy.label())?;
    if let SelectionStrategy::WeightedP { p } = meta.strategy {
        writeln!(w, "# p={p}")?;
    }
    writeln!(w, "# m={}, n={}", meta.m, meta.n)?;
    writeln!(w, "k,selected_row,residual_used,residuals_evaluated,error")?;
    for step in &trace.steps {
        let error = step.error.map(fmt17).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{}",
            step.k,
            step.selected_row,
            fmt17(step.residual_used),
            step.residuals_evaluated,
            error
        )?;
    }
    Ok(())
}
