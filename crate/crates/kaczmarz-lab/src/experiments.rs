//! Scenario generators and multi-strategy comparison runs.
//!
//! Two benchmark families are built in. The nice scenario samples a square
//! standard-normal matrix, adds `shift · I` (default 100), standardizes, and
//! solves `Ax = 0` from `x₀ = 1`; the strong diagonal makes residual-aware
//! selection shine. The challenging scenario is the same without the shift,
//! giving a badly conditioned matrix and much slower convergence.
//!
//! Scenario config files are plain `key=value` text:
//!
//! ```text
//! kind=nice
//! n=1000
//! shift=100
//! seed=42
//! iterations=10000
//! strategies=uniform,partial,two-sample,greedy
//! p=2
//! ```
//!
//! `m=` is accepted for `kind=custom` rectangular systems. Lines starting
//! with `#` are comments.

use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{DenseSystem, LinalgError, StateVector};
use crate::rng::SeededRng;
use crate::selection::{SelectionError, SelectionStrategy};
use crate::solver::{self, IterationTrace, SolverConfig, SolverError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("config parse error: {0}")]
    Config(String),
    #[error(transparent)]
    Strategy(#[from] SelectionError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    Nice,
    Challenging,
    Custom,
}

impl ScenarioKind {
    pub fn label(&self) -> &'static str {
        match self {
            ScenarioKind::Nice => "nice",
            ScenarioKind::Challenging => "challenging",
            ScenarioKind::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ExperimentError> {
        match s {
            "nice" => Ok(ScenarioKind::Nice),
            "challenging" => Ok(ScenarioKind::Challenging),
            "custom" => Ok(ScenarioKind::Custom),
            other => Err(ExperimentError::Config(format!(
                "unknown scenario kind `{other}`"
            ))),
        }
    }

    /// Default iteration budget for this scenario family.
    pub fn default_iterations(&self) -> usize {
        match self {
            ScenarioKind::Challenging => 20_000,
            _ => 10_000,
        }
    }
}

/// A fully pinned experiment: matrix family, dimensions, seed, budget and
/// the strategies to compare.
#[derive(Clone, Debug)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub m: usize,
    pub n: usize,
    /// Diagonal shift (nice scenario only).
    pub shift: f64,
    pub seed: u64,
    /// Iteration budget per strategy.
    pub iterations: usize,
    pub strategies: Vec<SelectionStrategy>,
}

impl ScenarioSpec {
    pub fn nice(n: usize, shift: f64, seed: u64, iterations: usize) -> Self {
        Self {
            kind: ScenarioKind::Nice,
            m: n,
            n,
            shift,
            seed,
            iterations,
            strategies: default_strategies(),
        }
    }

    pub fn challenging(n: usize, seed: u64, iterations: usize) -> Self {
        Self {
            kind: ScenarioKind::Challenging,
            m: n,
            n,
            shift: 0.0,
            seed,
            iterations,
            strategies: default_strategies(),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.n == 0 || self.m < self.n {
            return Err(ExperimentError::InvalidSpec(format!(
                "need m >= n >= 1, got m = {}, n = {}",
                self.m, self.n
            )));
        }
        if self.kind != ScenarioKind::Custom && self.m != self.n {
            return Err(ExperimentError::InvalidSpec(format!(
                "{} scenarios are square, got m = {}, n = {}",
                self.kind.label(),
                self.m,
                self.n
            )));
        }
        if self.shift < 0.0 || !self.shift.is_finite() {
            return Err(ExperimentError::InvalidSpec(
                "shift must be finite and non-negative".into(),
            ));
        }
        if self.iterations == 0 {
            return Err(ExperimentError::InvalidSpec(
                "iteration budget must be at least 1".into(),
            ));
        }
        if self.strategies.is_empty() {
            return Err(ExperimentError::InvalidSpec(
                "at least one strategy is required".into(),
            ));
        }
        for strategy in &self.strategies {
            strategy.validate()?;
        }
        Ok(())
    }

    /// Parses the `key=value` config format.
    pub fn from_config_str(text: &str) -> Result<Self, ExperimentError> {
        let mut kind = None;
        let mut m = None;
        let mut n = None;
        let mut shift = None;
        let mut seed = 42u64;
        let mut iterations = None;
        let mut strategy_names: Option<Vec<String>> = None;
        let mut p = 2u32;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ExperimentError::Config(format!("line {}: expected key=value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: &dyn std::fmt::Display| {
                ExperimentError::Config(format!("line {}: bad {key}: {e}", lineno + 1))
            };
            match key {
                "kind" => kind = Some(ScenarioKind::parse(value)?),
                "m" => m = Some(value.parse::<usize>().map_err(|e| bad(&e))?),
                "n" => n = Some(value.parse::<usize>().map_err(|e| bad(&e))?),
                "shift" => shift = Some(value.parse::<f64>().map_err(|e| bad(&e))?),
                "seed" => seed = value.parse::<u64>().map_err(|e| bad(&e))?,
                "iterations" => iterations = Some(value.parse::<usize>().map_err(|e| bad(&e))?),
                "p" => p = value.parse::<u32>().map_err(|e| bad(&e))?,
                "strategies" => {
                    strategy_names =
                        Some(value.split(',').map(|s| s.trim().to_string()).collect())
                }
                other => {
                    return Err(ExperimentError::Config(format!(
                        "line {}: unknown key `{other}`",
                        lineno + 1
                    )))
                }
            }
        }

        let kind = kind.ok_or_else(|| ExperimentError::Config("missing kind=".into()))?;
        let n = n.ok_or_else(|| ExperimentError::Config("missing n=".into()))?;
        let m = m.unwrap_or(n);
        let shift = shift.unwrap_or(match kind {
            ScenarioKind::Nice => 100.0,
            _ => 0.0,
        });
        let iterations = iterations.unwrap_or_else(|| kind.default_iterations());
        let strategies = match strategy_names {
            Some(names) => {
                let mut out = Vec::new();
                for name in names {
                    out.push(SelectionStrategy::from_cli_name(&name, p)?);
                }
                out
            }
            None => default_strategies(),
        };

        let spec = Self {
            kind,
            m,
            n,
            shift,
            seed,
            iterations,
            strategies,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// The four strategies the comparison figures use, in their color order.
pub fn default_strategies() -> Vec<SelectionStrategy> {
    vec![
        SelectionStrategy::UniformRandom,
        SelectionStrategy::PartiallyWeighted,
        SelectionStrategy::TwoSample,
        SelectionStrategy::Greedy,
    ]
}

/// Fills a vector with standard normal draws.
///
/// Normal sampling is pinned to the basic Box–Muller transform: each pair
/// of uniforms `(u1, u2)` with `u1` mapped into `(0, 1]` yields
/// `sqrt(-2 ln u1) · (cos 2πu2, sin 2πu2)`, consumed in order. A trailing
/// odd draw discards the sine half.
pub fn standard_normal_vec(count: usize, rng: &mut SeededRng) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u1 = 1.0 - rng.uniform_real();
        let u2 = rng.uniform_real();
        let radius = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        out.push(radius * theta.cos());
        if out.len() < count {
            out.push(radius * theta.sin());
        }
    }
    out
}

/// `m x n` matrix of i.i.d. standard normals with `b = 0`; not yet
/// standardized.
pub fn gaussian_matrix(m: usize, n: usize, rng: &mut SeededRng) -> DenseSystem {
    let a = standard_normal_vec(m * n, rng);
    DenseSystem::new(m, n, a, vec![0.0; m]).expect("normal draws are finite")
}

/// Square standard-normal matrix plus `shift · I`, standardized, `b = 0`.
pub fn nice_matrix(n: usize, shift: f64, rng: &mut SeededRng) -> Result<DenseSystem, LinalgError> {
    let mut a = standard_normal_vec(n * n, rng);
    for i in 0..n {
        a[i * n + i] += shift;
    }
    DenseSystem::new(n, n, a, vec![0.0; n])?.standardize()
}

/// Builds the scenario matrix from `spec.seed`.
pub fn build_system(spec: &ScenarioSpec) -> Result<DenseSystem, ExperimentError> {
    let mut rng = SeededRng::new(spec.seed);
    let system = match spec.kind {
        ScenarioKind::Nice => nice_matrix(spec.n, spec.shift, &mut rng)?,
        ScenarioKind::Challenging | ScenarioKind::Custom => {
            gaussian_matrix(spec.m, spec.n, &mut rng).standardize()?
        }
    };
    Ok(system)
}

/// One strategy's run inside a scenario.
#[derive(Clone, Debug)]
pub struct StrategyRun {
    pub strategy: SelectionStrategy,
    /// The derived per-run seed (`spec.seed + strategy index`).
    pub seed: u64,
    pub trace: IterationTrace,
}

/// Runs every strategy of the scenario against the shared matrix, from
/// `x₀ = 1` toward the known solution `x⋆ = 0`, each with its own derived
/// seed. Strategies run in parallel on the ambient rayon pool; results are
/// ordered by strategy index regardless of scheduling, so outputs do not
/// depend on thread count.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<Vec<StrategyRun>, ExperimentError> {
    spec.validate()?;
    let system = build_system(spec)?;
    let x0 = StateVector::ones(spec.n);
    let x_true = StateVector::zeros(spec.n);

    spec.strategies
        .par_iter()
        .enumerate()
        .map(|(index, &strategy)| {
            let config = SolverConfig {
                strategy,
                max_iterations: spec.iterations,
                // The benchmarks run their full budget like the figures do.
                tolerance: 0.0,
                seed: spec.seed.wrapping_add(index as u64),
                trace_every: 1,
            };
            let trace = solver::run(&system, &x0, &config, Some(&x_true))?;
            Ok(StrategyRun {
                strategy,
                seed: config.seed,
                trace,
            })
        })
        .collect()
}
