//! Row-selection rules.
//!
//! Each rule maps the current state to a selected row plus a count of how
//! many residual entries it had to evaluate to make that choice. The count
//! is the efficiency currency of the whole crate: the cheap rules (cyclic,
//! uniform) evaluate nothing at selection time, the residual-aware rules pay
//! between 2 and `m` evaluations per step.

use crate::linalg::{DenseSystem, StateVector};
use crate::rng::SeededRng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SelectionError {
    /// Every residual is at or below the stopping tolerance; the weighted
    /// distribution is undefined at `r = 0`, so selection must not proceed.
    #[error("residuals are all within the stopping tolerance; nothing to select")]
    Converged,
    #[error("two-sample selection needs at least two rows")]
    NeedTwoRows,
    #[error("residual vector is identically zero")]
    ZeroResidual,
    #[error("weighted-p exponent must be a positive integer")]
    InvalidExponent,
    #[error("unknown strategy name `{0}`")]
    UnknownStrategy(String),
}

/// One of the six row-selection rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionStrategy {
    /// Sweep rows in order: row `(k mod m) + 1` at iteration `k`.
    Cyclic,
    /// Uniform over `{1, ..., m}` (classical randomized Kaczmarz on a
    /// standardized matrix).
    UniformRandom,
    /// Row `i` with probability `|r(i)|^p / Σ_j |r(j)|^p`.
    WeightedP { p: u32 },
    /// Deterministic argmax of `|r|` (maximum residual rule).
    Greedy,
    /// Randomized tournament: uniformly drawn candidates compared pairwise
    /// by absolute residual until one strictly wins or the pool empties.
    PartiallyWeighted,
    /// Simple random sample of two distinct rows; larger `|r|` wins.
    TwoSample,
}

impl SelectionStrategy {
    /// The CLI name of this strategy.
    pub fn label(&self) -> &'static str {
        match self {
            SelectionStrategy::Cyclic => "cyclic",
            SelectionStrategy::UniformRandom => "uniform",
            SelectionStrategy::WeightedP { .. } => "weighted-p",
            SelectionStrategy::Greedy => "greedy",
            SelectionStrategy::PartiallyWeighted => "partial",
            SelectionStrategy::TwoSample => "two-sample",
        }
    }

    /// Parses a CLI strategy name; `p` supplies the weighted-p exponent.
    pub fn from_cli_name(name: &str, p: u32) -> Result<Self, SelectionError> {
        match name {
            "cyclic" => Ok(SelectionStrategy::Cyclic),
            "uniform" => Ok(SelectionStrategy::UniformRandom),
            "weighted-p" => {
                if p == 0 {
                    Err(SelectionError::InvalidExponent)
                } else {
                    Ok(SelectionStrategy::WeightedP { p })
                }
            }
            "greedy" => Ok(SelectionStrategy::Greedy),
            "partial" => Ok(SelectionStrategy::PartiallyWeighted),
            "two-sample" => Ok(SelectionStrategy::TwoSample),
            other => Err(SelectionError::UnknownStrategy(other.to_string())),
        }
    }

    /// Whether selection computes the whole residual vector, which doubles
    /// as a convergence check.
    pub fn computes_full_residual(&self) -> bool {
        matches!(
            self,
            SelectionStrategy::WeightedP { .. } | SelectionStrategy::Greedy
        )
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        match self {
            SelectionStrategy::WeightedP { p } if *p == 0 => Err(SelectionError::InvalidExponent),
            SelectionStrategy::WeightedP { p } if *p > i32::MAX as u32 => {
                Err(SelectionError::InvalidExponent)
            }
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for SelectionStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// The result of one selection step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectionOutcome {
    /// Selected row, 1-based.
    pub row: usize,
    /// Residual entries evaluated while making this choice.
    pub residuals_evaluated: usize,
    /// `r(row)` if the rule computed it; `None` for cyclic and uniform.
    pub residual_at_row: Option<f64>,
}

/// Row `(k mod m) + 1`; evaluates no residuals.
pub fn select_cyclic(k: usize, m: usize) -> SelectionOutcome {
    debug_assert!(m >= 1);
    SelectionOutcome {
        row: (k % m) + 1,
        residuals_evaluated: 0,
        residual_at_row: None,
    }
}

/// Uniform over `{1, ..., m}`; evaluates no residuals.
pub fn select_uniform(rng: &mut SeededRng, m: usize) -> SelectionOutcome {
    let row = rng.uniform_index(m).expect("m >= 1");
    SelectionOutcome {
        row,
        residuals_evaluated: 0,
        residual_at_row: None,
    }
}

/// Normalized weights `|r(i)|^p / Σ_j |r(j)|^p`.
///
/// Each `|r(i)|` is divided by `max_j |r(j)|` before exponentiation so that
/// large `p` on residuals spanning many orders of magnitude cannot overflow;
/// the ratios of the weights are unchanged.
pub fn weighted_probabilities(residuals: &[f64], p: u32) -> Result<Vec<f64>, SelectionError> {
    if p == 0 {
        return Err(SelectionError::InvalidExponent);
    }
    let max = residuals.iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
    if max <= 0.0 {
        return Err(SelectionError::ZeroResidual);
    }
    let mut weights: Vec<f64> = residuals
        .iter()
        .map(|r| (r.abs() / max).powi(p as i32))
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

/// Residual-weighted selection: computes the full residual vector
/// (`m` evaluations) and draws a row by inverse CDF over the weights,
/// accumulating in stored row order.
///
/// Errors with [`SelectionError::Converged`] when `max_i |r(i)|` is at or
/// below `tolerance`: the weighted distribution is undefined there and the
/// caller should stop iterating instead.
pub fn select_weighted_p(
    system: &DenseSystem,
    x: &StateVector,
    p: u32,
    tolerance: f64,
    rng: &mut SeededRng,
) -> Result<SelectionOutcome, SelectionError> {
    let residuals = system.full_residual(x);
    let max = residuals.iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
    if max <= tolerance {
        return Err(SelectionError::Converged);
    }
    let weights = weighted_probabilities(&residuals, p)?;
    let u = rng.uniform_real();

    // Inverse CDF: first index whose cumulative weight exceeds u. A strict
    // comparison keeps zero-weight rows unselectable; the fallback to the
    // last positive-weight row covers u so close to 1 that rounding leaves
    // the cumulative sum just short.
    let mut cumulative = 0.0;
    let mut fallback = 0;
    for (idx, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            fallback = idx;
        }
        cumulative += w;
        if cumulative > u && w > 0.0 {
            return Ok(SelectionOutcome {
                row: idx + 1,
                residuals_evaluated: residuals.len(),
                residual_at_row: Some(residuals[idx]),
            });
        }
    }
    Ok(SelectionOutcome {
        row: fallback + 1,
        residuals_evaluated: residuals.len(),
        residual_at_row: Some(residuals[fallback]),
    })
}

/// Greedy maximum-residual rule: the smallest index attaining
/// `max_j |r(j)|`. Always evaluates all `m` residuals.
///
/// Returns a valid argmax even when the residual is identically zero; the
/// caller's stopping rule decides convergence.
pub fn select_greedy(system: &DenseSystem, x: &StateVector) -> SelectionOutcome {
    let m = system.m();
    debug_assert!(m >= 1);
    let mut best_idx = 0;
    let mut best_abs = f64::NEG_INFINITY;
    let mut best_res = 0.0;
    for idx in 0..m {
        let r = system.residual_at(x, idx);
        // Strict comparison keeps the smallest index on ties.
        if r.abs() > best_abs {
            best_abs = r.abs();
            best_idx = idx;
            best_res = r;
        }
    }
    SelectionOutcome {
        row: best_idx + 1,
        residuals_evaluated: m,
        residual_at_row: Some(best_res),
    }
}

/// Partially weighted tournament selection.
///
/// A candidate row is drawn uniformly from the pool of unused rows, then
/// repeatedly compared against a uniformly drawn competitor from the
/// remaining pool: a strictly larger absolute residual selects the
/// candidate, otherwise the competitor takes its place and the loop
/// continues. When the pool empties the surviving candidate is selected.
/// Ties take the competitor, matching the strict `>` in the winning test.
///
/// Each drawn row's residual is computed exactly once and carried forward,
/// so `residuals_evaluated` equals the number of rows drawn: 1 when `m = 1`,
/// otherwise between 2 and `m`.
pub fn select_partially_weighted(
    system: &DenseSystem,
    x: &StateVector,
    rng: &mut SeededRng,
) -> SelectionOutcome {
    let m = system.m();
    debug_assert!(m >= 1);
    // Pool of not-yet-drawn rows (1-based); draws swap-remove in O(1).
    let mut pool: Vec<usize> = (1..=m).collect();

    let slot = rng.uniform_index(pool.len()).expect("m >= 1") - 1;
    let mut candidate = pool.swap_remove(slot);
    let mut candidate_res = system.residual_at(x, candidate - 1);
    let mut evaluated = 1;

    loop {
        if pool.is_empty() {
            return SelectionOutcome {
                row: candidate,
                residuals_evaluated: evaluated,
                residual_at_row: Some(candidate_res),
            };
        }
        let slot = rng.uniform_index(pool.len()).expect("pool nonempty") - 1;
        let competitor = pool.swap_remove(slot);
        let competitor_res = system.residual_at(x, competitor - 1);
        evaluated += 1;
        if candidate_res.abs() > competitor_res.abs() {
            return SelectionOutcome {
                row: candidate,
                residuals_evaluated: evaluated,
                residual_at_row: Some(candidate_res),
            };
        }
        candidate = competitor;
        candidate_res = competitor_res;
    }
}

/// Two-residuals variant: a simple random sample of two distinct rows; the
/// one with the larger absolute residual is selected, ties going to the
/// second-drawn row. Always evaluates exactly 2 residuals.
pub fn select_two_sample(
    system: &DenseSystem,
    x: &StateVector,
    rng: &mut SeededRng,
) -> Result<SelectionOutcome, SelectionError> {
    let m = system.m();
    if m < 2 {
        return Err(SelectionError::NeedTwoRows);
    }
    let first = rng.uniform_index(m).expect("m >= 2");
    let draw = rng.uniform_index(m - 1).expect("m >= 2");
    let second = if draw < first { draw } else { draw + 1 };

    let r1 = system.residual_at(x, first - 1);
    let r2 = system.residual_at(x, second - 1);
    let (row, residual) = if r1.abs() > r2.abs() {
        (first, r1)
    } else {
        (second, r2)
    };
    Ok(SelectionOutcome {
        row,
        residuals_evaluated: 2,
        residual_at_row: Some(residual),
    })
}

/// Dispatches to the rule named by `strategy`.
///
/// `k` is the iteration counter (cyclic only); `tolerance` is the caller's
/// stopping tolerance (weighted-p only).
pub fn select(
    strategy: SelectionStrategy,
    system: &DenseSystem,
    x: &StateVector,
    k: usize,
    tolerance: f64,
    rng: &mut SeededRng,
) -> Result<SelectionOutcome, SelectionError> {
    match strategy {
        SelectionStrategy::Cyclic => Ok(select_cyclic(k, system.m())),
        SelectionStrategy::UniformRandom => Ok(select_uniform(rng, system.m())),
        SelectionStrategy::WeightedP { p } => select_weighted_p(system, x, p, tolerance, rng),
        SelectionStrategy::Greedy => Ok(select_greedy(system, x)),
        SelectionStrategy::PartiallyWeighted => Ok(select_partially_weighted(system, x, rng)),
        SelectionStrategy::TwoSample => select_two_sample(system, x, rng),
    }
}
