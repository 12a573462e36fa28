//! Row-action solvers for consistent linear systems `Ax = b`.
//!
//! The crate implements the Kaczmarz projection update together with six
//! row-selection rules (cyclic sweeps, uniform random, residual-weighted,
//! greedy max-residual, a randomized tournament, and its two-row variant),
//! an exact-expectation oracle for verifying the one-step optimality of the
//! greedy rule, and an experiment harness that reproduces convergence and
//! residual-count benchmarks deterministically from a single seed.
//!
//! Module map:
//! - [`linalg`]: dense row-major systems, standardization, residuals, the
//!   projection update.
//! - [`rng`]: the seedable generator every randomized component draws from.
//! - [`selection`]: the six row-selection rules.
//! - [`solver`]: the iteration engine and its trace format.
//! - [`oracle`]: exact one-step conditional expectations and enumeration of
//!   the tournament selection distribution.
//! - [`experiments`]: scenario generators and multi-strategy comparison runs.
//! - [`cli`]: command implementations behind the `kaczmarz-lab` binary.

pub mod cli;
pub mod experiments;
pub mod linalg;
pub mod oracle;
pub mod rng;
pub mod selection;
pub mod solver;
