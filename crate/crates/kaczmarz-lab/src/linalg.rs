//! Dense real systems and the elementary kernels every selection rule shares.
//!
//! Storage is row-major `f64`; rows are contiguous slices so the projection
//! update touches one cache-friendly stripe at a time. Row indices are
//! 1-based everywhere in the public API of this crate.
//!
//! Fixture format (used by tests and accepted by [`read_fixture`]): a plain
//! text file whose first line is `m n`, followed by `m` lines of `n`
//! space-separated floats, followed by one line of `m` floats for `b`.
//! Floats are written with 17 significant digits and round-trip exactly.

use std::io::{self, BufRead, Write};

use thiserror::Error;

/// Row norms below this are treated as exactly zero when standardizing.
pub const EPS_ZERO_ROW: f64 = 1e-300;

/// Tolerance on `|‖a_i‖₂ − 1|` for a row to count as unit length.
pub const UNIT_ROW_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("row {0} has zero norm and cannot be standardized")]
    ZeroRow(usize),
    #[error("row index {index} outside 1..={rows}")]
    IndexOutOfRange { index: usize, rows: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("fixture parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Formats a float with 17 significant digits; parses back bit-exactly.
pub(crate) fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// An `m x n` system `Ax = b` with `m >= n >= 1`, all entries finite.
///
/// Immutable after construction; shared freely across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseSystem {
    m: usize,
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl DenseSystem {
    pub fn new(m: usize, n: usize, a: Vec<f64>, b: Vec<f64>) -> Result<Self, LinalgError> {
        if n == 0 || m < n {
            return Err(LinalgError::Invalid(format!(
                "need m >= n >= 1, got m = {m}, n = {n}"
            )));
        }
        if a.len() != m * n {
            return Err(LinalgError::DimensionMismatch(format!(
                "matrix storage holds {} entries, expected {}",
                a.len(),
                m * n
            )));
        }
        if b.len() != m {
            return Err(LinalgError::DimensionMismatch(format!(
                "right-hand side has length {}, expected {m}",
                b.len()
            )));
        }
        if let Some(pos) = a.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::Invalid(format!(
                "matrix entry at flat index {pos} is not finite"
            )));
        }
        if let Some(pos) = b.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::Invalid(format!(
                "right-hand side entry {} is not finite",
                pos + 1
            )));
        }
        Ok(Self { m, n, a, b })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Row `i` (1-based) as a contiguous slice.
    pub fn row(&self, i: usize) -> &[f64] {
        assert!(i >= 1 && i <= self.m, "row index {i} outside 1..={}", self.m);
        &self.a[(i - 1) * self.n..i * self.n]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.a.chunks_exact(self.n)
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    /// `b_i` for 1-based `i`.
    pub fn rhs_entry(&self, i: usize) -> f64 {
        assert!(i >= 1 && i <= self.m, "row index {i} outside 1..={}", self.m);
        self.b[i - 1]
    }

    /// Rescales every row (and its right-hand side entry) to unit norm.
    ///
    /// The solution set of `Ax = b` is unchanged. Idempotent up to one ulp
    /// per entry.
    pub fn standardize(&self) -> Result<DenseSystem, LinalgError> {
        let mut a = self.a.clone();
        let mut b = self.b.clone();
        for i in 0..self.m {
            let row = &mut a[i * self.n..(i + 1) * self.n];
            let norm = norm2(row);
            if !norm.is_finite() {
                return Err(LinalgError::Invalid(format!(
                    "row {} has non-finite norm",
                    i + 1
                )));
            }
            if norm <= EPS_ZERO_ROW {
                return Err(LinalgError::ZeroRow(i + 1));
            }
            for v in row.iter_mut() {
                *v /= norm;
            }
            b[i] /= norm;
        }
        Ok(Self {
            m: self.m,
            n: self.n,
            a,
            b,
        })
    }

    /// Largest deviation of any row norm from 1.
    pub fn max_row_norm_deviation(&self) -> f64 {
        self.rows()
            .map(|row| (norm2(row) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_standardized(&self, tol: f64) -> bool {
        self.max_row_norm_deviation() <= tol
    }

    /// `r(i) = b_i − ⟨a_i, x⟩` for 1-based `i`; costs one length-n inner
    /// product.
    pub fn residual_entry(&self, x: &StateVector, i: usize) -> Result<f64, LinalgError> {
        if i == 0 || i > self.m {
            return Err(LinalgError::IndexOutOfRange {
                index: i,
                rows: self.m,
            });
        }
        if x.len() != self.n {
            return Err(LinalgError::DimensionMismatch(format!(
                "state has length {}, expected {}",
                x.len(),
                self.n
            )));
        }
        Ok(self.residual_at(x, i - 1))
    }

    /// Unchecked 0-based residual entry; internal hot path.
    pub(crate) fn residual_at(&self, x: &StateVector, idx0: usize) -> f64 {
        debug_assert!(idx0 < self.m);
        debug_assert_eq!(x.len(), self.n);
        let row = &self.a[idx0 * self.n..(idx0 + 1) * self.n];
        self.b[idx0] - dot(row, x.as_slice())
    }

    /// The full residual vector `b − Ax`; entry `j` corresponds to row
    /// `j + 1`. Costs `m` residual evaluations.
    pub fn full_residual(&self, x: &StateVector) -> Vec<f64> {
        (0..self.m).map(|i| self.residual_at(x, i)).collect()
    }
}

/// The iterate `x_k`; all entries finite.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    x: Vec<f64>,
}

impl StateVector {
    pub fn new(x: Vec<f64>) -> Result<Self, LinalgError> {
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::Invalid(format!(
                "state entry {} is not finite",
                pos + 1
            )));
        }
        Ok(Self { x })
    }

    pub fn zeros(n: usize) -> Self {
        Self { x: vec![0.0; n] }
    }

    pub fn ones(n: usize) -> Self {
        Self { x: vec![1.0; n] }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    /// Euclidean distance `‖self − other‖₂`.
    pub fn distance(&self, other: &StateVector) -> f64 {
        assert_eq!(self.len(), other.len());
        self.x
            .iter()
            .zip(&other.x)
            .map(|(a, b)| {
                let d = a - b;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// One Kaczmarz projection: `x + r · a_i` for a unit row `a_i`.
///
/// After the update the residual of that row is zero up to roundoff
/// (`1e-10 · (1 + |b_i|)` in the worst case).
pub fn kaczmarz_update(x: &StateVector, row: &[f64], residual: f64) -> StateVector {
    debug_assert_eq!(x.len(), row.len());
    debug_assert!(
        (norm2(row) - 1.0).abs() <= UNIT_ROW_TOL,
        "kaczmarz_update requires a unit row"
    );
    let values = x
        .as_slice()
        .iter()
        .zip(row)
        .map(|(xi, ai)| xi + residual * ai)
        .collect();
    StateVector { x: values }
}

/// Writes a system in the plain-text fixture format.
pub fn write_fixture(system: &DenseSystem, w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "{} {}", system.m(), system.n())?;
    for row in system.rows() {
        let line: Vec<String> = row.iter().map(|&v| fmt17(v)).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    let line: Vec<String> = system.rhs().iter().map(|&v| fmt17(v)).collect();
    writeln!(w, "{}", line.join(" "))?;
    Ok(())
}

/// Reads a system from the plain-text fixture format.
pub fn read_fixture(r: &mut impl BufRead) -> Result<DenseSystem, LinalgError> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| LinalgError::Parse("empty fixture".into()))??;
    let mut dims = header.split_whitespace();
    let m: usize = dims
        .next()
        .ok_or_else(|| LinalgError::Parse("missing m".into()))?
        .parse()
        .map_err(|e| LinalgError::Parse(format!("bad m: {e}")))?;
    let n: usize = dims
        .next()
        .ok_or_else(|| LinalgError::Parse("missing n".into()))?
        .parse()
        .map_err(|e| LinalgError::Parse(format!("bad n: {e}")))?;

    let parse_line = |line: &str, expected: usize, what: &str| -> Result<Vec<f64>, LinalgError> {
        let values: Result<Vec<f64>, _> = line
            .split_whitespace()
            .map(|tok| tok.parse::<f64>())
            .collect();
        let values = values.map_err(|e| LinalgError::Parse(format!("bad float in {what}: {e}")))?;
        if values.len() != expected {
            return Err(LinalgError::Parse(format!(
                "{what} has {} values, expected {expected}",
                values.len()
            )));
        }
        Ok(values)
    };

    let mut a = Vec::with_capacity(m * n);
    for i in 0..m {
        let line = lines
            .next()
            .ok_or_else(|| LinalgError::Parse(format!("missing row {}", i + 1)))??;
        a.extend(parse_line(&line, n, &format!("row {}", i + 1))?);
    }
    let b_line = lines
        .next()
        .ok_or_else(|| LinalgError::Parse("missing right-hand side line".into()))??;
    let b = parse_line(&b_line, m, "right-hand side")?;
    DenseSystem::new(m, n, a, b)
}
