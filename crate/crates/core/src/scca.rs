//! Sparse canonical correlation analysis by alternating L1-penalized
//! regressions (modified NIPALS) under the diagonal covariance assumption.
//!
//! Given column-standardized `X` (n×q1) and `Y` (n×q2) the solver maximizes
//! `aᵀYᵀXb` over `‖a‖ ≤ 1`, `‖b‖ ≤ 1` with L1 penalties, alternating
//!
//! ```text
//! a ← P(S(g·YᵀXb, λ2)),   b ← P(S(g·XᵀYa, λ1))
//! ```
//!
//! where `S` is elementwise soft-thresholding, `P` rescales onto the unit
//! ball only when the norm exceeds one, and `g = n - 1`. The gain puts the
//! penalties on the cross-product scale of unit-variance columns, which is
//! the scale the usual penalty grids (9..27 for 30 experiments) refer to.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyPair {
    /// Penalty on `b`, the weights of the `X` side.
    pub lambda1: f64,
    /// Penalty on `a`, the weights of the `Y` side.
    pub lambda2: f64,
}

impl PenaltyPair {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        let p = Self { lambda1, lambda2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda1.is_finite() && self.lambda2.is_finite() && self.lambda1 >= 0.0 && self.lambda2 >= 0.0
        {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "penalties must be finite and nonnegative, got ({}, {})",
                self.lambda1, self.lambda2
            )))
        }
    }

    /// Every pair on the square grid `values × values`, λ1 major.
    pub fn square_grid(values: &[f64]) -> Vec<PenaltyPair> {
        values
            .iter()
            .flat_map(|&l1| values.iter().map(move |&l2| PenaltyPair { lambda1: l1, lambda2: l2 }))
            .collect()
    }
}

impl std::fmt::Display for PenaltyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.lambda1, self.lambda2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SccaSolution {
    /// Weights on the columns of `Y`.
    pub a: Vec<f64>,
    /// Weights on the columns of `X`.
    pub b: Vec<f64>,
    /// `aᵀYᵀXb` for the standardized inputs.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each full `(a, b)` update.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

impl SccaSolution {
    pub fn is_zero(&self) -> bool {
        self.a.iter().chain(&self.b).all(|&v| v == 0.0)
    }
}

#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn shrink_and_project(v: &mut [f64], t: f64) {
    let mut sq = 0.0;
    for x in v.iter_mut() {
        *x = soft_threshold(*x, t);
        sq += *x * *x;
    }
    let norm = sq.sqrt();
    if norm > 1.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

fn check_options(opts: &SolverOptions) -> Result<()> {
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidParameter(format!(
            "solver needs tol > 0 and max_iter >= 1, got tol={} max_iter={}",
            opts.tol, opts.max_iter
        )));
    }
    Ok(())
}

/// Solves the penalized problem for standardized `x` (n×q1) and `y` (n×q2).
///
/// `_seed` is accepted for interface stability; initialization is
/// deterministic (column of `X` with the largest `‖Yᵀx_j‖`, lowest index on
/// ties), so no randomness is consumed.
pub fn scca_solve(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    penalties: PenaltyPair,
    opts: &SolverOptions,
    _seed: u64,
) -> Result<SccaSolution> {
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension(format!(
            "X has {} rows, Y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() < 2 || x.ncols() == 0 || y.ncols() == 0 {
        return Err(Error::Dimension("SCCA needs n >= 2 and nonempty sides".into()));
    }
    penalties.validate()?;
    check_options(opts)?;
    let cross = y.transpose() * x;
    Ok(solve_cross(&cross, x.nrows(), penalties, opts))
}

/// Core iteration on the precomputed cross product `YᵀX` (q2×q1).
pub fn solve_cross(cross: &DMatrix<f64>, n: usize, penalties: PenaltyPair, opts: &SolverOptions) -> SccaSolution {
    let (q2, q1) = cross.shape();
    let gain = (n - 1) as f64;

    let mut b = vec![0.0; q1];
    let mut best = (f64::NEG_INFINITY, 0);
    for (j, col) in cross.column_iter().enumerate() {
        let sq = col.norm_squared();
        if sq > best.0 {
            best = (sq, j);
        }
    }
    b[best.1] = 1.0;
    let mut a = vec![0.0; q2];

    let mut u = vec![0.0; q2];
    let mut v = vec![0.0; q1];
    let mut raw = vec![0.0; q1];
    // column-major slices of M and Mᵀ so both half-steps are contiguous axpys
    let m = cross.as_slice();
    let mt_owned = cross.transpose();
    let mt = mt_owned.as_slice();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;

        // u = g·M b over the support of b
        u.iter_mut().for_each(|x| *x = 0.0);
        for (j, &bj) in b.iter().enumerate() {
            if bj != 0.0 {
                axpy(&mut u, gain * bj, &m[j * q2..(j + 1) * q2]);
            }
        }
        shrink_and_project(&mut u, penalties.lambda2);

        // v = g·Mᵀ a over the support of the new a
        v.iter_mut().for_each(|x| *x = 0.0);
        for (i, &ai) in u.iter().enumerate() {
            if ai != 0.0 {
                axpy(&mut v, ai, &mt[i * q1..(i + 1) * q1]);
            }
        }
        // aᵀ M b for the new pair, from Mᵀa before it is scaled and shrunk
        raw.copy_from_slice(&v);
        v.iter_mut().for_each(|x| *x *= gain);
        shrink_and_project(&mut v, penalties.lambda1);
        let objective: f64 = raw.iter().zip(&v).map(|(r, w)| r * w).sum();

        let delta = max_abs_diff(&u, &a).max(max_abs_diff(&v, &b));
        std::mem::swap(&mut a, &mut u);
        std::mem::swap(&mut b, &mut v);

        trace.push(objective);
        if delta < opts.tol {
            converged = true;
            break;
        }
    }

    // canonical sign: largest-magnitude entry of b is positive
    let lead = b
        .iter()
        .copied()
        .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
    if lead < 0.0 {
        a.iter_mut().for_each(|x| *x = -*x);
        b.iter_mut().for_each(|x| *x = -*x);
    }

    let objective = trace.last().copied().unwrap_or(0.0).max(0.0);
    SccaSolution {
        a,
        b,
        objective,
        iterations,
        converged,
        objective_trace: trace,
    }
}

#[inline]
fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// `aᵀ M b`, skipping zero weights.
pub fn bilinear(cross: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    let mut total = 0.0;
    for (j, &bj) in b.iter().enumerate() {
        if bj != 0.0 {
            let col = cross.column(j);
            total += bj * a.iter().zip(col.iter()).map(|(ai, m)| ai * m).sum::<f64>();
        }
    }
    total
}
