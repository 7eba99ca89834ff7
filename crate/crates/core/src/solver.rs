//! Positive and negative reputation by power iteration.
//!
//! Both vectors follow the damped weighted-PageRank update
//!
//! ```text
//! x <- d * A * x + (1 - d) / N
//! ```
//!
//! over their own transition matrix, in lockstep, until the combined step
//! `‖Δpos‖₂ + ‖Δneg‖₂` drops below `tol`. Overall reputation is
//! `max(0, pos - neg)` per user.
//!
//! The iteration is sequential and every sum has a fixed order (rows in
//! index order, columns ascending within a row), so results are bit-identical
//! across runs and machines.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sparse::CsrMatrix;
use crate::trust::TrustWeights;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid reputation parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no convergence after {} iterations (residual {})", .best.iterations, .best.final_residual)]
    NotConverged { best: Box<ReputationVector> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReputationParams {
    /// Damping factor `d`.
    pub damping: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Weight of reputation in trust aggregation.
    pub w1: f64,
    /// Weight of experience in trust aggregation.
    pub w2: f64,
}

impl Default for ReputationParams {
    fn default() -> Self {
        Self {
            damping: 0.85,
            tol: 1e-5,
            max_iters: 1000,
            w1: 0.5,
            w2: 0.5,
        }
    }
}

impl ReputationParams {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(SolverError::InvalidParams(format!(
                "damping must lie in (0, 1), got {}",
                self.damping
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(SolverError::InvalidParams(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(SolverError::InvalidParams("max_iters must be >= 1".into()));
        }
        self.weights()
            .map_err(|e| SolverError::InvalidParams(e.to_string()))?;
        Ok(())
    }

    pub fn weights(&self) -> Result<TrustWeights, crate::trust::TrustError> {
        TrustWeights::new(self.w1, self.w2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReputationVector {
    pub rep_pos: Vec<f64>,
    pub rep_neg: Vec<f64>,
    pub rep: Vec<f64>,
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
}

impl ReputationVector {
    /// Combines positive and negative parts into overall reputation.
    pub fn from_parts(rep_pos: Vec<f64>, rep_neg: Vec<f64>) -> Self {
        assert_eq!(rep_pos.len(), rep_neg.len());
        let rep = overall(&rep_pos, &rep_neg);
        Self {
            rep_pos,
            rep_neg,
            rep,
            iterations: 0,
            final_residual: f64::NAN,
            converged: false,
        }
    }

    /// Every user at `1/n` on both sides.
    pub fn uniform(n: usize) -> Self {
        let v = if n == 0 { 0.0 } else { 1.0 / n as f64 };
        Self::from_parts(vec![v; n], vec![v; n])
    }

    pub fn len(&self) -> usize {
        self.rep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rep.is_empty()
    }
}

fn overall(pos: &[f64], neg: &[f64]) -> Vec<f64> {
    pos.iter().zip(neg).map(|(p, n)| (p - n).max(0.0)).collect()
}

fn check_dims(a_pos: &CsrMatrix, a_neg: &CsrMatrix) -> Result<usize, SolverError> {
    let n = a_pos.dim();
    if a_neg.dim() != n {
        return Err(SolverError::DimensionMismatch(format!(
            "a_pos is {n}x{n} but a_neg is {m}x{m}",
            m = a_neg.dim()
        )));
    }
    Ok(n)
}

pub fn solve(
    a_pos: &CsrMatrix,
    a_neg: &CsrMatrix,
    params: &ReputationParams,
    init: Option<&ReputationVector>,
) -> Result<ReputationVector, SolverError> {
    solve_observed(a_pos, a_neg, params, init, |_, _| {})
}

/// Like [`solve`], calling `observe(iteration, err)` after every iteration.
pub fn solve_observed<F>(
    a_pos: &CsrMatrix,
    a_neg: &CsrMatrix,
    params: &ReputationParams,
    init: Option<&ReputationVector>,
    mut observe: F,
) -> Result<ReputationVector, SolverError>
where
    F: FnMut(usize, f64),
{
    params.validate()?;
    let n = check_dims(a_pos, a_neg)?;
    let (mut pos, mut neg) = match init {
        Some(v) => {
            if v.rep_pos.len() != n || v.rep_neg.len() != n {
                return Err(SolverError::DimensionMismatch(format!(
                    "initial vector has {} entries, system has {n}",
                    v.rep_pos.len()
                )));
            }
            (v.rep_pos.clone(), v.rep_neg.clone())
        }
        None => {
            let u = ReputationVector::uniform(n);
            (u.rep_pos, u.rep_neg)
        }
    };
    if n == 0 {
        let mut v = ReputationVector::from_parts(pos, neg);
        v.final_residual = 0.0;
        v.converged = true;
        return Ok(v);
    }

    let d = params.damping;
    let teleport = (1.0 - d) / n as f64;
    let mut next_pos = vec![0.0; n];
    let mut next_neg = vec![0.0; n];
    let mut err = f64::INFINITY;
    let mut iterations = 0;
    while iterations < params.max_iters {
        a_pos.mul_vec_into(&pos, &mut next_pos);
        a_neg.mul_vec_into(&neg, &mut next_neg);
        let mut dp = 0.0;
        let mut dn = 0.0;
        for k in 0..n {
            next_pos[k] = d * next_pos[k] + teleport;
            next_neg[k] = d * next_neg[k] + teleport;
            dp += (next_pos[k] - pos[k]).powi(2);
            dn += (next_neg[k] - neg[k]).powi(2);
        }
        err = dp.sqrt() + dn.sqrt();
        std::mem::swap(&mut pos, &mut next_pos);
        std::mem::swap(&mut neg, &mut next_neg);
        iterations += 1;
        observe(iterations, err);
        if err < params.tol {
            break;
        }
    }

    let mut v = ReputationVector::from_parts(pos, neg);
    v.iterations = iterations;
    v.final_residual = err;
    v.converged = err < params.tol;
    if v.converged {
        Ok(v)
    } else {
        Err(SolverError::NotConverged { best: Box::new(v) })
    }
}

/// Distance of `vec` from the fixed point: the norm of one update step on
/// each side, summed.
pub fn residual(
    a_pos: &CsrMatrix,
    a_neg: &CsrMatrix,
    vec: &ReputationVector,
    params: &ReputationParams,
) -> Result<f64, SolverError> {
    let n = check_dims(a_pos, a_neg)?;
    if vec.rep_pos.len() != n || vec.rep_neg.len() != n {
        return Err(SolverError::DimensionMismatch(format!(
            "vector has {} entries, system has {n}",
            vec.rep_pos.len()
        )));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let d = params.damping;
    let teleport = (1.0 - d) / n as f64;
    let side = |a: &CsrMatrix, x: &[f64]| {
        let ax = a.mul_vec(x);
        x.iter()
            .zip(&ax)
            .map(|(xi, axi)| (xi - (d * axi + teleport)).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    Ok(side(a_pos, &vec.rep_pos) + side(a_neg, &vec.rep_neg))
}

/// Users ordered by descending overall reputation; ties keep index order.
pub fn rank(vec: &ReputationVector) -> Vec<(usize, f64)> {
    let mut order: Vec<(usize, f64)> = vec.rep.iter().copied().enumerate().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    order
}
