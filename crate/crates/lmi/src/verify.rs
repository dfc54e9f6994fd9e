//! Independent numerical re-check of a candidate assignment.

use serde::{Deserialize, Serialize};

use crate::problem::{spectral_norm_sym, Assignment, LmiProblem};

/// Relative tolerance used when no other is requested.
pub const DEFAULT_VERIFY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintMargin {
    pub name: String,
    pub size: usize,
    pub strict: bool,
    /// Minimum eigenvalue of the evaluated constraint matrix.
    pub min_eig: f64,
    /// Encoded margin (zero for non-strict constraints).
    pub margin: f64,
    /// Threshold `min_eig` had to reach.
    pub required: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub tol: f64,
    pub passed: bool,
    pub constraints: Vec<ConstraintMargin>,
}

impl MarginReport {
    /// Constraint with the smallest `min_eig - required`.
    pub fn worst(&self) -> Option<&ConstraintMargin> {
        self.constraints
            .iter()
            .min_by(|a, b| (a.min_eig - a.required).total_cmp(&(b.min_eig - b.required)))
    }
}

/// Evaluates every constraint at `assignment` and checks its minimum
/// eigenvalue. Non-strict constraints need `λ_min ≥ −tol·(1+‖M‖)`; strict ones
/// need `λ_min ≥ max(margin − tol·(1+‖M‖), margin/2)`.
pub fn verify_assignment(problem: &LmiProblem, assignment: &Assignment, tol: f64) -> MarginReport {
    let values = assignment.values();
    let constraints: Vec<ConstraintMargin> = problem
        .constraints()
        .iter()
        .map(|c| {
            let m = c.expr.value(values);
            let sym = 0.5 * (&m + m.transpose());
            let min_eig = sym
                .clone()
                .symmetric_eigenvalues()
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            let scale = 1.0 + spectral_norm_sym(&sym);
            let required = if c.strict {
                (c.margin - tol * scale).max(0.5 * c.margin)
            } else {
                -tol * scale
            };
            ConstraintMargin {
                name: c.name.clone(),
                size: c.expr.size(),
                strict: c.strict,
                min_eig,
                margin: c.margin,
                required,
                passed: min_eig.is_finite() && min_eig >= required,
            }
        })
        .collect();
    MarginReport {
        tol,
        passed: constraints.iter().all(|c| c.passed),
        constraints,
    }
}
