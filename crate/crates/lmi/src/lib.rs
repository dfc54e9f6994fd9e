//! Small dense semidefinite feasibility solver.
//!
//! Problems are stated as collections of affine matrix inequalities over
//! scalar, symmetric and rectangular decision variables. Strict inequalities
//! are encoded with an explicit margin, the feasibility question is lifted to
//! "maximize a common slack `t`", and the resulting primal–dual pair is solved
//! with an infeasible-start interior-point method (HKM direction, Mehrotra
//! predictor–corrector). Every `Feasible` answer is re-checked by
//! [`verify_assignment`] before it is reported.

mod error;
mod problem;
mod solver;
mod verify;

pub use error::LmiError;
pub use problem::{
    AffineMatrixExpr, Assignment, Constraint, ConstraintSummary, LmiProblem, ProblemSummary, Sign,
    Var, VarId, VarInfo, VarKind, DEFAULT_STRICT_MARGIN,
};
pub use solver::{solve, SlackMode, SolveOutcome, SolverDiagnostics, SolverSettings};
pub use verify::{verify_assignment, ConstraintMargin, MarginReport, DEFAULT_VERIFY_TOL};
