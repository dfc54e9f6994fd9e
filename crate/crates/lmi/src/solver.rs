//! Max-slack lifting and an infeasible-start primal–dual interior-point method.
//!
//! The user's unknowns `y` (plus the slack `t`) are the dual variables of the
//! standard pair
//!
//! ```text
//!   min ⟨C, X⟩  s.t.  𝒜(X) = b, X ⪰ 0        max bᵀy  s.t.  𝒜ᵀ(y) + Z = C, Z ⪰ 0
//! ```
//!
//! where each constraint `expr ⪰ m·I (+ t·I)` contributes one block of `C` and
//! `𝒜`. Scalar constraints and the box `|y_i| ≤ R` form a diagonal block.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::LmiError;
use crate::problem::{Assignment, LmiProblem};
use crate::verify::{verify_assignment, MarginReport, DEFAULT_VERIFY_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Relative duality gap at which the iteration stops.
    pub gap_tol: f64,
    /// Relative primal/dual residual at which the iteration stops.
    pub feasibility_tol: f64,
    /// Box `|y_i| ≤ R` on every unknown; keeps the lifted problem bounded.
    pub variable_bound: f64,
    /// Relative tolerance of the post-solve eigenvalue check.
    pub verify_tol: f64,
    /// The optimal slack must be below `-infeasibility_tol` to report
    /// `Infeasible`.
    pub infeasibility_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gap_tol: 1e-9,
            feasibility_tol: 1e-9,
            variable_bound: 1e4,
            verify_tol: DEFAULT_VERIFY_TOL,
            infeasibility_tol: 1e-9,
        }
    }
}

/// Which constraints receive the slack `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlackMode {
    /// No constraints: nothing to solve.
    None,
    /// Only strict constraints are relaxed; non-strict ones stay hard.
    StrictOnly,
    /// No strict constraint exists, so every constraint is relaxed.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub relative_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    /// Slack value at the returned iterate.
    pub slack: f64,
    pub slack_mode: SlackMode,
    /// Some unknown sits near the box `|y_i| ≤ R`.
    pub bound_active: bool,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum SolveOutcome {
    Feasible {
        assignment: Assignment,
        margins: MarginReport,
        diagnostics: SolverDiagnostics,
    },
    Infeasible {
        reason: String,
        diagnostics: SolverDiagnostics,
    },
    Inconclusive {
        reason: String,
        diagnostics: SolverDiagnostics,
    },
}

impl SolveOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, SolveOutcome::Feasible { .. })
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, SolveOutcome::Infeasible { .. })
    }

    pub fn status(&self) -> &'static str {
        match self {
            SolveOutcome::Feasible { .. } => "Feasible",
            SolveOutcome::Infeasible { .. } => "Infeasible",
            SolveOutcome::Inconclusive { .. } => "Inconclusive",
        }
    }

    pub fn assignment(&self) -> Option<&Assignment> {
        match self {
            SolveOutcome::Feasible { assignment, .. } => Some(assignment),
            _ => None,
        }
    }

    pub fn diagnostics(&self) -> &SolverDiagnostics {
        match self {
            SolveOutcome::Feasible { diagnostics, .. }
            | SolveOutcome::Infeasible { diagnostics, .. }
            | SolveOutcome::Inconclusive { diagnostics, .. } => diagnostics,
        }
    }
}

struct DenseBlock {
    c: DMatrix<f64>,
    a: Vec<(usize, DMatrix<f64>)>,
}

struct LpRow {
    c: f64,
    a: Vec<(usize, f64)>,
}

/// Lifted problem in standard form.
struct Sdp {
    m: usize,
    b: DVector<f64>,
    dense: Vec<DenseBlock>,
    lp: Vec<LpRow>,
}

#[derive(Clone)]
struct Point {
    x: Vec<DMatrix<f64>>,
    z: Vec<DMatrix<f64>>,
    xl: DVector<f64>,
    zl: DVector<f64>,
    y: DVector<f64>,
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    dz: Vec<DMatrix<f64>>,
    dxl: DVector<f64>,
    dzl: DVector<f64>,
    dy: DVector<f64>,
}

impl Sdp {
    fn lift(problem: &LmiProblem, mode: SlackMode, bound: f64) -> Self {
        let n = problem.n_unknowns();
        let t = n;
        let m = n + 1;
        let mut b = DVector::zeros(m);
        b[t] = 1.0;
        let mut dense = Vec::new();
        let mut lp = Vec::new();
        for c in problem.constraints() {
            let size = c.expr.size();
            let slack = match mode {
                SlackMode::All => true,
                SlackMode::StrictOnly => c.strict,
                SlackMode::None => false,
            };
            // S = C − m·I + Σ y_k A_k − t·I  =  Ĉ − Σ ŷ_k Â_k
            let mut chat = c.expr.constant().clone();
            for i in 0..size {
                chat[(i, i)] -= c.margin;
            }
            if size == 1 {
                let mut a: Vec<(usize, f64)> = c
                    .expr
                    .terms()
                    .iter()
                    .filter(|(_, v)| v[(0, 0)] != 0.0)
                    .map(|(&k, v)| (k, -v[(0, 0)]))
                    .collect();
                if slack {
                    a.push((t, 1.0));
                }
                lp.push(LpRow { c: chat[(0, 0)], a });
            } else {
                let mut a: Vec<(usize, DMatrix<f64>)> = c
                    .expr
                    .terms()
                    .iter()
                    .filter(|(_, v)| v.iter().any(|x| *x != 0.0))
                    .map(|(&k, v)| (k, -v))
                    .collect();
                if slack {
                    a.push((t, DMatrix::identity(size, size)));
                }
                dense.push(DenseBlock { c: chat, a });
            }
        }
        for k in 0..m {
            lp.push(LpRow { c: bound, a: vec![(k, 1.0)] });
            lp.push(LpRow { c: bound, a: vec![(k, -1.0)] });
        }
        Sdp { m, b, dense, lp }
    }

    fn n_total(&self) -> usize {
        self.dense.iter().map(|d| d.c.nrows()).sum::<usize>() + self.lp.len()
    }

    fn a_op(&self, xd: &[DMatrix<f64>], xl: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.m);
        for (blk, x) in self.dense.iter().zip(xd) {
            for (i, a) in &blk.a {
                out[*i] += a.dot(x);
            }
        }
        for (row, x) in self.lp.iter().zip(xl.iter()) {
            for (i, a) in &row.a {
                out[*i] += a * x;
            }
        }
        out
    }

    fn at_op(&self, y: &DVector<f64>) -> (Vec<DMatrix<f64>>, DVector<f64>) {
        let dense = self
            .dense
            .iter()
            .map(|blk| {
                let n = blk.c.nrows();
                let mut s = DMatrix::zeros(n, n);
                for (i, a) in &blk.a {
                    if y[*i] != 0.0 {
                        s += a * y[*i];
                    }
                }
                s
            })
            .collect();
        let lp = DVector::from_iterator(
            self.lp.len(),
            self.lp.iter().map(|r| r.a.iter().map(|(i, a)| a * y[*i]).sum::<f64>()),
        );
        (dense, lp)
    }

    fn initial_point(&self) -> Point {
        let mut x = Vec::new();
        let mut z = Vec::new();
        for blk in &self.dense {
            let n = blk.c.nrows();
            let sn = (n as f64).sqrt();
            let mut xi: f64 = 10.0_f64.max(sn);
            let mut eta: f64 = 10.0_f64.max(sn).max(blk.c.norm());
            for (i, a) in &blk.a {
                let na = a.norm();
                xi = xi.max(sn * (1.0 + self.b[*i].abs()) / (1.0 + na));
                eta = eta.max(na);
            }
            x.push(DMatrix::identity(n, n) * xi);
            z.push(DMatrix::identity(n, n) * eta);
        }
        let xl = DVector::from_iterator(
            self.lp.len(),
            self.lp.iter().map(|r| {
                r.a.iter()
                    .fold(10.0_f64, |acc, (i, a)| acc.max((1.0 + self.b[*i].abs()) / (1.0 + a.abs())))
            }),
        );
        let zl = DVector::from_iterator(
            self.lp.len(),
            self.lp
                .iter()
                .map(|r| r.a.iter().fold(10.0_f64.max(r.c.abs()), |acc, (_, a)| acc.max(a.abs()))),
        );
        Point {
            x,
            z,
            xl,
            zl,
            y: DVector::zeros(self.m),
        }
    }

    fn schur(&self, pt: &Point, zinv: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut mat = DMatrix::zeros(self.m, self.m);
        for ((blk, x), zi) in self.dense.iter().zip(&pt.x).zip(zinv) {
            let g: Vec<DMatrix<f64>> = blk.a.iter().map(|(_, a)| x * a * zi).collect();
            for (p, (i, _)) in blk.a.iter().enumerate() {
                for (j, aj) in &blk.a {
                    mat[(*i, *j)] += aj.dot(&g[p]);
                }
            }
        }
        for (k, row) in self.lp.iter().enumerate() {
            let w = pt.xl[k] / pt.zl[k];
            for (i, ai) in &row.a {
                for (j, aj) in &row.a {
                    mat[(*i, *j)] += w * ai * aj;
                }
            }
        }
        0.5 * (&mat + mat.transpose())
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        pt: &Point,
        zinv: &[DMatrix<f64>],
        solver: &SchurSolver,
        rp: &DVector<f64>,
        rd: &[DMatrix<f64>],
        rdl: &DVector<f64>,
        target: f64,
        corr: Option<&Direction>,
    ) -> Option<Direction> {
        // dX = R + X·𝒜ᵀ(dy)·Z⁻¹ with R = target·Z⁻¹ − X − X·Rd·Z⁻¹ − corr
        let mut r: Vec<DMatrix<f64>> = Vec::with_capacity(self.dense.len());
        for (b, (x, zi)) in pt.x.iter().zip(zinv).enumerate() {
            let mut rb = zi * target - x - x * &rd[b] * zi;
            if let Some(c) = corr {
                rb -= &c.dx[b] * &c.dz[b] * zi;
            }
            r.push(rb);
        }
        let mut rl = DVector::zeros(self.lp.len());
        for k in 0..self.lp.len() {
            let (x, z) = (pt.xl[k], pt.zl[k]);
            let mut v = target / z - x - x * rdl[k] / z;
            if let Some(c) = corr {
                v -= c.dxl[k] * c.dzl[k] / z;
            }
            rl[k] = v;
        }
        let rhs = rp - self.a_op(&r, &rl);
        let dy = solver.solve(&rhs)?;
        let (atd, atl) = self.at_op(&dy);
        let mut dx = Vec::with_capacity(self.dense.len());
        let mut dz = Vec::with_capacity(self.dense.len());
        for b in 0..self.dense.len() {
            let full = &r[b] + &pt.x[b] * &atd[b] * &zinv[b];
            dx.push(0.5 * (&full + full.transpose()));
            dz.push(&rd[b] - &atd[b]);
        }
        let dzl = rdl - &atl;
        let dxl = DVector::from_iterator(
            self.lp.len(),
            (0..self.lp.len()).map(|k| rl[k] + pt.xl[k] * atl[k] / pt.zl[k]),
        );
        if dy.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(Direction { dx, dz, dxl, dzl, dy })
    }
}

enum SchurSolver {
    Chol(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl SchurSolver {
    fn new(m: DMatrix<f64>) -> Option<Self> {
        if let Some(c) = m.clone().cholesky() {
            return Some(SchurSolver::Chol(c));
        }
        let lu = m.lu();
        if lu.is_invertible() {
            Some(SchurSolver::Lu(lu))
        } else {
            None
        }
    }

    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            SchurSolver::Chol(c) => Some(c.solve(rhs)),
            SchurSolver::Lu(l) => l.solve(rhs),
        }
    }
}

/// Largest `a` with `X + a·dX ⪰ 0` (∞ if unbounded).
fn max_step_dense(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> Option<f64> {
    let chol = x.clone().cholesky()?;
    let l = chol.l();
    let left = l.solve_lower_triangular(dx)?;
    let both = l.solve_lower_triangular(&left.transpose())?;
    let sym = 0.5 * (&both + both.transpose());
    let lmin = sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    Some(if lmin >= 0.0 { f64::INFINITY } else { -1.0 / lmin })
}

fn max_step_lp(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

fn step_length(xs: &[DMatrix<f64>], dxs: &[DMatrix<f64>], xl: &DVector<f64>, dxl: &DVector<f64>) -> Option<f64> {
    let mut a = max_step_lp(xl, dxl);
    for (x, dx) in xs.iter().zip(dxs) {
        a = a.min(max_step_dense(x, dx)?);
    }
    Some(a)
}

fn inverse_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let inv = m.clone().cholesky()?.inverse();
    Some(0.5 * (&inv + inv.transpose()))
}

fn complementarity(x: &[DMatrix<f64>], z: &[DMatrix<f64>], xl: &DVector<f64>, zl: &DVector<f64>) -> f64 {
    x.iter().zip(z).map(|(a, b)| a.dot(b)).sum::<f64>() + xl.dot(zl)
}

/// Solves the max-slack lifting of `problem`. `Feasible` is returned only if
/// the extracted assignment passes [`verify_assignment`].
pub fn solve(problem: &LmiProblem, settings: &SolverSettings) -> Result<SolveOutcome, LmiError> {
    problem.validate()?;
    if !(settings.variable_bound > 0.0 && settings.verify_tol >= 0.0 && settings.max_iterations > 0) {
        return Err(LmiError::Settings(
            "variable_bound and max_iterations must be positive, verify_tol non-negative".into(),
        ));
    }
    let n = problem.n_unknowns();
    let mode = if problem.constraints().is_empty() {
        SlackMode::None
    } else if problem.constraints().iter().any(|c| c.strict) {
        SlackMode::StrictOnly
    } else {
        SlackMode::All
    };
    if mode == SlackMode::None {
        let assignment = Assignment::zeros(n);
        let margins = verify_assignment(problem, &assignment, settings.verify_tol);
        return Ok(SolveOutcome::Feasible {
            assignment,
            margins,
            diagnostics: SolverDiagnostics {
                iterations: 0,
                converged: true,
                primal_objective: 0.0,
                dual_objective: 0.0,
                relative_gap: 0.0,
                primal_infeasibility: 0.0,
                dual_infeasibility: 0.0,
                slack: 0.0,
                slack_mode: mode,
                bound_active: false,
                message: "no constraints".into(),
            },
        });
    }

    let sdp = Sdp::lift(problem, mode, settings.variable_bound);
    let n_total = sdp.n_total() as f64;
    let c_norms: Vec<f64> = sdp.dense.iter().map(|b| b.c.norm()).collect();
    let cl_norm = DVector::from_iterator(sdp.lp.len(), sdp.lp.iter().map(|r| r.c)).norm();
    let b_norm = sdp.b.norm();

    let mut pt = sdp.initial_point();
    let mut iterations = 0;
    let mut converged = false;
    let mut message = String::from("iteration limit reached");
    let (mut pobj, mut dobj, mut relgap, mut pinf, mut dinf);
    let mut stalls = 0;
    loop {
        let ax = sdp.a_op(&pt.x, &pt.xl);
        let rp = &sdp.b - ax;
        let (atd, atl) = sdp.at_op(&pt.y);
        let rd: Vec<DMatrix<f64>> = sdp
            .dense
            .iter()
            .enumerate()
            .map(|(b, blk)| &blk.c - &pt.z[b] - &atd[b])
            .collect();
        let rdl = DVector::from_iterator(
            sdp.lp.len(),
            sdp.lp.iter().enumerate().map(|(k, r)| r.c - pt.zl[k] - atl[k]),
        );
        pobj = sdp.dense.iter().zip(&pt.x).map(|(b, x)| b.c.dot(x)).sum::<f64>()
            + sdp.lp.iter().zip(pt.xl.iter()).map(|(r, x)| r.c * x).sum::<f64>();
        dobj = sdp.b.dot(&pt.y);
        relgap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        pinf = rp.norm() / (1.0 + b_norm);
        dinf = rd
            .iter()
            .zip(&c_norms)
            .map(|(r, c)| r.norm() / (1.0 + c))
            .fold(rdl.norm() / (1.0 + cl_norm), f64::max);
        if relgap < settings.gap_tol && pinf < settings.feasibility_tol && dinf < settings.feasibility_tol {
            converged = true;
            message = "converged".into();
            break;
        }
        if iterations >= settings.max_iterations {
            break;
        }
        if ![pobj, dobj, pinf, dinf].iter().all(|v| v.is_finite()) {
            message = "numerical breakdown: non-finite iterate".into();
            break;
        }
        let Some(zinv) = pt.z.iter().map(inverse_spd).collect::<Option<Vec<_>>>() else {
            message = "numerical breakdown: dual slack lost definiteness".into();
            break;
        };
        let Some(schur) = SchurSolver::new(sdp.schur(&pt, &zinv)) else {
            message = "numerical breakdown: singular Schur complement".into();
            break;
        };
        let mu = complementarity(&pt.x, &pt.z, &pt.xl, &pt.zl) / n_total;

        let Some(pred) = sdp.direction(&pt, &zinv, &schur, &rp, &rd, &rdl, 0.0, None) else {
            message = "numerical breakdown: predictor".into();
            break;
        };
        let (Some(ap), Some(ad)) = (
            step_length(&pt.x, &pred.dx, &pt.xl, &pred.dxl),
            step_length(&pt.z, &pred.dz, &pt.zl, &pred.dzl),
        ) else {
            message = "numerical breakdown: iterate lost definiteness".into();
            break;
        };
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let xa: Vec<DMatrix<f64>> = pt.x.iter().zip(&pred.dx).map(|(x, d)| x + d * ap).collect();
        let za: Vec<DMatrix<f64>> = pt.z.iter().zip(&pred.dz).map(|(z, d)| z + d * ad).collect();
        let mu_aff = complementarity(&xa, &za, &(&pt.xl + &pred.dxl * ap), &(&pt.zl + &pred.dzl * ad)) / n_total;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        let Some(dir) = sdp.direction(&pt, &zinv, &schur, &rp, &rd, &rdl, sigma * mu, Some(&pred)) else {
            message = "numerical breakdown: corrector".into();
            break;
        };
        let gamma = 0.9 + 0.09 * ap.min(ad);
        let (Some(sp), Some(sd)) = (
            step_length(&pt.x, &dir.dx, &pt.xl, &dir.dxl),
            step_length(&pt.z, &dir.dz, &pt.zl, &dir.dzl),
        ) else {
            message = "numerical breakdown: iterate lost definiteness".into();
            break;
        };
        let (sp, sd) = ((gamma * sp).min(1.0), (gamma * sd).min(1.0));
        for b in 0..pt.x.len() {
            pt.x[b] += &dir.dx[b] * sp;
            pt.z[b] += &dir.dz[b] * sd;
            let (x, z) = (&pt.x[b], &pt.z[b]);
            pt.x[b] = 0.5 * (x + x.transpose());
            pt.z[b] = 0.5 * (z + z.transpose());
        }
        pt.xl += &dir.dxl * sp;
        pt.zl += &dir.dzl * sd;
        pt.y += &dir.dy * sd;
        iterations += 1;
        if sp.max(sd) < 1e-10 {
            stalls += 1;
            if stalls >= 3 {
                message = "stalled: step lengths vanished".into();
                break;
            }
        } else {
            stalls = 0;
        }
    }

    let slack = pt.y[n];
    let bound_active = pt.y.iter().any(|v| v.abs() > 0.9 * settings.variable_bound);
    let diagnostics = SolverDiagnostics {
        iterations,
        converged,
        primal_objective: pobj,
        dual_objective: dobj,
        relative_gap: relgap,
        primal_infeasibility: pinf,
        dual_infeasibility: dinf,
        slack,
        slack_mode: mode,
        bound_active,
        message,
    };
    let assignment = Assignment::from_values(pt.y.iter().take(n).copied().collect());
    let margins = verify_assignment(problem, &assignment, settings.verify_tol);
    if margins.passed && pt.y.iter().all(|v| v.is_finite()) {
        return Ok(SolveOutcome::Feasible {
            assignment,
            margins,
            diagnostics,
        });
    }
    if converged && pobj < -settings.infeasibility_tol && !bound_active {
        let reason = format!(
            "optimal slack {:.3e} is negative (primal bound {:.3e}); no assignment meets the encoded margins",
            dobj, pobj
        );
        return Ok(SolveOutcome::Infeasible { reason, diagnostics });
    }
    let reason = if converged && bound_active {
        "optimum reached the variable bound; infeasibility not certified".to_string()
    } else if converged {
        format!("optimal slack {:.3e} is not separated from zero", slack)
    } else {
        diagnostics.message.clone()
    };
    Ok(SolveOutcome::Inconclusive { reason, diagnostics })
}
