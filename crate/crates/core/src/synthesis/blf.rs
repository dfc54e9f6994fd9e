//! Biquadratic-Lyapunov synthesis: one vertex LMI per polytope vertex with a
//! shared `(F, G)` and per-vertex `(α, β)`.

use std::time::Instant;

use lpvdd_lmi::{AffineMatrixExpr, LmiProblem, Sign, Var};
use nalgebra::DMatrix;

use super::{add_normalization, check_preconditions, Conditioning, Context, Method, Solution, SynthesisResult, SynthesisSettings};
use crate::consistency::{schedule_lift_qmi, ConsistencyQmi, Qmi};
use crate::data::Dims;
use crate::error::{dim_check, Error, Result};
use crate::lpv::SchedulingPolytope;

/// Variables of one vertex constraint. `g` is absent in analysis mode.
#[derive(Debug, Clone)]
pub struct BlfVariables {
    pub f: Var,
    pub g: Option<Var>,
    pub alpha: Var,
    pub beta: Var,
}

/// `[F−βI,0,0,0; 0,0,0,F; 0,0,0,G; 0,F,Gᵀ,F] − α·blkdiag(Υ_p, 0)`, of size
/// `3n_x(1+n_p) + n_u`.
pub fn assemble_blf_vertex_constraint(upsilon_p: &Qmi, vars: &BlfVariables, dims: &Dims) -> Result<AffineMatrixExpr> {
    let cond = Conditioning {
        s: DMatrix::identity(upsilon_p.r, upsilon_p.r),
        applied: false,
    };
    let (psi, _) = (upsilon_p.psi.clone(), 1.0);
    vertex_expr(upsilon_p, &psi, &cond, vars, dims)
}

/// Builds the (possibly congruence-transformed) vertex constraint; `psi` is
/// the transformed, rescaled `Υ_p` that multiplies `α`.
pub(crate) fn vertex_expr(
    upsilon_p: &Qmi,
    psi: &DMatrix<f64>,
    cond: &Conditioning,
    vars: &BlfVariables,
    dims: &Dims,
) -> Result<AffineMatrixExpr> {
    let n = dims.lifted();
    let r = dims.regressor();
    dim_check(upsilon_p.q == n && upsilon_p.r == r, || {
        format!("Υ_p has blocks ({}, {}), expected ({n}, {r})", upsilon_p.q, upsilon_p.r)
    })?;
    let size = 3 * n + dims.n_u;
    let mut e = AffineMatrixExpr::zeros(size);
    e.add_var(0, 0, None, &vars.f, None, 1.0);
    e.add_scaled(0, 0, &vars.beta, &-DMatrix::<f64>::identity(n, n));
    let mut padded = DMatrix::zeros(size, size);
    padded.view_mut((0, 0), (n + r, n + r)).copy_from(psi);
    e.add_scaled(0, 0, &vars.alpha, &-padded);
    // S·[F; G] in the off-diagonal block.
    let s_f = cond.s.columns(0, n).into_owned();
    e.add_var(n, n + r, Some(&s_f), &vars.f, None, 1.0);
    if let Some(g) = &vars.g {
        let s_g = cond.s.columns(n, dims.n_u).into_owned();
        e.add_var(n, n + r, Some(&s_g), g, None, 1.0);
    }
    e.add_var(n + r, n + r, None, &vars.f, None, 1.0);
    Ok(e)
}

fn build(
    c: &ConsistencyQmi,
    polytope: &SchedulingPolytope,
    settings: &SynthesisSettings,
    method: Method,
) -> Result<SynthesisResult> {
    let started = Instant::now();
    check_preconditions(c, polytope)?;
    let dims = c.dims;
    let n = dims.lifted();
    let mut problem = LmiProblem::new().with_strict_margin(settings.strict_margin);
    let f = problem.symmetric("F", n, true);
    let g = (method != Method::Analysis).then(|| problem.matrix("G", dims.n_u, n));
    add_normalization(&mut problem, &f, settings);
    let cond = Conditioning::new(&c.upsilon, settings.precondition);
    let mut alphas = Vec::new();
    let mut scales = Vec::new();
    let mut betas = Vec::new();
    for (i, v) in polytope.vertices().iter().enumerate() {
        let ups_p = schedule_lift_qmi(c, v)?;
        let (psi, scale) = cond.transform(&ups_p);
        let vars = BlfVariables {
            f: f.clone(),
            g: g.clone(),
            alpha: problem.scalar(&format!("alpha[{i}]"), Sign::Nonneg),
            beta: problem.scalar(&format!("beta[{i}]"), Sign::Positive),
        };
        let expr = vertex_expr(&ups_p, &psi, &cond, &vars, &dims)?;
        problem.constrain(&format!("vertex[{i}]"), expr);
        alphas.push(vars.alpha);
        betas.push(vars.beta);
        scales.push(scale);
    }
    let mut notes = Vec::new();
    if cond.applied {
        notes.push("vertex constraints solved in congruence-transformed form blkdiag(I, (−Υ₂₂)^{-1/2}, I)".into());
    }
    let ctx = Context {
        method,
        dims,
        polytope,
        settings,
        notes,
        started,
    };
    ctx.finish(&problem, |a| Solution {
        f: a.value(&f),
        g: g.as_ref().map(|g| a.value(g)),
        // α multiplies Υ_p / scale in the solved program.
        alpha: alphas.iter().zip(&scales).map(|(v, s)| a.scalar(v) / s).collect(),
        beta: betas.iter().map(|v| a.scalar(v)).collect(),
        epsilon: None,
        xi: None,
    })
}

/// Shared `(F, G)` across all vertices of `polytope`.
pub fn synthesize_blf(
    c: &ConsistencyQmi,
    polytope: &SchedulingPolytope,
    settings: &SynthesisSettings,
) -> Result<SynthesisResult> {
    build(c, polytope, settings, Method::Blf)
}

/// The same vertex program with `G = 0`: certifies open-loop stability of
/// every compatible system. Input rows of the data are kept, so for
/// `n_u = 0` this coincides with [`synthesize_blf`].
pub fn analyze_stability(
    c: &ConsistencyQmi,
    polytope: &SchedulingPolytope,
    settings: &SynthesisSettings,
) -> Result<SynthesisResult> {
    if c.dims.n_x == 0 {
        return Err(Error::InvalidArgument("empty state".into()));
    }
    build(c, polytope, settings, Method::Analysis)
}
