//! Common-Lyapunov baseline: `V(x) = xᵀF₀⁻¹x` for every compatible system and
//! scheduling value, with gain blocks `Kᵢ = GᵢF₀⁻¹`.
//!
//! At a vertex `p` the decrease condition `F₀ − A_cl(p)F₀A_cl(p)ᵀ ≻ 0`, with
//! `A_cl(p)F₀ = [𝒜 B]·N`, `N = [L_pF₀; G L_p]`, is combined with the data QMI
//! `Υ` through the S-lemma, giving
//! `[F₀−βI−αΥ₁₁, −αΥ₁₂, 0; −αΥ₂₁, −αΥ₂₂, N; 0, Nᵀ, F₀] ⪰ 0`.

use std::time::Instant;

use lpvdd_lmi::{AffineMatrixExpr, LmiProblem, Sign, Var};
use nalgebra::DMatrix;

use super::{add_normalization, check_preconditions, Conditioning, Context, Method, Solution, SynthesisResult, SynthesisSettings};
use crate::consistency::ConsistencyQmi;
use crate::data::Dims;
use crate::error::Result;
use crate::lpv::{lift_scheduling, SchedulingPoint, SchedulingPolytope};

/// The baseline vertex constraint of size `2n_x + n_x(1+n_p) + n_u`, in
/// untransformed form.
pub fn assemble_slf_vertex_constraint(
    c: &ConsistencyQmi,
    p: &SchedulingPoint,
    f0: &Var,
    g: &Var,
    alpha: &Var,
    beta: &Var,
) -> Result<AffineMatrixExpr> {
    let cond = Conditioning {
        s: DMatrix::identity(c.upsilon.r, c.upsilon.r),
        applied: false,
    };
    vertex_expr(&c.upsilon.psi, &cond, &c.dims, p, f0, g, alpha, beta)
}

#[allow(clippy::too_many_arguments)]
fn vertex_expr(
    psi: &DMatrix<f64>,
    cond: &Conditioning,
    dims: &Dims,
    p: &SchedulingPoint,
    f0: &Var,
    g: &Var,
    alpha: &Var,
    beta: &Var,
) -> Result<AffineMatrixExpr> {
    let n_x = dims.n_x;
    let n = dims.lifted();
    let r = dims.regressor();
    let size = 2 * n_x + r;
    let lp = lift_scheduling(p, n_x);
    let mut e = AffineMatrixExpr::zeros(size);
    e.add_var(0, 0, None, f0, None, 1.0);
    e.add_scaled(0, 0, beta, &-DMatrix::<f64>::identity(n_x, n_x));
    let mut padded = DMatrix::zeros(size, size);
    padded.view_mut((0, 0), (n_x + r, n_x + r)).copy_from(psi);
    e.add_scaled(0, 0, alpha, &-padded);
    // S·N = S[:, :n]·L_p·F₀ + S[:, n:]·G·L_p
    let left_f = cond.s.columns(0, n) * &lp;
    e.add_var(n_x, n_x + r, Some(&left_f), f0, None, 1.0);
    let left_g = cond.s.columns(n, dims.n_u).into_owned();
    e.add_var(n_x, n_x + r, Some(&left_g), g, Some(&lp), 1.0);
    e.add_var(n_x + r, n_x + r, None, f0, None, 1.0);
    Ok(e)
}

pub fn synthesize_slf_baseline(
    c: &ConsistencyQmi,
    polytope: &SchedulingPolytope,
    settings: &SynthesisSettings,
) -> Result<SynthesisResult> {
    let started = Instant::now();
    check_preconditions(c, polytope)?;
    let dims = c.dims;
    let mut problem = LmiProblem::new().with_strict_margin(settings.strict_margin);
    let f0 = problem.symmetric("F0", dims.n_x, true);
    let g = problem.matrix("G", dims.n_u, dims.lifted());
    add_normalization(&mut problem, &f0, settings);
    let cond = Conditioning::new(&c.upsilon, settings.precondition);
    let (psi, scale) = cond.transform(&c.upsilon);
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    for (i, v) in polytope.vertices().iter().enumerate() {
        let alpha = problem.scalar(&format!("alpha[{i}]"), Sign::Nonneg);
        let beta = problem.scalar(&format!("beta[{i}]"), Sign::Positive);
        let expr = vertex_expr(&psi, &cond, &dims, v, &f0, &g, &alpha, &beta)?;
        problem.constrain(&format!("vertex[{i}]"), expr);
        alphas.push(alpha);
        betas.push(beta);
    }
    let mut notes = vec!["common-Lyapunov baseline re-derived with the S-lemma on Υ; F holds F₀ (size n_x)".to_string()];
    if cond.applied {
        notes.push("vertex constraints solved in congruence-transformed form blkdiag(I, (−Υ₂₂)^{-1/2}, I)".into());
    }
    let ctx = Context {
        method: Method::Slf,
        dims,
        polytope,
        settings,
        notes,
        started,
    };
    ctx.finish(&problem, |a| Solution {
        f: a.value(&f0),
        g: Some(a.value(&g)),
        alpha: alphas.iter().map(|v| a.scalar(v) / scale).collect(),
        beta: betas.iter().map(|v| a.scalar(v)).collect(),
        epsilon: None,
        xi: None,
    })
}
