//! Full-block S-procedure relaxation of the vertex program.
//!
//! The vertex LMI is written as `𝓛(p)ᵀ Θ 𝓛(p) ≺ 0` with the linear fractional
//! representation `𝓛(p) = L₂₂ + L₂₁Δ_p L₁₂` (`L₁₁ = 0`). A full-block multiplier
//! `Ξ` with `Ξ₂₂ ≺ 0` makes the condition concave in `Δ_p`, so the multiplier
//! inequality only has to hold at the vertices.
//!
//! `Θ = blkdiag(αΥ, −(H − εI))`: `ε` is a strictness margin, which makes a
//! feasible point imply `H − α·blkdiag(Υ_p, 0) ≻ 0` for every `p` in the
//! polytope.

use std::time::Instant;

use lpvdd_lmi::{AffineMatrixExpr, LmiProblem, Sign};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{add_normalization, check_preconditions, Conditioning, Context, Method, Solution, SynthesisResult, SynthesisSettings};
use crate::consistency::ConsistencyQmi;
use crate::data::Dims;
use crate::error::{dim_check, Result};
use crate::io;
use crate::linalg;
use crate::lpv::{SchedulingPoint, SchedulingPolytope};

/// Constant matrices of the representation. `Δ` is listed per vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbspBlocks {
    #[serde(with = "io::matrix")]
    pub l11: DMatrix<f64>,
    #[serde(with = "io::matrix")]
    pub l12: DMatrix<f64>,
    #[serde(with = "io::matrix")]
    pub l21: DMatrix<f64>,
    #[serde(with = "io::matrix")]
    pub l22: DMatrix<f64>,
    #[serde(with = "io::matrix")]
    pub gamma: DMatrix<f64>,
    #[serde(with = "io::vec_matrix")]
    pub deltas: Vec<DMatrix<f64>>,
    pub dims: Dims,
}

impl FbspBlocks {
    /// `n_x n_p`, the size of `Δ`.
    pub fn n_delta(&self) -> usize {
        self.dims.n_x * self.dims.n_p
    }

    /// `3n_x(1+n_p) + n_u`, the size of `H`.
    pub fn n_h(&self) -> usize {
        3 * self.dims.lifted() + self.dims.n_u
    }

    /// `Δ_p = blkdiag(p₁I, …, p_{n_p}I)`.
    pub fn delta(&self, p: &SchedulingPoint) -> DMatrix<f64> {
        let n_x = self.dims.n_x;
        let mut d = DMatrix::zeros(self.n_delta(), self.n_delta());
        for (i, pi) in p.as_slice().iter().enumerate() {
            for j in 0..n_x {
                d[(i * n_x + j, i * n_x + j)] = *pi;
            }
        }
        d
    }

    /// `L₂₂ + L₂₁Δ_p(I − L₁₁Δ_p)⁻¹L₁₂`.
    pub fn lfr(&self, p: &SchedulingPoint) -> Result<DMatrix<f64>> {
        let d = self.delta(p);
        let m = self.n_delta();
        let inner = (DMatrix::identity(m, m) - &self.l11 * &d)
            .try_inverse()
            .ok_or_else(|| crate::error::Error::Singular("I − L₁₁Δ is singular".into()))?;
        Ok(&self.l22 + &self.l21 * d * inner * &self.l12)
    }

    /// `[I; Δ_p]ᵀ Ξ [I; Δ_p]`.
    pub fn multiplier_form(&self, xi: &DMatrix<f64>, p: &SchedulingPoint) -> DMatrix<f64> {
        let m = self.n_delta();
        let stacked = stack_identity(&self.delta(p), m);
        linalg::sym(&(stacked.transpose() * xi * stacked))
    }
}

fn stack_identity(d: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(2 * m, m);
    s.view_mut((0, 0), (m, m)).fill_with_identity();
    s.view_mut((m, 0), (m, m)).copy_from(d);
    s
}

pub fn fbsp_blocks(dims: &Dims, polytope: &SchedulingPolytope) -> Result<FbspBlocks> {
    dim_check(polytope.n_p() == dims.n_p, || "polytope and data disagree on n_p".into())?;
    let (n_x, n_u) = (dims.n_x, dims.n_u);
    let m = n_x * dims.n_p;
    let n = dims.lifted();
    let r = dims.regressor();
    let n_h = 3 * n + n_u;
    let rows = n_x + r + n_h;

    let l11 = DMatrix::zeros(m, m);
    let mut l12 = DMatrix::zeros(m, n_h);
    l12.view_mut((0, n_x), (m, m)).fill_with_identity();
    let mut l21 = DMatrix::zeros(rows, m);
    for i in 0..dims.n_p {
        l21.view_mut((0, i * n_x), (n_x, n_x)).fill_with_identity();
    }
    let mut gamma = DMatrix::zeros(n_x + r, n + r);
    gamma.view_mut((0, 0), (n_x, n_x)).fill_with_identity();
    gamma.view_mut((n_x, n), (r, r)).fill_with_identity();
    let mut l22 = DMatrix::zeros(rows, n_h);
    l22.view_mut((0, 0), (n_x + r, n + r)).copy_from(&gamma);
    l22.view_mut((n_x + r, 0), (n_h, n_h)).fill_with_identity();

    let mut blocks = FbspBlocks {
        l11,
        l12,
        l21,
        l22,
        gamma,
        deltas: Vec::new(),
        dims: *dims,
    };
    blocks.deltas = polytope.vertices().iter().map(|v| blocks.delta(v)).collect();
    Ok(blocks)
}

pub fn synthesize_fbsp(
    c: &ConsistencyQmi,
    polytope: &SchedulingPolytope,
    settings: &SynthesisSettings,
) -> Result<SynthesisResult> {
    let started = Instant::now();
    check_preconditions(c, polytope)?;
    let dims = c.dims;
    let blocks = fbsp_blocks(&dims, polytope)?;
    let (n_x, n_u) = (dims.n_x, dims.n_u);
    let m = blocks.n_delta();
    let n = dims.lifted();
    let r = dims.regressor();
    let n_h = blocks.n_h();
    let size = m + n_h;

    let mut problem = LmiProblem::new().with_strict_margin(settings.strict_margin);
    let f = problem.symmetric("F", n, true);
    let g = problem.matrix("G", n_u, n);
    let alpha = problem.scalar("alpha", Sign::Nonneg);
    let beta = problem.scalar("beta", Sign::Positive);
    let eps = problem.scalar("epsilon", Sign::Positive);
    let xi = problem.symmetric("Xi", 2 * m, false);
    add_normalization(&mut problem, &f, settings);

    // The congruence blkdiag(I, S, I) on ξ's data rows maps Υ to
    // blkdiag(I, S)Υblkdiag(I, S) and [F; G] to S[F; G].
    let cond = Conditioning::new(&c.upsilon, settings.precondition);
    let (ups, scale) = cond.transform(&c.upsilon);

    // −(EᵀΞE + α UᵀΥU − pad(H) + ε pad(I)) ≻ 0
    let mut e = AffineMatrixExpr::zeros(size);
    let mut e_mat = DMatrix::zeros(2 * m, size);
    e_mat.view_mut((0, 0), (m, m)).copy_from(&blocks.l11);
    e_mat.view_mut((0, m), (m, n_h)).copy_from(&blocks.l12);
    e_mat.view_mut((m, 0), (m, m)).fill_with_identity();
    e.add_var(0, 0, Some(&e_mat.transpose()), &xi, Some(&e_mat), -1.0);
    let mut u = DMatrix::zeros(n_x + r, size);
    u.view_mut((0, 0), (n_x + r, m)).copy_from(&blocks.l21.rows(0, n_x + r));
    u.view_mut((0, m), (n_x + r, n_h)).copy_from(&blocks.l22.rows(0, n_x + r));
    e.add_scaled(0, 0, &alpha, &-(u.transpose() * &ups * &u));
    let h0 = m;
    e.add_var(h0, h0, None, &f, None, 1.0);
    e.add_scaled(h0, h0, &beta, &-DMatrix::<f64>::identity(n, n));
    let s_f = cond.s.columns(0, n).into_owned();
    let s_g = cond.s.columns(n, n_u).into_owned();
    e.add_var(h0 + n, h0 + n + r, Some(&s_f), &f, None, 1.0);
    e.add_var(h0 + n, h0 + n + r, Some(&s_g), &g, None, 1.0);
    e.add_var(h0 + n + r, h0 + n + r, None, &f, None, 1.0);
    e.add_scaled(h0, h0, &eps, &-DMatrix::<f64>::identity(n_h, n_h));
    problem.constrain_strict("multiplier LMI", e);

    let mut k = DMatrix::zeros(m, 2 * m);
    k.view_mut((0, m), (m, m)).fill_with_identity();
    let mut xi22 = AffineMatrixExpr::zeros(m);
    xi22.add_var(0, 0, Some(&k), &xi, Some(&k.transpose()), -1.0);
    problem.constrain_strict("-Xi22", xi22);

    for (i, d) in blocks.deltas.iter().enumerate() {
        let s = stack_identity(d, m);
        let mut e = AffineMatrixExpr::zeros(m);
        e.add_var(0, 0, Some(&s.transpose()), &xi, Some(&s), 1.0);
        problem.constrain(&format!("multiplier vertex[{i}]"), e);
    }

    let mut notes = vec!["Θ = blkdiag(αΥ, −(H − εI)) with ε as strictness margin".to_string()];
    if cond.applied {
        notes.push("solved in congruence-transformed form blkdiag(I, (−Υ₂₂)^{-1/2}, I)".into());
    }
    let ctx = Context {
        method: Method::Fbsp,
        dims,
        polytope,
        settings,
        notes,
        started,
    };
    ctx.finish(&problem, |a| Solution {
        f: a.value(&f),
        g: Some(a.value(&g)),
        alpha: vec![a.scalar(&alpha) / scale],
        beta: vec![a.scalar(&beta)],
        epsilon: Some(a.scalar(&eps)),
        xi: Some(a.value(&xi)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpv::lift_scheduling;

    #[test]
    fn lfr_reproduces_lifted_selection() {
        let dims = Dims { n_x: 2, n_u: 2, n_p: 2 };
        let poly = SchedulingPolytope::symmetric_box(&[1.0, 1.0]).unwrap();
        let b = fbsp_blocks(&dims, &poly).unwrap();
        assert_eq!(b.n_h(), 20);
        assert_eq!(b.n_delta(), 4);
        let p = SchedulingPoint(vec![0.3, -1.7]);
        let l = b.lfr(&p).unwrap();
        // Expected: [L_pᵀ 0 0; 0 I 0; I]
        let (n, r) = (dims.lifted(), dims.regressor());
        let mut want = DMatrix::zeros(dims.n_x + r + b.n_h(), b.n_h());
        want.view_mut((0, 0), (dims.n_x, n)).copy_from(&lift_scheduling(&p, 2).transpose());
        want.view_mut((dims.n_x, n), (r, r)).fill_with_identity();
        want.view_mut((dims.n_x + r, 0), (b.n_h(), b.n_h())).fill_with_identity();
        assert!((l - want).norm() < 1e-14);
    }
}
