//! Dense helpers shared across modules.

use nalgebra::{DMatrix, DVector};

/// Relative eigenvalue cutoff for every definiteness test: `±tol·(1+‖M‖)`.
pub const DEFINITENESS_TOL: f64 = 1e-9;

/// Largest condition number accepted when inverting a Lyapunov matrix.
pub const MAX_CONDITION: f64 = 1e12;

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

pub fn blkdiag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    sym(m).symmetric_eigenvalues()
}

pub fn min_eig(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    sym_eigenvalues(m).iter().copied().fold(f64::INFINITY, f64::min)
}

/// Spectral norm of the symmetric part.
pub fn sym_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    sym_eigenvalues(m).iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// `λ_min / (1 + ‖M‖)`, the scale-free margin used in reports.
pub fn normalized_margin(m: &DMatrix<f64>) -> f64 {
    min_eig(m) / (1.0 + sym_norm(m))
}

pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    min_eig(m) >= -tol * (1.0 + sym_norm(m))
}

pub fn is_pd(m: &DMatrix<f64>, tol: f64) -> bool {
    min_eig(m) > tol * (1.0 + sym_norm(m))
}

/// `f(M)` for symmetric `M` via its eigendecomposition.
fn sym_fn(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let e = sym(m).symmetric_eigen();
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(f));
    sym(&(&e.eigenvectors * d * e.eigenvectors.transpose()))
}

/// Square root of a PSD matrix, clamping negative round-off eigenvalues to 0.
pub fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_fn(m, |v| v.max(0.0).sqrt())
}

/// `M^{-1/2}` of a PD matrix.
pub fn inv_sqrt_pd(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_fn(m, |v| 1.0 / v.sqrt())
}

/// Inverse of a PD matrix via Cholesky; fails when indefinite or when the
/// condition number exceeds [`MAX_CONDITION`].
pub fn inverse_pd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let ev = sym_eigenvalues(m);
    let (lo, hi) = ev.iter().fold((f64::INFINITY, 0.0_f64), |(l, h), v| (l.min(*v), h.max(*v)));
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return None;
    }
    let inv = sym(m).cholesky()?.inverse();
    Some(sym(&inv))
}

/// Numerical rank: singular values below `max(dims)·σ_max·2⁻⁴⁰` count as zero.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let cutoff = m.nrows().max(m.ncols()) as f64 * smax * 2f64.powi(-40);
    sv.iter().filter(|s| **s > cutoff).count()
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max)
}
