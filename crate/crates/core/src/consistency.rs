//! The set of systems consistent with the data, as a QMI and as a matrix ball.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{validate_noise_model, DataSet, Dims, NoiseModel, NoiseValidation};
use crate::error::{dim_check, Error, Result};
use crate::io;
use crate::linalg::{self, DEFINITENESS_TOL};
use crate::lpv::{lift_scheduling, LpvPlant, SchedulingPoint};
use crate::seeds;

/// Default relative tolerance of membership tests.
pub const MEMBERSHIP_TOL: f64 = 1e-8;

/// `{Z : [I; Z]ᵀ Ψ [I; Z] ⪰ 0}` with `Z` of shape `r × q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Qmi {
    #[serde(with = "io::matrix")]
    pub psi: DMatrix<f64>,
    pub q: usize,
    pub r: usize,
}

impl Qmi {
    pub fn new(psi: DMatrix<f64>, q: usize, r: usize) -> Result<Self> {
        dim_check(psi.shape() == (q + r, q + r), || {
            format!("Ψ has shape {:?}, expected square of size {}", psi.shape(), q + r)
        })?;
        Ok(Self {
            psi: linalg::sym(&psi),
            q,
            r,
        })
    }

    pub fn psi11(&self) -> DMatrix<f64> {
        self.psi.view((0, 0), (self.q, self.q)).into_owned()
    }

    pub fn psi12(&self) -> DMatrix<f64> {
        self.psi.view((0, self.q), (self.q, self.r)).into_owned()
    }

    pub fn psi21(&self) -> DMatrix<f64> {
        self.psi.view((self.q, 0), (self.r, self.q)).into_owned()
    }

    pub fn psi22(&self) -> DMatrix<f64> {
        self.psi.view((self.q, self.q), (self.r, self.r)).into_owned()
    }

    /// `[I; Z]ᵀ Ψ [I; Z]`.
    pub fn evaluate(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        dim_check(z.shape() == (self.r, self.q), || {
            format!("Z has shape {:?}, expected ({}, {})", z.shape(), self.r, self.q)
        })?;
        let zt = z.transpose();
        let m = self.psi11() + self.psi12() * z + &zt * self.psi21() + &zt * self.psi22() * z;
        Ok(linalg::sym(&m))
    }
}

/// `Υ` for a dataset and noise model, with `q = n_x`, `r = n_x(1+n_p) + n_u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyQmi {
    pub upsilon: Qmi,
    pub dims: Dims,
    pub n_d: usize,
    pub noise: NoiseValidation,
}

/// `Z ∈ 𝒵 ⟺ (Z − Z_c)ᵀ D (Z − Z_c) ⪯ R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixBall {
    #[serde(with = "io::matrix")]
    pub center: DMatrix<f64>,
    #[serde(with = "io::matrix")]
    pub d: DMatrix<f64>,
    #[serde(with = "io::matrix")]
    pub radius: DMatrix<f64>,
}

impl MatrixBall {
    /// `R − (Z − Z_c)ᵀ D (Z − Z_c)`.
    pub fn evaluate(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        dim_check(z.shape() == self.center.shape(), || format!("Z has shape {:?}", z.shape()))?;
        let e = z - &self.center;
        Ok(linalg::sym(&(&self.radius - e.transpose() * &self.d * &e)))
    }

    pub fn contains(&self, z: &DMatrix<f64>, tol: f64) -> Result<bool> {
        let m = self.evaluate(z)?;
        Ok(linalg::is_psd(&m, tol))
    }

    /// `Z_c + D^{-1/2} S R^{1/2}`; a member whenever `‖S‖₂ ≤ 1`.
    pub fn point(&self, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        dim_check(s.shape() == self.center.shape(), || format!("S has shape {:?}", s.shape()))?;
        Ok(&self.center + linalg::inv_sqrt_pd(&self.d) * s * linalg::sqrt_psd(&self.radius))
    }
}

/// `Υ = [I X₊; 0 −Φ] Π [I X₊; 0 −Φ]ᵀ`.
pub fn build_consistency_qmi(ds: &DataSet, noise: &NoiseModel) -> Result<ConsistencyQmi> {
    dim_check(noise.n_x == ds.dims.n_x && noise.n_d == ds.n_d, || {
        format!(
            "noise model is for (n_x, N_d) = ({}, {}), data has ({}, {})",
            noise.n_x, noise.n_d, ds.dims.n_x, ds.n_d
        )
    })?;
    let n_x = ds.dims.n_x;
    let r = ds.dims.regressor();
    let mut t = DMatrix::zeros(n_x + r, n_x + ds.n_d);
    t.view_mut((0, 0), (n_x, n_x)).fill_with_identity();
    t.view_mut((0, n_x), (n_x, ds.n_d)).copy_from(&ds.xplus);
    t.view_mut((n_x, n_x), (r, ds.n_d)).copy_from(&-&ds.phi);
    let upsilon = Qmi::new(&t * &noise.pi * t.transpose(), n_x, r)?;
    Ok(ConsistencyQmi {
        upsilon,
        dims: ds.dims,
        n_d: ds.n_d,
        noise: validate_noise_model(noise),
    })
}

/// `Υ_p = blkdiag(L_p, I) Υ blkdiag(L_pᵀ, I)`.
pub fn schedule_lift_qmi(c: &ConsistencyQmi, p: &SchedulingPoint) -> Result<Qmi> {
    if !c.noise.passed() {
        return Err(Error::NoiseModel("noise model violates the existence/boundedness conditions".into()));
    }
    dim_check(p.len() == c.dims.n_p, || format!("expected n_p = {}, got {}", c.dims.n_p, p.len()))?;
    let l = lift_scheduling(p, c.dims.n_x);
    let r = c.upsilon.r;
    let t = linalg::blkdiag(&[&l, &DMatrix::identity(r, r)]);
    Qmi::new(&t * &c.upsilon.psi * t.transpose(), c.dims.lifted(), r)
}

/// Minimum eigenvalue of `[I; Z]ᵀ Ψ [I; Z]` against `±tol·(1+‖·‖)`.
pub fn qmi_membership(q: &Qmi, z: &DMatrix<f64>, strict: bool, tol: f64) -> Result<bool> {
    let m = q.evaluate(z)?;
    Ok(if strict { linalg::is_pd(&m, tol) } else { linalg::is_psd(&m, tol) })
}

/// Completes the square: `Z_c = −Ψ₂₂⁻¹Ψ₂₁`, `D = −Ψ₂₂`, `R = Ψ | Ψ₂₂`.
pub fn qmi_to_ball(q: &Qmi) -> Result<MatrixBall> {
    let d = -q.psi22();
    if !linalg::is_pd(&d, DEFINITENESS_TOL) {
        return Err(Error::Unbounded(format!(
            "Ψ₂₂ is not negative definite (max eigenvalue {:.3e})",
            -linalg::min_eig(&d)
        )));
    }
    let chol = linalg::sym(&d)
        .cholesky()
        .ok_or_else(|| Error::Unbounded("−Ψ₂₂ has no Cholesky factor".into()))?;
    let center = chol.solve(&q.psi21());
    let radius = linalg::sym(&(q.psi11() + q.psi12() * &center));
    if !linalg::is_psd(&radius, DEFINITENESS_TOL) {
        return Err(Error::EmptySet(format!(
            "Schur complement Ψ | Ψ₂₂ has eigenvalue {:.3e}",
            linalg::min_eig(&radius)
        )));
    }
    Ok(MatrixBall { center, d, radius })
}

/// Haar-distributed `n × k` matrix with orthonormal columns.
fn haar_stiefel<R: Rng>(rng: &mut R, n: usize, k: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, k.max(1), |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q.columns(0, k).into_owned()
}

/// Draws `S = U diag(σ) Vᵀ` with Haar `U`, `V` and `σᵢ ∼ 𝒰[0, 1]`. This covers
/// the unit operator-norm ball but is not uniform over it.
pub fn sample_contraction<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let k = rows.min(cols);
    let u = haar_stiefel(rng, rows, k);
    let v = haar_stiefel(rng, cols, k);
    let unit = Uniform::new_inclusive(0.0, 1.0).expect("valid bounds");
    let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(k, |_, _| unit.sample(rng)));
    u * sigma * v.transpose()
}

/// Converts a ball member `Z = [𝒜 B]ᵀ` into a plant.
pub fn plant_from_member(z: &DMatrix<f64>, dims: &Dims) -> Result<LpvPlant> {
    LpvPlant::from_stacked(&z.transpose(), dims.n_x, dims.n_p)
}

/// `count` members of the consistency set, each `Z_c + D^{-1/2} S R^{1/2}`
/// with `S` from [`sample_contraction`] seeded per sample index.
pub fn sample_compatible_systems(c: &ConsistencyQmi, count: usize, seed: u64) -> Result<Vec<LpvPlant>> {
    let ball = qmi_to_ball(&c.upsilon)?;
    let d_half = linalg::inv_sqrt_pd(&ball.d);
    let r_half = linalg::sqrt_psd(&ball.radius);
    (0..count)
        .map(|i| {
            let mut rng = seeds::rng(seed, "compatible-system", i as u64);
            let s = sample_contraction(&mut rng, c.upsilon.r, c.upsilon.q);
            let z = &ball.center + &d_half * s * &r_half;
            plant_from_member(&z, &c.dims)
        })
        .collect()
}

/// The ball center, i.e. the least-squares system when `Π₁₂ = 0`.
pub fn center_system(c: &ConsistencyQmi) -> Result<LpvPlant> {
    let ball = qmi_to_ball(&c.upsilon)?;
    plant_from_member(&ball.center, &c.dims)
}
