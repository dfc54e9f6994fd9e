//! Data matrices, excitation check and QMI noise models.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::io;
use crate::linalg::{self, DEFINITENESS_TOL};
use crate::lpv::{lift_scheduling, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_x: usize,
    pub n_u: usize,
    pub n_p: usize,
}

impl Dims {
    /// `n_x(1+n_p)`, the lifted state size.
    pub fn lifted(&self) -> usize {
        self.n_x * (1 + self.n_p)
    }

    /// `n_x(1+n_p) + n_u`, the row count of `Φ`.
    pub fn regressor(&self) -> usize {
        self.lifted() + self.n_u
    }
}

/// `Φ` with columns `[L_{p_k}x_k; u_k]` and `X₊` with columns `x_{k+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSet {
    pub dims: Dims,
    pub n_d: usize,
    #[serde(with = "io::matrix")]
    pub phi: DMatrix<f64>,
    #[serde(with = "io::matrix")]
    pub xplus: DMatrix<f64>,
}

impl DataSet {
    pub fn new(dims: Dims, phi: DMatrix<f64>, xplus: DMatrix<f64>) -> Result<Self> {
        dim_check(phi.nrows() == dims.regressor(), || {
            format!("Φ has {} rows, expected {}", phi.nrows(), dims.regressor())
        })?;
        dim_check(xplus.nrows() == dims.n_x && xplus.ncols() == phi.ncols(), || {
            format!("X₊ has shape {:?}, expected ({}, {})", xplus.shape(), dims.n_x, phi.ncols())
        })?;
        Ok(Self {
            dims,
            n_d: phi.ncols(),
            phi,
            xplus,
        })
    }
}

/// True disturbance columns `W₋` of a synthetic experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    #[serde(with = "io::matrix")]
    pub w: DMatrix<f64>,
}

/// `Ω` in `W₋W₋ᵀ ⪯ Ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBound {
    #[serde(with = "io::matrix")]
    pub omega: DMatrix<f64>,
}

/// `Π` with partition sizes `(n_x, N_d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    #[serde(with = "io::matrix")]
    pub pi: DMatrix<f64>,
    pub n_x: usize,
    pub n_d: usize,
}

impl NoiseModel {
    pub fn new(pi: DMatrix<f64>, n_x: usize, n_d: usize) -> Result<Self> {
        dim_check(pi.shape() == (n_x + n_d, n_x + n_d), || {
            format!("Π has shape {:?}, expected square of size {}", pi.shape(), n_x + n_d)
        })?;
        Ok(Self {
            pi: linalg::sym(&pi),
            n_x,
            n_d,
        })
    }

    pub fn pi11(&self) -> DMatrix<f64> {
        self.pi.view((0, 0), (self.n_x, self.n_x)).into_owned()
    }

    pub fn pi12(&self) -> DMatrix<f64> {
        self.pi.view((0, self.n_x), (self.n_x, self.n_d)).into_owned()
    }

    pub fn pi22(&self) -> DMatrix<f64> {
        self.pi.view((self.n_x, self.n_x), (self.n_d, self.n_d)).into_owned()
    }

    /// Whether `W` (n_x × N_d) satisfies `[I; Wᵀ]ᵀ Π [I; Wᵀ] ⪰ 0`.
    pub fn admits(&self, w: &DMatrix<f64>, tol: f64) -> Result<bool> {
        dim_check(w.shape() == (self.n_x, self.n_d), || format!("W has shape {:?}", w.shape()))?;
        let wt = w.transpose();
        let m = self.pi11() + self.pi12() * &wt + w * self.pi12().transpose() + w * self.pi22() * &wt;
        Ok(linalg::is_psd(&m, tol))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseValidation {
    /// `Π | Π₂₂ ⪰ 0`: some disturbance is admitted.
    pub existence: bool,
    /// `Π₂₂ ≺ 0`: the admitted set is bounded.
    pub boundedness: bool,
    pub schur_complement_min_eig: f64,
    pub pi22_max_eig: f64,
}

impl NoiseValidation {
    pub fn passed(&self) -> bool {
        self.existence && self.boundedness
    }
}

pub fn build_dataset(traj: &Trajectory) -> Result<DataSet> {
    traj.check()?;
    if traj.is_empty() {
        return Err(Error::InvalidArgument("trajectory needs at least one step".into()));
    }
    let n_x = traj.x[0].len();
    let n_u = traj.u[0].len();
    let n_p = traj.p[0].len();
    let dims = Dims { n_x, n_u, n_p };
    dim_check(
        traj.x.iter().all(|v| v.len() == n_x) && traj.u.iter().all(|v| v.len() == n_u) && traj.p.iter().all(|v| v.len() == n_p),
        || "trajectory samples have inconsistent lengths".into(),
    )?;
    let n_d = traj.len();
    let mut phi = DMatrix::zeros(dims.regressor(), n_d);
    let mut xplus = DMatrix::zeros(n_x, n_d);
    for k in 0..n_d {
        let lifted = lift_scheduling(&traj.p[k], n_x) * &traj.x[k];
        phi.view_mut((0, k), (dims.lifted(), 1)).copy_from(&lifted);
        phi.view_mut((dims.lifted(), k), (n_u, 1)).copy_from(&traj.u[k]);
        xplus.set_column(k, &traj.x[k + 1]);
    }
    DataSet::new(dims, phi, xplus)
}

/// `(rank Φ = n_u + n_x(1+n_p), rank Φ)`.
pub fn is_persistently_exciting(ds: &DataSet) -> (bool, usize) {
    let rank = linalg::numerical_rank(&ds.phi);
    (rank == ds.dims.regressor(), rank)
}

pub fn noise_record(traj: &Trajectory) -> NoiseRecord {
    let n_x = traj.x[0].len();
    let mut w = DMatrix::zeros(n_x, traj.len());
    for (k, wk) in traj.w.iter().enumerate() {
        w.set_column(k, wk);
    }
    NoiseRecord { w }
}

/// Minimizer of `trace Ω` subject to `Ω ⪰ WWᵀ`, which is `WWᵀ` itself.
pub fn energy_bound_from_noise(record: &NoiseRecord) -> EnergyBound {
    EnergyBound {
        omega: linalg::sym(&(&record.w * record.w.transpose())),
    }
}

/// `Π = blkdiag(Ω, −I_{N_d})`.
pub fn noise_model_from_energy_bound(bound: &EnergyBound, n_d: usize) -> Result<NoiseModel> {
    let omega = &bound.omega;
    dim_check(omega.is_square(), || "Ω must be square".into())?;
    if !linalg::is_psd(omega, DEFINITENESS_TOL) {
        return Err(Error::NoiseModel(format!(
            "Ω is not positive semidefinite (λ_min = {:.3e})",
            linalg::min_eig(omega)
        )));
    }
    let n_x = omega.nrows();
    let pi = linalg::blkdiag(&[omega, &(-DMatrix::identity(n_d, n_d))]);
    NoiseModel::new(pi, n_x, n_d)
}

pub fn validate_noise_model(model: &NoiseModel) -> NoiseValidation {
    let pi22 = model.pi22();
    let pi22_max_eig = -linalg::min_eig(&-&pi22);
    let boundedness = pi22_max_eig < -DEFINITENESS_TOL * (1.0 + linalg::sym_norm(&pi22));
    let schur = match pi22.clone().try_inverse() {
        Some(inv) => model.pi11() - model.pi12() * inv * model.pi12().transpose(),
        // Without an invertible Π₂₂ the Schur complement is undefined; fall
        // back to Π₁₁, which the complement reduces to for Π₁₂ = 0.
        None => model.pi11(),
    };
    let schur_min = linalg::min_eig(&schur);
    NoiseValidation {
        existence: linalg::is_psd(&schur, DEFINITENESS_TOL),
        boundedness,
        schur_complement_min_eig: schur_min,
        pi22_max_eig,
    }
}
