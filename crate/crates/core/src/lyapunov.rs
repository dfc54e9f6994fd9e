//! Lyapunov functions and decrease conditions for known systems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::io;
use crate::linalg::{self, DEFINITENESS_TOL};
use crate::lpv::{closed_loop_matrix, eval_a, lift_scheduling, AffineGain, LpvPlant, SchedulingPoint, SchedulingPolytope, Trajectory};

/// `V(x, p) = xᵀ L_pᵀ P L_p x`. Keeps `P⁻¹` alongside `P` so that
/// certificates produced from `F = P⁻¹` are checked without re-inversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiquadraticLyapunov {
    #[serde(with = "io::matrix")]
    p: DMatrix<f64>,
    #[serde(with = "io::matrix")]
    p_inv: DMatrix<f64>,
    n_x: usize,
}

impl BiquadraticLyapunov {
    pub fn new(p: DMatrix<f64>, n_x: usize) -> Result<Self> {
        let p_inv = Self::checked_inverse(&p, n_x)?;
        Ok(Self { p: linalg::sym(&p), p_inv, n_x })
    }

    /// Builds from `F = P⁻¹`.
    pub fn from_inverse(f: DMatrix<f64>, n_x: usize) -> Result<Self> {
        let p = Self::checked_inverse(&f, n_x)?;
        Ok(Self { p, p_inv: linalg::sym(&f), n_x })
    }

    fn checked_inverse(m: &DMatrix<f64>, n_x: usize) -> Result<DMatrix<f64>> {
        dim_check(n_x > 0 && m.is_square() && m.nrows() % n_x == 0, || {
            format!("Lyapunov matrix of shape {:?} is not n_x(1+n_p) square for n_x = {n_x}", m.shape())
        })?;
        if !linalg::is_pd(m, DEFINITENESS_TOL) {
            return Err(Error::Singular(format!("λ_min = {:.3e}", linalg::min_eig(m))));
        }
        linalg::inverse_pd(m).ok_or_else(|| Error::Singular("condition number above 1e12".into()))
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn p_inv(&self) -> &DMatrix<f64> {
        &self.p_inv
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_p(&self) -> usize {
        self.p.nrows() / self.n_x - 1
    }
}

/// `V(x) = xᵀ P₀ x`, independent of the scheduling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonLyapunov {
    #[serde(with = "io::matrix")]
    p: DMatrix<f64>,
    #[serde(with = "io::matrix")]
    p_inv: DMatrix<f64>,
}

impl CommonLyapunov {
    pub fn from_inverse(f: DMatrix<f64>) -> Result<Self> {
        let lyap = BiquadraticLyapunov::from_inverse(f, 1)?;
        Ok(Self { p: lyap.p, p_inv: lyap.p_inv })
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn p_inv(&self) -> &DMatrix<f64> {
        &self.p_inv
    }
}

/// Either kind of certificate a synthesis program can return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LyapunovCertificate {
    Biquadratic(BiquadraticLyapunov),
    Common(CommonLyapunov),
}

impl LyapunovCertificate {
    pub fn value(&self, x: &DVector<f64>, p: &SchedulingPoint) -> Result<f64> {
        match self {
            LyapunovCertificate::Biquadratic(l) => eval_v(l, x, p),
            LyapunovCertificate::Common(c) => {
                dim_check(x.len() == c.p.nrows(), || "state length mismatch".into())?;
                Ok((x.transpose() * &c.p * x)[(0, 0)])
            }
        }
    }

    /// Block matrix whose positive definiteness certifies decrease. For the
    /// biquadratic certificate `p` is the *next* scheduling value; for the
    /// common one it is the current value.
    pub fn decrease_matrix(&self, plant: &LpvPlant, gain: &AffineGain, p: &SchedulingPoint) -> Result<DMatrix<f64>> {
        match self {
            LyapunovCertificate::Biquadratic(l) => {
                let m = lifted_transition(plant, gain, p)?;
                dim_check(m.nrows() == l.p.nrows(), || "Lyapunov and plant sizes differ".into())?;
                Ok(schur_decrease_form(l.p_inv(), l.p(), &m))
            }
            LyapunovCertificate::Common(c) => {
                let a_cl = eval_a(plant, p)? + plant.b() * gain.eval(p)?;
                dim_check(a_cl.nrows() == c.p.nrows(), || "Lyapunov and plant sizes differ".into())?;
                let f = &c.p_inv;
                let off = &a_cl * f;
                Ok(block2(f, &off, f))
            }
        }
    }
}

fn block2(a: &DMatrix<f64>, b: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (a.nrows(), d.nrows());
    let mut out = DMatrix::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((0, n), (n, m)).copy_from(b);
    out.view_mut((n, 0), (m, n)).copy_from(&b.transpose());
    out.view_mut((n, n), (m, m)).copy_from(d);
    linalg::sym(&out)
}

/// `M = L_{p₊}(𝒜 + B𝒦)`, the lifted-state transition.
pub fn lifted_transition(plant: &LpvPlant, gain: &AffineGain, p_next: &SchedulingPoint) -> Result<DMatrix<f64>> {
    dim_check(p_next.len() == plant.n_p(), || "scheduling length mismatch".into())?;
    Ok(lift_scheduling(p_next, plant.n_x()) * closed_loop_matrix(plant, gain)?)
}

/// `P⁻¹ − M P⁻¹ Mᵀ`.
pub fn dual_decrease_form(p_inv: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    linalg::sym(&(p_inv - m * p_inv * m.transpose()))
}

/// `[P⁻¹, M; Mᵀ, P]`.
pub fn schur_decrease_form(p_inv: &DMatrix<f64>, p: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    block2(p_inv, m, p)
}

/// `P − Mᵀ P M`.
pub fn primal_decrease_form(p: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    linalg::sym(&(p - m.transpose() * p * m))
}

pub fn eval_v(l: &BiquadraticLyapunov, x: &DVector<f64>, p: &SchedulingPoint) -> Result<f64> {
    dim_check(x.len() == l.n_x && p.len() == l.n_p(), || "state or scheduling length mismatch".into())?;
    let xi = lift_scheduling(p, l.n_x) * x;
    Ok((xi.transpose() * &l.p * &xi)[(0, 0)])
}

/// The block matrix `[P⁻¹, M; Mᵀ, P]` at `p₊` and its strict-PD verdict.
pub fn decrease_lmi(
    plant: &LpvPlant,
    gain: &AffineGain,
    l: &BiquadraticLyapunov,
    p_next: &SchedulingPoint,
) -> Result<(DMatrix<f64>, bool)> {
    let m = LyapunovCertificate::Biquadratic(l.clone()).decrease_matrix(plant, gain, p_next)?;
    let pd = linalg::is_pd(&m, DEFINITENESS_TOL);
    Ok((m, pd))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopeCheck {
    pub holds: bool,
    pub worst_vertex: usize,
    /// `λ_min / (1 + ‖·‖)` at the worst vertex.
    pub worst_margin: f64,
}

/// Decrease at every vertex, which covers the polytope because the block
/// matrix is affine in the scheduling value.
pub fn check_decrease_on_polytope(
    plant: &LpvPlant,
    gain: &AffineGain,
    cert: &LyapunovCertificate,
    polytope: &SchedulingPolytope,
) -> Result<PolytopeCheck> {
    let mut worst = (0, f64::INFINITY);
    for (i, v) in polytope.vertices().iter().enumerate() {
        let margin = linalg::normalized_margin(&cert.decrease_matrix(plant, gain, v)?);
        if margin < worst.1 {
            worst = (i, margin);
        }
    }
    Ok(PolytopeCheck {
        holds: worst.1 > DEFINITENESS_TOL,
        worst_vertex: worst.0,
        worst_margin: worst.1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// `V(x_k, p_k)` for every step that has a scheduling sample.
    pub values: Vec<f64>,
    /// Steps `k` with `x_k ≠ 0` and `V_{k+1} ≥ V_k`.
    pub violations: Vec<usize>,
}

/// Checks strict decrease of `V` along a noise-free trajectory.
pub fn trajectory_decrease_audit(traj: &Trajectory, cert: &LyapunovCertificate) -> Result<AuditReport> {
    traj.check()?;
    if traj.w.iter().any(|w| w.iter().any(|v| *v != 0.0)) {
        return Err(Error::InvalidArgument("decrease audit needs a noise-free trajectory".into()));
    }
    let values = (0..traj.len())
        .map(|k| cert.value(&traj.x[k], &traj.p[k]))
        .collect::<Result<Vec<f64>>>()?;
    let violations = (0..values.len().saturating_sub(1))
        .filter(|&k| traj.x[k].iter().any(|v| *v != 0.0) && values[k + 1] >= values[k])
        .collect();
    Ok(AuditReport { values, violations })
}
