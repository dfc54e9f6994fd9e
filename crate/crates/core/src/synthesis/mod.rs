//! Data-driven synthesis programs and controller recovery.

mod blf;
mod fbsp;
mod slf;

use std::time::Instant;

use lpvdd_lmi::{solve, Assignment, LmiProblem, MarginReport, SolveOutcome, SolverDiagnostics, SolverSettings, Var};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::consistency::{ConsistencyQmi, Qmi};
use crate::data::Dims;
use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{self, DEFINITENESS_TOL};
use crate::lpv::{AffineGain, SchedulingPoint, SchedulingPolytope};
use crate::lyapunov::{BiquadraticLyapunov, CommonLyapunov, LyapunovCertificate};

pub use blf::{analyze_stability, assemble_blf_vertex_constraint, synthesize_blf, BlfVariables};
pub use fbsp::{fbsp_blocks, synthesize_fbsp, FbspBlocks};
pub use slf::{assemble_slf_vertex_constraint, synthesize_slf_baseline};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Blf,
    Slf,
    Fbsp,
    Analysis,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Blf => "blf",
            Method::Slf => "slf",
            Method::Fbsp => "fbsp",
            Method::Analysis => "analysis",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "blf" => Ok(Method::Blf),
            "slf" => Ok(Method::Slf),
            "fbsp" => Ok(Method::Fbsp),
            "analysis" => Ok(Method::Analysis),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Feasible,
    Infeasible,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisSettings {
    pub solver: SolverSettings,
    /// `ε_strict`; strict constraints are encoded as `⪰ ε_strict·(1+‖C‖)·I`.
    pub strict_margin: f64,
    /// Adds `F ⪯ I`. The programs are homogeneous in the decision variables,
    /// so this only fixes the scale.
    pub normalize: bool,
    /// Applies the congruence `blkdiag(I, (−Υ₂₂)^{-1/2}, I)` to each vertex
    /// constraint and rescales `Υ` to unit norm. Exact reformulation.
    pub precondition: bool,
    /// The polytope vertices are grid points of a non-convex region; results
    /// are stamped non-certified.
    pub grid_mode: bool,
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        Self {
            solver: SolverSettings::default(),
            strict_margin: lpvdd_lmi::DEFAULT_STRICT_MARGIN,
            normalize: true,
            precondition: true,
            grid_mode: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub method: Method,
    pub status: Status,
    pub reason: Option<String>,
    pub dims: Dims,
    pub vertices: Vec<SchedulingPoint>,
    /// `F` (size `n_x(1+n_p)`), or `F₀` (size `n_x`) for the common-Lyapunov
    /// baseline.
    #[serde(with = "io::opt_matrix")]
    pub f: Option<DMatrix<f64>>,
    #[serde(with = "io::opt_matrix")]
    pub g: Option<DMatrix<f64>>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub epsilon: Option<f64>,
    #[serde(with = "io::opt_matrix")]
    pub xi: Option<DMatrix<f64>>,
    pub gain: Option<AffineGain>,
    pub lyapunov: Option<LyapunovCertificate>,
    /// `false` in grid mode and for any non-feasible outcome.
    pub certified: bool,
    pub solver: SolverDiagnostics,
    pub margins: Option<MarginReport>,
    pub notes: Vec<String>,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_time_s: f64,
}

impl SynthesisResult {
    pub fn is_feasible(&self) -> bool {
        self.status == Status::Feasible
    }
}

/// `𝒦 = G F⁻¹` and `P = F⁻¹` (per-block `Kᵢ = Gᵢ F₀⁻¹` for the baseline).
pub fn recover_controller(result: &SynthesisResult) -> Result<(AffineGain, LyapunovCertificate)> {
    let f = result
        .f
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("result carries no F".into()))?;
    let dims = result.dims;
    let f_inv = linalg::inverse_pd(f).ok_or_else(|| Error::Singular("F is not safely invertible".into()))?;
    let zero = DMatrix::zeros(dims.n_u, dims.lifted());
    let g = result.g.as_ref().unwrap_or(&zero);
    match result.method {
        Method::Slf => {
            let blocks = (0..=dims.n_p)
                .map(|i| g.columns(i * dims.n_x, dims.n_x) * &f_inv)
                .collect();
            Ok((
                AffineGain::new(blocks)?,
                LyapunovCertificate::Common(CommonLyapunov::from_inverse(f.clone())?),
            ))
        }
        _ => {
            let k = g * &f_inv;
            Ok((
                AffineGain::from_stacked(&k, dims.n_x)?,
                LyapunovCertificate::Biquadratic(BiquadraticLyapunov::from_inverse(f.clone(), dims.n_x)?),
            ))
        }
    }
}

/// Exact congruence `blkdiag(I_q, S, I)` with `S = (−Υ₂₂)^{-1/2}` plus a
/// norm rescaling of `Υ`.
pub(crate) struct Conditioning {
    /// `S`, size `r × r`.
    pub s: DMatrix<f64>,
    pub applied: bool,
}

impl Conditioning {
    pub fn new(upsilon: &Qmi, enabled: bool) -> Self {
        let d = -upsilon.psi22();
        if enabled && linalg::is_pd(&d, DEFINITENESS_TOL) {
            Conditioning {
                s: linalg::inv_sqrt_pd(&d),
                applied: true,
            }
        } else {
            Conditioning {
                s: DMatrix::identity(upsilon.r, upsilon.r),
                applied: false,
            }
        }
    }

    /// `blkdiag(I_q, S) Ψ blkdiag(I_q, S)` and its unit-norm version's scale.
    pub fn transform(&self, psi: &Qmi) -> (DMatrix<f64>, f64) {
        let t = linalg::blkdiag(&[&DMatrix::identity(psi.q, psi.q), &self.s]);
        let m = linalg::sym(&(&t * &psi.psi * t.transpose()));
        let scale = linalg::sym_norm(&m).max(f64::MIN_POSITIVE);
        (m / scale, scale)
    }
}

pub(crate) fn check_preconditions(c: &ConsistencyQmi, polytope: &SchedulingPolytope) -> Result<()> {
    if !c.noise.passed() {
        return Err(Error::NoiseModel(
            "noise model violates Π|Π₂₂ ⪰ 0 or Π₂₂ ≺ 0; the consistency set cannot be lifted".into(),
        ));
    }
    if polytope.n_p() != c.dims.n_p {
        return Err(Error::Dimension(format!(
            "polytope has n_p = {}, data has n_p = {}",
            polytope.n_p(),
            c.dims.n_p
        )));
    }
    Ok(())
}

/// Adds `I − F ⪰ 0` when normalization is on.
pub(crate) fn add_normalization(problem: &mut LmiProblem, f: &Var, settings: &SynthesisSettings) {
    if settings.normalize {
        let n = f.rows();
        let mut e = lpvdd_lmi::AffineMatrixExpr::from_constant(DMatrix::identity(n, n));
        e.add_var(0, 0, None, f, None, -1.0);
        problem.constrain("I - F", e);
    }
}

/// Fields of a result filled in by each program from its solution.
pub(crate) struct Solution {
    pub f: DMatrix<f64>,
    pub g: Option<DMatrix<f64>>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub epsilon: Option<f64>,
    pub xi: Option<DMatrix<f64>>,
}

pub(crate) struct Context<'a> {
    pub method: Method,
    pub dims: Dims,
    pub polytope: &'a SchedulingPolytope,
    pub settings: &'a SynthesisSettings,
    pub notes: Vec<String>,
    pub started: Instant,
}

impl Context<'_> {
    pub fn finish(
        self,
        problem: &LmiProblem,
        extract: impl FnOnce(&Assignment) -> Solution,
    ) -> Result<SynthesisResult> {
        let outcome = solve(problem, &self.settings.solver)?;
        let mut result = SynthesisResult {
            method: self.method,
            status: Status::Inconclusive,
            reason: None,
            dims: self.dims,
            vertices: self.polytope.vertices().to_vec(),
            f: None,
            g: None,
            alpha: Vec::new(),
            beta: Vec::new(),
            epsilon: None,
            xi: None,
            gain: None,
            lyapunov: None,
            certified: false,
            solver: outcome.diagnostics().clone(),
            margins: None,
            notes: self.notes,
            timing: Timing { wall_time_s: 0.0 },
        };
        match outcome {
            SolveOutcome::Feasible { assignment, margins, .. } => {
                let sol = extract(&assignment);
                result.f = Some(sol.f);
                result.g = sol.g;
                result.alpha = sol.alpha;
                result.beta = sol.beta;
                result.epsilon = sol.epsilon;
                result.xi = sol.xi;
                result.margins = Some(margins);
                match recover_controller(&result) {
                    Ok((gain, lyap)) => {
                        result.status = Status::Feasible;
                        result.gain = (self.method != Method::Analysis).then_some(gain);
                        result.lyapunov = Some(lyap);
                        result.certified = !self.settings.grid_mode;
                        if self.settings.grid_mode {
                            result.notes.push(
                                "NON-CERTIFIED: grid mode only guarantees stability near the grid points".into(),
                            );
                        }
                    }
                    Err(e) => {
                        result.reason = Some(format!("solution found but controller recovery failed: {e}"));
                    }
                }
            }
            SolveOutcome::Infeasible { reason, .. } => {
                result.status = Status::Infeasible;
                result.reason = Some(reason);
            }
            SolveOutcome::Inconclusive { reason, .. } => {
                result.reason = Some(reason);
            }
        }
        result.timing.wall_time_s = self.started.elapsed().as_secs_f64();
        Ok(result)
    }
}
