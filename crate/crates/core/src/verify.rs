//! A-posteriori certification of synthesis results and closed-loop
//! Monte-Carlo experiments.

use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consistency::{center_system, sample_compatible_systems, ConsistencyQmi};
use crate::error::{Error, Result};
use crate::io;
use crate::linalg;
use crate::lpv::{simulate, AffineGain, Control, DisturbanceSource, LpvPlant, SchedulingMap, SchedulingPoint, SchedulingPolytope, Trajectory};
use crate::lyapunov::{lifted_transition, trajectory_decrease_audit, LyapunovCertificate};
use crate::seeds;
use crate::synthesis::{Method, SynthesisResult};

/// Default relative tolerance on the normalized decrease margin.
pub const CERTIFY_TOL: f64 = 1e-7;

/// Norm above which a trajectory is flagged as divergent.
pub const DIVERGENCE_NORM: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    /// 0 is the ball center; `i ≥ 1` is the `i`-th sampled system.
    pub system: usize,
    pub p: SchedulingPoint,
    /// Minimum eigenvalue of the decrease matrix.
    pub eigenvalue: f64,
    /// `λ_min / (1 + ‖·‖)`.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub method: Method,
    pub tolerance: f64,
    pub strict_threshold: f64,
    pub n_systems: usize,
    pub n_points: usize,
    pub n_checks: usize,
    pub n_failures: usize,
    pub min_margin: f64,
    /// Location of the smallest margin.
    pub worst: Witness,
    /// First failing check, if any.
    pub witness: Option<Witness>,
    /// Every margin `≥ −tolerance`.
    pub passed: bool,
    /// Every margin `≥ strict_threshold`.
    pub strict_pass: bool,
}

fn gain_of(result: &SynthesisResult) -> Result<(AffineGain, &LyapunovCertificate)> {
    let cert = result
        .lyapunov
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("result carries no Lyapunov certificate".into()))?;
    let gain = match (&result.gain, result.method) {
        (Some(g), _) => g.clone(),
        (None, Method::Analysis) => AffineGain::zeros(result.dims.n_u, result.dims.n_x, result.dims.n_p),
        (None, _) => return Err(Error::InvalidArgument("result carries no gain".into())),
    };
    Ok((gain, cert))
}

/// Evaluates the decrease condition of `result` on the ball center plus
/// `n_systems` sampled members of the consistency set, at every vertex and at
/// `n_p_samples` Dirichlet-distributed interior points of `polytope`.
pub fn certify_decrease(
    result: &SynthesisResult,
    c: &ConsistencyQmi,
    polytope: &SchedulingPolytope,
    n_systems: usize,
    n_p_samples: usize,
    seed: u64,
    tol: f64,
) -> Result<CertificationReport> {
    let (gain, cert) = gain_of(result)?;
    let mut systems = vec![center_system(c)?];
    systems.extend(sample_compatible_systems(c, n_systems, seed)?);
    let mut points = polytope.vertices().to_vec();
    let mut rng = seeds::rng(seed, "interior-p", 0);
    points.extend((0..n_p_samples).map(|_| polytope.sample_interior(&mut rng)));

    let per_system: Vec<Vec<Witness>> = systems
        .par_iter()
        .enumerate()
        .map(|(i, plant)| {
            points
                .iter()
                .map(|p| {
                    let m = cert.decrease_matrix(plant, &gain, p)?;
                    Ok(Witness {
                        system: i,
                        p: p.clone(),
                        eigenvalue: linalg::min_eig(&m),
                        margin: linalg::normalized_margin(&m),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let checks: Vec<Witness> = per_system.into_iter().flatten().collect();
    let worst = checks
        .iter()
        .min_by(|a, b| a.margin.total_cmp(&b.margin))
        .cloned()
        .expect("at least the center system at one vertex");
    let failing: Vec<&Witness> = checks.iter().filter(|w| !(w.margin >= -tol)).collect();
    let strict_threshold = lpvdd_lmi::DEFAULT_STRICT_MARGIN / 2.0;
    Ok(CertificationReport {
        method: result.method,
        tolerance: tol,
        strict_threshold,
        n_systems: systems.len(),
        n_points: points.len(),
        n_checks: checks.len(),
        n_failures: failing.len(),
        min_margin: worst.margin,
        witness: failing.first().map(|w| (*w).clone()),
        passed: failing.is_empty(),
        strict_pass: worst.margin >= strict_threshold,
        worst,
    })
}

/// Spectral radius of `L_p(𝒜 + B𝒦)`. Below one is necessary for stability at
/// a frozen `p`; it is never a certificate.
pub fn frozen_spectrum_diagnostic(plant: &LpvPlant, gain: &AffineGain, p: &SchedulingPoint) -> Result<f64> {
    Ok(linalg::spectral_radius(&lifted_transition(plant, gain, p)?))
}

/// `count` points evenly spaced on the unit circle, starting at `(1, 0)`.
pub fn unit_circle_ics(count: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / count as f64;
            DVector::from_vec(vec![t.cos(), t.sin()])
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub system: usize,
    pub ic: usize,
    pub trajectory: Option<Trajectory>,
    pub diverged: bool,
    pub final_norm: f64,
    /// Steps with `x_k ≠ 0` and `V_{k+1} ≥ V_k`; only counted without noise.
    pub decrease_violations: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub n_members: usize,
    pub n_diverged: usize,
    pub max_final_norm: f64,
    pub decrease_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub members: Vec<Member>,
    pub stats: EnsembleStats,
}

/// Closed-loop runs of `gain` on every `(plant, initial condition)` pair.
/// Each member draws its disturbance from `𝒰(−w_max, w_max)` with its own
/// seed derived from `seed` and the member index; `w_max = 0` gives
/// noise-free runs, which are also audited against `cert`.
#[allow(clippy::too_many_arguments)]
pub fn closed_loop_montecarlo(
    gain: &AffineGain,
    cert: Option<&LyapunovCertificate>,
    plants: &[LpvPlant],
    scheduling: &SchedulingMap,
    ics: &[DVector<f64>],
    w_max: f64,
    n: usize,
    seed: u64,
) -> Result<Ensemble> {
    if !(w_max >= 0.0 && w_max.is_finite()) {
        return Err(Error::InvalidArgument("w_max must be finite and non-negative".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..plants.len()).flat_map(|s| (0..ics.len()).map(move |i| (s, i))).collect();
    let members: Vec<Member> = pairs
        .par_iter()
        .enumerate()
        .map(|(idx, &(s, i))| {
            let noise = if w_max == 0.0 {
                DisturbanceSource::Zero
            } else {
                DisturbanceSource::Uniform {
                    w_max,
                    seed: seeds::derive_seed(seed, "montecarlo", idx as u64),
                }
            };
            run_member(gain, cert, &plants[s], scheduling, &ics[i], &noise, n, s, i)
        })
        .collect();
    let stats = EnsembleStats {
        n_members: members.len(),
        n_diverged: members.iter().filter(|m| m.diverged).count(),
        max_final_norm: members.iter().map(|m| m.final_norm).fold(0.0, f64::max),
        decrease_violations: members.iter().filter_map(|m| m.decrease_violations).sum(),
    };
    Ok(Ensemble { members, stats })
}

#[allow(clippy::too_many_arguments)]
fn run_member(
    gain: &AffineGain,
    cert: Option<&LyapunovCertificate>,
    plant: &LpvPlant,
    scheduling: &SchedulingMap,
    x0: &DVector<f64>,
    noise: &DisturbanceSource,
    n: usize,
    system: usize,
    ic: usize,
) -> Member {
    match simulate(plant, Control::Gain(gain), scheduling, noise, x0, n) {
        Ok(traj) => {
            let final_norm = traj.x.last().map_or(0.0, |x| x.norm());
            let decrease_violations = match (cert, noise) {
                (Some(c), DisturbanceSource::Zero) => trajectory_decrease_audit(&traj, c).ok().map(|a| a.violations.len()),
                _ => None,
            };
            Member {
                system,
                ic,
                diverged: !(final_norm < DIVERGENCE_NORM),
                final_norm,
                trajectory: Some(traj),
                decrease_violations,
                error: None,
            }
        }
        Err(e) => Member {
            system,
            ic,
            trajectory: None,
            diverged: true,
            final_norm: f64::INFINITY,
            decrease_violations: None,
            error: Some(e.to_string()),
        },
    }
}

/// Writes `traj_s{system}_ic{ic}.csv` per member and `summary.json`.
pub fn write_ensemble(dir: &Path, ensemble: &Ensemble) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for m in &ensemble.members {
        if let Some(t) = &m.trajectory {
            let file = std::fs::File::create(dir.join(format!("traj_s{}_ic{}.csv", m.system, m.ic)))?;
            t.write_csv(std::io::BufWriter::new(file))?;
        }
    }
    #[derive(Serialize)]
    struct Row<'a> {
        system: usize,
        ic: usize,
        diverged: bool,
        final_norm: f64,
        decrease_violations: Option<usize>,
        error: &'a Option<String>,
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        stats: &'a EnsembleStats,
        members: Vec<Row<'a>>,
    }
    let summary = Summary {
        stats: &ensemble.stats,
        members: ensemble
            .members
            .iter()
            .map(|m| Row {
                system: m.system,
                ic: m.ic,
                diverged: m.diverged,
                final_norm: if m.final_norm.is_finite() { m.final_norm } else { f64::MAX },
                decrease_violations: m.decrease_violations,
                error: &m.error,
            })
            .collect(),
    };
    io::write_json(&dir.join("summary.json"), &summary)
}
