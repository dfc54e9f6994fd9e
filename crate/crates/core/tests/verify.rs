mod common;

use common::*;
use lpvdd::consistency::{center_system, sample_compatible_systems};
use lpvdd::data::Dims;
use lpvdd::lpv::{AffineGain, LpvPlant, SchedulingMap};
use lpvdd::synthesis::*;
use lpvdd::verify::*;
use nalgebra::DMatrix;

fn dims() -> Dims {
    Dims { n_x: 2, n_u: 1, n_p: 2 }
}

/// First seed whose random instance admits a BLF controller.
fn feasible_blf(w_max: f64) -> (Instance, SynthesisResult) {
    for seed in 0..20 {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, dims(), 12, 1.0, w_max);
        let res = synthesize_blf(&inst.consistency, &inst.polytope, &SynthesisSettings::default()).unwrap();
        if res.is_feasible() {
            return (inst, res);
        }
    }
    panic!("no feasible BLF instance among 20 seeds");
}

fn exogenous(inst: &Instance, r: &mut rand_chacha::ChaCha8Rng, n: usize) -> SchedulingMap {
    SchedulingMap::Exogenous((0..=n).map(|_| inst.polytope.sample_interior(r)).collect())
}

#[test]
fn feasible_results_certify_and_are_reproducible() {
    let (inst, res) = feasible_blf(0.05);
    let a = certify_decrease(&res, &inst.consistency, &inst.polytope, 60, 40, 3, CERTIFY_TOL).unwrap();
    assert!(a.passed, "{:?}", a.witness);
    assert_eq!(a.n_systems, 61);
    assert_eq!(a.n_points, 4 + 40);
    assert_eq!(a.n_checks, 61 * 44);
    let b = certify_decrease(&res, &inst.consistency, &inst.polytope, 60, 40, 3, CERTIFY_TOL).unwrap();
    assert_eq!(a, b);
}

#[test]
fn tampered_gain_yields_a_located_witness() {
    let (inst, mut res) = feasible_blf(0.05);
    let k = res.gain.as_ref().unwrap().stacked() * 10.0 + DMatrix::from_element(1, 6, 5.0);
    res.gain = Some(AffineGain::from_stacked(&k, 2).unwrap());
    let report = certify_decrease(&res, &inst.consistency, &inst.polytope, 20, 10, 4, CERTIFY_TOL).unwrap();
    assert!(!report.passed);
    let w = report.witness.unwrap();
    assert!(w.margin < -CERTIFY_TOL);
    assert!(w.system <= 20);
    assert!(inst.polytope.contains(&w.p, 1e-9));
    assert!(report.min_margin <= w.margin);
}

#[test]
fn noise_free_data_reduce_to_a_single_system() {
    let (inst, res) = feasible_blf(0.0);
    let report = certify_decrease(&res, &inst.consistency, &inst.polytope, 10, 5, 5, CERTIFY_TOL).unwrap();
    assert!(report.passed);
    let center = center_system(&inst.consistency).unwrap();
    assert!((center.stacked() - inst.plant.stacked()).norm() < 1e-9);
    for plant in sample_compatible_systems(&inst.consistency, 10, 5).unwrap() {
        assert!((plant.stacked() - center.stacked()).norm() < 1e-6);
    }
}

#[test]
fn certified_gains_have_stable_frozen_vertices() {
    let (inst, res) = feasible_blf(0.05);
    let gain = res.gain.as_ref().unwrap();
    let mut plants = vec![center_system(&inst.consistency).unwrap(), inst.plant.clone()];
    plants.extend(sample_compatible_systems(&inst.consistency, 20, 6).unwrap());
    for plant in &plants {
        for v in inst.polytope.vertices() {
            assert!(frozen_spectrum_diagnostic(plant, gain, v).unwrap() < 1.0);
        }
    }
}

#[test]
fn noise_free_closed_loops_decrease_monotonically() {
    let (inst, res) = feasible_blf(0.05);
    let mut r = rng(77);
    let sched = exogenous(&inst, &mut r, 30);
    let mut plants = vec![inst.plant.clone()];
    plants.extend(sample_compatible_systems(&inst.consistency, 15, 8).unwrap());
    let ics = unit_circle_ics(8);
    let e = closed_loop_montecarlo(res.gain.as_ref().unwrap(), res.lyapunov.as_ref(), &plants, &sched, &ics, 0.0, 30, 9).unwrap();
    assert_eq!(e.stats.n_members, 16 * 8);
    assert_eq!(e.stats.n_diverged, 0);
    assert_eq!(e.stats.decrease_violations, 0);
    assert!(e.members.iter().all(|m| m.decrease_violations == Some(0)));
    assert!(e.stats.max_final_norm < 1.0);
}

#[test]
fn noisy_closed_loops_stay_bounded_and_are_seeded() {
    let (inst, res) = feasible_blf(0.05);
    let mut r = rng(78);
    let sched = exogenous(&inst, &mut r, 40);
    let plants = vec![inst.plant.clone()];
    let ics = unit_circle_ics(4);
    let run = |seed| closed_loop_montecarlo(res.gain.as_ref().unwrap(), res.lyapunov.as_ref(), &plants, &sched, &ics, 0.01, 40, seed).unwrap();
    let a = run(10);
    assert_eq!(a.stats.n_diverged, 0);
    assert!(a.members.iter().all(|m| m.decrease_violations.is_none()));
    assert_eq!(a, run(10));
    assert_ne!(a, run(11));
}

#[test]
fn unstable_open_loop_diverges() {
    let plant = LpvPlant::new(vec![DMatrix::from_element(1, 1, 3.0)], DMatrix::zeros(1, 1)).unwrap();
    let gain = AffineGain::zeros(1, 1, 0);
    let sched = SchedulingMap::custom(0, |_| vec![]);
    let ics = vec![nalgebra::DVector::from_element(1, 1.0)];
    let e = closed_loop_montecarlo(&gain, None, &[plant], &sched, &ics, 0.0, 40, 0).unwrap();
    assert_eq!(e.stats.n_diverged, 1);
    assert!(closed_loop_montecarlo(&gain, None, &[], &sched, &ics, -1.0, 4, 0).is_err());
}

#[test]
fn ensembles_are_written_to_disk() {
    let (inst, res) = feasible_blf(0.05);
    let mut r = rng(79);
    let sched = exogenous(&inst, &mut r, 10);
    let e = closed_loop_montecarlo(res.gain.as_ref().unwrap(), None, std::slice::from_ref(&inst.plant), &sched, &unit_circle_ics(3), 0.0, 10, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_ensemble(dir.path(), &e).unwrap();
    for ic in 0..3 {
        let text = std::fs::read_to_string(dir.path().join(format!("traj_s0_ic{ic}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 1 + 11);
    }
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["stats"]["n_members"], 3);
    assert_eq!(summary["members"].as_array().unwrap().len(), 3);
}
