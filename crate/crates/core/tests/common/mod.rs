//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use lpvdd::consistency::{build_consistency_qmi, ConsistencyQmi};
use lpvdd::data::{build_dataset, energy_bound_from_noise, noise_model_from_energy_bound, noise_record, DataSet, Dims};
use lpvdd::lpv::{simulate, Control, DisturbanceSource, InputSource, LpvPlant, SchedulingMap, SchedulingPoint, SchedulingPolytope, Trajectory};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_vec<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

pub fn random_pd<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let a = gaussian(rng, n, n);
    &a * a.transpose() + DMatrix::identity(n, n) * 0.1
}

/// Plant with `A₀` scaled to spectral norm `a0_norm` and the scheduling
/// blocks to `ai_norm`.
pub fn random_plant<R: Rng>(rng: &mut R, dims: Dims, a0_norm: f64, ai_norm: f64) -> LpvPlant {
    let scaled = |m: DMatrix<f64>, s: f64| {
        let n = m.norm().max(1e-12);
        m * (s / n)
    };
    let mut a = vec![scaled(gaussian(rng, dims.n_x, dims.n_x), a0_norm)];
    for _ in 0..dims.n_p {
        a.push(scaled(gaussian(rng, dims.n_x, dims.n_x), ai_norm));
    }
    LpvPlant::new(a, gaussian(rng, dims.n_x, dims.n_u)).unwrap()
}

pub fn random_point<R: Rng>(rng: &mut R, delta: f64, n_p: usize) -> SchedulingPoint {
    SchedulingPoint((0..n_p).map(|_| rng.random_range(-delta..=delta)).collect())
}

pub struct Instance {
    pub plant: LpvPlant,
    pub trajectory: Trajectory,
    pub data: DataSet,
    pub consistency: ConsistencyQmi,
    pub polytope: SchedulingPolytope,
    pub w: DMatrix<f64>,
}

/// Open-loop data from `plant` with exogenous scheduling uniform on
/// `[−δ, δ]^{n_p}`, unit Gaussian inputs and `𝒰(−w_max, w_max)` noise.
pub fn instance_from_plant<R: Rng>(rng: &mut R, plant: LpvPlant, n_d: usize, delta: f64, w_max: f64) -> Instance {
    let (n_x, n_u, n_p) = (plant.n_x(), plant.n_u(), plant.n_p());
    let sched = SchedulingMap::Exogenous((0..n_d).map(|_| random_point(rng, delta, n_p)).collect());
    let input = InputSource::Replay {
        samples: (0..n_d).map(|_| gaussian_vec(rng, n_u)).collect(),
    };
    let noise = DisturbanceSource::Replay {
        samples: (0..n_d)
            .map(|_| DVector::from_fn(n_x, |_, _| if w_max > 0.0 { rng.random_range(-w_max..=w_max) } else { 0.0 }))
            .collect(),
    };
    let x0 = gaussian_vec(rng, n_x);
    let trajectory = simulate(&plant, Control::OpenLoop(&input), &sched, &noise, &x0, n_d).unwrap();
    let data = build_dataset(&trajectory).unwrap();
    let rec = noise_record(&trajectory);
    let model = noise_model_from_energy_bound(&energy_bound_from_noise(&rec), n_d).unwrap();
    let consistency = build_consistency_qmi(&data, &model).unwrap();
    let polytope = SchedulingPolytope::symmetric_box(&vec![delta; n_p]).unwrap();
    Instance {
        plant,
        trajectory,
        data,
        consistency,
        polytope,
        w: rec.w,
    }
}

pub fn random_instance<R: Rng>(rng: &mut R, dims: Dims, n_d: usize, delta: f64, w_max: f64) -> Instance {
    let plant = random_plant(rng, dims, 0.6, 0.3);
    instance_from_plant(rng, plant, n_d, delta, w_max)
}
