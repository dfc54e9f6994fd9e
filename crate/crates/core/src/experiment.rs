//! Configuration and pipeline for the two-state example: open-loop data
//! collection, synthesis over several scheduling ranges and the expected
//! feasibility table.

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::consistency::{build_consistency_qmi, ConsistencyQmi};
use crate::data::{
    build_dataset, energy_bound_from_noise, is_persistently_exciting, noise_model_from_energy_bound, noise_record, DataSet,
    EnergyBound, NoiseRecord,
};
use crate::error::{Error, Result};
use crate::lpv::{example_plant, simulate, Control, DisturbanceSource, InputSource, SchedulingPolytope, Trajectory};
use crate::seeds;
use crate::synthesis::{analyze_stability, synthesize_blf, synthesize_fbsp, synthesize_slf_baseline, Method, Status, SynthesisResult, SynthesisSettings};

/// Root seed of the shipped configuration.
pub const DEFAULT_SEED: u64 = 8;

/// Outcome table the example is expected to reproduce.
pub const EXPECTED_TABLE: [(Method, f64, Status); 4] = [
    (Method::Blf, 1.0, Status::Feasible),
    (Method::Blf, 5.0, Status::Feasible),
    (Method::Slf, 1.0, Status::Feasible),
    (Method::Slf, 5.0, Status::Infeasible),
];

pub fn expected_status(method: Method, delta: f64) -> Option<Status> {
    EXPECTED_TABLE
        .iter()
        .find(|(m, d, _)| *m == method && *d == delta)
        .map(|(_, _, s)| *s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Sampled compatible systems in addition to the ball center.
    pub n_systems: usize,
    /// Interior scheduling samples in addition to the vertices.
    pub n_p_samples: usize,
    pub tolerance: f64,
    /// Unit-circle initial conditions for the noise-free runs.
    pub n_ics: usize,
    pub horizon: usize,
    /// Disturbance bound for the noisy nominal run; 0 disables it.
    pub noisy_w_max: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            n_systems: 309,
            n_p_samples: 100,
            tolerance: crate::verify::CERTIFY_TOL,
            n_ics: 16,
            horizon: 40,
            noisy_w_max: 0.1,
        }
    }
}

/// One file drives a whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExampleConfig {
    pub seed: u64,
    /// Number of data samples.
    pub n_d: usize,
    /// Disturbance entries are `𝒰(−w_max, w_max)`.
    pub w_max: f64,
    /// Input entries are `𝒩(0, input_variance)`.
    pub input_variance: f64,
    /// Scheduling range `δ` of the map used while collecting data.
    pub data_delta: f64,
    /// Scheduling ranges `[−δ, δ]²` used for synthesis.
    pub deltas: Vec<f64>,
    pub methods: Vec<Method>,
    pub synthesis: SynthesisSettings,
    pub verify: VerifyConfig,
}

impl Default for ExampleConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            n_d: 8,
            w_max: 0.1,
            input_variance: 0.5,
            data_delta: 5.0,
            deltas: vec![1.0, 5.0],
            methods: vec![Method::Blf, Method::Slf],
            synthesis: SynthesisSettings::default(),
            verify: VerifyConfig::default(),
        }
    }
}

impl ExampleConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.n_d == 0 {
            return bad("n_d must be positive");
        }
        if !(self.w_max >= 0.0 && self.w_max.is_finite()) {
            return bad("w_max must be finite and non-negative");
        }
        if !(self.input_variance > 0.0 && self.input_variance.is_finite()) {
            return bad("input_variance must be positive");
        }
        if !(self.data_delta > 0.0 && self.data_delta.is_finite()) {
            return bad("data_delta must be positive");
        }
        if self.deltas.is_empty() || self.deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return bad("deltas must be a non-empty list of positive numbers");
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty");
        }
        if self.verify.horizon == 0 {
            return bad("verify.horizon must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedData {
    pub trajectory: Trajectory,
    pub dataset: DataSet,
    pub noise: NoiseRecord,
    pub energy_bound: EnergyBound,
    pub persistently_exciting: bool,
    pub rank: usize,
}

/// Simulates the example plant in open loop for `n_d` steps with
/// `x₀ ∼ 𝒩(0, I)`. Seeds: `x₀` from tag `"x0"`, inputs from `"input"`,
/// disturbance from `"disturbance"`, all under the root seed.
pub fn generate_data(cfg: &ExampleConfig) -> Result<GeneratedData> {
    cfg.validate()?;
    let (plant, scheduling, _) = example_plant(cfg.data_delta)?;
    let mut rng = seeds::rng(cfg.seed, "x0", 0);
    let x0 = DVector::from_fn(plant.n_x(), |_, _| StandardNormal.sample(&mut rng));
    let input = InputSource::Gaussian {
        variance: cfg.input_variance,
        seed: cfg.seed,
    };
    let noise = if cfg.w_max == 0.0 {
        DisturbanceSource::Zero
    } else {
        DisturbanceSource::Uniform {
            w_max: cfg.w_max,
            seed: cfg.seed,
        }
    };
    let trajectory = simulate(&plant, Control::OpenLoop(&input), &scheduling, &noise, &x0, cfg.n_d)?;
    let dataset = build_dataset(&trajectory)?;
    let (persistently_exciting, rank) = is_persistently_exciting(&dataset);
    let noise = noise_record(&trajectory);
    let energy_bound = energy_bound_from_noise(&noise);
    Ok(GeneratedData {
        trajectory,
        dataset,
        noise,
        energy_bound,
        persistently_exciting,
        rank,
    })
}

/// Consistency set from the data and the energy bound `Ω = WWᵀ`.
pub fn consistency_from(data: &GeneratedData) -> Result<ConsistencyQmi> {
    let model = noise_model_from_energy_bound(&data.energy_bound, data.dataset.n_d)?;
    build_consistency_qmi(&data.dataset, &model)
}

pub fn run_method(
    method: Method,
    c: &ConsistencyQmi,
    polytope: &SchedulingPolytope,
    settings: &SynthesisSettings,
) -> Result<SynthesisResult> {
    match method {
        Method::Blf => synthesize_blf(c, polytope, settings),
        Method::Slf => synthesize_slf_baseline(c, polytope, settings),
        Method::Fbsp => synthesize_fbsp(c, polytope, settings),
        Method::Analysis => analyze_stability(c, polytope, settings),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub method: Method,
    pub delta: f64,
    pub status: Status,
    pub expected: Option<Status>,
}

impl TableEntry {
    pub fn matches(&self) -> bool {
        self.expected.is_none_or(|e| e == self.status)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub persistently_exciting: bool,
    pub entries: Vec<TableEntry>,
    /// Every entry with an expectation matches it.
    pub matches_expected: bool,
}

#[derive(Debug, Clone)]
pub struct Reproduction {
    pub data: GeneratedData,
    pub consistency: ConsistencyQmi,
    /// `(δ, result)` in configuration order.
    pub results: Vec<(f64, SynthesisResult)>,
    pub manifest: Manifest,
}

/// Data collection followed by every configured method at every `δ`.
pub fn reproduce(cfg: &ExampleConfig) -> Result<Reproduction> {
    let data = generate_data(cfg)?;
    if !data.persistently_exciting {
        return Err(Error::InvalidArgument(format!(
            "data are not persistently exciting (rank {}); increase n_d",
            data.rank
        )));
    }
    let consistency = consistency_from(&data)?;
    let mut results = Vec::new();
    let mut entries = Vec::new();
    for &delta in &cfg.deltas {
        let polytope = SchedulingPolytope::symmetric_box(&[delta, delta])?;
        for &method in &cfg.methods {
            let r = run_method(method, &consistency, &polytope, &cfg.synthesis)?;
            entries.push(TableEntry {
                method,
                delta,
                status: r.status,
                expected: expected_status(method, delta),
            });
            results.push((delta, r));
        }
    }
    let manifest = Manifest {
        seed: cfg.seed,
        persistently_exciting: data.persistently_exciting,
        matches_expected: entries.iter().all(TableEntry::matches),
        entries,
    };
    Ok(Reproduction {
        data,
        consistency,
        results,
        manifest,
    })
}
