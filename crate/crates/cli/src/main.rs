//! `lpvdd`: config-driven runner for data collection, controller synthesis,
//! certification and the end-to-end two-state example.
//!
//! Exit codes: 0 success, 1 runtime or I/O error, 2 configuration error,
//! 3 data not persistently exciting, 4 some method Infeasible, 5 some method
//! Inconclusive, 6 certification failure, 7 outcome table deviates from the
//! expected one.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lpvdd::consistency::{build_consistency_qmi, sample_compatible_systems, ConsistencyQmi};
use lpvdd::data::{energy_bound_from_noise, is_persistently_exciting, noise_model_from_energy_bound, DataSet, NoiseRecord};
use lpvdd::experiment::{consistency_from, expected_status, generate_data, run_method, ExampleConfig, Manifest, TableEntry};
use lpvdd::io::{read_json, write_json};
use lpvdd::lpv::{example_plant, SchedulingPolytope};
use lpvdd::synthesis::{recover_controller, Method, Status, SynthesisResult};
use lpvdd::verify::{certify_decrease, closed_loop_montecarlo, unit_circle_ics, write_ensemble, CertificationReport, EnsembleStats};
use serde::Serialize;

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NOT_PE: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;
const EXIT_INCONCLUSIVE: u8 = 5;
const EXIT_CERTIFICATION: u8 = 6;
const EXIT_TABLE: u8 = 7;

#[derive(Parser)]
#[command(name = "lpvdd", version, about = "Data-driven LPV controller synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the example plant in open loop and write the data set.
    GenerateData(Common),
    /// Run the configured synthesis methods on the data set in `--out-dir`.
    Synthesize(Common),
    /// Certify the results in `--out-dir` and run closed-loop ensembles.
    Verify(Common),
    /// Generate, synthesize and verify, then compare with the expected table.
    ReproduceExample(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults apply to every missing key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for inputs and outputs.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Comma-separated methods (blf, slf, fbsp, analysis), overriding the configuration.
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<String>>,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

type Outcome<T> = Result<T, Failure>;

fn fail(code: u8, message: impl Display) -> Failure {
    Failure {
        code,
        message: message.to_string(),
    }
}

fn runtime<E: Display>(e: E) -> Failure {
    fail(EXIT_RUNTIME, e)
}

fn load_config(common: &Common) -> Outcome<ExampleConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", path.display())))?
        }
        None => ExampleConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(methods) = &common.method {
        cfg.methods = methods
            .iter()
            .map(|m| m.parse::<Method>())
            .collect::<Result<_, _>>()
            .map_err(|e| fail(EXIT_CONFIG, e))?;
    }
    cfg.validate().map_err(|e| fail(EXIT_CONFIG, e))?;
    Ok(cfg)
}

fn result_path(dir: &Path, method: Method, delta: f64) -> PathBuf {
    dir.join(format!("result_{}_d{delta}.json", method.name()))
}

fn polytope(delta: f64) -> Outcome<SchedulingPolytope> {
    SchedulingPolytope::symmetric_box(&[delta, delta]).map_err(runtime)
}

fn generate(cfg: &ExampleConfig, dir: &Path) -> Outcome<()> {
    std::fs::create_dir_all(dir).map_err(runtime)?;
    let data = generate_data(cfg).map_err(runtime)?;
    let file = std::fs::File::create(dir.join("trajectory.csv")).map_err(runtime)?;
    data.trajectory.write_csv(std::io::BufWriter::new(file)).map_err(runtime)?;
    write_json(&dir.join("dataset.json"), &data.dataset).map_err(runtime)?;
    write_json(&dir.join("noise.json"), &data.noise).map_err(runtime)?;
    write_json(&dir.join("energy_bound.json"), &data.energy_bound).map_err(runtime)?;
    let text = toml::to_string(cfg).map_err(runtime)?;
    std::fs::write(dir.join("config.toml"), text).map_err(runtime)?;
    let needed = data.dataset.dims.regressor();
    println!(
        "data: N_d = {}, rank Φ = {} of {needed}, persistently exciting: {}",
        data.dataset.n_d, data.rank, data.persistently_exciting
    );
    if !data.persistently_exciting {
        return Err(fail(
            EXIT_NOT_PE,
            format!("data are not persistently exciting (rank {} < {needed}); increase n_d", data.rank),
        ));
    }
    Ok(())
}

fn load_consistency(dir: &Path) -> Outcome<ConsistencyQmi> {
    let dataset: DataSet = read_json(&dir.join("dataset.json")).map_err(runtime)?;
    let noise: NoiseRecord = read_json(&dir.join("noise.json")).map_err(runtime)?;
    let (pe, rank) = is_persistently_exciting(&dataset);
    if !pe {
        return Err(fail(EXIT_NOT_PE, format!("data are not persistently exciting (rank {rank}); increase n_d")));
    }
    let model = noise_model_from_energy_bound(&energy_bound_from_noise(&noise), dataset.n_d).map_err(runtime)?;
    build_consistency_qmi(&dataset, &model).map_err(runtime)
}

fn synthesize(cfg: &ExampleConfig, dir: &Path, c: &ConsistencyQmi) -> Outcome<Vec<TableEntry>> {
    let mut entries = Vec::new();
    for &delta in &cfg.deltas {
        let poly = polytope(delta)?;
        for &method in &cfg.methods {
            let res = run_method(method, c, &poly, &cfg.synthesis).map_err(runtime)?;
            write_json(&result_path(dir, method, delta), &res).map_err(runtime)?;
            println!(
                "{:<8} δ = {delta:<6} {:?}{}",
                method.name(),
                res.status,
                res.reason.as_deref().map(|r| format!(" ({r})")).unwrap_or_default()
            );
            entries.push(TableEntry {
                method,
                delta,
                status: res.status,
                expected: expected_status(method, delta),
            });
        }
    }
    Ok(entries)
}

/// Infeasible outranks Inconclusive: it is a definite answer.
fn status_exit(entries: &[TableEntry]) -> Outcome<()> {
    if entries.iter().any(|e| e.status == Status::Infeasible) {
        return Err(fail(EXIT_INFEASIBLE, "at least one method is infeasible"));
    }
    if entries.iter().any(|e| e.status == Status::Inconclusive) {
        return Err(fail(EXIT_INCONCLUSIVE, "at least one method is inconclusive"));
    }
    Ok(())
}

#[derive(Serialize)]
struct SummaryRow {
    method: &'static str,
    delta: f64,
    status: Status,
    certified: Option<bool>,
    min_margin: Option<f64>,
    n_checks: Option<usize>,
    max_final_norm: Option<f64>,
    n_diverged: Option<usize>,
    decrease_violations: Option<usize>,
    noisy_max_final_norm: Option<f64>,
}

fn verify(cfg: &ExampleConfig, dir: &Path, c: &ConsistencyQmi) -> Outcome<bool> {
    let v = &cfg.verify;
    let mut rows = Vec::new();
    let mut all_passed = true;
    let mut found = 0;
    for &delta in &cfg.deltas {
        let poly = polytope(delta)?;
        let (nominal, sched, _) = example_plant(delta).map_err(runtime)?;
        for &method in &cfg.methods {
            let path = result_path(dir, method, delta);
            if !path.exists() {
                continue;
            }
            found += 1;
            let mut res: SynthesisResult = read_json(&path).map_err(runtime)?;
            let mut row = SummaryRow {
                method: method.name(),
                delta,
                status: res.status,
                certified: None,
                min_margin: None,
                n_checks: None,
                max_final_norm: None,
                n_diverged: None,
                decrease_violations: None,
                noisy_max_final_norm: None,
            };
            if res.is_feasible() {
                // The stored gain is not trusted: recompute it from (F, G).
                let (gain, lyap) = recover_controller(&res).map_err(runtime)?;
                res.gain = (method != Method::Analysis).then_some(gain.clone());
                res.lyapunov = Some(lyap);
                let report: CertificationReport =
                    certify_decrease(&res, c, &poly, v.n_systems, v.n_p_samples, cfg.seed, v.tolerance).map_err(runtime)?;
                let tag = format!("{}_d{delta}", method.name());
                write_json(&dir.join(format!("certification_{tag}.json")), &report).map_err(runtime)?;
                all_passed &= report.passed;
                println!(
                    "{:<8} δ = {delta:<6} certification {} (min margin {:.3e} over {} checks)",
                    method.name(),
                    if report.passed { "passed" } else { "FAILED" },
                    report.min_margin,
                    report.n_checks
                );
                if let Some(w) = &report.witness {
                    println!("         witness: system {} at p = {:?}, eigenvalue {:.3e}", w.system, w.p.0, w.eigenvalue);
                }
                let mut plants = vec![nominal.clone()];
                plants.extend(sample_compatible_systems(c, v.n_systems, cfg.seed).map_err(runtime)?);
                let ics = unit_circle_ics(v.n_ics);
                let ens = closed_loop_montecarlo(&gain, res.lyapunov.as_ref(), &plants, &sched, &ics, 0.0, v.horizon, cfg.seed)
                    .map_err(runtime)?;
                write_ensemble(&dir.join(format!("ensemble_{tag}")), &ens).map_err(runtime)?;
                let stats: &EnsembleStats = &ens.stats;
                row.certified = Some(report.passed);
                row.min_margin = Some(report.min_margin);
                row.n_checks = Some(report.n_checks);
                row.max_final_norm = Some(stats.max_final_norm);
                row.n_diverged = Some(stats.n_diverged);
                row.decrease_violations = Some(stats.decrease_violations);
                if v.noisy_w_max > 0.0 {
                    let noisy = closed_loop_montecarlo(&gain, None, std::slice::from_ref(&nominal), &sched, &ics, v.noisy_w_max, v.horizon, cfg.seed)
                        .map_err(runtime)?;
                    write_ensemble(&dir.join(format!("ensemble_{tag}_noisy")), &noisy).map_err(runtime)?;
                    row.noisy_max_final_norm = Some(noisy.stats.max_final_norm);
                }
            } else {
                println!("{:<8} δ = {delta:<6} {:?}: nothing to certify", method.name(), res.status);
            }
            rows.push(row);
        }
    }
    if found == 0 {
        return Err(runtime(format!("no result files in {}; run `synthesize` first", dir.display())));
    }
    write_json(&dir.join("verify_summary.json"), &rows).map_err(runtime)?;
    Ok(all_passed)
}

fn run(command: Command) -> Outcome<()> {
    match command {
        Command::GenerateData(common) => {
            let cfg = load_config(&common)?;
            generate(&cfg, &common.out_dir)
        }
        Command::Synthesize(common) => {
            let cfg = load_config(&common)?;
            let c = load_consistency(&common.out_dir)?;
            let entries = synthesize(&cfg, &common.out_dir, &c)?;
            status_exit(&entries)
        }
        Command::Verify(common) => {
            let cfg = load_config(&common)?;
            let c = load_consistency(&common.out_dir)?;
            if verify(&cfg, &common.out_dir, &c)? {
                Ok(())
            } else {
                Err(fail(EXIT_CERTIFICATION, "certification failed"))
            }
        }
        Command::ReproduceExample(common) => {
            let cfg = load_config(&common)?;
            let dir = &common.out_dir;
            generate(&cfg, dir)?;
            let data = generate_data(&cfg).map_err(runtime)?;
            let c = consistency_from(&data).map_err(runtime)?;
            let entries = synthesize(&cfg, dir, &c)?;
            let certified = verify(&cfg, dir, &c)?;
            let manifest = Manifest {
                seed: cfg.seed,
                persistently_exciting: data.persistently_exciting,
                matches_expected: entries.iter().all(TableEntry::matches),
                entries,
            };
            write_json(&dir.join("manifest.json"), &manifest).map_err(runtime)?;
            for e in &manifest.entries {
                let expected = e.expected.map(|s| format!("{s:?}")).unwrap_or_else(|| "-".into());
                println!(
                    "table {:<8} δ = {:<6} {:<12} expected {expected:<12} {}",
                    e.method.name(),
                    e.delta,
                    format!("{:?}", e.status),
                    if e.matches() { "ok" } else { "DEVIATES" }
                );
            }
            if !certified {
                return Err(fail(EXIT_CERTIFICATION, "certification failed"));
            }
            if !manifest.matches_expected {
                return Err(fail(EXIT_TABLE, "outcome table deviates from the expected table"));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("lpvdd: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
