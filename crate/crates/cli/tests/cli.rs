use std::path::Path;
use std::process::{Command, Output};

fn lpvdd(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpvdd"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.in.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_data_writes_files_and_reports_pe() {
    let dir = tempfile::tempdir().unwrap();
    let out = lpvdd(&["generate-data"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("persistently exciting: true"));
    for f in ["trajectory.csv", "dataset.json", "noise.json", "energy_bound.json", "config.toml"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    assert_eq!(json(&dir.path().join("dataset.json"))["n_d"], 8);
}

#[test]
fn too_few_samples_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "n_d = 7\n");
    let out = lpvdd(&["generate-data", "--config", &cfg], dir.path());
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("increase n_d"));
}

#[test]
fn zero_noise_gives_zero_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "w_max = 0.0\n");
    assert_eq!(code(&lpvdd(&["generate-data", "--config", &cfg], dir.path())), 0);
    let noise = json(&dir.path().join("noise.json"));
    let data = noise["w"]["data"].as_array().unwrap();
    assert!(!data.is_empty() && data.iter().all(|v| v.as_f64() == Some(0.0)));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for text in ["n_d = \"eight\"\n", "unknown_key = 1\n", "deltas = []\n", "w_max = -1.0\n"] {
        let cfg = config(dir.path(), text);
        assert_eq!(code(&lpvdd(&["generate-data", "--config", &cfg], dir.path())), 2, "{text}");
    }
    assert_eq!(code(&lpvdd(&["generate-data", "--method", "lqr"], dir.path())), 2);
    assert_eq!(code(&lpvdd(&["generate-data", "--config", "/nonexistent.toml"], dir.path())), 2);
}

#[test]
fn synthesis_exit_codes_follow_the_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "deltas = [5.0]\n");
    // Default seed: BLF at δ = 5 is feasible.
    assert_eq!(code(&lpvdd(&["generate-data"], dir.path())), 0);
    assert_eq!(code(&lpvdd(&["synthesize", "--config", &cfg, "--method", "blf"], dir.path())), 0);
    let res = json(&dir.path().join("result_blf_d5.json"));
    assert_eq!(res["status"], "Feasible");
    assert_eq!(res["certified"], true);

    // Seed 9: the baseline is infeasible at δ = 5.
    let other = tempfile::tempdir().unwrap();
    assert_eq!(code(&lpvdd(&["generate-data", "--seed", "9"], other.path())), 0);
    let out = lpvdd(&["synthesize", "--config", &cfg, "--seed", "9", "--method", "slf"], other.path());
    assert_eq!(code(&out), 4);
    assert_eq!(json(&other.path().join("result_slf_d5.json"))["status"], "Infeasible");
}

#[test]
fn synthesis_requires_data() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&lpvdd(&["synthesize"], dir.path())), 1);
}

#[test]
fn tiny_scheduling_range_is_feasible_for_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "deltas = [0.01]\n");
    assert_eq!(code(&lpvdd(&["generate-data"], dir.path())), 0);
    let out = lpvdd(&["synthesize", "--config", &cfg, "--method", "blf,slf,fbsp,analysis"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn verify_certifies_and_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "deltas = [5.0]\n[verify]\nn_systems = 40\nn_p_samples = 20\nn_ics = 4\n");
    assert_eq!(code(&lpvdd(&["generate-data"], dir.path())), 0);
    assert_eq!(code(&lpvdd(&["synthesize", "--config", &cfg, "--method", "blf"], dir.path())), 0);
    let out = lpvdd(&["verify", "--config", &cfg, "--method", "blf"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report = json(&dir.path().join("certification_blf_d5.json"));
    assert_eq!(report["passed"], true);
    assert_eq!(report["n_systems"], 41);
    assert!(dir.path().join("ensemble_blf_d5/traj_s0_ic0.csv").exists());
    assert!(dir.path().join("ensemble_blf_d5/summary.json").exists());
    assert!(dir.path().join("verify_summary.json").exists());

    // Scale G by 10 in the result file.
    let path = dir.path().join("result_blf_d5.json");
    let mut res = json(&path);
    for v in res["g"]["data"].as_array_mut().unwrap() {
        *v = serde_json::json!(v.as_f64().unwrap() * 10.0);
    }
    std::fs::write(&path, serde_json::to_string(&res).unwrap()).unwrap();
    let out = lpvdd(&["verify", "--config", &cfg, "--method", "blf"], dir.path());
    assert_eq!(code(&out), 6);
    assert!(String::from_utf8_lossy(&out.stdout).contains("witness"));
    assert_eq!(json(&dir.path().join("certification_blf_d5.json"))["passed"], false);
}

#[test]
fn verify_without_samples_checks_the_nominal_system_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "deltas = [1.0]\n[verify]\nn_systems = 0\nn_p_samples = 5\nn_ics = 2\nnoisy_w_max = 0.0\n");
    assert_eq!(code(&lpvdd(&["generate-data"], dir.path())), 0);
    assert_eq!(code(&lpvdd(&["synthesize", "--config", &cfg, "--method", "blf"], dir.path())), 0);
    assert_eq!(code(&lpvdd(&["verify", "--config", &cfg, "--method", "blf"], dir.path())), 0);
    let report = json(&dir.path().join("certification_blf_d1.json"));
    assert_eq!(report["n_systems"], 1);
    assert_eq!(report["n_checks"], 4 + 5);
    assert!(!dir.path().join("ensemble_blf_d1_noisy").exists());
}

fn without_timing(mut v: serde_json::Value) -> serde_json::Value {
    v.as_object_mut().unwrap().remove("timing");
    v
}

#[test]
fn reproduce_example_is_deterministic_and_reports_the_table() {
    let cfg_text = "[verify]\nn_systems = 20\nn_p_samples = 10\nn_ics = 4\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config(a.path(), cfg_text);
    let out_a = lpvdd(&["reproduce-example", "--config", &cfg], a.path());
    let out_b = lpvdd(&["reproduce-example", "--config", &cfg], b.path());
    // The default seed deviates from the expected table in one cell.
    assert_eq!(code(&out_a), 7, "{}", String::from_utf8_lossy(&out_a.stderr));
    assert_eq!(code(&out_b), 7);
    let manifest = json(&a.path().join("manifest.json"));
    assert_eq!(manifest["matches_expected"], false);
    assert_eq!(manifest["entries"].as_array().unwrap().len(), 4);
    for f in ["dataset.json", "noise.json", "manifest.json", "certification_blf_d5.json", "trajectory.csv", "ensemble_blf_d5/summary.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
    for f in ["result_blf_d1.json", "result_blf_d5.json", "result_slf_d1.json", "result_slf_d5.json"] {
        assert_eq!(without_timing(json(&a.path().join(f))), without_timing(json(&b.path().join(f))), "{f} differs");
    }
}

#[test]
fn shipped_config_matches_the_defaults() {
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.toml");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&lpvdd(&["generate-data", "--config", shipped.to_str().unwrap()], a.path())), 0);
    assert_eq!(code(&lpvdd(&["generate-data"], b.path())), 0);
    assert_eq!(
        std::fs::read_to_string(a.path().join("config.toml")).unwrap(),
        std::fs::read_to_string(b.path().join("config.toml")).unwrap()
    );
}
