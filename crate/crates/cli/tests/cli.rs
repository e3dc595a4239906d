use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn brickwall(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brickwall")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = brickwall(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn csv_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn simulate_channel_writes_schema_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&["simulate", "--n", "2", "--initial", "1+", "--gamma-t", "0:0.6:0.2", "--backend", "channel", "--out", out]);
    let lines = csv_lines(&dir.path().join("series.csv"));
    assert_eq!(lines[0], "gamma_t,k,observable,method,value,std");
    // 4 times × (2 emitters + total) × 1 method.
    assert_eq!(lines.len() - 1, 4 * 3);
    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&first[..4], &["0.0", "1", "q0", "channel"]);
    assert!((first[4].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["n"], 2);
    assert_eq!(manifest["points"].as_array().unwrap().len(), 4);
}

#[test]
fn simulate_from_config_file_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "n = 2\ninitial = \"10\"\ngamma_t = [0.2, 0.8]\nbackend = \"shots\"\nshots = 300\nbootstrap_resamples = 10\nseed = 4\n",
    )
    .unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        ok(&["simulate", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap()]);
    }
    assert_eq!(csv_lines(&a.join("series.csv")), csv_lines(&b.join("series.csv")));
    let other = dir.path().join("c");
    ok(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "5", "--out", other.to_str().unwrap()]);
    assert_ne!(csv_lines(&a.join("series.csv")), csv_lines(&other.join("series.csv")));
}

#[test]
fn auto_k_beyond_range_is_rejected() {
    let out = brickwall(&["simulate", "--n", "1", "--gamma-t", "2.5", "--backend", "channel", "--out", "/nonexistent/x"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fixed k"));
    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "--n", "1", "--gamma-t", "2.5", "--k", "5", "--backend", "channel", "--out", dir.path().to_str().unwrap()]);
}

#[test]
fn large_chain_prints_provenance_note() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&[
        "simulate",
        "--n",
        "8",
        "--gamma-t",
        "0.3",
        "--backend",
        "mps",
        "--trajectories",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("extrapolated"));
}

#[test]
fn custom_noise_and_mitigate() {
    let dir = tempfile::tempdir().unwrap();
    let noise = dir.path().join("noise.toml");
    fs::write(&noise, "p_depol_2q = 0.004\np_depol_1q = 0.0005\np_readout_flip = 0.01\n").unwrap();
    let run = dir.path().join("run");
    ok(&[
        "simulate",
        "--n",
        "2",
        "--initial",
        "11",
        "--gamma-t",
        "0.5",
        "--backend",
        "shots",
        "--variant",
        "dynamic",
        "--shots",
        "400",
        "--noise",
        &format!("custom:{}", noise.display()),
        "--out",
        run.to_str().unwrap(),
    ]);
    let settings = dir.path().join("mitigation.toml");
    fs::write(
        &settings,
        "training_shots = 200\n[zne]\nlambdas = [1.3, 1.6, 2.0, 2.3]\nn_random_foldings = 1\nextrapolators = [\"linear\", \"constrained_for_l1\"]\n[cdr]\nn_training = 6\nbiases = [{ kind = \"inverse\", epsilon = 1e-6 }]\n",
    )
    .unwrap();
    ok(&["mitigate", "--run", run.to_str().unwrap(), "--config", settings.to_str().unwrap()]);
    let lines = csv_lines(&run.join("mitigated.csv"));
    for method in ["shots_raw", "zne_linear", "zne_cfor_l1", "cdr_inverse"] {
        assert_eq!(lines.iter().filter(|l| l.contains(&format!(",{method},"))).count(), 3, "{method}");
    }
    assert!(run.join("mitigation.json").exists());
}

#[test]
fn mitigate_rejects_noiseless_run() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    ok(&["simulate", "--n", "1", "--gamma-t", "0.5", "--backend", "shots", "--shots", "50", "--out", run.to_str().unwrap()]);
    assert!(!brickwall(&["mitigate", "--run", run.to_str().unwrap()]).status.success());
}

#[test]
fn trotter_study_and_depth_scan() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&["trotter-study", "--n", "3", "--k", "1,2", "--states", "2", "--gamma-t", "0.5,1.0", "--out", out]);
    let lines = csv_lines(&dir.path().join("trotter.csv"));
    assert_eq!(lines.len() - 1, 2 * 2 * 2);
    assert!(lines[1..].iter().all(|l| l.contains(",trotter_error,")));
    assert!(!brickwall(&["trotter-study", "--n", "7", "--out", out]).status.success());

    ok(&["depth-scan", "--n", "4,6", "--out", out]);
    let lines = csv_lines(&dir.path().join("depth.csv"));
    assert_eq!(lines[0], "n,variant,k,logical,native");
    assert_eq!(lines.len() - 1, 2 * 3);
}

#[test]
fn circuit_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    ok(&["circuit", "dump", "--n", "3", "--variant", "hardware_aware", "--transpile", "--out", path.to_str().unwrap()]);
    let c = brickwall::circuit::deserialize(&fs::read(&path).unwrap()).unwrap();
    // q0 q1 a0 q2 a1
    assert_eq!(c.num_qubits, 5);
    assert!(c.count_ops().contains_key("cz"));
    assert!(!brickwall(&["circuit", "dump", "--n", "2", "--initial", "1"]).status.success());
}

#[test]
fn unknown_config_key_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "n = 1\ninitial = \"1\"\ngamma_t = [0.1]\nbogus = true\n").unwrap();
    let out = brickwall(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}
