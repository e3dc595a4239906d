//! End-to-end acceptance criteria A1–A10. Each test prints one PASS/FAIL line
//! with the measured quantities before asserting.

use std::time::Instant;

use brickwall::channels::{branch_equivalent, channel_from_circuit, conjoined_kraus_computational, KrausChannel};
use brickwall::circuit::{build_dissipative_block_dynamic, build_dissipative_block_hw, build_dissipative_block_static};
use brickwall::experiment::{
    channel_evolve, channel_populations, depth_scan, exact_populations, run_experiment, shot_circuit, trotter_study, Backend,
    DepthRow, ExperimentConfig, InitialState, KPolicy, NoiseSpec,
};
use brickwall::linalg::{c, ComplexMatrix};
use brickwall::mitigation::{
    bootstrap, cdr_fit_and_correct, constrained_richardson_l1, fold_random, zne_estimate, BootstrapEstimate, CdrConfig,
    CliffordBias, Extrapolator,
};
use brickwall::mps::{run_mctebd, MpsState};
use brickwall::reference::{analytic_single_qubit, build_chain_spec, integrate, DensityMatrix, SpecMode};
use brickwall::shots::{counts_to_populations, run_shots, shot_rng, Counts, NoiseModel};
use brickwall::{ChainParams, DerivedRates, Variant};
use rand::Rng;

fn report(id: &str, pass: bool, detail: String, started: Instant) {
    println!("{id} {} ({detail}; {:.1} s)", if pass { "PASS" } else { "FAIL" }, started.elapsed().as_secs_f64());
    assert!(pass, "{id} failed: {detail}");
}

fn random_qubit_state(rng: &mut impl Rng) -> DensityMatrix {
    let a = ComplexMatrix::from_fn(2, 2, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let m = a.matmul(&a.dagger());
    let tr = m.trace();
    DensityMatrix::new(m.scale(tr.inv())).unwrap()
}

/// Unit time slice with rates chosen to hit the requested probabilities.
fn rates_for(pp: f64, pm: f64) -> DerivedRates {
    DerivedRates { gamma_plus: -(1.0 - pp).ln(), gamma_minus: -(1.0 - pm).ln() }
}

fn choi_diff(a: &KrausChannel, b: &KrausChannel) -> f64 {
    a.choi().max_abs_diff(&b.choi())
}

#[test]
fn a1_single_qubit_decay() {
    let started = Instant::now();
    let params = ChainParams::paper_defaults(1);
    let mut rng = shot_rng(11, 0);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let rho0 = random_qubit_state(&mut rng);
        let gt = rng.gen_range(0.0..2.0);
        let t = params.time_from_gamma_t(gt).unwrap();
        let k = rng.gen_range(1..4);
        let got = channel_evolve(&params, Variant::Static, rho0.matrix(), t, k).unwrap();
        let want = analytic_single_qubit(params.gamma, params.omega, &rho0, t).unwrap();
        worst = worst.max(got.max_abs_diff(&want));
    }
    let shots = 20_000;
    let mut worst_sigma = 0.0f64;
    for (init, gt) in [("1", 0.3), ("1", 1.2), ("+", 0.7), ("+", 2.0)] {
        let init: InitialState = init.parse().unwrap();
        let (circ, layout) = shot_circuit(&params, &init, gt, 1, Variant::Static, false).unwrap();
        let counts = run_shots(&circ, &layout.system, shots, None, 5).unwrap();
        let (p, _) = counts_to_populations(&counts, 1).unwrap();
        let p0 = init.density().unwrap().get(1, 1).re;
        let want = p0 * (-gt).exp();
        let sigma = (want * (1.0 - want) / shots as f64).sqrt();
        worst_sigma = worst_sigma.max((p[0] - want).abs() / sigma);
    }
    let elapsed = started.elapsed().as_secs_f64();
    report(
        "A1",
        worst <= 1e-10 && worst_sigma <= 4.0 && elapsed < 1.0,
        format!("channel max |Δρ| = {worst:.2e}, shots max deviation = {worst_sigma:.2} σ"),
        started,
    );
}

#[test]
fn a2_block_channels_equal_conjoined_channel() {
    let started = Instant::now();
    let mut rng = shot_rng(12, 0);
    let (mut choi_err, mut pop_err) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let (pp, pm) = (rng.gen_range(0.0..0.999), rng.gen_range(0.0..0.999));
        let rates = rates_for(pp, pm);
        let (pp, pm) = rates.probabilities(1.0).unwrap();
        let want = conjoined_kraus_computational(pp, pm).unwrap();
        let st = build_dissipative_block_static(&rates, 1.0, [0, 1], [2, 3]).unwrap();
        choi_err = choi_err.max(choi_diff(&channel_from_circuit(&st, &[0, 1], &[2, 3]).unwrap(), &want));
        let pop = want.population_map();
        let dy = build_dissipative_block_dynamic(&rates, 1.0, [0, 1], [2, 3]).unwrap();
        let hw = build_dissipative_block_hw(&rates, 1.0, [0, 1], 2).unwrap();
        for ch in [channel_from_circuit(&dy, &[0, 1], &[2, 3]).unwrap(), channel_from_circuit(&hw, &[0, 1], &[2]).unwrap()] {
            let m = ch.population_map();
            for i in 0..4 {
                for j in 0..4 {
                    pop_err = pop_err.max((m[i][j] - pop[i][j]).abs());
                }
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    report(
        "A2",
        choi_err <= 1e-9 && pop_err <= 1e-9 && elapsed < 5.0,
        format!("static Choi error = {choi_err:.2e}, dynamic/hardware population-map error = {pop_err:.2e}"),
        started,
    );
}

#[test]
fn a3_diagonal_approximation() {
    let started = Instant::now();
    let params = ChainParams::paper_defaults(3);
    let grid: Vec<f64> = (0..=36).map(|i| params.time_from_gamma_t(0.05 * i as f64).unwrap()).collect();
    let rho0 = DensityMatrix::from_bits(&[0, 1, 1]);
    let full = integrate(&build_chain_spec(&params, SpecMode::Full).unwrap(), &rho0, &grid).unwrap();
    let diag = integrate(&build_chain_spec(&params, SpecMode::DiagonalOnly).unwrap(), &rho0, &grid).unwrap();
    let (mut small, mut large) = (0.0f64, 0.0f64);
    for (f, d) in full.iter().zip(&diag) {
        for j in [3, 6, 7] {
            small = small.max((f.get(j, j).re - d.get(j, j).re).abs());
        }
        for j in [1, 2, 4] {
            large = large.max((f.get(j, j).re - d.get(j, j).re).abs());
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    report(
        "A3",
        small < 1e-5 && large < 5e-2 && elapsed < 10.0,
        format!("max |Δρ| on 3,6,7 = {small:.2e}, on 1,2,4 = {large:.2e}"),
        started,
    );
}

#[test]
fn a4_trotter_study() {
    let started = Instant::now();
    let params = ChainParams::paper_defaults(6);
    let grid: Vec<f64> = (1..=18).map(|i| 0.1 * i as f64).collect();
    let study = trotter_study(&params, &[1, 2, 3], 10, &grid, SpecMode::DiagonalOnly, 2024).unwrap();
    let mut monotone = true;
    for ti in 0..grid.len() {
        for e in [&study.error_excited, &study.error_ground] {
            monotone &= e[1][ti] < e[0][ti] && e[2][ti] < e[1][ti];
        }
    }
    let k3 = study.error_excited[2][grid.len() - 1];
    let full = trotter_study(&params, &[3], 10, &[1.8], SpecMode::Full, 2024).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    report(
        "A4",
        monotone && k3 <= 0.02 && elapsed < 300.0,
        format!(
            "monotone in k = {monotone}, k=3 |1⟩ error at γ̃t=1.8 = {k3:.4} (against the full generator {:.4})",
            full.error_excited[0][0]
        ),
        started,
    );
}

#[test]
fn a5_four_emitter_shots() {
    let started = Instant::now();
    let mut cfg = ExperimentConfig::new(4, "0101".parse().unwrap(), (1..=9).map(|i| 0.2 * i as f64).collect());
    cfg.backend = Backend::Shots;
    cfg.k = KPolicy::Fixed(10);
    cfg.shots = 20_000;
    cfg.bootstrap_resamples = 50;
    cfg.seed = 7;
    let out = run_experiment(&cfg).unwrap();
    let params = cfg.params().unwrap();
    let exact = exact_populations(&params, &cfg.initial, &cfg.gamma_t, SpecMode::DiagonalOnly).unwrap();
    let mut worst = 0.0f64;
    for (ti, &gt) in cfg.gamma_t.iter().enumerate() {
        for q in 0..4 {
            let want = exact[ti][q];
            let sigma = (want * (1.0 - want) / cfg.shots as f64).sqrt().max(1e-12);
            let got = out.series.get(gt, &format!("q{q}"), "shots_raw").unwrap().value;
            worst = worst.max((got - want).abs() / sigma);
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    report("A5", worst <= 4.0 && elapsed < 120.0, format!("max deviation = {worst:.2} σ"), started);
}

#[test]
fn a6_mps_trajectories() {
    let started = Instant::now();
    let params = ChainParams::paper_defaults(6);
    let bits = [1u8, 0, 1, 1, 0, 1];
    let init = InitialState::from_bits(&bits);
    let grid: Vec<f64> = (1..=9).map(|i| 0.2 * i as f64).collect();
    let exact = exact_populations(&params, &init, &grid, SpecMode::Full).unwrap();
    let (mut sq, mut count, mut chi_diff) = (0.0, 0usize, 0.0f64);
    for (ti, &gt) in grid.iter().enumerate() {
        let t = params.time_from_gamma_t(gt).unwrap();
        let k = KPolicy::default().steps(gt).unwrap();
        let a = run_mctebd(&params, t, k, &bits, 50, 1e-10, 100, 1000 * ti as u64).unwrap();
        let b = run_mctebd(&params, t, k, &bits, 100, 1e-10, 100, 1000 * ti as u64).unwrap();
        for q in 0..6 {
            sq += (a.mean[q] - exact[ti][q]).powi(2);
            count += 1;
            chi_diff = chi_diff.max((a.mean[q] - b.mean[q]).abs());
        }
    }
    let rmse = (sq / count as f64).sqrt();

    let smoke = Instant::now();
    let big = ChainParams::paper_defaults(50);
    let mut bits50 = vec![1u8; 50];
    for i in (0..50).step_by(10).chain((5..50).step_by(10)).chain((3..50).step_by(10)) {
        bits50[i] = 0;
    }
    let t = big.time_from_gamma_t(0.45).unwrap();
    let r1 = run_mctebd(&big, t, 1, &bits50, 50, 1e-10, 4, 99).unwrap();
    let r2 = run_mctebd(&big, t, 1, &bits50, 50, 1e-10, 4, 99).unwrap();
    let smoke_ok = r1 == r2
        && r1.mean.iter().all(|p| (0.0..=1.0).contains(p))
        && r1.total_mean <= 35.0 + 1e-9
        && r1.max_bond <= 50
        && MpsState::product(&bits50, 50, 1e-10).unwrap().norm() == 1.0;
    let elapsed = started.elapsed().as_secs_f64();
    report(
        "A6",
        rmse <= 0.05 && chi_diff < 1e-3 && smoke_ok && elapsed < 600.0,
        format!(
            "RMSE = {rmse:.4}, χ=50 vs χ=100 max diff = {chi_diff:.1e}, n=50 smoke ok = {smoke_ok} ({:.1} s, max bond {})",
            smoke.elapsed().as_secs_f64(),
            r1.max_bond
        ),
        started,
    );
}

#[test]
fn a7_depth_constancy() {
    let started = Instant::now();
    let ns: Vec<usize> = (4..=20).collect();
    let rows = depth_scan(&ns, &[Variant::Static, Variant::HardwareAware], 1, 0.45).unwrap();
    let get = |n: usize, v: Variant| -> &DepthRow { rows.iter().find(|r| r.n == n && r.variant == v).unwrap() };
    let hw: Vec<usize> = ns.iter().map(|&n| get(n, Variant::HardwareAware).native).collect();
    let constant = hw.iter().all(|&d| d == hw[0]);
    let below = ns.iter().all(|&n| get(n, Variant::HardwareAware).native < get(n, Variant::Static).native);
    let logical_below = ns.iter().all(|&n| get(n, Variant::HardwareAware).logical < get(n, Variant::Static).logical);
    let elapsed = started.elapsed().as_secs_f64();
    report(
        "A7",
        constant && below && elapsed < 1.0,
        format!(
            "native CZ depth hardware = {} (constant = {constant}), static = {}; unrouted logical depth hardware < static = {logical_below}",
            hw[0],
            get(4, Variant::Static).native
        ),
        started,
    );
}

#[test]
fn a8_zero_noise_extrapolation() {
    let started = Instant::now();
    let lambdas = [1.3, 1.6, 2.0, 2.3];
    let values: Vec<f64> = lambdas.iter().map(|l| 0.37 - 0.081 * l).collect();
    let mut extrap_err = 0.0f64;
    for m in [Extrapolator::Linear, Extrapolator::PairwiseFor, Extrapolator::ConstrainedForL1] {
        let (v, _) = zne_estimate(&lambdas, &values, &[0.01; 4], m).unwrap();
        extrap_err = extrap_err.max((v - 0.37).abs());
    }
    let w = constrained_richardson_l1(&lambdas).unwrap();
    let want = [2.3, 0.0, 0.0, -1.3];
    let w_err = w.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let l1: f64 = w.iter().map(|x| x.abs()).sum();
    let oracle = enumeration_l1(&lambdas);

    let params = ChainParams::paper_defaults(2);
    let init: InitialState = "10".parse().unwrap();
    let mut folds_ok = true;
    for variant in Variant::ALL {
        let (circ, _) = shot_circuit(&params, &init, 0.45, 1, variant, true).unwrap();
        for (i, lam) in lambdas.iter().enumerate() {
            for f in fold_random(&circ, *lam, 2, i as u64).unwrap() {
                folds_ok &= branch_equivalent(&f, &circ, 1e-9).unwrap();
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    report(
        "A8",
        extrap_err <= 1e-10 && w_err <= 1e-10 && (l1 - 3.6).abs() <= 1e-10 && (oracle - l1).abs() <= 1e-10 && folds_ok && elapsed < 10.0,
        format!("extrapolation error = {extrap_err:.1e}, ω = {w:?}, ‖ω‖₁ = {l1:.6}, enumeration optimum = {oracle:.6}, folds equivalent = {folds_ok}"),
        started,
    );
}

/// Minimum ‖ω‖₁ subject to Σω = 1, Σωλ = 0 over all two-point supports.
fn enumeration_l1(lambdas: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..lambdas.len() {
        for j in i + 1..lambdas.len() {
            let wi = lambdas[j] / (lambdas[j] - lambdas[i]);
            best = best.min(wi.abs() + (1.0 - wi).abs());
        }
    }
    best
}

#[test]
fn a9_clifford_data_regression() {
    let started = Instant::now();
    let mut rng = shot_rng(19, 0);
    let (a, b) = (0.07, 0.81);
    let training: Vec<(f64, f64)> = (0..12)
        .map(|_| {
            let x: f64 = rng.gen_range(0.0..1.0);
            (x, a + b * x)
        })
        .collect();
    let ideal = 0.4321;
    let raw = BootstrapEstimate { mean: a + b * ideal, std: 0.0, b: 2 };
    let (synthetic, _, _) = cdr_fit_and_correct(&training, &raw).unwrap();
    let synthetic_err = (synthetic - ideal).abs();

    let mut cfg = ExperimentConfig::new(6, "101101".parse().unwrap(), vec![0.3, 0.6, 0.9, 1.2, 1.5]);
    cfg.backend = Backend::Shots;
    cfg.variant = Variant::HardwareAware;
    cfg.noise = NoiseSpec::Named("heron-median".into());
    cfg.shots = 4000;
    cfg.bootstrap_resamples = 50;
    cfg.seed = 31;
    cfg.mitigation = Some(brickwall::experiment::MitigationConfig {
        zne: None,
        cdr: Some(CdrConfig { n_training: 16, biases: vec![CliffordBias::inverse()] }),
        training_shots: 1000,
        noiseless_branch_limit: 4096,
    });
    let out = run_experiment(&cfg).unwrap();
    let params = cfg.params().unwrap();
    let (mut improved, mut total) = (0usize, 0usize);
    let mut lines = Vec::new();
    for &gt in &cfg.gamma_t {
        let k = cfg.k.steps(gt).unwrap();
        let noiseless: f64 = channel_populations(&params, Variant::HardwareAware, &cfg.initial, gt, k).unwrap().iter().sum();
        let raw = out.series.get(gt, "total", "shots_raw").unwrap().value;
        let corrected = out.series.get(gt, "total", "cdr_inverse").unwrap().value;
        total += 1;
        if (corrected - noiseless).abs() < (raw - noiseless).abs() {
            improved += 1;
        }
        lines.push(format!("{gt}: ideal {noiseless:.3} raw {raw:.3} cdr {corrected:.3}"));
    }
    let fraction = improved as f64 / total as f64;
    let elapsed = started.elapsed().as_secs_f64();
    report(
        "A9",
        synthetic_err <= 1e-12 && fraction >= 0.8 && elapsed < 900.0,
        format!("synthetic inversion error = {synthetic_err:.1e}, improved at {improved}/{total} times [{}]", lines.join(", ")),
        started,
    );
}

#[test]
fn a10_determinism() {
    let started = Instant::now();
    let mut all_equal = true;
    let mut names = Vec::new();
    for backend in [Backend::Exact, Backend::Channel, Backend::Shots, Backend::Mps] {
        let mut cfg = ExperimentConfig::new(3, "101".parse().unwrap(), vec![0.3, 0.9]);
        cfg.backend = backend;
        cfg.shots = 2000;
        cfg.trajectories = 16;
        cfg.bootstrap_resamples = 20;
        cfg.seed = 123;
        if backend == Backend::Shots {
            cfg.noise = NoiseSpec::Named("heron-median".into());
            cfg.variant = Variant::HardwareAware;
        }
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        let same = a.series.rows.iter().zip(&b.series.rows).all(|(x, y)| {
            x.value.to_bits() == y.value.to_bits() && x.std.to_bits() == y.std.to_bits() && x.observable == y.observable
        }) && a.series.rows.len() == b.series.rows.len()
            && a.manifest == b.manifest;
        all_equal &= same;
        names.push(format!("{}={same}", backend.name()));
    }
    let counts = |seed| {
        run_shots(
            &shot_circuit(&ChainParams::paper_defaults(2), &"11".parse().unwrap(), 0.5, 1, Variant::Dynamic, true).unwrap().0,
            &[0, 1],
            500,
            Some(&NoiseModel::heron_median()),
            seed,
        )
        .unwrap()
    };
    let shots_same = counts(4) == counts(4);
    let boot = |c: &Counts| bootstrap(c, |s| f64::from(s.as_bytes()[0] == b'1'), 30, 8).unwrap();
    let boot_same = boot(&counts(4)).mean.to_bits() == boot(&counts(4)).mean.to_bits();
    let folds_same = {
        let (circ, _) =
            shot_circuit(&ChainParams::paper_defaults(2), &"11".parse().unwrap(), 0.5, 1, Variant::Static, true).unwrap();
        fold_random(&circ, 2.0, 3, 5).unwrap() == fold_random(&circ, 2.0, 3, 5).unwrap()
    };
    all_equal &= shots_same && boot_same && folds_same;
    report(
        "A10",
        all_equal,
        format!("{}, raw shots={shots_same}, bootstrap={boot_same}, folding={folds_same}", names.join(", ")),
        started,
    );
}
