use brickwall::experiment::{channel_populations, shot_circuit, InitialState};
use brickwall::linalg::{c, svd_truncated, ComplexMatrix};
use brickwall::mps::run_trajectory;
use brickwall::reference::{build_chain_spec, integrate, DensityMatrix, SpecMode};
use brickwall::shots::{run_shots, NoiseModel};
use brickwall::{ChainParams, Variant};
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn shots(cr: &mut Criterion) {
    let params = ChainParams::paper_defaults(6);
    let init: InitialState = "101101".parse().unwrap();
    let (circ, layout) = shot_circuit(&params, &init, 0.45, 1, Variant::HardwareAware, true).unwrap();
    let noise = NoiseModel::heron_median();
    cr.bench_function("shots/n6_hardware_noisy_100", |b| {
        b.iter(|| run_shots(black_box(&circ), &layout.system, 100, Some(&noise), 1).unwrap())
    });
}

fn mps(cr: &mut Criterion) {
    let params = ChainParams::paper_defaults(20);
    let bits: Vec<u8> = (0..20).map(|i| (i % 3 != 0) as u8).collect();
    let t = params.time_from_gamma_t(0.9).unwrap();
    cr.bench_function("mps/n20_trajectory_k2", |b| {
        b.iter(|| run_trajectory(&params, t, 2, black_box(&bits), 50, 1e-10, 3).unwrap())
    });
}

fn oracles(cr: &mut Criterion) {
    let params = ChainParams::paper_defaults(6);
    let init: InitialState = "110100".parse().unwrap();
    cr.bench_function("channel/n6_k3", |b| {
        b.iter(|| channel_populations(&params, Variant::Static, black_box(&init), 1.5, 3).unwrap())
    });
    let small = ChainParams::paper_defaults(4);
    let spec = build_chain_spec(&small, SpecMode::Full).unwrap();
    let rho0 = DensityMatrix::from_bits(&[0, 1, 0, 1]);
    let times = [small.time_from_gamma_t(0.5).unwrap()];
    let mut group = cr.benchmark_group("reference");
    group.sample_size(10);
    group.bench_function("n4_to_0.5", |b| b.iter(|| integrate(&spec, black_box(&rho0), &times).unwrap()));
    group.finish();
}

fn linalg(cr: &mut Criterion) {
    let m = ComplexMatrix::from_fn(64, 64, |i, j| c(((i * 7 + j * 3) % 11) as f64 - 5.0, ((i + 2 * j) % 5) as f64));
    cr.bench_function("svd/64x64", |b| b.iter(|| svd_truncated(black_box(&m), 64, 1e-12)));
}

criterion_group!(benches, shots, mps, oracles, linalg);
criterion_main!(benches);
