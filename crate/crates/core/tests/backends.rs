use brickwall::experiment::{channel_populations, shot_circuit, InitialState};
use brickwall::shots::{counts_to_populations, run_shots};
use brickwall::{ChainParams, Variant};

#[test]
fn shots_match_channel_propagation_of_the_same_circuit() {
    let params = ChainParams::paper_defaults(4);
    let init: InitialState = "0101".parse().unwrap();
    let (gt, k, shots) = (1.8, 10, 20_000);
    let want = channel_populations(&params, Variant::Static, &init, gt, k).unwrap();
    let (c, layout) = shot_circuit(&params, &init, gt, k, Variant::Static, false).unwrap();
    let (got, _) = counts_to_populations(&run_shots(&c, &layout.system, shots, None, 7).unwrap(), 4).unwrap();
    for q in 0..4 {
        let sigma = (want[q] * (1.0 - want[q]) / shots as f64).sqrt();
        assert!((got[q] - want[q]).abs() < 4.0 * sigma, "q{q}: {} vs {}", got[q], want[q]);
    }
}

#[test]
fn hardware_variant_shots_match_channel_propagation() {
    let params = ChainParams::paper_defaults(3);
    let init: InitialState = "1+1".parse().unwrap();
    let want = channel_populations(&params, Variant::HardwareAware, &init, 0.9, 2).unwrap();
    let (c, layout) = shot_circuit(&params, &init, 0.9, 2, Variant::HardwareAware, true).unwrap();
    let shots = 20_000;
    let (got, _) = counts_to_populations(&run_shots(&c, &layout.system, shots, None, 3).unwrap(), 3).unwrap();
    for q in 0..3 {
        let sigma = (want[q] * (1.0 - want[q]) / shots as f64).sqrt();
        assert!((got[q] - want[q]).abs() < 4.0 * sigma, "q{q}: {} vs {}", got[q], want[q]);
    }
}
