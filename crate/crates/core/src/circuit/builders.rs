//! Trotter-step builders: the unitary brick wall, the two-emitter dissipative
//! blocks and the assembled k-step circuit.

use serde::{Deserialize, Serialize};

use super::transforms::{decompose_ccx, route_linear};
use super::{Circuit, Gate, GateKind, Instruction, LayoutPlan};
use crate::error::{arg, Error, Result};
use crate::params::{decay_probability, derived_rates, rotation_angle, ChainParams, DerivedRates};

use super::layout::AncillaMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Static,
    Dynamic,
    HardwareAware,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Static, Variant::Dynamic, Variant::HardwareAware];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Static => "static",
            Variant::Dynamic => "dynamic",
            Variant::HardwareAware => "hardware_aware",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s || (s == "hardware" && *v == Variant::HardwareAware))
            .ok_or_else(|| Error::Argument(format!("unknown variant '{s}'")))
    }
}

fn gate(kind: GateKind, qubits: &[usize], params: &[f64]) -> Instruction {
    Instruction::Gate(Gate::new(kind, qubits.to_vec(), params.to_vec()))
}

fn width(qubits: &[usize]) -> usize {
    qubits.iter().max().map_or(0, |m| m + 1)
}

fn check_distinct(qubits: &[usize]) -> Result<()> {
    let mut s = qubits.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.len() != qubits.len() {
        return Err(Error::Layout(format!("overlapping registers {qubits:?}")));
    }
    Ok(())
}

/// One Trotter step of the coherent part on `n` qubits: a layer of Rz for the
/// on-site energies, then RXX·RYY on even bonds, then on odd bonds.
pub fn build_unitary_layer(params: &ChainParams, dt: f64) -> Result<Circuit> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return arg(format!("time step must be non-negative, got {dt}"));
    }
    let n = params.n;
    let mut c = Circuit::new(n, 0);
    // exp(−iω̃ dt σ†σ) = Rz(−ω̃ dt) up to a global phase.
    let beta = -params.omega * dt;
    let alpha = params.g * dt;
    for q in 0..n {
        c.rz(q, beta);
    }
    for parity in [0, 1] {
        for i in (parity..n.saturating_sub(1)).step_by(2) {
            c.gate(GateKind::RXX, &[i, i + 1], &[alpha]);
            c.gate(GateKind::RYY, &[i, i + 1], &[alpha]);
        }
    }
    Ok(c)
}

/// Single-emitter decay: CRy(θ) onto a fresh ancilla, CX back, reset.
pub fn build_single_emitter_block(gamma: f64, dt: f64, qubit: usize, ancilla: usize) -> Result<Circuit> {
    check_distinct(&[qubit, ancilla])?;
    let theta = rotation_angle(decay_probability(gamma, dt)?)?;
    let mut c = Circuit::new(width(&[qubit, ancilla]), 0);
    c.cry(qubit, ancilla, theta).cx(ancilla, qubit).reset(ancilla);
    Ok(c)
}

/// Two-emitter block with two ancillas whose induced channel is the conjoined
/// four-path decay channel.
pub fn build_dissipative_block_static(
    rates: &DerivedRates,
    dt: f64,
    qubits: [usize; 2],
    ancillas: [usize; 2],
) -> Result<Circuit> {
    let [q0, q1] = qubits;
    let [a0, a1] = ancillas;
    check_distinct(&[q0, q1, a0, a1])?;
    let (tp, tm) = rates.angles(dt)?;
    let mut c = Circuit::new(width(&[q0, q1, a0, a1]), 0);
    c.gate(GateKind::P2, &[q0, q1], &[])
        .gate(GateKind::CCRy, &[q0, q1, a1], &[tp - tm])
        .gate(GateKind::CCRy, &[q0, q1, a0], &[tm - tp])
        .cry(q1, a1, tm)
        .cry(q0, a0, tp)
        .cx(a0, q0)
        .cx(a1, q1)
        .gate(GateKind::P2dag, &[q0, q1], &[])
        .reset(a0)
        .reset(a1);
    Ok(c)
}

/// Measurement-based block: a Toffoli flags the doubly excited state, and the
/// outcome selects between controlled and unconditioned rotations. Uses
/// clbit 0.
pub fn build_dissipative_block_dynamic(
    rates: &DerivedRates,
    dt: f64,
    qubits: [usize; 2],
    ancillas: [usize; 2],
) -> Result<Circuit> {
    let [q0, q1] = qubits;
    let [a0, a1] = ancillas;
    check_distinct(&[q0, q1, a0, a1])?;
    let (tp, tm) = rates.angles(dt)?;
    let mut c = Circuit::new(width(&[q0, q1, a0, a1]), 1);
    c.gate(GateKind::P2, &[q0, q1], &[])
        .gate(GateKind::CCX, &[q0, q1, a0], &[])
        .measure(a0, 0)
        .conditional(0, 0, vec![gate(GateKind::CRy, &[q0, a0], &[tp]), gate(GateKind::CRy, &[q1, a1], &[tm])])
        .conditional(
            0,
            1,
            vec![gate(GateKind::X, &[a0], &[]), gate(GateKind::Ry, &[a0], &[tm]), gate(GateKind::Ry, &[a1], &[tp])],
        )
        .cx(a0, q0)
        .cx(a1, q1)
        .gate(GateKind::P2dag, &[q0, q1], &[])
        .reset(a0)
        .reset(a1);
    Ok(c)
}

/// Single-ancilla variant of the dynamic block, routed onto a line with only
/// nearest-neighbour two-qubit gates. Uses clbit 0.
pub fn build_dissipative_block_hw(rates: &DerivedRates, dt: f64, qubits: [usize; 2], ancilla: usize) -> Result<Circuit> {
    let [x, y] = qubits;
    let a = ancilla;
    check_distinct(&[x, y, a])?;
    let lo = *[x, y, a].iter().min().unwrap();
    if [x, y, a].iter().max().unwrap() - lo != 2 {
        return Err(Error::Layout(format!("sites {x}, {y}, {a} are not contiguous on the line")));
    }
    let (tp, tm) = rates.angles(dt)?;
    let mut c = Circuit::new(width(&[x, y, a]), 1);
    c.gate(GateKind::P2, &[x, y], &[])
        .gate(GateKind::CCX, &[x, y, a], &[])
        .measure(a, 0)
        .conditional(0, 0, vec![gate(GateKind::CRy, &[x, a], &[tp])])
        .conditional(0, 1, vec![gate(GateKind::X, &[a], &[]), gate(GateKind::Ry, &[a], &[tm])])
        .cx(a, x)
        .reset(a)
        .conditional(0, 0, vec![gate(GateKind::CRy, &[y, a], &[tm])])
        .conditional(0, 1, vec![gate(GateKind::Ry, &[a], &[tp])])
        .cx(a, y)
        .gate(GateKind::P2dag, &[x, y], &[])
        .reset(a);
    route_linear(&decompose_ccx(&c))
}

/// Copies `block` into `target`, mapping its clbit 0 to `clbit`.
fn append_block(target: &mut Circuit, block: &Circuit, clbit: usize) {
    fn remap(list: &[Instruction], clbit: usize) -> Vec<Instruction> {
        list.iter()
            .map(|ins| match ins {
                Instruction::Measure { qubit, .. } => Instruction::Measure { qubit: *qubit, clbit },
                Instruction::Conditional { value, body, .. } => {
                    Instruction::Conditional { clbit, value: *value, body: remap(body, clbit) }
                }
                other => other.clone(),
            })
            .collect()
    }
    target.instructions.extend(remap(&block.instructions, clbit));
}

fn remap_qubits(c: &Circuit, map: &[usize], num_qubits: usize) -> Circuit {
    fn walk(list: &[Instruction], map: &[usize]) -> Vec<Instruction> {
        list.iter()
            .map(|ins| match ins {
                Instruction::Gate(g) => {
                    Instruction::Gate(Gate::new(g.kind, g.qubits.iter().map(|&q| map[q]).collect(), g.params.clone()))
                }
                Instruction::Measure { qubit, clbit } => Instruction::Measure { qubit: map[*qubit], clbit: *clbit },
                Instruction::Reset { qubit } => Instruction::Reset { qubit: map[*qubit] },
                Instruction::Barrier { qubits } => Instruction::Barrier { qubits: qubits.iter().map(|&q| map[q]).collect() },
                Instruction::Conditional { clbit, value, body } => {
                    Instruction::Conditional { clbit: *clbit, value: *value, body: walk(body, map) }
                }
            })
            .collect()
    }
    Circuit { num_qubits, num_clbits: c.num_clbits, instructions: walk(&c.instructions, map) }
}

/// k Trotter steps of duration `t / k` on the sites of `layout`. Each step is
/// the unitary layer, the even-bond dissipative blocks, then the odd-bond
/// blocks, with ancillas reset inside every block. Static and dynamic circuits
/// are left unrouted; the hardware-aware circuit is routed onto the line.
pub fn assemble_trotter_circuit(
    params: &ChainParams,
    t: f64,
    k: usize,
    variant: Variant,
    layout: &LayoutPlan,
) -> Result<Circuit> {
    params.validate()?;
    if k == 0 {
        return arg("number of Trotter steps must be at least 1");
    }
    if !(t >= 0.0) || !t.is_finite() {
        return arg(format!("time must be non-negative, got {t}"));
    }
    if layout.n_system != params.n {
        return Err(Error::Layout(format!("layout has {} emitters, chain has {}", layout.n_system, params.n)));
    }
    if params.n > 1 && variant != Variant::HardwareAware && layout.mode == AncillaMode::OnePerPair {
        return Err(Error::Layout(format!("the {} variant needs two ancillas per bond", variant.name())));
    }
    let dt = t / k as f64;
    let n_sites = layout.num_sites();
    let n_clbits = if variant == Variant::Static { 0 } else { layout.ancillas.len() };
    let rates = derived_rates(params);
    let clbit_of = |site: usize| layout.ancillas.iter().position(|&a| a == site).unwrap();

    let mut unitary = remap_qubits(&build_unitary_layer(params, dt)?, &layout.system, n_sites);
    if variant == Variant::HardwareAware {
        unitary = route_linear(&unitary)?;
    }

    let mut blocks = Circuit::new(n_sites, n_clbits);
    if params.n == 1 {
        let a = layout.ancillas[0];
        let b = build_single_emitter_block(params.gamma, dt, layout.system[0], a)?;
        append_block(&mut blocks, &b, 0);
    } else {
        for parity in [0, 1] {
            for i in (parity..params.n - 1).step_by(2) {
                let qs = [layout.system[i], layout.system[i + 1]];
                let anc = layout.bond_ancillas(i);
                let b = match variant {
                    Variant::Static => build_dissipative_block_static(&rates, dt, qs, [anc[0], anc[1]])?,
                    Variant::Dynamic => build_dissipative_block_dynamic(&rates, dt, qs, [anc[0], anc[1]])?,
                    Variant::HardwareAware => {
                        let b = build_dissipative_block_hw(&rates, dt, qs, anc[0]);
                        match b {
                            Ok(b) => b,
                            // Non-contiguous sites: route the block over the whole line.
                            Err(Error::Layout(_)) => hw_block_any_sites(&rates, dt, qs, anc[0], n_sites)?,
                            Err(e) => return Err(e),
                        }
                    }
                };
                append_block(&mut blocks, &b, clbit_of(anc[0]));
            }
        }
    }

    let mut c = Circuit::new(n_sites, n_clbits);
    for _ in 0..k {
        c.extend(&unitary);
        c.extend(&blocks);
    }
    c.num_qubits = n_sites;
    Ok(c)
}

/// Hardware block for sites that are not contiguous: built on three local
/// sites and relabelled, then routed over the full line.
fn hw_block_any_sites(rates: &DerivedRates, dt: f64, qs: [usize; 2], a: usize, n_sites: usize) -> Result<Circuit> {
    let mut sites = [qs[0], qs[1], a];
    sites.sort_unstable();
    let local = |s: usize| sites.iter().position(|&x| x == s).unwrap();
    let b = build_dissipative_block_hw(rates, dt, [local(qs[0]), local(qs[1])], local(a))?;
    let unrouted = remap_qubits(&b, &sites, n_sites);
    route_linear(&unrouted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{adjacency_violations, two_qubit_depth};
    use crate::linalg::{c as cplx, hermitian_eigenvalues, ComplexMatrix};
    use crate::reference::build_hamiltonian;

    #[test]
    fn unitary_layer_zero_dt_is_identity() {
        let p = ChainParams::paper_defaults(4);
        let u = build_unitary_layer(&p, 0.0).unwrap().unitary().unwrap();
        assert!(u.equal_up_to_phase(&ComplexMatrix::identity(16), 1e-14));
    }

    #[test]
    fn unitary_layer_two_sites_is_exact_exponential() {
        // For n = 2 all terms commute, so the layer equals exp(−iH dt).
        let p = ChainParams { g: 0.3, ..ChainParams::paper_defaults(2) };
        let dt = 0.7;
        let u = build_unitary_layer(&p, dt).unwrap().unitary().unwrap();
        let h = build_hamiltonian(&p).unwrap();
        let ev = hermitian_eigenvalues(&h).unwrap();
        let mut want = vec![0.0, p.omega - p.g, p.omega + p.g, 2.0 * p.omega];
        want.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        let h_int = 1.0 / 2f64.sqrt();
        let states = [
            (vec![1.0, 0.0, 0.0, 0.0], 0.0),
            (vec![0.0, -h_int, h_int, 0.0], p.omega - p.g),
            (vec![0.0, h_int, h_int, 0.0], p.omega + p.g),
            (vec![0.0, 0.0, 0.0, 1.0], 2.0 * p.omega),
        ];
        let mut phases = Vec::new();
        for (v, e) in &states {
            let vc: Vec<_> = v.iter().map(|&x| cplx(x, 0.0)).collect();
            let out = u.matvec(&vc);
            let overlap: crate::C64 = vc.iter().zip(&out).map(|(a, b)| a.conj() * b).sum();
            assert!((overlap.norm() - 1.0).abs() < 1e-12);
            phases.push(overlap * crate::C64::from_polar(1.0, e * dt));
        }
        for ph in &phases[1..] {
            assert!((ph - phases[0]).norm() < 1e-12);
        }
    }

    #[test]
    fn hw_block_is_nearest_neighbour() {
        let rates = DerivedRates { gamma_plus: 0.018, gamma_minus: 0.003 };
        for (qs, a) in [([0, 1], 2), ([0, 2], 1), ([1, 2], 0)] {
            let b = build_dissipative_block_hw(&rates, 10.0, qs, a).unwrap();
            assert_eq!(adjacency_violations(&b), 0);
            assert!(b.gates().iter().all(|g| g.qubits.len() <= 2));
        }
        assert!(build_dissipative_block_hw(&rates, 10.0, [0, 1], 3).is_err());
    }

    #[test]
    fn assembly_shapes() {
        let p = ChainParams::paper_defaults(4);
        let l = LayoutPlan::one_per_emitter(4).unwrap();
        let c = assemble_trotter_circuit(&p, 20.0, 1, Variant::Static, &l).unwrap();
        c.validate().unwrap();
        let ccry: Vec<_> = c.gates().into_iter().filter(|g| g.kind == GateKind::P2).map(|g| g.qubits.clone()).collect();
        assert_eq!(ccry, vec![vec![0, 1], vec![4, 5], vec![1, 4]]);
        let pair = LayoutPlan::one_per_pair(4).unwrap();
        assert!(assemble_trotter_circuit(&p, 20.0, 1, Variant::Static, &pair).is_err());
        let hw = assemble_trotter_circuit(&p, 20.0, 2, Variant::HardwareAware, &pair).unwrap();
        hw.validate().unwrap();
        assert_eq!(adjacency_violations(&hw), 0);
    }

    #[test]
    fn hardware_depth_constant_in_n() {
        let depths: Vec<usize> = (4..=12)
            .map(|n| {
                let p = ChainParams::paper_defaults(n);
                let l = LayoutPlan::one_per_pair(n).unwrap();
                two_qubit_depth(&assemble_trotter_circuit(&p, 50.0, 1, Variant::HardwareAware, &l).unwrap())
            })
            .collect();
        assert!(depths.windows(2).all(|w| w[0] == w[1]), "{depths:?}");
    }

    #[test]
    fn single_emitter_chain() {
        let p = ChainParams::paper_defaults(1);
        let l = LayoutPlan::one_per_emitter(1).unwrap();
        let c = assemble_trotter_circuit(&p, 30.0, 3, Variant::Dynamic, &l).unwrap();
        assert_eq!(c.count_ops()["reset"], 3);
        assert_eq!(c.count_ops()["cry"], 3);
    }
}
