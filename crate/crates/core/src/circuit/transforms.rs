//! Structural rewrites: linear routing, Toffoli decomposition, basis
//! transpilation and dynamical-decoupling insertion.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use super::{Circuit, Gate, GateKind, Instruction};
use crate::error::{Error, Result};

fn g(kind: GateKind, qubits: &[usize], params: &[f64]) -> Instruction {
    Instruction::Gate(Gate::new(kind, qubits.to_vec(), params.to_vec()))
}

/// Toffoli as six CX gates plus single-qubit phases (T = Rz(π/4) up to phase).
pub(crate) fn ccx_sequence(a: usize, b: usize, t: usize) -> Vec<Instruction> {
    use GateKind::*;
    vec![
        g(H, &[t], &[]),
        g(CX, &[b, t], &[]),
        g(Rz, &[t], &[-FRAC_PI_4]),
        g(CX, &[a, t], &[]),
        g(Rz, &[t], &[FRAC_PI_4]),
        g(CX, &[b, t], &[]),
        g(Rz, &[t], &[-FRAC_PI_4]),
        g(CX, &[a, t], &[]),
        g(Rz, &[b], &[FRAC_PI_4]),
        g(Rz, &[t], &[FRAC_PI_4]),
        g(H, &[t], &[]),
        g(CX, &[a, b], &[]),
        g(Rz, &[a], &[FRAC_PI_4]),
        g(Rz, &[b], &[-FRAC_PI_4]),
        g(CX, &[a, b], &[]),
    ]
}

fn map_instructions(list: &[Instruction], f: &dyn Fn(&Gate) -> Vec<Instruction>) -> Vec<Instruction> {
    let mut out = Vec::with_capacity(list.len());
    for ins in list {
        match ins {
            Instruction::Gate(gate) => out.extend(f(gate)),
            Instruction::Conditional { clbit, value, body } => {
                out.push(Instruction::Conditional { clbit: *clbit, value: *value, body: map_instructions(body, f) })
            }
            other => out.push(other.clone()),
        }
    }
    out
}

/// Replaces every CCX with its six-CX decomposition.
pub fn decompose_ccx(c: &Circuit) -> Circuit {
    let f = |gate: &Gate| {
        if gate.kind == GateKind::CCX {
            ccx_sequence(gate.qubits[0], gate.qubits[1], gate.qubits[2])
        } else {
            vec![Instruction::Gate(gate.clone())]
        }
    };
    Circuit { instructions: map_instructions(&c.instructions, &f), ..c.clone() }
}

fn basis_gate(gate: &Gate) -> Vec<Instruction> {
    use GateKind::*;
    let q = &gate.qubits;
    let th = gate.params.first().copied().unwrap_or(0.0);
    let h = |q: usize| vec![g(Rz, &[q], &[FRAC_PI_2]), g(SX, &[q], &[]), g(Rz, &[q], &[FRAC_PI_2])];
    let ry = |q: usize, t: f64| vec![g(SX, &[q], &[]), g(Rz, &[q], &[t + PI]), g(SX, &[q], &[]), g(Rz, &[q], &[PI])];
    let cx = |c: usize, t: usize| {
        let mut v = h(t);
        v.push(g(CZ, &[c, t], &[]));
        v.extend(h(t));
        v
    };
    let cry = |c: usize, t: usize, a: f64| {
        let mut v = ry(t, a / 2.0);
        v.extend(cx(c, t));
        v.extend(ry(t, -a / 2.0));
        v.extend(cx(c, t));
        v
    };
    match gate.kind {
        X | SX | Rz | CZ => vec![Instruction::Gate(gate.clone())],
        Y => vec![g(Rz, &[q[0]], &[PI]), g(X, &[q[0]], &[])],
        Z => vec![g(Rz, &[q[0]], &[PI])],
        H => h(q[0]),
        Ry => ry(q[0], th),
        CX => cx(q[0], q[1]),
        CRy => cry(q[0], q[1], th),
        CCRy => {
            let (c1, c2, t) = (q[0], q[1], q[2]);
            let mut v = cry(c2, t, th / 2.0);
            v.extend(cx(c1, c2));
            v.extend(cry(c2, t, -th / 2.0));
            v.extend(cx(c1, c2));
            v.extend(cry(c1, t, th / 2.0));
            v
        }
        CCX => ccx_sequence(q[0], q[1], q[2]).iter().flat_map(|i| basis_gate(i.as_gate().unwrap())).collect(),
        SWAP => [cx(q[0], q[1]), cx(q[1], q[0]), cx(q[0], q[1])].concat(),
        RXX => {
            let mut v = [h(q[0]), h(q[1]), cx(q[0], q[1])].concat();
            v.push(g(Rz, &[q[1]], &[th]));
            v.extend([cx(q[0], q[1]), h(q[0]), h(q[1])].concat());
            v
        }
        RYY => {
            // S X S† = Y, and S is Rz(π/2) up to phase.
            let mut v = vec![g(Rz, &[q[0]], &[-FRAC_PI_2]), g(Rz, &[q[1]], &[-FRAC_PI_2])];
            v.extend(basis_gate(&Gate::new(RXX, q.clone(), vec![th])));
            v.push(g(Rz, &[q[0]], &[FRAC_PI_2]));
            v.push(g(Rz, &[q[1]], &[FRAC_PI_2]));
            v
        }
        // P is real symmetric and an involution, so P† = P.
        P2 | P2dag => {
            let mut v = cx(q[0], q[1]);
            v.push(g(CZ, &[q[0], q[1]], &[]));
            v.extend(cry(q[1], q[0], 3.0 * FRAC_PI_2));
            v.extend(cx(q[0], q[1]));
            v
        }
    }
}

/// Rewrites every gate into {Rz, SX, X, CZ}; measurements, resets and
/// conditionals are kept.
pub fn transpile_basis(c: &Circuit) -> Circuit {
    Circuit { instructions: map_instructions(&c.instructions, &basis_gate), ..c.clone() }
}

/// Number of multi-qubit gates whose qubits do not occupy contiguous sites.
pub fn adjacency_violations(c: &Circuit) -> usize {
    c.gates()
        .into_iter()
        .filter(|gate| {
            gate.qubits.len() > 1 && {
                let lo = gate.qubits.iter().min().unwrap();
                let hi = gate.qubits.iter().max().unwrap();
                hi - lo + 1 != gate.qubits.len()
            }
        })
        .count()
}

struct Router {
    pos: Vec<usize>,
    at: Vec<usize>,
}

impl Router {
    fn swap_sites(&mut self, s: usize, out: &mut Vec<Instruction>) {
        let (a, b) = (self.at[s], self.at[s + 1]);
        self.at.swap(s, s + 1);
        self.pos[a] = s + 1;
        self.pos[b] = s;
        out.push(g(GateKind::SWAP, &[s, s + 1], &[]));
    }

    fn contiguous(&self, qubits: &[usize]) -> bool {
        let ps: Vec<usize> = qubits.iter().map(|&q| self.pos[q]).collect();
        ps.iter().max().unwrap() - ps.iter().min().unwrap() + 1 == ps.len()
    }

    /// Moves qubits[1..] next to the block formed by the previous ones.
    fn gather(&mut self, qubits: &[usize], out: &mut Vec<Instruction>) {
        for k in 1..qubits.len() {
            let q = qubits[k];
            loop {
                let lo = qubits[..k].iter().map(|&x| self.pos[x]).min().unwrap();
                let hi = qubits[..k].iter().map(|&x| self.pos[x]).max().unwrap();
                let p = self.pos[q];
                if p + 1 == lo || p == hi + 1 {
                    break;
                }
                if p < lo {
                    self.swap_sites(p, out);
                } else {
                    self.swap_sites(p - 1, out);
                }
            }
        }
    }

    fn map(&self, qubits: &[usize]) -> Vec<usize> {
        qubits.iter().map(|&q| self.pos[q]).collect()
    }

    fn route(&mut self, list: &[Instruction], out: &mut Vec<Instruction>, in_body: bool) -> Result<()> {
        for ins in list {
            match ins {
                Instruction::Gate(gate) => {
                    if gate.qubits.len() > 1 && !self.contiguous(&gate.qubits) {
                        if in_body {
                            return Err(Error::Layout(format!(
                                "conditional body gate {} on {:?} cannot be routed",
                                gate.kind.name(),
                                gate.qubits
                            )));
                        }
                        self.gather(&gate.qubits, out);
                    }
                    out.push(Instruction::Gate(Gate::new(gate.kind, self.map(&gate.qubits), gate.params.clone())));
                }
                Instruction::Measure { qubit, clbit } => {
                    out.push(Instruction::Measure { qubit: self.pos[*qubit], clbit: *clbit })
                }
                Instruction::Reset { qubit } => out.push(Instruction::Reset { qubit: self.pos[*qubit] }),
                Instruction::Barrier { qubits } => out.push(Instruction::Barrier { qubits: self.map(qubits) }),
                Instruction::Conditional { clbit, value, body } => {
                    if in_body {
                        return Err(Error::Layout("nested conditionals are not routed".into()));
                    }
                    for gate in body.iter().filter_map(Instruction::as_gate) {
                        if gate.qubits.len() > 1 && !self.contiguous(&gate.qubits) {
                            self.gather(&gate.qubits, out);
                        }
                    }
                    let mut mapped = Vec::new();
                    self.route(body, &mut mapped, true)?;
                    out.push(Instruction::Conditional { clbit: *clbit, value: *value, body: mapped });
                }
            }
        }
        Ok(())
    }

    fn restore(&mut self, out: &mut Vec<Instruction>) {
        let n = self.at.len();
        for i in 0..n {
            for s in 0..n.saturating_sub(1 + i) {
                if self.at[s] > self.at[s + 1] {
                    self.swap_sites(s, out);
                }
            }
        }
    }
}

/// Inserts SWAPs so every multi-qubit gate acts on contiguous line sites and
/// returns qubits to their original sites at the end. Conditional bodies are
/// routed by swaps placed before the conditional.
pub fn route_linear(c: &Circuit) -> Result<Circuit> {
    let n = c.num_qubits;
    let mut router = Router { pos: (0..n).collect(), at: (0..n).collect() };
    let mut out = Vec::new();
    router.route(&c.instructions, &mut out, false)?;
    router.restore(&mut out);
    Ok(Circuit { instructions: out, ..c.clone() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DdStrategy {
    MeasureOnly,
    MeasureAndReset,
    AllOps,
    AllOpsXy8,
}

impl DdStrategy {
    fn targets(self, ins: &Instruction) -> bool {
        match (self, ins) {
            (_, Instruction::Barrier { .. }) => false,
            (DdStrategy::MeasureOnly, Instruction::Measure { .. }) => true,
            (DdStrategy::MeasureAndReset, Instruction::Measure { .. } | Instruction::Reset { .. }) => true,
            (DdStrategy::AllOps | DdStrategy::AllOpsXy8, _) => true,
            _ => false,
        }
    }

    fn sequence(self) -> &'static [GateKind] {
        use GateKind::{X, Y};
        match self {
            DdStrategy::AllOpsXy8 => &[X, Y, X, Y, Y, X, Y, X],
            _ => &[X, Y, X, Y],
        }
    }
}

/// Adds an XY4 (or XY8) train on every qubit left idle by each targeted
/// top-level instruction. The trains compose to the identity up to phase.
pub fn insert_dd(c: &Circuit, strategy: DdStrategy) -> Circuit {
    let mut out = Vec::with_capacity(c.instructions.len());
    for ins in &c.instructions {
        out.push(ins.clone());
        if !strategy.targets(ins) {
            continue;
        }
        let busy = ins.qubits();
        for q in (0..c.num_qubits).filter(|q| !busy.contains(q)) {
            for &k in strategy.sequence() {
                out.push(g(k, &[q], &[]));
            }
        }
    }
    Circuit { instructions: out, ..c.clone() }
}
