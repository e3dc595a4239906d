//! Circuit intermediate representation with mid-circuit measurement, resets and
//! classically conditioned blocks.

mod builders;
mod depth;
mod io;
mod layout;
mod transforms;

pub use builders::{
    assemble_trotter_circuit, build_dissipative_block_dynamic, build_dissipative_block_hw, build_dissipative_block_static,
    build_single_emitter_block, build_unitary_layer, Variant,
};
pub use depth::two_qubit_depth;
pub(crate) use depth::Levels;
pub use io::{deserialize, serialize};
pub use layout::{AncillaMode, LayoutPlan};
pub use transforms::{adjacency_violations, decompose_ccx, insert_dd, route_linear, transpile_basis, DdStrategy};

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, r, ComplexMatrix, C64, ZERO};
use crate::params::basis_change_p;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateKind {
    X,
    Y,
    Z,
    SX,
    H,
    Rz,
    Ry,
    CX,
    CZ,
    CRy,
    CCRy,
    CCX,
    SWAP,
    RXX,
    RYY,
    P2,
    P2dag,
}

impl GateKind {
    pub const ALL: [GateKind; 17] = [
        GateKind::X,
        GateKind::Y,
        GateKind::Z,
        GateKind::SX,
        GateKind::H,
        GateKind::Rz,
        GateKind::Ry,
        GateKind::CX,
        GateKind::CZ,
        GateKind::CRy,
        GateKind::CCRy,
        GateKind::CCX,
        GateKind::SWAP,
        GateKind::RXX,
        GateKind::RYY,
        GateKind::P2,
        GateKind::P2dag,
    ];

    pub fn arity(self) -> usize {
        use GateKind::*;
        match self {
            X | Y | Z | SX | H | Rz | Ry => 1,
            CX | CZ | CRy | SWAP | RXX | RYY | P2 | P2dag => 2,
            CCRy | CCX => 3,
        }
    }

    pub fn num_params(self) -> usize {
        use GateKind::*;
        match self {
            Rz | Ry | CRy | CCRy | RXX | RYY => 1,
            _ => 0,
        }
    }

    pub fn name(self) -> &'static str {
        use GateKind::*;
        match self {
            X => "x",
            Y => "y",
            Z => "z",
            SX => "sx",
            H => "h",
            Rz => "rz",
            Ry => "ry",
            CX => "cx",
            CZ => "cz",
            CRy => "cry",
            CCRy => "ccry",
            CCX => "ccx",
            SWAP => "swap",
            RXX => "rxx",
            RYY => "ryy",
            P2 => "p2",
            P2dag => "p2dag",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.name() == name)
    }

    /// Unitary matrix, with the first listed qubit as the most significant bit.
    pub fn matrix(self, params: &[f64]) -> ComplexMatrix {
        use GateKind::*;
        let theta = params.first().copied().unwrap_or(0.0);
        match self {
            X => ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            Y => ComplexMatrix::from_vec(2, 2, vec![ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO]).unwrap(),
            Z => ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            SX => ComplexMatrix::from_vec(2, 2, vec![c(0.5, 0.5), c(0.5, -0.5), c(0.5, -0.5), c(0.5, 0.5)]).unwrap(),
            H => ComplexMatrix::from_real(2, 2, &[FRAC_1_SQRT_2, FRAC_1_SQRT_2, FRAC_1_SQRT_2, -FRAC_1_SQRT_2]),
            Rz => ComplexMatrix::diag(&[C64::from_polar(1.0, -theta / 2.0), C64::from_polar(1.0, theta / 2.0)]),
            Ry => ry(theta),
            CX => controlled(&X.matrix(&[]), 1),
            CZ => ComplexMatrix::diag(&[r(1.0), r(1.0), r(1.0), r(-1.0)]),
            CRy => controlled(&ry(theta), 1),
            CCRy => controlled(&ry(theta), 2),
            CCX => controlled(&X.matrix(&[]), 2),
            SWAP => {
                ComplexMatrix::from_real(4, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0])
            }
            RXX => two_axis(theta, false),
            RYY => two_axis(theta, true),
            P2 => basis_change_p(),
            P2dag => basis_change_p().dagger(),
        }
    }

    pub fn is_diagonal(self) -> bool {
        matches!(self, GateKind::Z | GateKind::Rz | GateKind::CZ)
    }
}

fn ry(theta: f64) -> ComplexMatrix {
    let (s, co) = (theta / 2.0).sin_cos();
    ComplexMatrix::from_real(2, 2, &[co, -s, s, co])
}

/// Applies `u` on the last qubit when all `n_controls` leading qubits are 1.
fn controlled(u: &ComplexMatrix, n_controls: usize) -> ComplexMatrix {
    let d = 2usize << n_controls;
    let mut m = ComplexMatrix::identity(d);
    let off = d - 2;
    for i in 0..2 {
        for j in 0..2 {
            m.set(off + i, off + j, u.get(i, j));
        }
    }
    m
}

/// exp(−iθ/2 · XX) or exp(−iθ/2 · YY).
fn two_axis(theta: f64, yy: bool) -> ComplexMatrix {
    let (s, co) = (theta / 2.0).sin_cos();
    let mut m = ComplexMatrix::diag(&[r(co); 4]);
    // XX and YY share the anti-diagonal support; YY flips the sign on |00⟩↔|11⟩.
    let outer = if yy { c(0.0, s) } else { c(0.0, -s) };
    let inner = c(0.0, -s);
    m.set(0, 3, outer);
    m.set(3, 0, outer);
    m.set(1, 2, inner);
    m.set(2, 1, inner);
    m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub qubits: Vec<usize>,
    pub params: Vec<f64>,
}

impl Gate {
    pub fn new(kind: GateKind, qubits: Vec<usize>, params: Vec<f64>) -> Self {
        Self { kind, qubits, params }
    }

    pub fn matrix(&self) -> ComplexMatrix {
        self.kind.matrix(&self.params)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Instruction {
    Gate(Gate),
    Measure { qubit: usize, clbit: usize },
    Reset { qubit: usize },
    Conditional { clbit: usize, value: u8, body: Vec<Instruction> },
    Barrier { qubits: Vec<usize> },
}

impl Instruction {
    /// Qubits touched, including those inside conditional bodies.
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Instruction::Gate(g) => g.qubits.clone(),
            Instruction::Measure { qubit, .. } | Instruction::Reset { qubit } => vec![*qubit],
            Instruction::Barrier { qubits } => qubits.clone(),
            Instruction::Conditional { body, .. } => {
                let mut qs: Vec<usize> = body.iter().flat_map(|i| i.qubits()).collect();
                qs.sort_unstable();
                qs.dedup();
                qs
            }
        }
    }

    pub fn as_gate(&self) -> Option<&Gate> {
        match self {
            Instruction::Gate(g) => Some(g),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub num_qubits: usize,
    pub num_clbits: usize,
    pub instructions: Vec<Instruction>,
}

impl Circuit {
    pub fn new(num_qubits: usize, num_clbits: usize) -> Self {
        Self { num_qubits, num_clbits, instructions: Vec::new() }
    }

    pub fn push(&mut self, ins: Instruction) -> &mut Self {
        self.instructions.push(ins);
        self
    }

    pub fn gate(&mut self, kind: GateKind, qubits: &[usize], params: &[f64]) -> &mut Self {
        self.push(Instruction::Gate(Gate::new(kind, qubits.to_vec(), params.to_vec())))
    }

    pub fn x(&mut self, q: usize) -> &mut Self {
        self.gate(GateKind::X, &[q], &[])
    }

    pub fn rz(&mut self, q: usize, theta: f64) -> &mut Self {
        self.gate(GateKind::Rz, &[q], &[theta])
    }

    pub fn ry(&mut self, q: usize, theta: f64) -> &mut Self {
        self.gate(GateKind::Ry, &[q], &[theta])
    }

    pub fn cx(&mut self, control: usize, target: usize) -> &mut Self {
        self.gate(GateKind::CX, &[control, target], &[])
    }

    pub fn cry(&mut self, control: usize, target: usize, theta: f64) -> &mut Self {
        self.gate(GateKind::CRy, &[control, target], &[theta])
    }

    pub fn measure(&mut self, qubit: usize, clbit: usize) -> &mut Self {
        self.push(Instruction::Measure { qubit, clbit })
    }

    pub fn reset(&mut self, qubit: usize) -> &mut Self {
        self.push(Instruction::Reset { qubit })
    }

    pub fn conditional(&mut self, clbit: usize, value: u8, body: Vec<Instruction>) -> &mut Self {
        self.push(Instruction::Conditional { clbit, value, body })
    }

    pub fn barrier(&mut self, qubits: &[usize]) -> &mut Self {
        self.push(Instruction::Barrier { qubits: qubits.to_vec() })
    }

    pub fn extend(&mut self, other: &Circuit) -> &mut Self {
        self.instructions.extend(other.instructions.iter().cloned());
        self
    }

    /// Checks index ranges, gate arities, finite angles and that every
    /// conditional reads a clbit written earlier.
    pub fn validate(&self) -> Result<()> {
        let mut written = vec![false; self.num_clbits];
        self.validate_list(&self.instructions, &mut written, "")
    }

    fn validate_list(&self, list: &[Instruction], written: &mut [bool], path: &str) -> Result<()> {
        for (idx, ins) in list.iter().enumerate() {
            let here = format!("{path}{idx}");
            let bad = |msg: String| Err(Error::Circuit(format!("instruction {here}: {msg}")));
            let check_q = |q: usize| q < self.num_qubits;
            match ins {
                Instruction::Gate(g) => {
                    if g.qubits.len() != g.kind.arity() {
                        return bad(format!("{} expects {} qubits, got {}", g.kind.name(), g.kind.arity(), g.qubits.len()));
                    }
                    if g.params.len() != g.kind.num_params() {
                        return bad(format!(
                            "{} expects {} parameters, got {}",
                            g.kind.name(),
                            g.kind.num_params(),
                            g.params.len()
                        ));
                    }
                    if g.params.iter().any(|p| !p.is_finite()) {
                        return bad("non-finite angle".into());
                    }
                    if let Some(q) = g.qubits.iter().find(|&&q| !check_q(q)) {
                        return bad(format!("qubit {q} out of range"));
                    }
                    let mut qs = g.qubits.clone();
                    qs.sort_unstable();
                    qs.dedup();
                    if qs.len() != g.qubits.len() {
                        return bad("repeated qubit".into());
                    }
                }
                Instruction::Measure { qubit, clbit } => {
                    if !check_q(*qubit) {
                        return bad(format!("qubit {qubit} out of range"));
                    }
                    if *clbit >= self.num_clbits {
                        return bad(format!("clbit {clbit} out of range"));
                    }
                    written[*clbit] = true;
                }
                Instruction::Reset { qubit } => {
                    if !check_q(*qubit) {
                        return bad(format!("qubit {qubit} out of range"));
                    }
                }
                Instruction::Barrier { qubits } => {
                    if let Some(q) = qubits.iter().find(|&&q| !check_q(q)) {
                        return bad(format!("qubit {q} out of range"));
                    }
                }
                Instruction::Conditional { clbit, value, body } => {
                    if *clbit >= self.num_clbits {
                        return bad(format!("clbit {clbit} out of range"));
                    }
                    if !written[*clbit] {
                        return bad(format!("clbit {clbit} read before any measurement wrote it"));
                    }
                    if *value > 1 {
                        return bad(format!("condition value {value} is not a bit"));
                    }
                    self.validate_list(body, written, &format!("{here}."))?;
                }
            }
        }
        Ok(())
    }

    /// Flattened gate list (conditional bodies included) for counting.
    pub fn gates(&self) -> Vec<&Gate> {
        fn walk<'a>(list: &'a [Instruction], out: &mut Vec<&'a Gate>) {
            for ins in list {
                match ins {
                    Instruction::Gate(g) => out.push(g),
                    Instruction::Conditional { body, .. } => walk(body, out),
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.instructions, &mut out);
        out
    }

    pub fn is_unitary(&self) -> bool {
        self.instructions.iter().all(|i| matches!(i, Instruction::Gate(_) | Instruction::Barrier { .. }))
    }

    /// Full-register unitary of a gate-only circuit.
    pub fn unitary(&self) -> Result<ComplexMatrix> {
        if !self.is_unitary() {
            return Err(Error::Circuit("circuit contains non-unitary instructions".into()));
        }
        let dim = 1usize << self.num_qubits;
        let mut cols: Vec<Vec<C64>> = (0..dim)
            .map(|j| {
                let mut v = vec![ZERO; dim];
                v[j] = r(1.0);
                v
            })
            .collect();
        for g in self.gates() {
            let m = g.matrix();
            for col in &mut cols {
                crate::linalg::apply_local(col, self.num_qubits, &m, &g.qubits);
            }
        }
        Ok(ComplexMatrix::from_fn(dim, dim, |i, j| cols[j][i]))
    }

    /// Inverse of a gate-only circuit.
    pub fn inverse(&self) -> Result<Circuit> {
        if !self.is_unitary() {
            return Err(Error::Circuit("only gate circuits can be inverted".into()));
        }
        let mut out = Circuit::new(self.num_qubits, self.num_clbits);
        for ins in self.instructions.iter().rev() {
            match ins {
                Instruction::Gate(g) => {
                    for inv in inverse_gate(g) {
                        out.push(Instruction::Gate(inv));
                    }
                }
                other => {
                    out.push(other.clone());
                }
            }
        }
        Ok(out)
    }

    pub fn count_ops(&self) -> std::collections::BTreeMap<String, usize> {
        let mut m = std::collections::BTreeMap::new();
        fn walk(list: &[Instruction], m: &mut std::collections::BTreeMap<String, usize>) {
            for ins in list {
                let key = match ins {
                    Instruction::Gate(g) => g.kind.name().to_string(),
                    Instruction::Measure { .. } => "measure".into(),
                    Instruction::Reset { .. } => "reset".into(),
                    Instruction::Barrier { .. } => "barrier".into(),
                    Instruction::Conditional { body, .. } => {
                        walk(body, m);
                        "conditional".into()
                    }
                };
                *m.entry(key).or_insert(0) += 1;
            }
        }
        walk(&self.instructions, &mut m);
        m
    }
}

/// Gate sequence implementing g†.
pub fn inverse_gate(g: &Gate) -> Vec<Gate> {
    use GateKind::*;
    let neg: Vec<f64> = g.params.iter().map(|p| -p).collect();
    match g.kind {
        X | Y | Z | H | CX | CZ | CCX | SWAP => vec![g.clone()],
        Rz | Ry | CRy | CCRy | RXX | RYY => vec![Gate::new(g.kind, g.qubits.clone(), neg)],
        P2 => vec![Gate::new(P2dag, g.qubits.clone(), vec![])],
        P2dag => vec![Gate::new(P2, g.qubits.clone(), vec![])],
        // SX† = Rz(π)·SX·Rz(π) up to global phase.
        SX => vec![
            Gate::new(Rz, g.qubits.clone(), vec![std::f64::consts::PI]),
            Gate::new(SX, g.qubits.clone(), vec![]),
            Gate::new(Rz, g.qubits.clone(), vec![std::f64::consts::PI]),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::kron;

    fn expm_hermitian_pauli(theta: f64, p: &ComplexMatrix) -> ComplexMatrix {
        // exp(−iθ/2 · P) for P² = 1.
        let (s, co) = (theta / 2.0).sin_cos();
        ComplexMatrix::identity(p.rows()).scale(r(co)).add(&p.scale(c(0.0, -s)))
    }

    #[test]
    fn all_gates_unitary_with_declared_arity() {
        for k in GateKind::ALL {
            let m = k.matrix(&[0.37]);
            assert_eq!(m.rows(), 1 << k.arity(), "{k:?}");
            assert!(m.is_unitary(1e-13), "{k:?}");
            assert_eq!(GateKind::from_name(k.name()), Some(k));
        }
    }

    #[test]
    fn two_axis_rotations_match_exponentials() {
        let x = GateKind::X.matrix(&[]);
        let y = GateKind::Y.matrix(&[]);
        for th in [0.0, 0.3, -1.7, 3.0] {
            assert!(GateKind::RXX.matrix(&[th]).max_abs_diff(&expm_hermitian_pauli(th, &kron(&x, &x))) < 1e-14);
            assert!(GateKind::RYY.matrix(&[th]).max_abs_diff(&expm_hermitian_pauli(th, &kron(&y, &y))) < 1e-14);
            let rz = GateKind::Rz.matrix(&[th]);
            assert!(rz.max_abs_diff(&expm_hermitian_pauli(th, &GateKind::Z.matrix(&[]))) < 1e-14);
            let ry = GateKind::Ry.matrix(&[th]);
            assert!(ry.max_abs_diff(&expm_hermitian_pauli(th, &y)) < 1e-14);
        }
    }

    #[test]
    fn ry_half_angle_convention() {
        let m = GateKind::Ry.matrix(&[1.0]);
        assert!((m.get(1, 0).re - 0.5f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn controlled_gates_act_on_last_qubit() {
        let cx = GateKind::CX.matrix(&[]);
        assert_eq!(cx.get(3, 2), r(1.0));
        assert_eq!(cx.get(0, 0), r(1.0));
        let ccx = GateKind::CCX.matrix(&[]);
        assert_eq!(ccx.get(7, 6), r(1.0));
        assert_eq!(ccx.get(5, 5), r(1.0));
    }

    #[test]
    fn inverse_circuit_undoes() {
        let mut c1 = Circuit::new(3, 0);
        c1.gate(GateKind::SX, &[0], &[]).gate(GateKind::CCRy, &[0, 2, 1], &[0.4]).gate(GateKind::P2, &[1, 2], &[]).gate(
            GateKind::RYY,
            &[0, 1],
            &[0.9],
        );
        let u = c1.unitary().unwrap();
        let v = c1.inverse().unwrap().unitary().unwrap();
        assert!(v.matmul(&u).equal_up_to_phase(&ComplexMatrix::identity(8), 1e-12));
    }

    #[test]
    fn validation_catches_errors() {
        let mut c1 = Circuit::new(2, 1);
        c1.conditional(0, 1, vec![]);
        assert!(c1.validate().is_err());
        let mut c2 = Circuit::new(2, 1);
        c2.cx(0, 2);
        assert!(c2.validate().is_err());
        let mut c3 = Circuit::new(2, 1);
        c3.measure(0, 0).conditional(0, 1, vec![Instruction::Gate(Gate::new(GateKind::X, vec![1], vec![]))]);
        assert!(c3.validate().is_ok());
        let mut c4 = Circuit::new(2, 0);
        c4.gate(GateKind::Rz, &[0], &[f64::NAN]);
        assert!(c4.validate().is_err());
    }
}
