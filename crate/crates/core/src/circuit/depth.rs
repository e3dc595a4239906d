//! Two-qubit depth under as-soon-as-possible layering.

use super::{Circuit, Instruction};

/// ASAP levels per qubit and clbit. Multi-qubit gates open a new layer.
pub(crate) struct Levels {
    qubit: Vec<usize>,
    clbit: Vec<usize>,
}

impl Levels {
    pub(crate) fn new(c: &Circuit) -> Self {
        Self { qubit: vec![0; c.num_qubits], clbit: vec![0; c.num_clbits] }
    }

    /// Advances the levels past `ins` (not into a conditional body) and
    /// returns the layer of a multi-qubit gate.
    pub(crate) fn place(&mut self, ins: &Instruction) -> Option<usize> {
        match ins {
            Instruction::Gate(g) if g.qubits.len() >= 2 => {
                let l = g.qubits.iter().map(|&q| self.qubit[q]).max().unwrap_or(0) + 1;
                for &q in &g.qubits {
                    self.qubit[q] = l;
                }
                return Some(l);
            }
            Instruction::Gate(_) | Instruction::Reset { .. } => {}
            Instruction::Measure { qubit, clbit } => {
                let l = self.qubit[*qubit].max(self.clbit[*clbit]);
                self.qubit[*qubit] = l;
                self.clbit[*clbit] = l;
            }
            Instruction::Barrier { qubits } => {
                let l = qubits.iter().map(|&q| self.qubit[q]).max().unwrap_or(0);
                for &q in qubits {
                    self.qubit[q] = l;
                }
            }
            Instruction::Conditional { clbit, .. } => {
                let start = self.clbit[*clbit];
                for q in ins.qubits() {
                    self.qubit[q] = self.qubit[q].max(start);
                }
            }
        }
        None
    }

    fn walk(&mut self, list: &[Instruction]) {
        for ins in list {
            self.place(ins);
            if let Instruction::Conditional { body, .. } = ins {
                self.walk(body);
            }
        }
    }

    fn max(&self) -> usize {
        self.qubit.iter().chain(&self.clbit).copied().max().unwrap_or(0)
    }
}

/// Number of two-qubit gate layers on the critical path. Gates with three or
/// more qubits count as one layer on all their qubits; conditional bodies
/// start no earlier than the measurement that feeds them.
pub fn two_qubit_depth(c: &Circuit) -> usize {
    let mut lv = Levels::new(c);
    lv.walk(&c.instructions);
    lv.max()
}
