//! Placement of system and ancilla qubits on a linear chain of physical sites.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AncillaMode {
    /// q0 q1 a0 a1 q2 q3 a2 a3 …
    OnePerEmitter,
    /// q0 q1 a0 q2 q3 a1 …
    OnePerPair,
}

/// Physical line positions of every system qubit and ancilla.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutPlan {
    pub n_system: usize,
    pub mode: AncillaMode,
    pub system: Vec<usize>,
    pub ancillas: Vec<usize>,
}

impl LayoutPlan {
    pub fn new(n_system: usize, mode: AncillaMode) -> Result<Self> {
        if n_system == 0 {
            return Err(Error::Layout("layout needs at least one system qubit".into()));
        }
        let mut system = Vec::with_capacity(n_system);
        let mut ancillas = Vec::new();
        let mut pos = 0;
        for group in (0..n_system).collect::<Vec<_>>().chunks(2) {
            for _ in group {
                system.push(pos);
                pos += 1;
            }
            let n_anc = match mode {
                AncillaMode::OnePerEmitter => group.len(),
                AncillaMode::OnePerPair => 1,
            };
            for _ in 0..n_anc {
                ancillas.push(pos);
                pos += 1;
            }
        }
        Ok(Self { n_system, mode, system, ancillas })
    }

    pub fn one_per_emitter(n_system: usize) -> Result<Self> {
        Self::new(n_system, AncillaMode::OnePerEmitter)
    }

    pub fn one_per_pair(n_system: usize) -> Result<Self> {
        Self::new(n_system, AncillaMode::OnePerPair)
    }

    pub fn num_sites(&self) -> usize {
        self.system.len() + self.ancillas.len()
    }

    pub fn is_ancilla(&self, site: usize) -> bool {
        self.ancillas.contains(&site)
    }

    /// Ancilla sites serving bond (i, i+1), or emitter i when `n_system` is 1.
    pub fn bond_ancillas(&self, i: usize) -> Vec<usize> {
        match self.mode {
            AncillaMode::OnePerEmitter => {
                if self.n_system == 1 {
                    vec![self.ancillas[0]]
                } else {
                    vec![self.ancillas[i], self.ancillas[i + 1]]
                }
            }
            AncillaMode::OnePerPair => vec![self.ancillas[i / 2]],
        }
    }

    /// Bits for every site given system bits; ancillas start in |0⟩.
    pub fn site_bits(&self, system_bits: &[u8]) -> Result<Vec<u8>> {
        if system_bits.len() != self.n_system {
            return Err(Error::Dimension(format!("expected {} system bits, got {}", self.n_system, system_bits.len())));
        }
        let mut bits = vec![0u8; self.num_sites()];
        for (b, &s) in system_bits.iter().zip(&self.system) {
            bits[s] = *b;
        }
        Ok(bits)
    }
}
