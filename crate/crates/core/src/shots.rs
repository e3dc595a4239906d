//! Per-shot statevector simulation of dynamic circuits with optional Pauli and
//! readout noise.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, GateKind, Instruction};
use crate::error::{arg, Error, Result};
use crate::linalg::{apply_local, norm_sqr, ComplexMatrix, C64, ONE, ZERO};

/// Largest register the shot simulator accepts.
pub const MAX_SHOT_QUBITS: usize = 30;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn zero(n_qubits: usize) -> Result<Self> {
        if n_qubits > MAX_SHOT_QUBITS {
            return Err(Error::Capacity(format!("{n_qubits} qubits exceed the statevector limit {MAX_SHOT_QUBITS}")));
        }
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = ONE;
        Ok(Self { n_qubits, amps })
    }

    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        if !amps.len().is_power_of_two() {
            return Err(Error::Dimension(format!("length {} is not a power of two", amps.len())));
        }
        let n = norm_sqr(&amps);
        if (n - 1.0).abs() > 1e-10 {
            return Err(Error::Argument(format!("state norm {n} differs from 1")));
        }
        Ok(Self { n_qubits: amps.len().trailing_zeros() as usize, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amps).sqrt()
    }

    pub fn apply(&mut self, op: &ComplexMatrix, qubits: &[usize]) {
        apply_local(&mut self.amps, self.n_qubits, op, qubits);
    }

    fn mask(&self, q: usize) -> usize {
        1 << (self.n_qubits - 1 - q)
    }

    pub fn prob_one(&self, q: usize) -> f64 {
        let m = self.mask(q);
        self.amps.iter().enumerate().filter(|(i, _)| i & m != 0).map(|(_, z)| z.norm_sqr()).sum()
    }

    /// Projects qubit `q` onto `outcome` and renormalizes.
    pub fn collapse(&mut self, q: usize, outcome: u8, prob: f64) {
        let m = self.mask(q);
        let scale = 1.0 / prob.sqrt();
        for (i, z) in self.amps.iter_mut().enumerate() {
            if ((i & m != 0) as u8) == outcome {
                *z *= scale;
            } else {
                *z = ZERO;
            }
        }
    }

    fn flip(&mut self, q: usize) {
        let m = self.mask(q);
        for i in 0..self.amps.len() {
            if i & m == 0 {
                self.amps.swap(i, i | m);
            }
        }
    }

    /// Born-rule measurement of qubit `q`.
    pub fn measure(&mut self, q: usize, rng: &mut impl Rng) -> u8 {
        let p1 = self.prob_one(q).clamp(0.0, 1.0);
        let outcome = u8::from(rng.gen::<f64>() < p1);
        let p = if outcome == 1 { p1 } else { 1.0 - p1 };
        self.collapse(q, outcome, p);
        outcome
    }

    pub fn reset(&mut self, q: usize, rng: &mut impl Rng) {
        if self.measure(q, rng) == 1 {
            self.flip(q);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub p_depol_2q: f64,
    pub p_depol_1q: f64,
    pub p_readout_flip: f64,
}

impl NoiseModel {
    /// Median error rates of a current heavy-hex device.
    pub fn heron_median() -> Self {
        Self { p_depol_2q: 1.75e-3, p_depol_1q: 2.22e-4, p_readout_flip: 6.7e-3 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in
            [("p_depol_2q", self.p_depol_2q), ("p_depol_1q", self.p_depol_1q), ("p_readout_flip", self.p_readout_flip)]
        {
            if !(0.0..=1.0).contains(&v) {
                return arg(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        Ok(())
    }

    /// Same model with gate errors multiplied by `factor` (capped at 1).
    pub fn scaled_gates(&self, factor: f64) -> Self {
        Self { p_depol_2q: (self.p_depol_2q * factor).min(1.0), p_depol_1q: (self.p_depol_1q * factor).min(1.0), ..*self }
    }
}

/// Bitstring histogram. Keys are big-endian over the readout qubits.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub counts: BTreeMap<String, u64>,
}

impl Counts {
    pub fn shots(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn merge(&mut self, other: &Counts) {
        for (k, v) in &other.counts {
            *self.counts.entry(k.clone()).or_insert(0) += v;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.shots() == 0
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, u64)>) -> Self {
        let mut c = Counts::default();
        for (k, v) in pairs {
            *c.counts.entry(k.to_string()).or_insert(0) += v;
        }
        c
    }
}

/// Gate kernels specialized for the register size.
#[derive(Clone, Debug)]
enum Kernel {
    Diag1 { mask: usize, d: [C64; 2] },
    One { mask: usize, m: [C64; 4] },
    Diag2 { hi: usize, lo: usize, d: [C64; 4] },
    Two { hi: usize, lo: usize, m: [C64; 16] },
    General { m: ComplexMatrix, qubits: Vec<usize> },
}

impl Kernel {
    fn new(m: &ComplexMatrix, qubits: &[usize], n: usize) -> Self {
        let mask = |q: usize| 1usize << (n - 1 - q);
        let diagonal = (0..m.rows()).all(|i| (0..m.cols()).all(|j| i == j || m.get(i, j) == ZERO));
        match qubits {
            [q] if diagonal => Kernel::Diag1 { mask: mask(*q), d: [m.get(0, 0), m.get(1, 1)] },
            [q] => Kernel::One { mask: mask(*q), m: [m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1)] },
            [a, b] if diagonal => {
                Kernel::Diag2 { hi: mask(*a), lo: mask(*b), d: [m.get(0, 0), m.get(1, 1), m.get(2, 2), m.get(3, 3)] }
            }
            [a, b] => {
                let mut k = [ZERO; 16];
                k.copy_from_slice(m.data());
                Kernel::Two { hi: mask(*a), lo: mask(*b), m: k }
            }
            _ => Kernel::General { m: m.clone(), qubits: qubits.to_vec() },
        }
    }

    fn apply(&self, psi: &mut StateVector) {
        let amps = &mut psi.amps;
        match self {
            Kernel::Diag1 { mask, d } => {
                for (i, z) in amps.iter_mut().enumerate() {
                    *z *= d[usize::from(i & mask != 0)];
                }
            }
            Kernel::One { mask, m } => {
                for block in amps.chunks_exact_mut(2 * mask) {
                    let (a0, a1) = block.split_at_mut(*mask);
                    for (x0, x1) in a0.iter_mut().zip(a1.iter_mut()) {
                        let (y0, y1) = (*x0, *x1);
                        *x0 = m[0] * y0 + m[1] * y1;
                        *x1 = m[2] * y0 + m[3] * y1;
                    }
                }
            }
            Kernel::Diag2 { hi, lo, d } => {
                for (i, z) in amps.iter_mut().enumerate() {
                    *z *= d[2 * usize::from(i & hi != 0) + usize::from(i & lo != 0)];
                }
            }
            Kernel::Two { hi, lo, m } => {
                let (big, small) = (*hi.max(lo), *hi.min(lo));
                let bases = (0..amps.len()).step_by(2 * big).flat_map(|b| (b..b + big).step_by(2 * small));
                for i in bases.flat_map(|b| b..b + small) {
                    let idx = [i, i | lo, i | hi, i | hi | lo];
                    let x = idx.map(|j| amps[j]);
                    for (r, &j) in idx.iter().enumerate() {
                        amps[j] = m[4 * r] * x[0] + m[4 * r + 1] * x[1] + m[4 * r + 2] * x[2] + m[4 * r + 3] * x[3];
                    }
                }
            }
            Kernel::General { m, qubits } => psi.apply(m, qubits),
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Unitary { kernel: Kernel, qubits: Vec<usize>, noisy: bool },
    Measure { qubit: usize, clbit: usize },
    Reset { qubit: usize },
    Cond { clbit: usize, value: u8, body: Vec<Op> },
}

/// Lowers instructions to kernels. Noise-free single-qubit gates (Rz) are
/// folded into the next gate on the same qubit, which leaves the noise
/// sampling sequence unchanged.
struct Compiler {
    n: usize,
    pending: Vec<Option<ComplexMatrix>>,
}

impl Compiler {
    fn flush(&mut self, q: usize, out: &mut Vec<Op>) {
        if let Some(m) = self.pending[q].take() {
            out.push(Op::Unitary { kernel: Kernel::new(&m, &[q], self.n), qubits: vec![q], noisy: false });
        }
    }

    fn flush_all(&mut self, out: &mut Vec<Op>) {
        for q in 0..self.n {
            self.flush(q, out);
        }
    }

    fn compile(&mut self, list: &[Instruction]) -> Vec<Op> {
        let mut out = Vec::new();
        for ins in list {
            match ins {
                Instruction::Gate(g) => {
                    // Rz is a frame change on hardware and carries no error.
                    let noisy = g.kind != GateKind::Rz;
                    let mut m = g.matrix();
                    if let [q] = g.qubits[..] {
                        if let Some(p) = self.pending[q].take() {
                            m = m.matmul(&p);
                        }
                        if !noisy {
                            self.pending[q] = Some(m);
                            continue;
                        }
                    } else {
                        for &q in &g.qubits {
                            self.flush(q, &mut out);
                        }
                    }
                    out.push(Op::Unitary { kernel: Kernel::new(&m, &g.qubits, self.n), qubits: g.qubits.clone(), noisy });
                }
                Instruction::Measure { qubit, clbit } => {
                    self.flush(*qubit, &mut out);
                    out.push(Op::Measure { qubit: *qubit, clbit: *clbit });
                }
                Instruction::Reset { qubit } => {
                    self.flush(*qubit, &mut out);
                    out.push(Op::Reset { qubit: *qubit });
                }
                Instruction::Conditional { clbit, value, body } => {
                    self.flush_all(&mut out);
                    let mut body = self.compile(body);
                    self.flush_all(&mut body);
                    out.push(Op::Cond { clbit: *clbit, value: *value, body });
                }
                Instruction::Barrier { .. } => {}
            }
        }
        out
    }
}

fn compile(list: &[Instruction], n: usize) -> Vec<Op> {
    let mut c = Compiler { n, pending: vec![None; n] };
    let mut ops = c.compile(list);
    c.flush_all(&mut ops);
    ops
}

fn paulis(n: usize) -> Vec<[Kernel; 3]> {
    (0..n).map(|q| [GateKind::X, GateKind::Y, GateKind::Z].map(|k| Kernel::new(&k.matrix(&[]), &[q], n))).collect()
}

struct Shot<'a> {
    psi: StateVector,
    clbits: Vec<u8>,
    noise: Option<&'a NoiseModel>,
    paulis: &'a [[Kernel; 3]],
}

impl Shot<'_> {
    fn readout_flip(&self, bit: u8, rng: &mut ChaCha8Rng) -> u8 {
        match self.noise {
            Some(nm) if nm.p_readout_flip > 0.0 && rng.gen::<f64>() < nm.p_readout_flip => bit ^ 1,
            _ => bit,
        }
    }

    fn run(&mut self, ops: &[Op], rng: &mut ChaCha8Rng) {
        for op in ops {
            match op {
                Op::Unitary { kernel, qubits, noisy } => {
                    kernel.apply(&mut self.psi);
                    if let (Some(nm), true) = (self.noise, *noisy) {
                        let p = if qubits.len() == 1 { nm.p_depol_1q } else { nm.p_depol_2q };
                        if p > 0.0 && rng.gen::<f64>() < p {
                            for &q in qubits {
                                let k = rng.gen_range(0..4);
                                if k != 0 {
                                    self.paulis[q][k - 1].apply(&mut self.psi);
                                }
                            }
                        }
                    }
                }
                Op::Measure { qubit, clbit } => {
                    let b = self.psi.measure(*qubit, rng);
                    self.clbits[*clbit] = self.readout_flip(b, rng);
                }
                Op::Reset { qubit } => self.psi.reset(*qubit, rng),
                Op::Cond { clbit, value, body } => {
                    if self.clbits[*clbit] == *value {
                        self.run(body, rng);
                    }
                }
            }
        }
    }
}

/// Deterministic per-shot generator keyed by `(seed, shot)`.
pub fn shot_rng(seed: u64, shot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shot);
    rng
}

/// Runs `n_shots` independent trajectories of `c` from |0…0⟩ and records the
/// final measurement of `readout` (in that order).
pub fn run_shots(c: &Circuit, readout: &[usize], n_shots: u64, noise: Option<&NoiseModel>, seed: u64) -> Result<Counts> {
    if n_shots == 0 {
        return arg("at least one shot is required");
    }
    c.validate()?;
    if let Some(nm) = noise {
        nm.validate()?;
    }
    if let Some(q) = readout.iter().find(|&&q| q >= c.num_qubits) {
        return Err(Error::Circuit(format!("readout qubit {q} out of range")));
    }
    StateVector::zero(c.num_qubits)?;
    let ops = compile(&c.instructions, c.num_qubits);
    let paulis = paulis(c.num_qubits);
    const CHUNK: u64 = 256;
    let n_chunks = n_shots.div_ceil(CHUNK);
    let partial: Vec<Counts> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut counts = Counts::default();
            let mut key = String::with_capacity(readout.len());
            for shot in chunk * CHUNK..((chunk + 1) * CHUNK).min(n_shots) {
                let mut rng = shot_rng(seed, shot);
                let mut s = Shot {
                    psi: StateVector::zero(c.num_qubits).expect("size checked"),
                    clbits: vec![0; c.num_clbits],
                    noise,
                    paulis: &paulis,
                };
                s.run(&ops, &mut rng);
                key.clear();
                for &q in readout {
                    let b = s.psi.measure(q, &mut rng);
                    let b = s.readout_flip(b, &mut rng);
                    key.push(if b == 1 { '1' } else { '0' });
                }
                match counts.counts.get_mut(key.as_str()) {
                    Some(v) => *v += 1,
                    None => {
                        counts.counts.insert(key.clone(), 1);
                    }
                }
            }
            counts
        })
        .collect();
    let mut total = Counts::default();
    for p in &partial {
        total.merge(p);
    }
    Ok(total)
}

fn flatten(ops: &[Op], out: &mut Vec<Flat>) {
    for op in ops {
        match op {
            Op::Unitary { kernel, .. } => out.push(Flat::Unitary(kernel.clone())),
            Op::Measure { qubit, clbit } => out.push(Flat::Measure { qubit: *qubit, clbit: *clbit }),
            Op::Reset { qubit } => out.push(Flat::Reset { qubit: *qubit }),
            Op::Cond { clbit, value, body } => {
                let at = out.len();
                out.push(Flat::SkipUnless { clbit: *clbit, value: *value, len: 0 });
                flatten(body, out);
                let len = out.len() - at - 1;
                out[at] = Flat::SkipUnless { clbit: *clbit, value: *value, len };
            }
        }
    }
}

enum Flat {
    Unitary(Kernel),
    Measure { qubit: usize, clbit: usize },
    Reset { qubit: usize },
    SkipUnless { clbit: usize, value: u8, len: usize },
}

/// Exact noiseless excited-state populations of `readout`, obtained by
/// enumerating every measurement and reset outcome with nonzero probability.
/// Fails with a capacity error once more than `max_branches` branches exist.
pub fn branch_populations(c: &Circuit, readout: &[usize], max_branches: usize) -> Result<Vec<f64>> {
    c.validate()?;
    if let Some(q) = readout.iter().find(|&&q| q >= c.num_qubits) {
        return Err(Error::Circuit(format!("readout qubit {q} out of range")));
    }
    let mut prog = Vec::new();
    flatten(&compile(&c.instructions, c.num_qubits), &mut prog);
    const EPS: f64 = 1e-12;
    let mut out = vec![0.0; readout.len()];
    let mut branches = 1usize;
    let mut stack = vec![(0usize, StateVector::zero(c.num_qubits)?, vec![0u8; c.num_clbits], 1.0f64)];
    while let Some((mut pc, mut psi, mut clbits, mut w)) = stack.pop() {
        while pc < prog.len() {
            match &prog[pc] {
                Flat::Unitary(k) => k.apply(&mut psi),
                Flat::SkipUnless { clbit, value, len } => {
                    if clbits[*clbit] != *value {
                        pc += len;
                    }
                }
                Flat::Measure { qubit, .. } | Flat::Reset { qubit } => {
                    let clbit = match &prog[pc] {
                        Flat::Measure { clbit, .. } => Some(*clbit),
                        _ => None,
                    };
                    let p1 = psi.prob_one(*qubit).clamp(0.0, 1.0);
                    let outcome = if p1 < EPS {
                        0
                    } else if p1 > 1.0 - EPS {
                        1
                    } else {
                        branches += 1;
                        if branches > max_branches {
                            return Err(Error::Capacity(format!("more than {max_branches} measurement branches")));
                        }
                        let mut zero = psi.clone();
                        zero.collapse(*qubit, 0, 1.0 - p1);
                        let mut zero_bits = clbits.clone();
                        if let Some(cb) = clbit {
                            zero_bits[cb] = 0;
                        }
                        stack.push((pc + 1, zero, zero_bits, w * (1.0 - p1)));
                        w *= p1;
                        1
                    };
                    psi.collapse(*qubit, outcome, if outcome == 1 { p1 } else { 1.0 - p1 });
                    match clbit {
                        Some(cb) => clbits[cb] = outcome,
                        None if outcome == 1 => psi.flip(*qubit),
                        None => {}
                    }
                }
            }
            pc += 1;
        }
        for (o, &q) in out.iter_mut().zip(readout) {
            *o += w * psi.prob_one(q);
        }
    }
    Ok(out)
}

/// Per-emitter excited fractions of the first `n_system` bits with binomial
/// standard errors.
pub fn counts_to_populations(counts: &Counts, n_system: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = counts.shots();
    if n == 0 {
        return arg("counts are empty");
    }
    let mut ones = vec![0u64; n_system];
    for (k, v) in &counts.counts {
        if k.len() < n_system {
            return Err(Error::Dimension(format!("bitstring '{k}' shorter than {n_system}")));
        }
        for (i, ch) in k.bytes().take(n_system).enumerate() {
            if ch == b'1' {
                ones[i] += v;
            }
        }
    }
    let nf = n as f64;
    let vals: Vec<f64> = ones.iter().map(|&o| o as f64 / nf).collect();
    let stds = vals.iter().map(|p| (p * (1.0 - p) / nf).sqrt()).collect();
    Ok((vals, stds))
}

/// Mean excitation number over the first `n_system` bits and its standard error.
pub fn counts_total(counts: &Counts, n_system: usize) -> Result<(f64, f64)> {
    let n = counts.shots();
    if n == 0 {
        return arg("counts are empty");
    }
    let (mut s1, mut s2) = (0.0, 0.0);
    for (k, v) in &counts.counts {
        let x = k.bytes().take(n_system).filter(|&b| b == b'1').count() as f64;
        s1 += x * *v as f64;
        s2 += x * x * *v as f64;
    }
    let nf = n as f64;
    let mean = s1 / nf;
    let var = (s2 / nf - mean * mean).max(0.0);
    Ok((mean, (var / nf).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{evolve_density, qubit_populations};
    use crate::circuit::build_single_emitter_block;
    use crate::params::decay_probability;
    use crate::reference::DensityMatrix;

    #[test]
    fn single_emitter_decay_within_shot_noise() {
        let (gamma, gt) = (9e-3, 0.7);
        let t = gt / gamma;
        let mut c = Circuit::new(2, 0);
        c.x(0);
        c.extend(&build_single_emitter_block(gamma, t, 0, 1).unwrap());
        let n = 20_000;
        let counts = run_shots(&c, &[0], n, None, 7).unwrap();
        let (p, _) = counts_to_populations(&counts, 1).unwrap();
        let exact = (-gt).exp();
        let sigma = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((p[0] - exact).abs() < 4.0 * sigma);
        assert!((1.0 - decay_probability(gamma, t).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn deterministic_circuit_single_bitstring() {
        let mut c = Circuit::new(3, 1);
        c.x(0).cx(0, 2).measure(2, 0).conditional(
            0,
            1,
            vec![Instruction::Gate(crate::circuit::Gate::new(GateKind::X, vec![1], vec![]))],
        );
        let counts = run_shots(&c, &[0, 1, 2], 100, None, 1).unwrap();
        assert_eq!(counts.counts.len(), 1);
        assert_eq!(counts.counts["111"], 100);
    }

    #[test]
    fn seeds_are_reproducible() {
        let mut c = Circuit::new(2, 1);
        c.ry(0, 1.0).cx(0, 1).measure(1, 0).reset(1).ry(1, 0.4);
        let nm = NoiseModel { p_depol_2q: 0.1, p_depol_1q: 0.05, p_readout_flip: 0.02 };
        let a = run_shots(&c, &[0, 1], 5000, Some(&nm), 42).unwrap();
        let b = run_shots(&c, &[0, 1], 5000, Some(&nm), 42).unwrap();
        assert_eq!(a, b);
        let d = run_shots(&c, &[0, 1], 5000, Some(&nm), 43).unwrap();
        assert_ne!(a, d);
        assert_eq!(a.shots(), 5000);
    }

    #[test]
    fn full_depolarizing_mixes_pair() {
        let mut c = Circuit::new(2, 0);
        c.cx(0, 1);
        let nm = NoiseModel { p_depol_2q: 1.0, p_depol_1q: 0.0, p_readout_flip: 0.0 };
        let n = 40_000;
        let counts = run_shots(&c, &[0, 1], n, Some(&nm), 3).unwrap();
        for k in ["00", "01", "10", "11"] {
            let f = counts.counts[k] as f64 / n as f64;
            assert!((f - 0.25).abs() < 4.0 * (0.25 * 0.75 / n as f64).sqrt(), "{k}: {f}");
        }
    }

    #[test]
    fn populations_from_counts() {
        let c = Counts::from_pairs([("11", 10)]);
        let (p, s) = counts_to_populations(&c, 2).unwrap();
        assert_eq!((p, s), (vec![1.0, 1.0], vec![0.0, 0.0]));
        let c = Counts::from_pairs([("10", 5), ("01", 5)]);
        let (p, _) = counts_to_populations(&c, 2).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
        let (t, _) = counts_total(&c, 2).unwrap();
        assert!((t - 1.0).abs() < 1e-15);
        assert!(counts_to_populations(&Counts::default(), 2).is_err());
    }

    #[test]
    fn norm_preserved_and_oracle_agreement() {
        let mut c = Circuit::new(3, 1);
        c.ry(0, 1.1).cry(0, 1, 0.7).measure(1, 0).reset(0).ry(2, 0.3).cx(2, 0);
        let mut psi = StateVector::zero(3).unwrap();
        let mut rng = shot_rng(0, 0);
        let pk = paulis(3);
        for op in compile(&c.instructions, 3) {
            let mut s = Shot { psi: psi.clone(), clbits: vec![0; 1], noise: None, paulis: &pk };
            s.run(std::slice::from_ref(&op), &mut rng);
            psi = s.psi;
            assert!((psi.norm() - 1.0).abs() < 1e-10);
        }
        let n = 40_000;
        let counts = run_shots(&c, &[0, 1, 2], n, None, 11).unwrap();
        let (p, _) = counts_to_populations(&counts, 3).unwrap();
        let rho = evolve_density(&c, &DensityMatrix::from_bits(&[0, 0, 0]).into_matrix()).unwrap();
        let exact = qubit_populations(&rho, 3, &[0, 1, 2]);
        for (a, b) in p.iter().zip(&exact) {
            assert!((a - b).abs() < 4.0 * (b * (1.0 - b) / n as f64).sqrt() + 1e-12);
        }
    }

    #[test]
    fn kernels_match_generic_application() {
        let n = 4;
        let amps: Vec<C64> = (0..16).map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.91).cos())).collect();
        let norm = norm_sqr(&amps).sqrt();
        let amps: Vec<C64> = amps.iter().map(|z| z / norm).collect();
        let cases: Vec<(ComplexMatrix, Vec<usize>)> = vec![
            (GateKind::Ry.matrix(&[0.3]), vec![2]),
            (GateKind::Rz.matrix(&[1.3]), vec![0]),
            (GateKind::CRy.matrix(&[0.8]), vec![3, 1]),
            (GateKind::RXX.matrix(&[0.4]).matmul(&GateKind::CRy.matrix(&[1.1])), vec![0, 2]),
            (GateKind::CZ.matrix(&[]), vec![1, 3]),
            (GateKind::CCX.matrix(&[]), vec![3, 0, 2]),
        ];
        for (m, qs) in cases {
            let mut a = StateVector::from_amplitudes(amps.clone()).unwrap();
            let mut b = a.clone();
            Kernel::new(&m, &qs, n).apply(&mut a);
            b.apply(&m, &qs);
            let diff = a.amps.iter().zip(&b.amps).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(diff < 1e-14, "{qs:?}: {diff}");
        }
    }

    #[test]
    fn branch_enumeration_matches_density_oracle() {
        let mut c = Circuit::new(3, 1);
        c.ry(0, 1.1).cry(0, 1, 0.7).measure(1, 0).reset(0).ry(2, 0.3).cx(2, 0);
        c.conditional(0, 1, vec![Instruction::Gate(crate::circuit::Gate::new(GateKind::Ry, vec![2], vec![0.9]))]);
        let exact = branch_populations(&c, &[0, 1, 2], 16).unwrap();
        let rho = evolve_density(&c, &DensityMatrix::from_bits(&[0, 0, 0]).into_matrix()).unwrap();
        let want = qubit_populations(&rho, 3, &[0, 1, 2]);
        for (a, b) in exact.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(branch_populations(&c, &[0], 1), Err(Error::Capacity(_))));
    }
}
