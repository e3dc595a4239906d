//! Kraus representations of the decay channels, channels induced by circuits,
//! and exact density-matrix propagation through dynamic circuits.

use std::collections::BTreeMap;

use crate::circuit::{Circuit, GateKind, Instruction};
use crate::error::{arg, Error, Result};
use crate::linalg::{apply_local, hermitian_eigenvalues, r, ComplexMatrix, C64, ONE, ZERO};
use crate::params::basis_change_p;
use crate::reference::DensityMatrix;

/// Completeness tolerance for constructed channels.
pub const COMPLETENESS_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct KrausChannel {
    dim: usize,
    kraus_ops: Vec<ComplexMatrix>,
}

impl KrausChannel {
    /// Checks shapes and Σ K†K = I.
    pub fn new(kraus_ops: Vec<ComplexMatrix>) -> Result<Self> {
        let dim = kraus_ops.first().map(|k| k.cols()).ok_or_else(|| Error::Argument("no Kraus operators".into()))?;
        if kraus_ops.iter().any(|k| k.rows() != dim || k.cols() != dim) {
            return Err(Error::Dimension(format!("Kraus operators must all be {dim}x{dim}")));
        }
        let ch = Self { dim, kraus_ops };
        let err = ch.completeness_error();
        if err > COMPLETENESS_TOL {
            return Err(Error::Numerical(format!("completeness violated by {err:e}")));
        }
        Ok(ch)
    }

    pub fn identity(dim: usize) -> Self {
        Self { dim, kraus_ops: vec![ComplexMatrix::identity(dim)] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kraus_ops(&self) -> &[ComplexMatrix] {
        &self.kraus_ops
    }

    pub fn completeness_error(&self) -> f64 {
        let mut s = ComplexMatrix::zeros(self.dim, self.dim);
        for k in &self.kraus_ops {
            s.add_assign_scaled(&k.dagger().matmul(k), ONE);
        }
        s.max_abs_diff(&ComplexMatrix::identity(self.dim))
    }

    pub fn apply(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        if rho.rows() != self.dim || rho.cols() != self.dim {
            return Err(Error::Dimension(format!(
                "channel acts on dimension {}, state is {}x{}",
                self.dim,
                rho.rows(),
                rho.cols()
            )));
        }
        let mut out = ComplexMatrix::zeros(self.dim, self.dim);
        for k in &self.kraus_ops {
            out.add_assign_scaled(&k.matmul(rho).matmul(&k.dagger()), ONE);
        }
        Ok(out)
    }

    /// Choi matrix Σᵢⱼ |i⟩⟨j| ⊗ E(|i⟩⟨j|).
    pub fn choi(&self) -> ComplexMatrix {
        let d = self.dim;
        let mut out = ComplexMatrix::zeros(d * d, d * d);
        for k in &self.kraus_ops {
            // vec(K) with the input index first.
            let v: Vec<C64> = (0..d * d).map(|idx| k.get(idx % d, idx / d)).collect();
            out.add_assign_scaled(&ComplexMatrix::outer(&v, &v), ONE);
        }
        out
    }

    /// Minimum eigenvalue of the Choi matrix.
    pub fn choi_min_eigenvalue(&self) -> Result<f64> {
        Ok(hermitian_eigenvalues(&self.choi())?.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// `U K U†` for every Kraus operator.
    pub fn conjugated(&self, u: &ComplexMatrix) -> Self {
        let ud = u.dagger();
        Self { dim: self.dim, kraus_ops: self.kraus_ops.iter().map(|k| u.matmul(k).matmul(&ud)).collect() }
    }

    /// Applies `self` then `other`.
    pub fn then(&self, other: &KrausChannel) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::Dimension("cannot compose channels of different dimension".into()));
        }
        let mut ops = Vec::with_capacity(self.kraus_ops.len() * other.kraus_ops.len());
        for b in &other.kraus_ops {
            for a in &self.kraus_ops {
                let k = b.matmul(a);
                if k.max_abs() > 1e-15 {
                    ops.push(k);
                }
            }
        }
        if ops.is_empty() {
            ops.push(ComplexMatrix::zeros(self.dim, self.dim));
        }
        Ok(Self { dim: self.dim, kraus_ops: ops })
    }

    /// `T[out][in]` = probability of basis state `out` given basis input `in`.
    pub fn population_map(&self) -> Vec<Vec<f64>> {
        let d = self.dim;
        let mut t = vec![vec![0.0; d]; d];
        for k in &self.kraus_ops {
            for (o, row) in t.iter_mut().enumerate() {
                for (i, v) in row.iter_mut().enumerate() {
                    *v += k.get(o, i).norm_sqr();
                }
            }
        }
        t
    }
}

fn check_probability(p: f64, name: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return arg(format!("{name} must lie in [0, 1], got {p}"));
    }
    Ok(())
}

/// Single-qubit amplitude damping with decay probability `p`.
pub fn adc_kraus(p: f64) -> Result<KrausChannel> {
    check_probability(p, "decay probability")?;
    let k0 = ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, (1.0 - p).sqrt()]);
    let k1 = ComplexMatrix::from_real(2, 2, &[0.0, p.sqrt(), 0.0, 0.0]);
    KrausChannel::new(vec![k0, k1])
}

/// Four-path two-emitter decay channel in the interaction basis {G, Λ₋, Λ₊, E}.
pub fn conjoined_kraus(p_plus: f64, p_minus: f64) -> Result<KrausChannel> {
    check_probability(p_plus, "p_plus")?;
    check_probability(p_minus, "p_minus")?;
    let (sp, sm) = (p_plus.sqrt(), p_minus.sqrt());
    let (cp, cm) = ((1.0 - p_plus).sqrt(), (1.0 - p_minus).sqrt());
    let m0 = ComplexMatrix::diag(&[ONE, r(cm), r(cp), r(cp * cm)]);
    let mut m1 = ComplexMatrix::zeros(4, 4);
    let mut m2 = ComplexMatrix::zeros(4, 4);
    let mut m3 = ComplexMatrix::zeros(4, 4);
    m1.set(0, 1, r(sm));
    m1.set(2, 3, r(sp * cm));
    m2.set(0, 2, r(sp));
    m2.set(1, 3, r(sm * cp));
    m3.set(0, 3, r(sp * sm));
    KrausChannel::new(vec![m0, m1, m2, m3])
}

/// The conjoined channel expressed in the computational basis of the pair.
pub fn conjoined_kraus_computational(p_plus: f64, p_minus: f64) -> Result<KrausChannel> {
    Ok(conjoined_kraus(p_plus, p_minus)?.conjugated(&basis_change_p()))
}

pub fn apply_channel(ch: &KrausChannel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    DensityMatrix::new(ch.apply(rho.matrix())?)
}

/// Applies `op` on `qubits` from the left and `op†` from the right of an
/// `n`-qubit density matrix stored row-major.
pub fn conjugate_local(rho: &mut ComplexMatrix, n: usize, op: &ComplexMatrix, qubits: &[usize]) {
    let data = rho.data_mut();
    apply_local(data, 2 * n, op, qubits);
    let cols: Vec<usize> = qubits.iter().map(|q| q + n).collect();
    apply_local(data, 2 * n, &op.conj(), &cols);
}

/// Applies a channel acting on `qubits` of an `n`-qubit density matrix.
pub fn apply_channel_local(ch: &KrausChannel, rho: &ComplexMatrix, n: usize, qubits: &[usize]) -> Result<ComplexMatrix> {
    if ch.dim() != 1 << qubits.len() {
        return Err(Error::Dimension(format!("channel of dimension {} on {} qubits", ch.dim(), qubits.len())));
    }
    let mut out = ComplexMatrix::zeros(rho.rows(), rho.cols());
    for k in ch.kraus_ops() {
        let mut term = rho.clone();
        conjugate_local(&mut term, n, k, qubits);
        out.add_assign_scaled(&term, ONE);
    }
    Ok(out)
}

fn bit_of(index: usize, n: usize, q: usize) -> usize {
    (index >> (n - 1 - q)) & 1
}

/// One outcome history of a circuit: the sequence of measurement and reset
/// results and the linear map it applies to system inputs.
#[derive(Clone, Debug)]
pub struct Branch {
    pub record: Vec<u8>,
    pub clbits: u64,
    /// Columns are images of the system basis inputs, length `2^num_qubits`.
    pub columns: Vec<Vec<C64>>,
}

impl Branch {
    fn weight(&self) -> f64 {
        self.columns.iter().flat_map(|v| v.iter()).map(|z| z.norm_sqr()).sum()
    }
}

const BRANCH_PRUNE: f64 = 1e-26;

fn propagate(list: &[Instruction], n: usize, mut branches: Vec<Branch>) -> Result<Vec<Branch>> {
    for ins in list {
        match ins {
            Instruction::Gate(g) => {
                let m = g.matrix();
                for b in &mut branches {
                    for v in &mut b.columns {
                        apply_local(v, n, &m, &g.qubits);
                    }
                }
            }
            Instruction::Barrier { .. } => {}
            Instruction::Measure { qubit, clbit } => {
                let mut next = Vec::with_capacity(branches.len() * 2);
                for b in branches {
                    for outcome in 0..2u8 {
                        let columns: Vec<Vec<C64>> = b
                            .columns
                            .iter()
                            .map(|v| {
                                v.iter()
                                    .enumerate()
                                    .map(|(i, z)| if bit_of(i, n, *qubit) == outcome as usize { *z } else { ZERO })
                                    .collect()
                            })
                            .collect();
                        let mut record = b.record.clone();
                        record.push(outcome);
                        let clbits = (b.clbits & !(1 << clbit)) | ((outcome as u64) << clbit);
                        let nb = Branch { record, clbits, columns };
                        if nb.weight() > BRANCH_PRUNE {
                            next.push(nb);
                        }
                    }
                }
                branches = next;
            }
            Instruction::Reset { qubit } => {
                let x = GateKind::X.matrix(&[]);
                let mut next = Vec::with_capacity(branches.len() * 2);
                for b in branches {
                    for outcome in 0..2u8 {
                        let columns: Vec<Vec<C64>> = b
                            .columns
                            .iter()
                            .map(|v| {
                                let mut w: Vec<C64> = v
                                    .iter()
                                    .enumerate()
                                    .map(|(i, z)| if bit_of(i, n, *qubit) == outcome as usize { *z } else { ZERO })
                                    .collect();
                                if outcome == 1 {
                                    apply_local(&mut w, n, &x, &[*qubit]);
                                }
                                w
                            })
                            .collect();
                        let mut record = b.record.clone();
                        record.push(outcome);
                        let nb = Branch { record, clbits: b.clbits, columns };
                        if nb.weight() > BRANCH_PRUNE {
                            next.push(nb);
                        }
                    }
                }
                branches = next;
            }
            Instruction::Conditional { clbit, value, body } => {
                let (hit, miss): (Vec<Branch>, Vec<Branch>) =
                    branches.into_iter().partition(|b| ((b.clbits >> clbit) & 1) as u8 == *value);
                branches = miss;
                branches.extend(propagate(body, n, hit)?);
            }
        }
    }
    Ok(branches)
}

fn register_index(bits_at: &[(usize, usize)], n: usize) -> usize {
    bits_at.iter().fold(0, |acc, &(q, b)| acc | (b << (n - 1 - q)))
}

fn check_registers(c: &Circuit, system: &[usize], ancillas: &[usize]) -> Result<()> {
    if c.num_clbits > 64 {
        return Err(Error::Capacity("at most 64 clbits are supported".into()));
    }
    let mut all: Vec<usize> = system.iter().chain(ancillas).copied().collect();
    all.sort_unstable();
    all.dedup();
    if all.len() != system.len() + ancillas.len() || all.iter().any(|&q| q >= c.num_qubits) {
        return Err(Error::Circuit("system and ancilla registers overlap or exceed the circuit".into()));
    }
    let touched: Vec<usize> = c.instructions.iter().flat_map(|i| i.qubits()).collect();
    if let Some(q) = touched.iter().find(|q| !all.contains(q)) {
        return Err(Error::Circuit(format!("circuit touches qubit {q} outside the declared registers")));
    }
    Ok(())
}

/// Enumerates every outcome branch of `c` acting on `system` inputs with
/// `ancillas` starting in |0⟩. Branches of negligible weight are dropped.
pub fn branch_maps(c: &Circuit, system: &[usize], ancillas: &[usize]) -> Result<Vec<Branch>> {
    c.validate()?;
    check_registers(c, system, ancillas)?;
    let n = c.num_qubits;
    if n > 14 {
        return Err(Error::Capacity(format!("branch enumeration limited to 14 qubits, circuit has {n}")));
    }
    let k = system.len();
    let columns: Vec<Vec<C64>> = (0..1usize << k)
        .map(|s| {
            let bits: Vec<(usize, usize)> = system.iter().enumerate().map(|(pos, &q)| (q, (s >> (k - 1 - pos)) & 1)).collect();
            let mut v = vec![ZERO; 1 << n];
            v[register_index(&bits, n)] = ONE;
            v
        })
        .collect();
    propagate(&c.instructions, n, vec![Branch { record: vec![], clbits: 0, columns }])
}

/// Channel induced on `system` by a circuit with fresh ancillas. Unlisted
/// qubits must be untouched; every final ancilla state yields a Kraus term.
pub fn channel_from_circuit(c: &Circuit, system: &[usize], ancillas: &[usize]) -> Result<KrausChannel> {
    let n = c.num_qubits;
    let k = system.len();
    let d = 1usize << k;
    let branches = branch_maps(c, system, ancillas)?;
    let mut ops = Vec::new();
    for b in &branches {
        for e in 0..1usize << ancillas.len() {
            let anc_bits: Vec<(usize, usize)> =
                ancillas.iter().enumerate().map(|(pos, &q)| (q, (e >> (ancillas.len() - 1 - pos)) & 1)).collect();
            let anc_index = register_index(&anc_bits, n);
            let kop = ComplexMatrix::from_fn(d, d, |o, i| {
                let sys_bits: Vec<(usize, usize)> =
                    system.iter().enumerate().map(|(pos, &q)| (q, (o >> (k - 1 - pos)) & 1)).collect();
                b.columns[i][anc_index | register_index(&sys_bits, n)]
            });
            if kop.max_abs() > 1e-14 {
                ops.push(kop);
            }
        }
    }
    if ops.is_empty() {
        return Err(Error::Numerical("circuit induces a zero map".into()));
    }
    KrausChannel::new(ops)
}

/// Whether two circuits apply the same operator on every outcome history, each
/// up to its own global phase.
pub fn branch_equivalent(a: &Circuit, b: &Circuit, tol: f64) -> Result<bool> {
    if a.num_qubits != b.num_qubits {
        return Ok(false);
    }
    let all: Vec<usize> = (0..a.num_qubits).collect();
    let to_map = |c: &Circuit| -> Result<BTreeMap<Vec<u8>, ComplexMatrix>> {
        Ok(branch_maps(c, &all, &[])?
            .into_iter()
            .map(|br| {
                let d = br.columns.len();
                (br.record.clone(), ComplexMatrix::from_fn(d, d, |i, j| br.columns[j][i]))
            })
            .collect())
    };
    let (ma, mb) = (to_map(a)?, to_map(b)?);
    for (rec, m) in &ma {
        match mb.get(rec) {
            Some(o) => {
                if !m.equal_up_to_phase(o, tol) {
                    return Ok(false);
                }
            }
            None if m.frobenius_norm() < tol => {}
            None => return Ok(false),
        }
    }
    Ok(mb.iter().all(|(rec, m)| ma.contains_key(rec) || m.frobenius_norm() < tol))
}

/// Exact density-matrix evolution of the full register through a dynamic
/// circuit, with branches keyed by the classical register. Returns the
/// outcome-averaged final state.
pub fn evolve_density(c: &Circuit, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    c.validate()?;
    let n = c.num_qubits;
    if rho.rows() != 1 << n || rho.cols() != 1 << n {
        return Err(Error::Dimension(format!("state is {}x{}, circuit has {n} qubits", rho.rows(), rho.cols())));
    }
    if c.num_clbits > 64 {
        return Err(Error::Capacity("at most 64 clbits are supported".into()));
    }
    let mut branches = BTreeMap::new();
    branches.insert(0u64, rho.clone());
    let out = evolve_list(&c.instructions, n, branches)?;
    let mut total = ComplexMatrix::zeros(rho.rows(), rho.cols());
    for m in out.values() {
        total.add_assign_scaled(m, ONE);
    }
    Ok(total)
}

fn project(rho: &ComplexMatrix, n: usize, q: usize, outcome: usize) -> ComplexMatrix {
    let d = 1usize << n;
    let mut out = rho.clone();
    let data = out.data_mut();
    for i in 0..d {
        let bi = bit_of(i, n, q);
        for j in 0..d {
            if bi != outcome || bit_of(j, n, q) != outcome {
                data[i * d + j] = ZERO;
            }
        }
    }
    out
}

fn insert_add(map: &mut BTreeMap<u64, ComplexMatrix>, key: u64, m: ComplexMatrix) {
    if m.trace().re.abs() < 1e-300 && m.max_abs() < 1e-300 {
        return;
    }
    match map.get_mut(&key) {
        Some(acc) => acc.add_assign_scaled(&m, ONE),
        None => {
            map.insert(key, m);
        }
    }
}

fn evolve_list(
    list: &[Instruction],
    n: usize,
    mut branches: BTreeMap<u64, ComplexMatrix>,
) -> Result<BTreeMap<u64, ComplexMatrix>> {
    for ins in list {
        match ins {
            Instruction::Gate(g) => {
                let m = g.matrix();
                for rho in branches.values_mut() {
                    conjugate_local(rho, n, &m, &g.qubits);
                }
            }
            Instruction::Barrier { .. } => {}
            Instruction::Measure { qubit, clbit } => {
                let mut next = BTreeMap::new();
                for (key, rho) in branches {
                    for outcome in 0..2usize {
                        let k = (key & !(1 << clbit)) | ((outcome as u64) << clbit);
                        insert_add(&mut next, k, project(&rho, n, *qubit, outcome));
                    }
                }
                branches = next;
            }
            Instruction::Reset { qubit } => {
                let x = GateKind::X.matrix(&[]);
                for rho in branches.values_mut() {
                    let mut one = project(rho, n, *qubit, 1);
                    conjugate_local(&mut one, n, &x, &[*qubit]);
                    let mut zero = project(rho, n, *qubit, 0);
                    zero.add_assign_scaled(&one, ONE);
                    *rho = zero;
                }
            }
            Instruction::Conditional { clbit, value, body } => {
                let (hit, miss): (BTreeMap<u64, ComplexMatrix>, BTreeMap<u64, ComplexMatrix>) =
                    branches.into_iter().partition(|(k, _)| ((k >> clbit) & 1) as u8 == *value);
                branches = miss;
                for (k, m) in evolve_list(body, n, hit)? {
                    insert_add(&mut branches, k, m);
                }
            }
        }
    }
    Ok(branches)
}

/// Computational-basis density matrix of a product state with the listed
/// qubits excited.
pub fn basis_density(n: usize, bits: &[u8]) -> Result<ComplexMatrix> {
    if bits.len() != n {
        return Err(Error::Dimension(format!("expected {n} bits, got {}", bits.len())));
    }
    Ok(DensityMatrix::from_bits(bits).into_matrix())
}

/// Reduced density matrix on `keep` (in the listed order).
pub fn partial_trace_keep(rho: &ComplexMatrix, n: usize, keep: &[usize]) -> ComplexMatrix {
    let k = keep.len();
    let dk = 1usize << k;
    let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
    let mut out = ComplexMatrix::zeros(dk, dk);
    let d = 1usize << n;
    let index = |kept: usize, env: usize| {
        let mut idx = 0usize;
        for (pos, &q) in keep.iter().enumerate() {
            idx |= ((kept >> (k - 1 - pos)) & 1) << (n - 1 - q);
        }
        for (pos, &q) in traced.iter().enumerate() {
            idx |= ((env >> (traced.len() - 1 - pos)) & 1) << (n - 1 - q);
        }
        idx
    };
    for i in 0..dk {
        for j in 0..dk {
            let mut s = ZERO;
            for e in 0..1usize << traced.len() {
                s += rho.data()[index(i, e) * d + index(j, e)];
            }
            out.set(i, j, s);
        }
    }
    out
}

/// Population of |1⟩ on each listed qubit.
pub fn qubit_populations(rho: &ComplexMatrix, n: usize, qubits: &[usize]) -> Vec<f64> {
    let d = 1usize << n;
    qubits.iter().map(|&q| (0..d).filter(|&i| bit_of(i, n, q) == 1).map(|i| rho.get(i, i).re).sum()).collect()
}

/// Kraus channel of a single-qubit unitary, for composing with decay channels.
pub fn unitary_channel(u: &ComplexMatrix) -> KrausChannel {
    KrausChannel { dim: u.rows(), kraus_ops: vec![u.clone()] }
}
