//! Exact Lindblad dynamics for small chains.
//!
//! The chain generator is assembled bond by bond: every nearest-neighbour pair
//! contributes local decay of both its emitters at rate γ̃ plus the two cross
//! terms at rate γ̃₀₁. Interior emitters therefore collect local decay from both
//! of their bonds. This is the generator that the pairwise circuit blocks
//! approximate, and it is completely positive whenever |γ̃₀₁| ≤ γ̃.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{embed, is_psd, r, ComplexMatrix, C64, ONE, ZERO};
use crate::params::{basis_change_p, derived_rates, interaction_basis, ChainParams, DerivedRates};

/// Largest chain accepted by the dense builders.
pub const MAX_DENSE_QUBITS: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    data: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(data: ComplexMatrix) -> Result<Self> {
        let dim = data.rows();
        if !data.is_square() || !dim.is_power_of_two() {
            return Err(Error::Dimension(format!(
                "density matrix must be square with power-of-two size, got {}x{}",
                data.rows(),
                data.cols()
            )));
        }
        Ok(Self { n_qubits: dim.trailing_zeros() as usize, data })
    }

    /// Checks the Hermiticity, trace and positivity invariants.
    pub fn validated(data: ComplexMatrix) -> Result<Self> {
        let rho = Self::new(data)?;
        if !rho.data.is_hermitian(1e-10) {
            return Err(Error::Argument("density matrix is not Hermitian".into()));
        }
        if (rho.trace() - 1.0).abs() > 1e-10 {
            return Err(Error::Argument(format!("trace {} differs from 1", rho.trace())));
        }
        if !is_psd(&rho.data, 1e-8) {
            return Err(Error::Argument("density matrix has a negative eigenvalue".into()));
        }
        Ok(rho)
    }

    /// Computational basis state, big-endian (`bits[0]` is qubit 0).
    pub fn from_bits(bits: &[u8]) -> Self {
        let n = bits.len();
        let idx = bits_to_index(bits);
        let mut m = ComplexMatrix::zeros(1 << n, 1 << n);
        m.set(idx, idx, ONE);
        Self { n_qubits: n, data: m }
    }

    pub fn from_pure(psi: &[C64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Argument(format!("state norm {norm} differs from 1")));
        }
        Self::new(ComplexMatrix::outer(psi, psi))
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.data
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data.get(i, j)
    }

    pub fn trace(&self) -> f64 {
        self.data.trace().re
    }

    /// Per-emitter excited-state populations ⟨σᵢ†σᵢ⟩.
    pub fn populations(&self) -> Vec<f64> {
        populations(self)
    }

    /// ρ′ = P ρ P† on a two-qubit state (P is real symmetric and self-inverse).
    pub fn to_interaction_basis(&self) -> Result<Self> {
        if self.n_qubits != 2 {
            return Err(Error::Dimension("interaction basis is defined for two qubits".into()));
        }
        let p = basis_change_p();
        Self::new(p.matmul(&self.data).matmul(&p.dagger()))
    }

    pub fn from_interaction_basis(&self) -> Result<Self> {
        // P is an involution, so the inverse transform is the same conjugation.
        self.to_interaction_basis()
    }
}

pub fn bits_to_index(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | (b as usize & 1))
}

pub fn populations(rho: &DensityMatrix) -> Vec<f64> {
    let n = rho.n_qubits;
    let mut out = vec![0.0; n];
    for s in 0..rho.dim() {
        let p = rho.data.get(s, s).re;
        for (i, o) in out.iter_mut().enumerate() {
            if (s >> (n - 1 - i)) & 1 == 1 {
                *o += p;
            }
        }
    }
    out
}

/// Lowering operator σ = |0⟩⟨1|.
pub fn sigma() -> ComplexMatrix {
    ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0])
}

/// An operator acting on a few qubits of a larger register.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalOperator {
    pub qubits: Vec<usize>,
    pub matrix: ComplexMatrix,
}

impl LocalOperator {
    pub fn new(qubits: Vec<usize>, matrix: ComplexMatrix) -> Result<Self> {
        if matrix.rows() != 1 << qubits.len() || !matrix.is_square() {
            return Err(Error::Dimension(format!("operator of size {} on {} qubits", matrix.rows(), qubits.len())));
        }
        Ok(Self { qubits, matrix })
    }

    pub fn sigma(q: usize) -> Self {
        Self { qubits: vec![q], matrix: sigma() }
    }

    /// The same operator written on a superset `support` of its qubits.
    pub fn extend_to(&self, support: &[usize]) -> ComplexMatrix {
        let local: Vec<usize> = self
            .qubits
            .iter()
            .map(|q| support.iter().position(|s| s == q).expect("support must contain operator qubits"))
            .collect();
        embed(&self.matrix, &local, support.len())
    }

    pub fn to_dense(&self, n_qubits: usize) -> ComplexMatrix {
        embed(&self.matrix, &self.qubits, n_qubits)
    }
}

/// One term γ D(L, R)[ρ] = γ (LρR† − ½{R†L, ρ}).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpTerm {
    pub rate: f64,
    pub left: LocalOperator,
    pub right: LocalOperator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LindbladSpec {
    pub n_qubits: usize,
    pub hamiltonian: ComplexMatrix,
    pub jump_terms: Vec<JumpTerm>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecMode {
    Full,
    DiagonalOnly,
}

pub fn build_hamiltonian(params: &ChainParams) -> Result<ComplexMatrix> {
    params.validate()?;
    let n = params.n;
    if n > MAX_DENSE_QUBITS {
        return Err(Error::Capacity(format!("dense Hamiltonian limited to {MAX_DENSE_QUBITS} emitters, got {n}")));
    }
    let dim = 1usize << n;
    let mut h = ComplexMatrix::zeros(dim, dim);
    for s in 0..dim {
        h.set(s, s, r(params.omega * s.count_ones() as f64));
        for i in 0..n.saturating_sub(1) {
            let bi = 1 << (n - 1 - i);
            let bj = 1 << (n - 2 - i);
            // σᵢ†σᵢ₊₁ moves an excitation from i+1 to i; the h.c. moves it back.
            if s & bi == 0 && s & bj != 0 {
                let t = s ^ bi ^ bj;
                h.set(t, s, r(params.g));
                h.set(s, t, r(params.g));
            }
        }
    }
    Ok(h)
}

fn pair_operator(lo: &[f64; 4], hi: &[f64; 4]) -> ComplexMatrix {
    ComplexMatrix::from_fn(4, 4, |i, j| r(lo[i] * hi[j]))
}

pub fn build_chain_spec(params: &ChainParams, mode: SpecMode) -> Result<LindbladSpec> {
    let hamiltonian = build_hamiltonian(params)?;
    let n = params.n;
    let mut terms: Vec<JumpTerm> = Vec::new();
    let mut push = |rate: f64, left: LocalOperator, right: LocalOperator| {
        if let Some(t) = terms.iter_mut().find(|t| t.left == left && t.right == right) {
            t.rate += rate;
        } else {
            terms.push(JumpTerm { rate, left, right });
        }
    };
    if n == 1 {
        push(params.gamma, LocalOperator::sigma(0), LocalOperator::sigma(0));
    }
    let rates = derived_rates(params);
    let [g_state, lm, lp, e] = interaction_basis();
    for i in 0..n.saturating_sub(1) {
        let j = i + 1;
        match mode {
            SpecMode::Full => {
                push(params.gamma, LocalOperator::sigma(i), LocalOperator::sigma(i));
                push(params.gamma, LocalOperator::sigma(j), LocalOperator::sigma(j));
                push(params.gamma_cross, LocalOperator::sigma(i), LocalOperator::sigma(j));
                push(params.gamma_cross, LocalOperator::sigma(j), LocalOperator::sigma(i));
            }
            SpecMode::DiagonalOnly => {
                for (rate, lo, hi) in [
                    (rates.gamma_plus, &g_state, &lp),
                    (rates.gamma_plus, &lp, &e),
                    (rates.gamma_minus, &g_state, &lm),
                    (rates.gamma_minus, &lm, &e),
                ] {
                    if rate == 0.0 {
                        continue;
                    }
                    let op = LocalOperator { qubits: vec![i, j], matrix: pair_operator(lo, hi) };
                    push(rate, op.clone(), op);
                }
            }
        }
    }
    Ok(LindbladSpec { n_qubits: n, hamiltonian, jump_terms: terms })
}

/// The generator prepared for repeated evaluation on vectorized ρ.
///
/// ρ is stored row-major, so it is a vector on 2n qubits: qubits `0..n` index
/// rows and `n..2n` index columns. Left multiplication by A acts on the row
/// qubits, right multiplication by B acts as Bᵀ on the column qubits.
struct Generator {
    dim: usize,
    /// Nonzeros of K = −iH − ½ Σ γ R†L, so that the generator is Kρ + ρK† + jumps.
    k_nonzeros: Vec<(usize, usize, C64)>,
    /// Sparse action of Σ γ LρR† on the row-major vector of ρ, as (out, in, value).
    jumps: Vec<(usize, usize, C64)>,
}

/// Nonzero entries `(row, col, value)` of a local operator written on the full register.
fn embedded_nonzeros(op: &ComplexMatrix, qubits: &[usize], n: usize) -> Vec<(usize, usize, C64)> {
    let k = qubits.len();
    let masks: Vec<usize> = qubits.iter().map(|q| 1usize << (n - 1 - q)).collect();
    let all: usize = masks.iter().sum();
    let mut out = Vec::new();
    for col in 0..1usize << n {
        let lc = masks.iter().fold(0, |acc, &m| (acc << 1) | usize::from(col & m != 0));
        for lr in 0..1usize << k {
            let v = op.get(lr, lc);
            if v == ZERO {
                continue;
            }
            let mut row = col & !all;
            for (b, &m) in masks.iter().enumerate() {
                if lr >> (k - 1 - b) & 1 == 1 {
                    row |= m;
                }
            }
            out.push((row, col, v));
        }
    }
    out
}

/// Sums duplicate `(row, col)` entries and drops exact zeros.
fn merge(mut entries: Vec<(usize, usize, C64)>) -> Vec<(usize, usize, C64)> {
    entries.sort_unstable_by_key(|e| (e.0, e.1));
    let mut out: Vec<(usize, usize, C64)> = Vec::with_capacity(entries.len());
    for (r, c, v) in entries {
        match out.last_mut() {
            Some(last) if last.0 == r && last.1 == c => last.2 += v,
            _ => out.push((r, c, v)),
        }
    }
    out.retain(|e| e.2 != ZERO);
    out
}

impl Generator {
    fn new(spec: &LindbladSpec) -> Result<Self> {
        let n = spec.n_qubits;
        let dim = 1usize << n;
        if spec.hamiltonian.rows() != dim || !spec.hamiltonian.is_square() {
            return Err(Error::Dimension("Hamiltonian size does not match the register".into()));
        }
        let mi = C64::new(0.0, -1.0);
        let mut k_entries = Vec::new();
        for i in 0..dim {
            for j in 0..dim {
                let v = spec.hamiltonian.get(i, j);
                if v != ZERO {
                    k_entries.push((i, j, mi * v));
                }
            }
        }
        let mut jumps = Vec::new();
        for t in &spec.jump_terms {
            for q in t.left.qubits.iter().chain(&t.right.qubits) {
                if *q >= n {
                    return Err(Error::Dimension(format!("jump operator on qubit {q} outside {n}-qubit register")));
                }
            }
            if t.rate == 0.0 {
                continue;
            }
            let mut support: Vec<usize> = t.left.qubits.iter().chain(&t.right.qubits).copied().collect();
            support.sort_unstable();
            support.dedup();
            let anti = t.right.extend_to(&support).dagger().matmul(&t.left.extend_to(&support));
            k_entries.extend(embedded_nonzeros(&anti, &support, n).into_iter().map(|(i, j, v)| (i, j, v * (-0.5 * t.rate))));
            let l = embedded_nonzeros(&t.left.matrix, &t.left.qubits, n);
            let rr = embedded_nonzeros(&t.right.matrix, &t.right.qubits, n);
            // (LρR†)_{ij} = Σ L_ik ρ_kl conj(R_jl).
            for &(i, k, a) in &l {
                for &(j, lc, b) in &rr {
                    jumps.push((i * dim + j, k * dim + lc, a * b.conj() * t.rate));
                }
            }
        }
        Ok(Self { dim, k_nonzeros: merge(k_entries), jumps: merge(jumps) })
    }

    fn rhs_into(&self, rho: &[C64], out: &mut [C64]) {
        let dim = self.dim;
        out.iter_mut().for_each(|z| *z = ZERO);
        for &(i, k, v) in &self.k_nonzeros {
            // Kρ: row i gathers row k.
            let (dst, src) = (i * dim, k * dim);
            for c in 0..dim {
                out[dst + c] += v * rho[src + c];
            }
            // ρK†: column i gathers column k with conj(K_ik).
            let w = v.conj();
            for r in 0..dim {
                out[r * dim + i] += w * rho[r * dim + k];
            }
        }
        for &(o, i, v) in &self.jumps {
            out[o] += v * rho[i];
        }
    }
}

/// dρ/dt = −i[H,ρ] + Σ γ (LρR† − ½{R†L, ρ}).
pub fn lindblad_rhs(spec: &LindbladSpec, rho: &DensityMatrix) -> Result<ComplexMatrix> {
    if rho.n_qubits() != spec.n_qubits {
        return Err(Error::Dimension(format!("state has {} qubits, generator {}", rho.n_qubits(), spec.n_qubits)));
    }
    let gen = Generator::new(spec)?;
    let dim = rho.dim();
    let mut out = vec![ZERO; dim * dim];
    gen.rhs_into(rho.matrix().data(), &mut out);
    ComplexMatrix::from_vec(dim, dim, out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorOptions {
    /// Upper bound on the RK4 step in physical time.
    pub max_step: f64,
    /// Cholesky positivity check at every output time, for registers up to this size.
    pub positivity_check_max_qubits: usize,
}

impl IntegratorOptions {
    /// Step Δ(γt) = 1e−3 measured against the largest rate in the generator.
    pub fn for_spec(spec: &LindbladSpec) -> Self {
        let rate = spec.jump_terms.iter().map(|t| t.rate.abs()).fold(0.0, f64::max);
        let scale = if rate > 0.0 { rate } else { spec.hamiltonian.max_abs().max(1.0) };
        Self { max_step: 1e-3 / scale, positivity_check_max_qubits: 8 }
    }
}

/// Integrates from `rho0` at t = 0 and returns the state at every time in `t_grid`.
pub fn integrate(spec: &LindbladSpec, rho0: &DensityMatrix, t_grid: &[f64]) -> Result<Vec<DensityMatrix>> {
    integrate_with(spec, rho0, t_grid, IntegratorOptions::for_spec(spec))
}

pub fn integrate_with(
    spec: &LindbladSpec,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    opts: IntegratorOptions,
) -> Result<Vec<DensityMatrix>> {
    if rho0.n_qubits() != spec.n_qubits {
        return Err(Error::Dimension("initial state does not match the generator".into()));
    }
    if t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Argument("time grid must be ascending and non-negative".into()));
    }
    if !(opts.max_step > 0.0) {
        return Err(Error::Argument("integrator step must be positive".into()));
    }
    let dim = rho0.dim();
    let frame = excitation_frame(spec);
    let gen = match frame {
        Some(w) => {
            let mut rotated = spec.clone();
            for s in 0..dim {
                let d = rotated.hamiltonian.get(s, s) - w * s.count_ones() as f64;
                rotated.hamiltonian.set(s, s, d);
            }
            Generator::new(&rotated)?
        }
        None => Generator::new(spec)?,
    };
    let len = dim * dim;
    let mut rho = rho0.matrix().data().to_vec();
    let trace0 = rho0.trace();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![ZERO; len], vec![ZERO; len], vec![ZERO; len], vec![ZERO; len]);
    let mut tmp = vec![ZERO; len];
    let mut t_now = 0.0;
    let mut out = Vec::with_capacity(t_grid.len());
    for &t_target in t_grid {
        let span = t_target - t_now;
        let steps = (span / opts.max_step).ceil() as usize;
        let h = if steps > 0 { span / steps as f64 } else { 0.0 };
        for _ in 0..steps {
            gen.rhs_into(&rho, &mut k1);
            axpy_into(&rho, &k1, 0.5 * h, &mut tmp);
            gen.rhs_into(&tmp, &mut k2);
            axpy_into(&rho, &k2, 0.5 * h, &mut tmp);
            gen.rhs_into(&tmp, &mut k3);
            axpy_into(&rho, &k3, h, &mut tmp);
            gen.rhs_into(&tmp, &mut k4);
            for i in 0..len {
                rho[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
            }
            symmetrize(&mut rho, dim);
        }
        t_now = t_target;
        let tr: f64 = (0..dim).map(|i| rho[i * dim + i].re).sum();
        if (tr - trace0).abs() > 1e-6 {
            return Err(Error::Integration(format!("trace drifted to {tr} at t = {t_now}")));
        }
        let mut lab = rho.clone();
        if let Some(w) = frame {
            for a in 0..dim {
                for b in 0..dim {
                    let dn = a.count_ones() as f64 - b.count_ones() as f64;
                    if dn != 0.0 {
                        lab[a * dim + b] *= C64::from_polar(1.0, -w * dn * t_now);
                    }
                }
            }
        }
        let m = ComplexMatrix::from_vec(dim, dim, lab)?;
        if spec.n_qubits <= opts.positivity_check_max_qubits && !is_psd(&m, 1e-6) {
            return Err(Error::Integration(format!("state lost positivity at t = {t_now}")));
        }
        out.push(DensityMatrix::new(m)?);
    }
    Ok(out)
}

/// Frequency of a uniform ω·N term that can be moved into a rotating frame.
///
/// Valid when H conserves the excitation number N and every jump operator
/// lowers N by exactly one: then e^{−iωNt} commutes with the whole generator
/// and only the slow remainder needs numerical integration.
fn excitation_frame(spec: &LindbladSpec) -> Option<f64> {
    let h = &spec.hamiltonian;
    let dim = h.rows();
    let n = spec.n_qubits;
    if n == 0 {
        return None;
    }
    for i in 0..dim {
        for j in 0..dim {
            if h.get(i, j) != ZERO && i.count_ones() != j.count_ones() {
                return None;
            }
        }
    }
    let lowers = |op: &LocalOperator| {
        let k = op.qubits.len();
        (0..1usize << k).all(|i| (0..1usize << k).all(|j| op.matrix.get(i, j) == ZERO || i.count_ones() + 1 == j.count_ones()))
    };
    if !spec.jump_terms.iter().all(|t| lowers(&t.left) && lowers(&t.right)) {
        return None;
    }
    let w = h.get(dim - 1, dim - 1).re / n as f64;
    (w != 0.0).then_some(w)
}

fn axpy_into(x: &[C64], y: &[C64], a: f64, out: &mut [C64]) {
    for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
        *o = xi + yi * a;
    }
}

fn symmetrize(rho: &mut [C64], dim: usize) {
    for i in 0..dim {
        rho[i * dim + i].im = 0.0;
        for j in i + 1..dim {
            let a = rho[i * dim + j];
            let b = rho[j * dim + i];
            let m = (a + b.conj()) * 0.5;
            rho[i * dim + j] = m;
            rho[j * dim + i] = m.conj();
        }
    }
}

/// The closed set of interaction-basis elements under pure dissipation,
/// indexed as 0 = G, 1 = Λ₋, 2 = Λ₊, 3 = E.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoQubitElements {
    pub r11: f64,
    pub r22: f64,
    pub r33: f64,
    pub r12: C64,
    pub r21: C64,
}

impl TwoQubitElements {
    /// Emitter populations ½(ρ′₁₁+ρ′₂₂ ± (ρ′₁₂+ρ′₂₁)) + ρ′₃₃.
    pub fn populations(&self) -> [f64; 2] {
        let base = 0.5 * (self.r11 + self.r22);
        let coh = 0.5 * (self.r12 + self.r21).re;
        // |10⟩ = (|Λ₋⟩+|Λ₊⟩)/√2 and |01⟩ = (|Λ₊⟩−|Λ₋⟩)/√2.
        [base + coh + self.r33, base - coh + self.r33]
    }
}

/// (1 − e^{−γt})/γ, continuous at γ = 0.
fn saturating_integral(gamma: f64, t: f64) -> f64 {
    if gamma * t < 1e-8 {
        t * (1.0 - 0.5 * gamma * t)
    } else {
        -(-gamma * t).exp_m1() / gamma
    }
}

/// Closed-form pure-dissipation solution for a pair in the interaction basis.
pub fn analytic_two_qubit(rates: &DerivedRates, rho0_interaction: &DensityMatrix, t: f64) -> Result<TwoQubitElements> {
    if rho0_interaction.n_qubits() != 2 {
        return Err(Error::Dimension("two-qubit state required".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::Argument(format!("time must be non-negative, got {t}")));
    }
    let (gp, gm) = (rates.gamma_plus, rates.gamma_minus);
    let r11 = rho0_interaction.get(1, 1).re;
    let r22 = rho0_interaction.get(2, 2).re;
    let r33 = rho0_interaction.get(3, 3).re;
    let decay_e = (-(gp + gm) * t).exp();
    Ok(TwoQubitElements {
        r11: (-gm * t).exp() * (r11 + gm * r33 * saturating_integral(gp, t)),
        r22: (-gp * t).exp() * (r22 + gp * r33 * saturating_integral(gm, t)),
        r33: r33 * decay_e,
        r12: rho0_interaction.get(1, 2) * decay_e.sqrt(),
        r21: rho0_interaction.get(2, 1) * decay_e.sqrt(),
    })
}

/// Single-emitter solution: ρ₁₁ e^{−γt}, coherences e^{−γt/2} (times the free phase).
pub fn analytic_single_qubit(gamma: f64, omega: f64, rho0: &DensityMatrix, t: f64) -> Result<ComplexMatrix> {
    if rho0.n_qubits() != 1 {
        return Err(Error::Dimension("single-qubit state required".into()));
    }
    let p11 = rho0.get(1, 1) * (-gamma * t).exp();
    let coh = rho0.get(0, 1) * (-0.5 * gamma * t).exp() * C64::from_polar(1.0, omega * t);
    Ok(ComplexMatrix::from_vec(2, 2, vec![ONE * 1.0 - p11, coh, coh.conj(), p11])?.hermitian_part())
}

/// Product-state density matrix for `bits`, convenience for callers that hold a
/// state preparation as a bit list.
pub fn product_state(bits: &[u8]) -> DensityMatrix {
    DensityMatrix::from_bits(bits)
}

/// Dense σᵢ for an `n`-qubit register.
pub fn sigma_at(i: usize, n: usize) -> ComplexMatrix {
    let mut ops = vec![ComplexMatrix::identity(2); n];
    ops[i] = sigma();
    crate::linalg::kron_all(&ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, hermitian_eigenvalues};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(n: usize) -> ChainParams {
        ChainParams::paper_defaults(n)
    }

    fn no_coupling(n: usize) -> ChainParams {
        ChainParams { omega: 0.0, g: 0.0, ..params(n) }
    }

    /// Dense reference generator built straight from the definition.
    fn dense_rhs(spec: &LindbladSpec, rho: &ComplexMatrix) -> ComplexMatrix {
        let n = spec.n_qubits;
        let h = &spec.hamiltonian;
        let mut out = h.matmul(rho).sub(&rho.matmul(h)).scale(c(0.0, -1.0));
        for t in &spec.jump_terms {
            let l = t.left.to_dense(n);
            let rr = t.right.to_dense(n);
            let a = rr.dagger().matmul(&l);
            let d = l.matmul(rho).matmul(&rr.dagger()).sub(&a.matmul(rho).add(&rho.matmul(&a)).scale(r(0.5)));
            out = out.add(&d.scale(r(t.rate)));
        }
        out
    }

    fn random_density(n: usize, seed: u64) -> DensityMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 1 << n;
        let a = ComplexMatrix::from_fn(d, d, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let m = a.matmul(&a.dagger());
        let tr = m.trace();
        DensityMatrix::new(m.scale(tr.inv())).unwrap()
    }

    #[test]
    fn hamiltonian_small_cases() {
        let h = build_hamiltonian(&params(1)).unwrap();
        assert_eq!(h, ComplexMatrix::diag(&[r(0.0), r(1.2045)]));
        let h = build_hamiltonian(&ChainParams { g: 0.0, ..params(2) }).unwrap();
        assert_eq!(h, ComplexMatrix::diag(&[r(0.0), r(1.2045), r(1.2045), r(2.409)]));
        assert!(build_hamiltonian(&params(13)).is_err());
    }

    #[test]
    fn hamiltonian_matches_operator_sum() {
        let p = params(3);
        let h = build_hamiltonian(&p).unwrap();
        let mut expect = ComplexMatrix::zeros(8, 8);
        for i in 0..3 {
            let s = sigma_at(i, 3);
            expect = expect.add(&s.dagger().matmul(&s).scale(r(p.omega)));
        }
        for i in 0..2 {
            let a = sigma_at(i, 3);
            let b = sigma_at(i + 1, 3);
            expect = expect.add(&a.dagger().matmul(&b).add(&a.matmul(&b.dagger())).scale(r(p.g)));
        }
        assert!(h.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn two_emitter_eigenvectors_are_interaction_states() {
        let p = params(2);
        let h = build_hamiltonian(&p).unwrap();
        let expected = [0.0, p.omega - p.g, p.omega + p.g, 2.0 * p.omega];
        for (state, e) in interaction_basis().iter().zip(expected) {
            let v: Vec<C64> = state.iter().map(|&x| r(x)).collect();
            let hv = h.matvec(&v);
            assert!(hv.iter().zip(&v).all(|(a, b)| (a - b * e).norm() < 1e-14));
        }
    }

    #[test]
    fn chain_spec_term_counts() {
        let s = build_chain_spec(&params(1), SpecMode::Full).unwrap();
        assert_eq!(s.jump_terms.len(), 1);
        assert_eq!(s.jump_terms[0].rate, params(1).gamma);
        let s = build_chain_spec(&params(2), SpecMode::Full).unwrap();
        assert_eq!(s.jump_terms.len(), 4);
        let s = build_chain_spec(&params(3), SpecMode::Full).unwrap();
        let middle = s.jump_terms.iter().find(|t| t.left == LocalOperator::sigma(1) && t.right == t.left).unwrap();
        assert!((middle.rate - 2.0 * params(3).gamma).abs() < 1e-18);
    }

    #[test]
    fn rhs_matches_dense_definition() {
        for mode in [SpecMode::Full, SpecMode::DiagonalOnly] {
            let p = ChainParams { gamma_cross: 4e-3, ..params(3) };
            let spec = build_chain_spec(&p, mode).unwrap();
            let rho = random_density(3, 5);
            let fast = lindblad_rhs(&spec, &rho).unwrap();
            let slow = dense_rhs(&spec, rho.matrix());
            assert!(fast.max_abs_diff(&slow) < 1e-14, "{mode:?}");
            assert!(fast.trace().norm() < 1e-12);
        }
    }

    #[test]
    fn rhs_single_qubit_examples() {
        let spec = build_chain_spec(&params(1), SpecMode::Full).unwrap();
        let ground = DensityMatrix::from_bits(&[0]);
        assert!(lindblad_rhs(&spec, &ground).unwrap().max_abs() < 1e-15);
        let spec0 = build_chain_spec(&no_coupling(1), SpecMode::Full).unwrap();
        let d = lindblad_rhs(&spec0, &DensityMatrix::from_bits(&[1])).unwrap();
        let g = params(1).gamma;
        assert!(d.max_abs_diff(&ComplexMatrix::diag(&[r(g), r(-g)])) < 1e-15);
    }

    #[test]
    fn rhs_reproduces_interaction_basis_generator() {
        // Row-by-row check of the closed pure-dissipation subsystem.
        let p = ChainParams { gamma_cross: 4e-3, ..no_coupling(2) };
        let rates = derived_rates(&p);
        let spec = build_chain_spec(&p, SpecMode::Full).unwrap();
        let rho = random_density(2, 9);
        let d = lindblad_rhs(&spec, &rho).unwrap();
        let pm = basis_change_p();
        let dp = pm.matmul(&d).matmul(&pm);
        let rp = rho.to_interaction_basis().unwrap();
        let (gp, gm) = (rates.gamma_plus, rates.gamma_minus);
        assert!((dp.get(3, 3).re - (-(gp + gm) * rp.get(3, 3).re)).abs() < 1e-15);
        assert!((dp.get(1, 1).re - gm * (rp.get(3, 3).re - rp.get(1, 1).re)).abs() < 1e-15);
        assert!((dp.get(2, 2).re - gp * (rp.get(3, 3).re - rp.get(2, 2).re)).abs() < 1e-15);
        assert!((dp.get(1, 2) + rp.get(1, 2) * (0.5 * (gp + gm))).norm() < 1e-15);
    }

    #[test]
    fn single_qubit_decay_matches_closed_form() {
        let p = params(1);
        let spec = build_chain_spec(&p, SpecMode::Full).unwrap();
        let grid: Vec<f64> = (0..=10).map(|i| 0.2 * i as f64 / p.gamma).collect();
        let out = integrate(&spec, &DensityMatrix::from_bits(&[1]), &grid).unwrap();
        for (rho, t) in out.iter().zip(&grid) {
            assert!((rho.get(1, 1).re - (-p.gamma * t).exp()).abs() < 1e-8);
        }
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let plus = DensityMatrix::from_pure(&[r(h), r(h)]).unwrap();
        let out = integrate(&spec, &plus, &grid).unwrap();
        for (rho, t) in out.iter().zip(&grid) {
            assert!((rho.get(0, 1).norm() - 0.5 * (-0.5 * p.gamma * t).exp()).abs() < 1e-7);
            let exact = analytic_single_qubit(p.gamma, p.omega, &plus, *t).unwrap();
            assert!(rho.matrix().max_abs_diff(&exact) < 1e-8);
        }
    }

    #[test]
    fn integrate_matches_analytic_pair_solution() {
        for gc in [9e-3, 4e-3, 0.0] {
            let p = ChainParams { gamma_cross: gc, ..no_coupling(2) };
            let rates = derived_rates(&p);
            let spec = build_chain_spec(&p, SpecMode::Full).unwrap();
            let rho0 = random_density(2, 21);
            let grid: Vec<f64> = (0..50).map(|i| 2.0 * i as f64 / 49.0 / p.gamma).collect();
            let out = integrate(&spec, &rho0, &grid).unwrap();
            let r0 = rho0.to_interaction_basis().unwrap();
            for (rho, &t) in out.iter().zip(&grid) {
                let a = analytic_two_qubit(&rates, &r0, t).unwrap();
                let rp = rho.to_interaction_basis().unwrap();
                let diffs = [
                    (rp.get(1, 1).re - a.r11).abs(),
                    (rp.get(2, 2).re - a.r22).abs(),
                    (rp.get(3, 3).re - a.r33).abs(),
                    (rp.get(1, 2) - a.r12).norm(),
                    (rp.get(2, 1) - a.r21).norm(),
                ];
                assert!(diffs.iter().all(|&d| d <= 1e-7), "gc={gc} t={t} {diffs:?}");
                let pops = rho.populations();
                let ap = a.populations();
                assert!((pops[0] - ap[0]).abs() < 1e-7 && (pops[1] - ap[1]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn analytic_limits() {
        let rates = DerivedRates { gamma_plus: 2.0, gamma_minus: 0.0 };
        let mut m = ComplexMatrix::zeros(4, 4);
        m.set(1, 1, r(0.3));
        m.set(3, 3, r(0.7));
        let rho = DensityMatrix::new(m).unwrap();
        let a = analytic_two_qubit(&rates, &rho, 0.8).unwrap();
        assert_eq!(a.r11, 0.3);
        assert!((a.r33 - 0.7 * (-1.6f64).exp()).abs() < 1e-15);
        // γ₋ → 0 limit of the feed into Λ₊ is γ₊·t·e^{−γ₊t}.
        assert!((a.r22 - 0.7 * 2.0 * 0.8 * (-1.6f64).exp()).abs() < 1e-12);
        let rates0 = DerivedRates { gamma_plus: 0.0, gamma_minus: 0.0 };
        let a = analytic_two_qubit(&rates0, &rho, 5.0).unwrap();
        assert_eq!((a.r11, a.r33), (0.3, 0.7));
    }

    #[test]
    fn population_examples() {
        assert_eq!(DensityMatrix::from_bits(&[1, 1]).populations(), vec![1.0, 1.0]);
        assert_eq!(DensityMatrix::from_bits(&[0, 1, 1]).populations(), vec![0.0, 1.0, 1.0]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let lp = DensityMatrix::from_pure(&[r(0.0), r(h), r(h), r(0.0)]).unwrap();
        let p = lp.populations();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        // Interaction-basis formula on a random state.
        let rho = random_density(2, 4);
        let rp = rho.to_interaction_basis().unwrap();
        let el = TwoQubitElements {
            r11: rp.get(1, 1).re,
            r22: rp.get(2, 2).re,
            r33: rp.get(3, 3).re,
            r12: rp.get(1, 2),
            r21: rp.get(2, 1),
        };
        let direct = rho.populations();
        let formula = el.populations();
        assert!((direct[0] - formula[0]).abs() < 1e-14 && (direct[1] - formula[1]).abs() < 1e-14);
    }

    #[test]
    fn full_and_diagonal_agree_on_pair_populations() {
        let p = ChainParams { gamma_cross: 4e-3, ..params(2) };
        let full = build_chain_spec(&p, SpecMode::Full).unwrap();
        let diag = build_chain_spec(&p, SpecMode::DiagonalOnly).unwrap();
        let grid: Vec<f64> = (1..=6).map(|i| 0.3 * i as f64 / p.gamma).collect();
        for idx in 0..4u8 {
            let rho0 = DensityMatrix::from_bits(&[idx >> 1, idx & 1]);
            let a = integrate(&full, &rho0, &grid).unwrap();
            let b = integrate(&diag, &rho0, &grid).unwrap();
            for (x, y) in a.iter().zip(&b) {
                let (px, py) = (x.populations(), y.populations());
                assert!((px[0] - py[0]).abs() < 1e-9 && (px[1] - py[1]).abs() < 1e-9);
            }
            let da = lindblad_rhs(&full, &rho0).unwrap();
            let db = lindblad_rhs(&diag, &rho0).unwrap();
            for s in 0..4 {
                assert!((da.get(s, s) - db.get(s, s)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn trajectory_stays_physical() {
        let p = params(3);
        let spec = build_chain_spec(&p, SpecMode::Full).unwrap();
        let grid: Vec<f64> = (0..=4).map(|i| 0.5 * i as f64 / p.gamma).collect();
        let out = integrate(&spec, &random_density(3, 8), &grid).unwrap();
        for rho in out {
            assert!((rho.trace() - 1.0).abs() < 1e-8);
            assert!(hermitian_eigenvalues(rho.matrix()).unwrap()[0] > -1e-6);
        }
    }

    #[test]
    fn integrate_rejects_bad_grid() {
        let spec = build_chain_spec(&params(1), SpecMode::Full).unwrap();
        assert!(integrate(&spec, &DensityMatrix::from_bits(&[1]), &[1.0, 0.5]).is_err());
    }
}
