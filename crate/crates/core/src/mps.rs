//! Matrix-product-state trajectories: the static circuit is executed gate by
//! gate on an MPS and every ancilla reset is sampled with the Born rule.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{assemble_trotter_circuit, route_linear, Circuit, GateKind, Instruction, LayoutPlan, Variant};
use crate::error::{arg, Error, Result};
use crate::linalg::{embed, svd_truncated, ComplexMatrix, C64, ONE, ZERO};
use crate::params::ChainParams;
use crate::shots::shot_rng;

/// Default relative truncation threshold.
pub const DEFAULT_CUTOFF: f64 = 1e-10;
/// Truncation applied when only moving the orthogonality center.
const GAUGE_CUTOFF: f64 = 1e-24;
/// Discarded weight treated as genuine overflow when the cutoff is zero.
const OVERFLOW_WEIGHT: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
struct Site {
    l: usize,
    r: usize,
    /// Index `(a·2 + s)·r + b`.
    data: Vec<C64>,
}

impl Site {
    fn product(bit: u8) -> Self {
        let mut data = vec![ZERO; 2];
        data[bit as usize] = ONE;
        Self { l: 1, r: 1, data }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpsState {
    sites: Vec<Site>,
    ortho_center: usize,
    max_chi: usize,
    cutoff: f64,
    discarded: f64,
}

/// Product-state MPS for the layout's sites, with ancillas in |0⟩.
pub fn init_product_mps(bits: &[u8], layout: &LayoutPlan, max_chi: usize, cutoff: f64) -> Result<MpsState> {
    MpsState::product(&layout.site_bits(bits)?, max_chi, cutoff)
}

impl MpsState {
    pub fn product(bits: &[u8], max_chi: usize, cutoff: f64) -> Result<Self> {
        if bits.is_empty() {
            return arg("an MPS needs at least one site");
        }
        if max_chi == 0 {
            return arg("max_chi must be at least 1");
        }
        if !(cutoff >= 0.0) {
            return arg(format!("cutoff must be non-negative, got {cutoff}"));
        }
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return arg(format!("bit value {b} is not 0 or 1"));
        }
        Ok(Self { sites: bits.iter().map(|&b| Site::product(b)).collect(), ortho_center: 0, max_chi, cutoff, discarded: 0.0 })
    }

    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites[..self.sites.len() - 1].iter().map(|s| s.r).collect()
    }

    pub fn ortho_center(&self) -> usize {
        self.ortho_center
    }

    /// Accumulated relative weight removed by truncations.
    pub fn discarded_weight(&self) -> f64 {
        self.discarded
    }

    /// Norm of the state, read off the center tensor.
    pub fn norm(&self) -> f64 {
        self.sites[self.ortho_center].data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            for z in &mut self.sites[self.ortho_center].data {
                *z /= n;
            }
        }
    }

    fn shift_right(&mut self) -> Result<()> {
        let c = self.ortho_center;
        let (l, r) = (self.sites[c].l, self.sites[c].r);
        let m = ComplexMatrix::from_vec(l * 2, r, std::mem::take(&mut self.sites[c].data))?;
        let (u, s, vh, _) = svd_truncated(&m, usize::MAX, GAUGE_CUTOFF)?;
        let k = s.len();
        self.sites[c] = Site { l, r: k, data: u.into_data() };
        // (S·V†) · next
        let next = &self.sites[c + 1];
        let (nr, nd) = (next.r, &next.data);
        let mut data = vec![ZERO; k * 2 * nr];
        for a in 0..k {
            for m_ in 0..r {
                let w = vh.get(a, m_) * s[a];
                if w == ZERO {
                    continue;
                }
                for sb in 0..2 * nr {
                    data[a * 2 * nr + sb] += w * nd[m_ * 2 * nr + sb];
                }
            }
        }
        self.sites[c + 1] = Site { l: k, r: nr, data };
        self.ortho_center = c + 1;
        Ok(())
    }

    fn shift_left(&mut self) -> Result<()> {
        let c = self.ortho_center;
        let (l, r) = (self.sites[c].l, self.sites[c].r);
        let m = ComplexMatrix::from_vec(l, 2 * r, std::mem::take(&mut self.sites[c].data))?;
        let (u, s, vh, _) = svd_truncated(&m, usize::MAX, GAUGE_CUTOFF)?;
        let k = s.len();
        self.sites[c] = Site { l: k, r, data: vh.into_data() };
        // prev · (U·S)
        let prev = &self.sites[c - 1];
        let (pl, pr, pd) = (prev.l, prev.r, &prev.data);
        let mut data = vec![ZERO; pl * 2 * k];
        for row in 0..pl * 2 {
            for m_ in 0..pr {
                let x = pd[row * pr + m_];
                if x == ZERO {
                    continue;
                }
                for b in 0..k {
                    data[row * k + b] += x * u.get(m_, b) * s[b];
                }
            }
        }
        self.sites[c - 1] = Site { l: pl, r: k, data };
        self.ortho_center = c - 1;
        Ok(())
    }

    pub fn move_center(&mut self, to: usize) -> Result<()> {
        if to >= self.sites.len() {
            return Err(Error::Argument(format!("site {to} out of range")));
        }
        while self.ortho_center < to {
            self.shift_right()?;
        }
        while self.ortho_center > to {
            self.shift_left()?;
        }
        Ok(())
    }

    fn apply_single(&mut self, gate: &ComplexMatrix, site: usize) {
        let s = &mut self.sites[site];
        let r = s.r;
        for a in 0..s.l {
            for b in 0..r {
                let x0 = s.data[(a * 2) * r + b];
                let x1 = s.data[(a * 2 + 1) * r + b];
                s.data[(a * 2) * r + b] = gate.get(0, 0) * x0 + gate.get(0, 1) * x1;
                s.data[(a * 2 + 1) * r + b] = gate.get(1, 0) * x0 + gate.get(1, 1) * x1;
            }
        }
    }

    /// Applies a `2^k` gate to the contiguous sites `start..start+k`, with the
    /// first site as the most significant local bit.
    pub fn apply_contiguous(&mut self, gate: &ComplexMatrix, start: usize) -> Result<()> {
        let d = gate.rows();
        let k = d.trailing_zeros() as usize;
        if gate.cols() != d || !d.is_power_of_two() || k == 0 {
            return Err(Error::Dimension("gate must be square with power-of-two size".into()));
        }
        if start + k > self.sites.len() {
            return Err(Error::Argument(format!("gate on sites {start}..{} exceeds the chain", start + k)));
        }
        if k == 1 {
            self.apply_single(gate, start);
            return Ok(());
        }
        self.move_center(start)?;
        // θ with shape (χl, 2^k, χr).
        let chi_l = self.sites[start].l;
        let mut theta = self.sites[start].data.clone();
        let mut phys = 2;
        let mut chi_r = self.sites[start].r;
        for site in &self.sites[start + 1..start + k] {
            let mut next = vec![ZERO; chi_l * phys * 2 * site.r];
            for row in 0..chi_l * phys {
                for m in 0..chi_r {
                    let x = theta[row * chi_r + m];
                    if x == ZERO {
                        continue;
                    }
                    let src = &site.data[m * 2 * site.r..(m + 1) * 2 * site.r];
                    let dst = &mut next[row * 2 * site.r..(row + 1) * 2 * site.r];
                    for (o, y) in dst.iter_mut().zip(src) {
                        *o += x * y;
                    }
                }
            }
            theta = next;
            phys *= 2;
            chi_r = site.r;
        }
        let mut out = vec![ZERO; theta.len()];
        let mut buf = vec![ZERO; d];
        for a in 0..chi_l {
            for b in 0..chi_r {
                for (j, v) in buf.iter_mut().enumerate() {
                    *v = theta[(a * d + j) * chi_r + b];
                }
                for i in 0..d {
                    let row = &gate.data()[i * d..(i + 1) * d];
                    out[(a * d + i) * chi_r + b] = row.iter().zip(&buf).map(|(g, x)| g * x).sum();
                }
            }
        }
        // Split left to right; the remainder keeps the (χ, 2^m, χr) layout.
        let mut rem = out;
        let mut left = chi_l;
        let mut rem_phys = d;
        for m in 0..k - 1 {
            let cols = (rem_phys / 2) * chi_r;
            let mat = ComplexMatrix::from_vec(left * 2, cols, rem)?;
            let (u, s, vh, disc) = svd_truncated(&mat, self.max_chi, self.cutoff)?;
            if self.cutoff == 0.0 && disc > OVERFLOW_WEIGHT {
                return Err(Error::Capacity(format!(
                    "bond dimension exceeds max_chi = {} with zero cutoff (discarded weight {disc:e})",
                    self.max_chi
                )));
            }
            self.discarded += disc;
            let kept = s.len();
            self.sites[start + m] = Site { l: left, r: kept, data: u.into_data() };
            let mut next = vh.into_data();
            for (a, row) in next.chunks_mut(cols).enumerate() {
                for z in row {
                    *z *= s[a];
                }
            }
            rem = next;
            left = kept;
            rem_phys /= 2;
        }
        self.sites[start + k - 1] = Site { l: left, r: chi_r, data: rem };
        self.ortho_center = start + k - 1;
        self.normalize();
        Ok(())
    }

    /// Applies a 4×4 gate on sites `site` and `site + 1`.
    pub fn apply_two_site(&mut self, gate: &ComplexMatrix, site: usize) -> Result<()> {
        if gate.rows() != 4 {
            return Err(Error::Dimension("two-site gate must be 4x4".into()));
        }
        self.apply_contiguous(gate, site)
    }

    /// Applies a gate listed on arbitrary sites that must form a contiguous block.
    pub fn apply_gate(&mut self, gate: &ComplexMatrix, qubits: &[usize]) -> Result<()> {
        let lo = *qubits.iter().min().ok_or_else(|| Error::Argument("gate has no qubits".into()))?;
        let hi = *qubits.iter().max().unwrap();
        if hi - lo + 1 != qubits.len() {
            return Err(Error::Layout(format!("sites {qubits:?} are not adjacent")));
        }
        let local: Vec<usize> = qubits.iter().map(|&q| q - lo).collect();
        if local.iter().enumerate().all(|(i, &q)| i == q) {
            self.apply_contiguous(gate, lo)
        } else {
            self.apply_contiguous(&embed(gate, &local, qubits.len()), lo)
        }
    }

    /// Probability of |1⟩ on `site` (moves the center there).
    pub fn prob_one(&mut self, site: usize) -> Result<f64> {
        self.move_center(site)?;
        let s = &self.sites[site];
        let mut p = 0.0;
        for a in 0..s.l {
            for b in 0..s.r {
                p += s.data[(a * 2 + 1) * s.r + b].norm_sqr();
            }
        }
        Ok(p)
    }

    fn project(&mut self, site: usize, outcome: u8) {
        let s = &mut self.sites[site];
        let r = s.r;
        for a in 0..s.l {
            for b in 0..r {
                s.data[(a * 2 + (1 - outcome as usize)) * r + b] = ZERO;
            }
        }
    }

    /// Born-rule measurement of `site`, collapsing and renormalizing.
    pub fn measure(&mut self, site: usize, rng: &mut impl Rng) -> Result<u8> {
        let p1 = self.prob_one(site)?;
        let s = &self.sites[site];
        let total: f64 = s.data.iter().map(|z| z.norm_sqr()).sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Numerical(format!("outcome probabilities sum to {total}")));
        }
        let outcome = u8::from(rng.gen::<f64>() < p1 / total);
        self.project(site, outcome);
        self.normalize();
        Ok(outcome)
    }

    /// Population of |1⟩ on every site.
    pub fn populations(&mut self) -> Result<Vec<f64>> {
        (0..self.sites.len()).map(|i| self.prob_one(i)).collect()
    }

    /// Von Neumann entropy across the bond to the right of `site`.
    pub fn bond_entropy(&mut self, site: usize) -> Result<f64> {
        self.move_center(site)?;
        let s = &self.sites[site];
        let m = ComplexMatrix::from_vec(s.l * 2, s.r, s.data.clone())?;
        let (_, sv, _, _) = svd_truncated(&m, usize::MAX, 0.0)?;
        Ok(sv.iter().map(|x| x * x).filter(|&p| p > 1e-300).map(|p| -p * p.ln()).sum())
    }
}

/// Measures `site`, flips it back to |0⟩ on outcome 1 and returns the outcome.
pub fn sample_reset(mps: &mut MpsState, site: usize, rng: &mut impl Rng) -> Result<u8> {
    let z = mps.measure(site, rng)?;
    if z == 1 {
        mps.apply_single(&GateKind::X.matrix(&[]), site);
    }
    Ok(z)
}

/// Executes a circuit whose multi-qubit gates act on contiguous sites.
/// Returns the reset and measurement outcomes in execution order.
pub fn run_circuit(mps: &mut MpsState, c: &Circuit, rng: &mut impl Rng) -> Result<Vec<u8>> {
    if c.num_qubits != mps.num_sites() {
        return Err(Error::Dimension(format!("circuit has {} qubits, MPS has {} sites", c.num_qubits, mps.num_sites())));
    }
    let mut clbits = vec![0u8; c.num_clbits];
    let mut record = Vec::new();
    run_list(mps, &c.instructions, &mut clbits, &mut record, rng)?;
    Ok(record)
}

fn run_list(mps: &mut MpsState, list: &[Instruction], clbits: &mut [u8], record: &mut Vec<u8>, rng: &mut impl Rng) -> Result<()> {
    for ins in list {
        match ins {
            Instruction::Gate(g) => mps.apply_gate(&g.matrix(), &g.qubits)?,
            Instruction::Measure { qubit, clbit } => {
                let z = mps.measure(*qubit, rng)?;
                clbits[*clbit] = z;
                record.push(z);
            }
            Instruction::Reset { qubit } => record.push(sample_reset(mps, *qubit, rng)?),
            Instruction::Conditional { clbit, value, body } => {
                if clbits[*clbit] == *value {
                    run_list(mps, body, clbits, record, rng)?;
                }
            }
            Instruction::Barrier { .. } => {}
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResult {
    pub populations: Vec<f64>,
    pub seed: u64,
    pub reset_outcomes: Vec<u8>,
    pub discarded_weight: f64,
    pub max_bond: usize,
}

/// Routed static circuit on the one-ancilla-per-emitter layout.
pub fn trajectory_circuit(params: &ChainParams, t: f64, k: usize) -> Result<(Circuit, LayoutPlan)> {
    let layout = LayoutPlan::one_per_emitter(params.n)?;
    let c = assemble_trotter_circuit(params, t, k, Variant::Static, &layout)?;
    Ok((route_linear(&c)?, layout))
}

fn trajectory_on(
    circuit: &Circuit,
    layout: &LayoutPlan,
    bits: &[u8],
    max_chi: usize,
    cutoff: f64,
    seed: u64,
) -> Result<TrajectoryResult> {
    let mut mps = init_product_mps(bits, layout, max_chi, cutoff)?;
    let mut rng = shot_rng(seed, 0);
    let reset_outcomes = run_circuit(&mut mps, circuit, &mut rng)?;
    let max_bond = mps.bond_dims().into_iter().max().unwrap_or(1);
    let mut populations = Vec::with_capacity(layout.system.len());
    for &s in &layout.system {
        populations.push(mps.prob_one(s)?);
    }
    if (mps.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::Numerical(format!("trajectory norm drifted to {}", mps.norm())));
    }
    Ok(TrajectoryResult { populations, seed, reset_outcomes, discarded_weight: mps.discarded_weight(), max_bond })
}

/// One trajectory of k Trotter steps of the static circuit from the product
/// state `bits` (system qubits only).
pub fn run_trajectory(
    params: &ChainParams,
    t: f64,
    k: usize,
    bits: &[u8],
    max_chi: usize,
    cutoff: f64,
    seed: u64,
) -> Result<TrajectoryResult> {
    let (c, layout) = trajectory_circuit(params, t, k)?;
    trajectory_on(&c, &layout, bits, max_chi, cutoff, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MctebdResult {
    pub mean: Vec<f64>,
    /// Standard error of the mean over trajectories.
    pub std_err: Vec<f64>,
    pub total_mean: f64,
    pub total_std_err: f64,
    pub n_traj: usize,
    pub max_discarded_weight: f64,
    pub max_bond: usize,
}

/// Trajectory average with seeds `base_seed + index`.
#[allow(clippy::too_many_arguments)]
pub fn run_mctebd(
    params: &ChainParams,
    t: f64,
    k: usize,
    bits: &[u8],
    max_chi: usize,
    cutoff: f64,
    n_traj: usize,
    base_seed: u64,
) -> Result<MctebdResult> {
    if n_traj == 0 {
        return arg("at least one trajectory is required");
    }
    let (c, layout) = trajectory_circuit(params, t, k)?;
    let results: Vec<TrajectoryResult> = (0..n_traj)
        .into_par_iter()
        .map(|i| trajectory_on(&c, &layout, bits, max_chi, cutoff, base_seed.wrapping_add(i as u64)))
        .collect::<Result<_>>()?;
    Ok(aggregate(&results))
}

/// Mean and standard error over trajectories, independent of their order up
/// to floating-point summation.
pub fn aggregate(results: &[TrajectoryResult]) -> MctebdResult {
    let n = results.len();
    let m = results[0].populations.len();
    let nf = n as f64;
    let stat = |xs: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = xs.collect();
        let mean = v.iter().sum::<f64>() / nf;
        let var = if n > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0) } else { 0.0 };
        (mean, (var / nf).sqrt())
    };
    let (mut mean, mut std_err) = (Vec::with_capacity(m), Vec::with_capacity(m));
    for i in 0..m {
        let (a, b) = stat(&mut results.iter().map(|r| r.populations[i]));
        mean.push(a);
        std_err.push(b);
    }
    let (total_mean, total_std_err) = stat(&mut results.iter().map(|r| r.populations.iter().sum::<f64>()));
    MctebdResult {
        mean,
        std_err,
        total_mean,
        total_std_err,
        n_traj: n,
        max_discarded_weight: results.iter().map(|r| r.discarded_weight).fold(0.0, f64::max),
        max_bond: results.iter().map(|r| r.max_bond).max().unwrap_or(1),
    }
}
