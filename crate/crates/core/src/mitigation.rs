//! Error mitigation: bootstrap resampling, zero-noise extrapolation with random
//! partial CZ folding, and Clifford data regression.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Gate, GateKind, Instruction, Levels};
use crate::error::{arg, Error, Result};
use crate::shots::{shot_rng, Counts};

pub use crate::circuit::transpile_basis;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEstimate {
    pub mean: f64,
    pub std: f64,
    pub b: usize,
}

/// Resamples the shot record `b` times with replacement and reports the mean
/// and spread of `observable` averaged over each resample.
pub fn bootstrap(counts: &Counts, observable: impl Fn(&str) -> f64, b: usize, seed: u64) -> Result<BootstrapEstimate> {
    if b < 2 {
        return arg(format!("bootstrap needs at least 2 resamples, got {b}"));
    }
    let n = counts.shots();
    if n == 0 {
        return arg("counts are empty");
    }
    let entries: Vec<(f64, u64)> = counts.counts.iter().map(|(k, &v)| (observable(k), v)).collect();
    let mut values = Vec::with_capacity(b);
    for r in 0..b {
        let mut rng = shot_rng(seed, r as u64);
        // Multinomial draw as a chain of conditional binomials.
        let (mut left, mut mass) = (n, n);
        let mut sum = 0.0;
        for &(x, v) in &entries {
            if left == 0 {
                break;
            }
            let k = if v == mass {
                left
            } else {
                Binomial::new(left, v as f64 / mass as f64).map_err(|e| Error::Numerical(e.to_string()))?.sample(&mut rng)
            };
            sum += x * k as f64;
            left -= k;
            mass -= v;
        }
        values.push(sum / n as f64);
    }
    let mean = values.iter().sum::<f64>() / b as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
    Ok(BootstrapEstimate { mean, std: var.sqrt(), b })
}

/// Number of CZ layers folded for amplification `lam` on a circuit with
/// `layers` CZ layers.
pub fn fold_count(layers: usize, lam: f64) -> usize {
    (layers as f64 * (lam - 1.0) / 2.0).round() as usize
}

fn cz_layers(c: &Circuit) -> Result<usize> {
    fn walk(list: &[Instruction], lv: &mut Levels, depth: &mut usize) -> Result<()> {
        for ins in list {
            if let Instruction::Gate(g) = ins {
                if g.qubits.len() >= 2 && g.kind != GateKind::CZ {
                    return Err(Error::Circuit(format!("folding needs a CZ-based circuit, found '{}'", g.kind.name())));
                }
            }
            if let Some(l) = lv.place(ins) {
                *depth = (*depth).max(l);
            }
            if let Instruction::Conditional { body, .. } = ins {
                walk(body, lv, depth)?;
            }
        }
        Ok(())
    }
    let mut depth = 0;
    walk(&c.instructions, &mut Levels::new(c), &mut depth)?;
    Ok(depth)
}

fn fold_layers(c: &Circuit, chosen: &[bool]) -> Circuit {
    fn walk(list: &[Instruction], lv: &mut Levels, chosen: &[bool]) -> Vec<Instruction> {
        let mut out = Vec::with_capacity(list.len());
        for ins in list {
            let layer = lv.place(ins);
            match ins {
                Instruction::Conditional { clbit, value, body } => {
                    out.push(Instruction::Conditional { clbit: *clbit, value: *value, body: walk(body, lv, chosen) });
                }
                _ => {
                    out.push(ins.clone());
                    if layer.is_some_and(|l| chosen[l - 1]) {
                        // CZ is self-inverse, so U U† U is three copies.
                        out.push(ins.clone());
                        out.push(ins.clone());
                    }
                }
            }
        }
        out
    }
    Circuit {
        num_qubits: c.num_qubits,
        num_clbits: c.num_clbits,
        instructions: walk(&c.instructions, &mut Levels::new(c), chosen),
    }
}

/// `n_variants` circuits in which `round(D(λ−1)/2)` distinct CZ layers, drawn
/// uniformly, are tripled. The circuit must contain no two-qubit gate other
/// than CZ.
pub fn fold_random(c: &Circuit, lam: f64, n_variants: usize, seed: u64) -> Result<Vec<Circuit>> {
    if !(lam >= 1.0) {
        return arg(format!("noise amplification must be at least 1, got {lam}"));
    }
    let d = cz_layers(c)?;
    let m = fold_count(d, lam);
    if m > d {
        return Err(Error::FoldCapacity(format!("lambda {lam} needs {m} folded layers but the circuit has {d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_variants)
        .map(|_| {
            let mut chosen = vec![false; d];
            for i in sample(&mut rng, d, m) {
                chosen[i] = true;
            }
            fold_layers(c, &chosen)
        })
        .collect())
}

fn check_lambdas(lambdas: &[f64], min: usize) -> Result<()> {
    if lambdas.len() < min {
        return arg(format!("need at least {min} noise factors, got {}", lambdas.len()));
    }
    if lambdas.iter().any(|l| !l.is_finite()) {
        return arg("noise factors must be finite");
    }
    for (i, a) in lambdas.iter().enumerate() {
        if lambdas[i + 1..].iter().any(|b| b == a) {
            return arg(format!("duplicate noise factor {a}"));
        }
    }
    Ok(())
}

/// First-order Richardson weights averaged over consecutive pairs.
pub fn richardson_weights(lambdas: &[f64]) -> Result<Vec<f64>> {
    check_lambdas(lambdas, 2)?;
    let pairs = lambdas.len() - 1;
    let mut w = vec![0.0; lambdas.len()];
    for i in 0..pairs {
        let (l1, l2) = (lambdas[i], lambdas[i + 1]);
        w[i] += l2 / (l2 - l1) / pairs as f64;
        w[i + 1] -= l1 / (l2 - l1) / pairs as f64;
    }
    Ok(w)
}

/// Minimizes `c·x` subject to `A x = b`, `x ≥ 0`, `b ≥ 0` with a two-phase
/// dense simplex using Bland's rule.
fn simplex(cost: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    const TOL: f64 = 1e-12;
    let (m, n) = (a.len(), cost.len());
    // Tableau columns: x (n), artificials (m), rhs.
    let width = n + m + 1;
    let mut t: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut row = vec![0.0; width];
            row[..n].copy_from_slice(&a[i]);
            row[n + i] = 1.0;
            row[width - 1] = b[i];
            row
        })
        .collect();
    let mut basis: Vec<usize> = (n..n + m).collect();

    let pivot = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, r: usize, col: usize| {
        let p = t[r][col];
        for v in t[r].iter_mut() {
            *v /= p;
        }
        for i in 0..t.len() {
            if i != r && t[i][col] != 0.0 {
                let f = t[i][col];
                let pr = t[r].clone();
                for (v, w) in t[i].iter_mut().zip(&pr) {
                    *v -= f * w;
                }
            }
        }
        basis[r] = col;
    };

    let run = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, obj: &[f64], allowed: usize| -> Result<()> {
        for _ in 0..10_000 {
            // Reduced costs.
            let entering = (0..allowed).find(|&j| {
                if basis.contains(&j) {
                    return false;
                }
                let z: f64 = (0..m).map(|i| obj[basis[i]] * t[i][j]).sum();
                obj[j] - z < -TOL
            });
            let Some(col) = entering else { return Ok(()) };
            let mut best: Option<(f64, usize)> = None;
            for i in 0..m {
                if t[i][col] > TOL {
                    let ratio = t[i][width - 1] / t[i][col];
                    let better = match best {
                        None => true,
                        Some((r, bi)) => ratio < r - TOL || (ratio <= r + TOL && basis[i] < basis[bi]),
                    };
                    if better {
                        best = Some((ratio, i));
                    }
                }
            }
            let Some((_, r)) = best else {
                return Err(Error::Infeasible("linear program is unbounded".into()));
            };
            pivot(t, basis, r, col);
        }
        Err(Error::Numerical("simplex iteration limit reached".into()))
    };

    let mut phase1 = vec![0.0; n + m];
    for v in &mut phase1[n..] {
        *v = 1.0;
    }
    run(&mut t, &mut basis, &phase1, n + m)?;
    let infeas: f64 = (0..m).filter(|&i| basis[i] >= n).map(|i| t[i][width - 1]).sum();
    if infeas > 1e-9 {
        return Err(Error::Infeasible("constraints admit no solution".into()));
    }
    // Drive remaining zero-level artificials out of the basis.
    for r in 0..m {
        if basis[r] >= n {
            if let Some(col) = (0..n).find(|&j| t[r][j].abs() > TOL) {
                pivot(&mut t, &mut basis, r, col);
            }
        }
    }
    let mut phase2 = cost.to_vec();
    phase2.extend(std::iter::repeat(0.0).take(m));
    run(&mut t, &mut basis, &phase2, n)?;
    let mut x = vec![0.0; n];
    for (i, &j) in basis.iter().enumerate() {
        if j < n {
            x[j] = t[i][width - 1];
        }
    }
    Ok(x)
}

/// Weights of minimal ℓ1 norm satisfying `Σω = 1` and `Σωλ = 0`.
pub fn constrained_richardson_l1(lambdas: &[f64]) -> Result<Vec<f64>> {
    check_lambdas(lambdas, 3)?;
    let l = lambdas.len();
    // ω = u − v with u, v ≥ 0; minimize Σu + Σv.
    let cost = vec![1.0; 2 * l];
    let mut row_sum = vec![1.0; l];
    row_sum.extend(std::iter::repeat(-1.0).take(l));
    let mut row_lam = lambdas.to_vec();
    row_lam.extend(lambdas.iter().map(|x| -x));
    let x = simplex(&cost, &[row_sum, row_lam], &[1.0, 0.0])?;
    Ok((0..l).map(|i| x[i] - x[l + i]).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extrapolator {
    Linear,
    PairwiseFor,
    ConstrainedForL1,
}

impl Extrapolator {
    pub const ALL: [Extrapolator; 3] = [Extrapolator::Linear, Extrapolator::PairwiseFor, Extrapolator::ConstrainedForL1];

    /// Method tag used in output tables.
    pub fn tag(self) -> &'static str {
        match self {
            Extrapolator::Linear => "zne_linear",
            Extrapolator::PairwiseFor => "zne_for",
            Extrapolator::ConstrainedForL1 => "zne_cfor_l1",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZneConfig {
    pub lambdas: Vec<f64>,
    pub n_random_foldings: usize,
    pub extrapolators: Vec<Extrapolator>,
}

impl Default for ZneConfig {
    fn default() -> Self {
        Self { lambdas: vec![1.3, 1.6, 2.0, 2.3], n_random_foldings: 3, extrapolators: Extrapolator::ALL.to_vec() }
    }
}

impl ZneConfig {
    pub fn validate(&self) -> Result<()> {
        check_lambdas(&self.lambdas, 2)?;
        if self.lambdas.iter().any(|&l| l <= 1.0) {
            return arg("noise factors must exceed 1");
        }
        if self.lambdas.windows(2).any(|w| w[1] <= w[0]) {
            return arg("noise factors must be strictly ascending");
        }
        if self.n_random_foldings == 0 {
            return arg("at least one folding per noise factor is required");
        }
        Ok(())
    }
}

fn linear_combination(w: &[f64], values: &[f64], stds: &[f64]) -> (f64, f64) {
    let v = w.iter().zip(values).map(|(a, b)| a * b).sum();
    let s = w.iter().zip(stds).map(|(a, s)| (a * s).powi(2)).sum::<f64>().sqrt();
    (v, s)
}

/// Zero-noise estimate and its standard error from one averaged value per
/// noise factor.
pub fn zne_estimate(lambdas: &[f64], values: &[f64], stds: &[f64], method: Extrapolator) -> Result<(f64, f64)> {
    if values.len() != lambdas.len() || stds.len() != lambdas.len() {
        return Err(Error::Dimension("one value and one std per noise factor are required".into()));
    }
    let w = match method {
        Extrapolator::Linear => {
            check_lambdas(lambdas, 2)?;
            // Weighted least squares for O = a + bλ when every σ is positive,
            // ordinary least squares otherwise. Either way the intercept is
            // linear in the data.
            let wts: Vec<f64> =
                if stds.iter().all(|&s| s > 0.0) { stds.iter().map(|s| 1.0 / (s * s)).collect() } else { vec![1.0; stds.len()] };
            let s0: f64 = wts.iter().sum();
            let s1: f64 = wts.iter().zip(lambdas).map(|(w, l)| w * l).sum();
            let s2: f64 = wts.iter().zip(lambdas).map(|(w, l)| w * l * l).sum();
            let det = s0 * s2 - s1 * s1;
            if det.abs() < 1e-300 {
                return Err(Error::DegenerateFit("noise factors do not span a line".into()));
            }
            wts.iter().zip(lambdas).map(|(w, l)| w * (s2 - s1 * l) / det).collect()
        }
        Extrapolator::PairwiseFor => richardson_weights(lambdas)?,
        Extrapolator::ConstrainedForL1 => constrained_richardson_l1(lambdas)?,
    };
    Ok(linear_combination(&w, values, stds))
}

pub const CLIFFORD_ANGLES: [f64; 4] = [0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum CliffordBias {
    Uniform,
    Inverse { epsilon: f64 },
    Gaussian { sigma: f64 },
}

impl CliffordBias {
    pub fn inverse() -> Self {
        CliffordBias::Inverse { epsilon: 1e-6 }
    }

    pub fn gaussian() -> Self {
        CliffordBias::Gaussian { sigma: 1.0 }
    }

    pub fn tag(self) -> &'static str {
        match self {
            CliffordBias::Uniform => "cdr_uniform",
            CliffordBias::Inverse { .. } => "cdr_inverse",
            CliffordBias::Gaussian { .. } => "cdr_gaussian",
        }
    }

    pub fn validate(self) -> Result<()> {
        match self {
            CliffordBias::Uniform => Ok(()),
            CliffordBias::Inverse { epsilon } if epsilon > 0.0 => Ok(()),
            CliffordBias::Gaussian { sigma } if sigma > 0.0 => Ok(()),
            other => arg(format!("bias parameter must be positive: {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CdrConfig {
    pub n_training: usize,
    pub biases: Vec<CliffordBias>,
}

impl Default for CdrConfig {
    fn default() -> Self {
        Self { n_training: 100, biases: vec![CliffordBias::Uniform, CliffordBias::inverse(), CliffordBias::gaussian()] }
    }
}

impl CdrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_training < 3 {
            return arg("at least 3 training circuits are required");
        }
        self.biases.iter().try_for_each(|b| b.validate())
    }
}

/// Distance between two angles on the circle.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Normalized sampling probabilities of the four Clifford angles.
pub fn clifford_weights(theta: f64, bias: CliffordBias) -> [f64; 4] {
    let w = CLIFFORD_ANGLES.map(|c| {
        let d = angular_distance(theta, c);
        match bias {
            CliffordBias::Uniform => 1.0,
            CliffordBias::Inverse { epsilon } => 1.0 / (d + epsilon),
            CliffordBias::Gaussian { sigma } => (-d * d / (2.0 * sigma * sigma)).exp(),
        }
    });
    let total: f64 = w.iter().sum();
    w.map(|x| x / total)
}

fn is_clifford_angle(theta: f64) -> bool {
    CLIFFORD_ANGLES.iter().any(|&c| angular_distance(theta, c) < 1e-12)
}

/// Replaces every non-Clifford Rz and every reset by Rz at a sampled Clifford
/// angle. Measurements and conditionals are kept. The input must use only
/// Rz, SX, X and CZ gates.
pub fn cliffordize(c: &Circuit, bias: CliffordBias, seed: u64) -> Result<Circuit> {
    bias.validate()?;
    fn walk(list: &[Instruction], bias: CliffordBias, rng: &mut ChaCha8Rng) -> Result<Vec<Instruction>> {
        let draw = |theta: f64, bias: CliffordBias, rng: &mut ChaCha8Rng| -> Result<f64> {
            let dist = WeightedIndex::new(clifford_weights(theta, bias)).map_err(|e| Error::Numerical(e.to_string()))?;
            Ok(CLIFFORD_ANGLES[dist.sample(rng)])
        };
        let mut out = Vec::with_capacity(list.len());
        for ins in list {
            out.push(match ins {
                Instruction::Gate(g) => match g.kind {
                    GateKind::Rz if !is_clifford_angle(g.params[0]) => {
                        Instruction::Gate(Gate::new(GateKind::Rz, g.qubits.clone(), vec![draw(g.params[0], bias, rng)?]))
                    }
                    GateKind::Rz | GateKind::SX | GateKind::X | GateKind::CZ => ins.clone(),
                    other => {
                        return Err(Error::Circuit(format!("'{}' is outside the Rz/SX/X/CZ basis", other.name())));
                    }
                },
                Instruction::Reset { qubit } => {
                    Instruction::Gate(Gate::new(GateKind::Rz, vec![*qubit], vec![draw(0.0, CliffordBias::Uniform, rng)?]))
                }
                Instruction::Conditional { clbit, value, body } => {
                    Instruction::Conditional { clbit: *clbit, value: *value, body: walk(body, bias, rng)? }
                }
                Instruction::Measure { .. } | Instruction::Barrier { .. } => ins.clone(),
            });
        }
        Ok(out)
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Circuit { num_qubits: c.num_qubits, num_clbits: c.num_clbits, instructions: walk(&c.instructions, bias, &mut rng)? })
}

/// Least-squares fit `noisy = a + b·noiseless` with the parameter covariance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdrFit {
    pub a: f64,
    pub b: f64,
    /// Covariance of `(a, b)`.
    pub cov: [[f64; 2]; 2],
    pub n_training: usize,
}

pub fn cdr_fit(training: &[(f64, f64)]) -> Result<CdrFit> {
    let n = training.len();
    if n < 3 {
        return arg(format!("at least 3 training pairs are required, got {n}"));
    }
    let nf = n as f64;
    let mx = training.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = training.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = training.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = training.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 1e-24 {
        return Err(Error::DegenerateFit("training noiseless values have no spread".into()));
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = training.iter().map(|p| (p.1 - a - b * p.0).powi(2)).sum();
    let s2 = rss / (nf - 2.0);
    let var_b = s2 / sxx;
    let cov = [[s2 / nf + mx * mx * var_b, -mx * var_b], [-mx * var_b, var_b]];
    Ok(CdrFit { a, b, cov, n_training: n })
}

impl CdrFit {
    /// Inverts the fitted map at `raw`, propagating the fit covariance and
    /// the raw standard error to first order.
    pub fn correct(&self, raw: &BootstrapEstimate) -> Result<(f64, f64)> {
        if self.b.abs() < 1e-9 {
            return Err(Error::DegenerateFit(format!("slope {} is too small to invert", self.b)));
        }
        let (a, b) = (self.a, self.b);
        let value = (raw.mean - a) / b;
        let g = [-1.0 / b, -(raw.mean - a) / (b * b)];
        let mut var = (raw.std / b).powi(2);
        for i in 0..2 {
            for j in 0..2 {
                var += g[i] * self.cov[i][j] * g[j];
            }
        }
        Ok((value, var.max(0.0).sqrt()))
    }
}

/// Fits the affine noise map on `(noiseless, noisy)` pairs and inverts it at
/// the raw estimate.
pub fn cdr_fit_and_correct(training: &[(f64, f64)], raw: &BootstrapEstimate) -> Result<(f64, f64, CdrFit)> {
    let fit = cdr_fit(training)?;
    let (v, s) = fit.correct(raw)?;
    Ok((v, s, fit))
}
