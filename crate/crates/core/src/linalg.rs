//! Dense complex linear algebra.
//!
//! Matrices are row-major. Multi-qubit operators use big-endian ordering: qubit 0
//! is the most significant bit of a basis index, so `kron(a, b)` places `a` on the
//! lower-numbered qubits.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn r(re: f64) -> C64 {
    C64::new(re, 0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!("{} entries for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from real row-major entries. Panics on a length mismatch.
    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data: data.iter().map(|&x| r(x)).collect() }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn diag(entries: &[C64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &e) in entries.iter().enumerate() {
            m.data[i * n + i] = e;
        }
        m
    }

    /// Outer product |a⟩⟨b|.
    pub fn outer(a: &[C64], b: &[C64]) -> Self {
        Self::from_fn(a.len(), b.len(), |i, j| a[i] * b[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows).map(|i| self.data[i * self.cols..(i + 1) * self.cols].iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn dagger(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn conj(&self) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    pub fn add_assign_scaled(&mut self, other: &Self, s: C64) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.max_abs_diff(&self.dagger()) <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.is_square() && self.dagger().matmul(self).max_abs_diff(&Self::identity(self.rows)) <= tol
    }

    /// (A + A†)/2.
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| (self.get(i, j) + self.get(j, i).conj()) * 0.5)
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> Result<f64> {
        let (_, s, _, _) = svd_truncated(self, usize::MAX, 0.0)?;
        Ok(s.first().copied().unwrap_or(0.0))
    }

    /// Equality up to a global phase, judged on the entry of largest modulus.
    pub fn equal_up_to_phase(&self, other: &Self, tol: f64) -> bool {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return false;
        }
        let (idx, _) =
            self.data.iter().enumerate().fold((0, -1.0), |best, (i, z)| if z.norm() > best.1 { (i, z.norm()) } else { best });
        let a = self.data[idx];
        let b = other.data[idx];
        if a.norm() < tol {
            return other.max_abs() < tol;
        }
        if b.norm() < tol {
            return false;
        }
        let phase = (a / b) / (a / b).norm();
        self.max_abs_diff(&other.scale(phase)) <= tol
    }
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut out = ComplexMatrix::zeros(rows, cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let x = a.get(i, j);
            if x == ZERO {
                continue;
            }
            for k in 0..b.rows {
                for l in 0..b.cols {
                    out.data[(i * b.rows + k) * cols + j * b.cols + l] = x * b.get(k, l);
                }
            }
        }
    }
    out
}

pub fn kron_all(ms: &[ComplexMatrix]) -> ComplexMatrix {
    ms.iter().fold(ComplexMatrix::identity(1), |acc, m| kron(&acc, m))
}

pub fn vdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Offsets of the `2^k` sub-basis states of `qubits` inside a register of
/// `n_total` qubits (first listed qubit is the most significant local bit).
pub fn local_offsets(n_total: usize, qubits: &[usize]) -> Vec<usize> {
    let k = qubits.len();
    (0..1usize << k)
        .map(|j| {
            qubits.iter().enumerate().fold(
                0,
                |acc, (pos, &q)| {
                    if (j >> (k - 1 - pos)) & 1 == 1 {
                        acc | (1 << (n_total - 1 - q))
                    } else {
                        acc
                    }
                },
            )
        })
        .collect()
}

/// Enumerates every basis index whose bits at `qubits` are all zero.
pub fn base_indices(n_total: usize, qubits: &[usize]) -> Vec<usize> {
    let mut bits: Vec<usize> = qubits.iter().map(|&q| n_total - 1 - q).collect();
    bits.sort_unstable();
    let free = n_total - qubits.len();
    (0..1usize << free)
        .map(|mut i| {
            for &b in &bits {
                let low = i & ((1 << b) - 1);
                i = ((i >> b) << (b + 1)) | low;
            }
            i
        })
        .collect()
}

/// Applies `op` (dimension `2^k`) to `qubits` of a length-`2^n_total` vector in place.
pub fn apply_local(v: &mut [C64], n_total: usize, op: &ComplexMatrix, qubits: &[usize]) {
    let k = qubits.len();
    let d = 1usize << k;
    debug_assert_eq!(op.rows(), d);
    debug_assert_eq!(v.len(), 1 << n_total);
    if k == 1 {
        apply_single(v, n_total, op, qubits[0]);
        return;
    }
    let offs = local_offsets(n_total, qubits);
    let mut buf = vec![ZERO; d];
    for base in base_indices(n_total, qubits) {
        for (b, &o) in buf.iter_mut().zip(&offs) {
            *b = v[base + o];
        }
        for (i, &o) in offs.iter().enumerate() {
            let row = &op.data[i * d..(i + 1) * d];
            v[base + o] = row.iter().zip(&buf).map(|(a, b)| a * b).sum();
        }
    }
}

fn apply_single(v: &mut [C64], n_total: usize, op: &ComplexMatrix, q: usize) {
    let stride = 1usize << (n_total - 1 - q);
    let (a, b, cc, d) = (op.data[0], op.data[1], op.data[2], op.data[3]);
    let mut start = 0;
    while start < v.len() {
        for i in start..start + stride {
            let x = v[i];
            let y = v[i + stride];
            v[i] = a * x + b * y;
            v[i + stride] = cc * x + d * y;
        }
        start += 2 * stride;
    }
}

/// Embeds a local operator into the full `2^n_total` space.
pub fn embed(op: &ComplexMatrix, qubits: &[usize], n_total: usize) -> ComplexMatrix {
    let dim = 1usize << n_total;
    let mut out = ComplexMatrix::zeros(dim, dim);
    let mut col = vec![ZERO; dim];
    for j in 0..dim {
        col.iter_mut().for_each(|z| *z = ZERO);
        col[j] = ONE;
        apply_local(&mut col, n_total, op, qubits);
        for i in 0..dim {
            out.data[i * dim + j] = col[i];
        }
    }
    out
}

/// Truncated singular value decomposition `m ≈ U·diag(S)·V†` by one-sided Jacobi.
///
/// Keeps at most `max_rank` values and drops the smallest ones while their
/// relative squared weight stays within `cutoff`. Exactly-zero values are always
/// dropped. Returns `(U, S, V†, discarded_weight)`.
pub fn svd_truncated(m: &ComplexMatrix, max_rank: usize, cutoff: f64) -> Result<(ComplexMatrix, Vec<f64>, ComplexMatrix, f64)> {
    if cutoff < 0.0 || cutoff.is_nan() {
        return Err(Error::Argument(format!("cutoff must be non-negative, got {cutoff}")));
    }
    if !m.is_finite() {
        return Err(Error::Numerical("non-finite entries passed to svd".into()));
    }
    let (u, s, vh) = if m.rows >= m.cols {
        jacobi_svd(m)?
    } else {
        let (u, s, vh) = jacobi_svd(&m.dagger())?;
        (vh.dagger(), s, u.dagger())
    };
    let total: f64 = s.iter().map(|x| x * x).sum();
    let mut keep = s.iter().filter(|&&x| x > 0.0).count().min(max_rank.max(1));
    if total == 0.0 {
        keep = 1;
    } else {
        while keep > 1 {
            let dropped: f64 = s[keep - 1..].iter().map(|x| x * x).sum();
            if dropped / total <= cutoff {
                keep -= 1;
            } else {
                break;
            }
        }
    }
    let discarded = if total > 0.0 { s[keep..].iter().map(|x| x * x).sum::<f64>() / total } else { 0.0 };
    let u_t = ComplexMatrix::from_fn(u.rows, keep, |i, j| u.get(i, j));
    let vh_t = ComplexMatrix::from_fn(keep, vh.cols, |i, j| vh.get(i, j));
    Ok((u_t, s[..keep].to_vec(), vh_t, discarded))
}

/// Full thin SVD for `rows >= cols`, singular values sorted descending.
fn jacobi_svd(m: &ComplexMatrix) -> Result<(ComplexMatrix, Vec<f64>, ComplexMatrix)> {
    let (rows, n) = (m.rows, m.cols);
    // Column-major working copies keep the inner loops contiguous.
    let mut a: Vec<Vec<C64>> = (0..n).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<C64>> = (0..n).map(|j| (0..n).map(|i| if i == j { ONE } else { ZERO }).collect()).collect();
    let eps = 1e-15;
    // Columns this small relative to the whole matrix are left alone; their
    // singular values sit far below any truncation threshold.
    let negligible = 1e-32 * a.iter().map(|col| norm_sqr(col)).sum::<f64>();
    let mut converged = n <= 1;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = norm_sqr(&a[p]);
                let beta = norm_sqr(&a[q]);
                let gamma = vdot(&a[p], &a[q]);
                let g = gamma.norm();
                if g == 0.0 || g <= eps * (alpha * beta).sqrt() || alpha.min(beta) <= negligible {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                let (ap, aq) = split_pair(&mut a, p, q);
                rotate(ap, aq, cs, sn, phase);
                let (vp, vq) = split_pair(&mut v, p, q);
                rotate(vp, vq, cs, sn, phase);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical("one-sided Jacobi SVD did not converge".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = a.iter().map(|col| norm_sqr(col).sqrt()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));
    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let u = ComplexMatrix::from_fn(rows, n, |i, k| {
        let j = order[k];
        if norms[j] > 0.0 {
            a[j][i] / norms[j]
        } else {
            ZERO
        }
    });
    let vh = ComplexMatrix::from_fn(n, n, |k, i| v[order[k]][i].conj());
    Ok((u, s, vh))
}

fn split_pair<T>(xs: &mut [T], p: usize, q: usize) -> (&mut T, &mut T) {
    let (lo, hi) = xs.split_at_mut(q);
    (&mut lo[p], &mut hi[0])
}

// Column update for the rotation that zeroes ⟨a_p, a_q⟩, with the phase of the
// overlap absorbed into column q.
fn rotate(ap: &mut [C64], aq: &mut [C64], cs: f64, sn: f64, phase: C64) {
    let pc = phase.conj();
    for (x, y) in ap.iter_mut().zip(aq.iter_mut()) {
        let yq = *y * pc;
        let nx = *x * cs - yq * sn;
        let ny = *x * sn + yq * cs;
        *x = nx;
        *y = ny;
    }
}

/// Eigenvalues of a Hermitian matrix, ascending, via cyclic Jacobi on the real
/// symmetric embedding `[[Re, -Im], [Im, Re]]` (each eigenvalue appears twice
/// there and is reported once).
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension("eigenvalues need a square matrix".into()));
    }
    let n = m.rows;
    let d = 2 * n;
    let mut a = vec![0.0; d * d];
    for i in 0..n {
        for j in 0..n {
            let z = (m.get(i, j) + m.get(j, i).conj()) * 0.5;
            a[i * d + j] = z.re;
            a[(i + n) * d + j + n] = z.re;
            a[(i + n) * d + j] = z.im;
            a[i * d + j + n] = -z.im;
        }
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _ in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * d + j] * a[i * d + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            let mut ev: Vec<f64> = (0..d).map(|i| a[i * d + i]).collect();
            ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
            return Ok(ev.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect());
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = cs * akp - sn * akq;
                    a[k * d + q] = sn * akp + cs * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = cs * apk - sn * aqk;
                    a[q * d + k] = sn * apk + cs * aqk;
                }
            }
        }
    }
    Err(Error::Numerical("Jacobi eigenvalue iteration did not converge".into()))
}

/// True when `m + tol·I` admits a Cholesky factorization, i.e. the smallest
/// eigenvalue of the Hermitian part is above `-tol`.
pub fn is_psd(m: &ComplexMatrix, tol: f64) -> bool {
    let n = m.rows;
    let mut l = vec![ZERO; n * n];
    for j in 0..n {
        let mut diag = m.get(j, j).re + tol;
        for k in 0..j {
            diag -= l[j * n + k].norm_sqr();
        }
        if diag <= 0.0 || !diag.is_finite() {
            return false;
        }
        let ljj = diag.sqrt();
        l[j * n + j] = r(ljj);
        for i in j + 1..n {
            let mut s = (m.get(i, j) + m.get(j, i).conj()) * 0.5;
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = s / ljj;
        }
    }
    true
}
