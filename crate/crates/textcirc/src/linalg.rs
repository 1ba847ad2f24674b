//! Small dense complex-matrix helpers shared by the functor, the simulator
//! oracles and the interpretability analyses.
//!
//! Qubit convention throughout the crate is little-endian: basis index `i`
//! carries qubit `k` in bit `k`, so qubit 0 is the least significant bit.

use num_complex::Complex64;

pub type C64 = Complex64;

pub const ZERO: C64 = Complex64::new(0.0, 0.0);
pub const ONE: C64 = Complex64::new(1.0, 0.0);

/// Dense square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    pub dim: usize,
    pub data: Vec<C64>,
}

impl CMat {
    pub fn zeros(dim: usize) -> Self {
        CMat { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = CMat::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_rows(rows: &[&[C64]]) -> Self {
        let dim = rows.len();
        let mut m = CMat::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), dim, "matrix rows must be square");
            m.data[i * dim..(i + 1) * dim].copy_from_slice(row);
        }
        m
    }

    pub fn mul(&self, other: &CMat) -> CMat {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = CMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn dagger(&self) -> CMat {
        let n = self.dim;
        let mut out = CMat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn kron(&self, other: &CMat) -> CMat {
        let n = self.dim;
        let m = other.dim;
        let mut out = CMat::zeros(n * m);
        for i in 0..n {
            for j in 0..n {
                let a = self[(i, j)];
                if a == ZERO {
                    continue;
                }
                for k in 0..m {
                    for l in 0..m {
                        out[(i * m + k, j * m + l)] = a * other[(k, l)];
                    }
                }
            }
        }
        out
    }

    pub fn scale(&self, s: C64) -> CMat {
        CMat { dim: self.dim, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn add(&self, other: &CMat) -> CMat {
        assert_eq!(self.dim, other.dim);
        CMat {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &CMat) -> CMat {
        assert_eq!(self.dim, other.dim);
        CMat {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    /// Apply to a column vector.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim);
        let n = self.dim;
        let mut out = vec![ZERO; n];
        for i in 0..n {
            let mut acc = ZERO;
            for j in 0..n {
                acc += self[(i, j)] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Max absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &CMat) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Max absolute entry of `self - e^{i phi} other`, minimised over the
    /// global phase (fixed from the largest entry).
    pub fn max_abs_diff_up_to_phase(&self, other: &CMat) -> f64 {
        let (mut best, mut phase) = (0.0, ONE);
        for (a, b) in self.data.iter().zip(&other.data) {
            if b.norm() > best {
                best = b.norm();
                phase = a / b;
            }
        }
        if best == 0.0 {
            return self.data.iter().map(|a| a.norm()).fold(0.0, f64::max);
        }
        let phase = phase / phase.norm();
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - phase * b).norm())
            .fold(0.0, f64::max)
    }

    /// ||U^dagger U - I||_max, zero for unitaries.
    pub fn unitarity_defect(&self) -> f64 {
        self.dagger().mul(self).max_abs_diff(&CMat::identity(self.dim))
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

/// Embed a k-qubit gate acting on `qubits` (gate-local qubit j = `qubits[j]`)
/// into the full 2^n unitary.
pub fn embed(gate: &CMat, qubits: &[usize], num_qubits: usize) -> CMat {
    let full = 1usize << num_qubits;
    let k = qubits.len();
    assert_eq!(gate.dim, 1 << k);
    let mut out = CMat::zeros(full);
    for col in 0..full {
        let gcol = gate_index(col, qubits);
        let rest = col & !qubit_mask(qubits);
        for grow in 0..(1 << k) {
            let row = rest | scatter_bits(grow, qubits);
            out[(row, col)] += gate[(grow, gcol)];
        }
    }
    out
}

fn qubit_mask(qubits: &[usize]) -> usize {
    qubits.iter().fold(0, |m, &q| m | (1 << q))
}

fn gate_index(basis: usize, qubits: &[usize]) -> usize {
    qubits
        .iter()
        .enumerate()
        .fold(0, |g, (j, &q)| g | (((basis >> q) & 1) << j))
}

fn scatter_bits(local: usize, qubits: &[usize]) -> usize {
    qubits
        .iter()
        .enumerate()
        .fold(0, |b, (j, &q)| b | (((local >> j) & 1) << q))
}

/// Partial trace over the given qubits of a density matrix on `num_qubits`.
pub fn partial_trace(rho: &CMat, traced: &[usize], num_qubits: usize) -> CMat {
    let keep: Vec<usize> = (0..num_qubits).filter(|q| !traced.contains(q)).collect();
    let kd = 1usize << keep.len();
    let td = 1usize << traced.len();
    let mut out = CMat::zeros(kd);
    for i in 0..kd {
        for j in 0..kd {
            let mut acc = ZERO;
            for t in 0..td {
                let row = scatter_bits(i, &keep) | scatter_bits(t, traced);
                let col = scatter_bits(j, &keep) | scatter_bits(t, traced);
                acc += rho[(row, col)];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// Eigenvalues of a Hermitian matrix, via the real-symmetric embedding
/// [[Re, -Im], [Im, Re]] whose spectrum is that of the input, doubled.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let n = m.dim;
    let mut real = nalgebra::DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = m[(i, j)];
            real[(i, j)] = z.re;
            real[(i + n, j + n)] = z.re;
            real[(i, j + n)] = -z.im;
            real[(i + n, j)] = z.im;
        }
    }
    let eig = nalgebra::SymmetricEigen::new(real);
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // keep every other eigenvalue of the doubled spectrum
    vals.into_iter().step_by(2).collect()
}

/// Eigendecomposition of a Hermitian matrix: (eigenvalues, eigenvectors as
/// columns), using the same real embedding. The embedding doubles each
/// eigenspace; complex eigenvectors are reassembled from the real ones.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.dim;
    let mut real = nalgebra::DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = m[(i, j)];
            real[(i, j)] = z.re;
            real[(i + n, j + n)] = z.re;
            real[(i, j + n)] = -z.im;
            real[(i + n, j)] = z.im;
        }
    }
    let eig = nalgebra::SymmetricEigen::new(real);
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());

    // A real eigenvector (x, y) of the embedding encodes the complex vector
    // v = x + i y; (-y, x) encodes i*v, the same complex ray. Greedily pick
    // one representative per pair, re-orthogonalising within degenerate runs.
    let mut vals = Vec::with_capacity(n);
    let mut vecs = CMat::zeros(n);
    let mut picked: Vec<Vec<C64>> = Vec::new();
    for &idx in &order {
        if vals.len() == n {
            break;
        }
        let col = eig.eigenvectors.column(idx);
        let mut v: Vec<C64> = (0..n).map(|i| C64::new(col[i], col[i + n])).collect();
        // project out previously picked vectors of (numerically) equal eigenvalue
        for (w, &lv) in picked.iter().zip(vals.iter()) {
            let lv: f64 = lv;
            if (eig.eigenvalues[idx] - lv).abs() < 1e-9 {
                let ip: C64 = w.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (vi, wi) in v.iter_mut().zip(w) {
                    *vi -= ip * wi;
                }
            }
        }
        let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue; // duplicate of an already-picked vector
        }
        for z in v.iter_mut() {
            *z /= norm;
        }
        let k = vals.len();
        for i in 0..n {
            vecs[(i, k)] = v[i];
        }
        vals.push(eig.eigenvalues[idx]);
        picked.push(v);
    }
    assert_eq!(vals.len(), n, "eigenvector pairing failed");
    (vals, vecs)
}

/// Hermitian PSD square root (eigenvalues clamped at zero).
pub fn hermitian_sqrt(m: &CMat) -> CMat {
    let n = m.dim;
    let (vals, vecs) = hermitian_eigen(m);
    let mut out = CMat::zeros(n);
    for k in 0..n {
        let s = vals[k].max(0.0).sqrt();
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += C64::new(s, 0.0) * vecs[(i, k)] * vecs[(j, k)].conj();
            }
        }
    }
    out
}

/// Trace distance (1/2)||A - B||_1 between Hermitian matrices.
pub fn trace_distance(a: &CMat, b: &CMat) -> f64 {
    let d = a.sub(b);
    0.5 * hermitian_eigenvalues(&d).iter().map(|v| v.abs()).sum::<f64>()
}

/// Uhlmann fidelity F(a, b) = (Tr sqrt(sqrt(a) b sqrt(a)))^2 of density matrices.
pub fn fidelity(a: &CMat, b: &CMat) -> f64 {
    let sa = hermitian_sqrt(a);
    let inner = sa.mul(b).mul(&sa);
    let s = hermitian_sqrt(&inner);
    let t = s.trace().re;
    (t * t).clamp(0.0, 1.0 + 1e-9)
}
