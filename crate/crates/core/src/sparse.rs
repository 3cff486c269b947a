//! Compressed sparse row matrices over complex numbers.

use num_complex::Complex64 as C64;
use std::io::Write;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub values: Vec<C64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n as u32).collect(),
            values: vec![C64::new(1.0, 0.0); n],
        }
    }

    pub fn diagonal(d: &[C64]) -> Self {
        let mut m = Self::identity(d.len());
        m.values.copy_from_slice(d);
        m
    }

    /// Build from `(row, col, value)` triplets; duplicates are summed and exact zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, C64)>) -> Self {
        t.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<C64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) outside {nrows}x{ncols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c as u32);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        let mut m = Self { nrows, ncols, indptr, indices, values };
        m.prune(0.0);
        m
    }

    /// Drop entries with modulus `<= tol`.
    pub fn prune(&mut self, tol: f64) {
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut k = 0;
        for r in 0..self.nrows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                if self.values[p].norm() > tol {
                    self.indices[k] = self.indices[p];
                    self.values[k] = self.values[p];
                    k += 1;
                }
            }
            indptr[r + 1] = k;
        }
        self.indices.truncate(k);
        self.values.truncate(k);
        self.indptr = indptr;
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |p| (r, self.indices[p] as usize, self.values[p]))
        })
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let row = &self.indices[self.indptr[r]..self.indptr[r + 1]];
        match row.binary_search(&(c as u32)) {
            Ok(p) => self.values[self.indptr[r] + p],
            Err(_) => ZERO,
        }
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = ZERO;
            for p in self.indptr[r]..self.indptr[r + 1] {
                s += self.values[p] * x[self.indices[p] as usize];
            }
            *yr = s;
        }
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.triplets().map(|(r, c, v)| (c, r, v)).collect())
    }

    pub fn conj(&self) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v = v.conj());
        m
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect())
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= s);
        m.prune(0.0);
        m
    }

    /// `self + s·other`.
    pub fn add_scaled(&self, other: &Self, s: C64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t: Vec<_> = self.triplets().collect();
        t.extend(other.triplets().map(|(r, c, v)| (r, c, s * v)));
        Self::from_triplets(self.nrows, self.ncols, t)
    }

    /// Sparse product `self · other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut t = Vec::new();
        let mut acc = vec![ZERO; other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        let mut mark = vec![false; other.ncols];
        for r in 0..self.nrows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                let k = self.indices[p] as usize;
                let a = self.values[p];
                for q in other.indptr[k]..other.indptr[k + 1] {
                    let c = other.indices[q] as usize;
                    if !mark[c] {
                        mark[c] = true;
                        touched.push(c);
                    }
                    acc[c] += a * other.values[q];
                }
            }
            for &c in &touched {
                t.push((r, c, acc[c]));
                acc[c] = ZERO;
                mark[c] = false;
            }
            touched.clear();
        }
        Self::from_triplets(self.nrows, other.ncols, t)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let mut t = Vec::with_capacity(self.nnz() * other.nnz());
        for (r1, c1, v1) in self.triplets() {
            for (r2, c2, v2) in other.triplets() {
                t.push((r1 * other.nrows + r2, c1 * other.ncols + c2, v1 * v2));
            }
        }
        Self::from_triplets(self.nrows * other.nrows, self.ncols * other.ncols, t)
    }

    pub fn to_dense(&self) -> Vec<Vec<C64>> {
        let mut d = vec![vec![ZERO; self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            d[r][c] += v;
        }
        d
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.norm()))
    }

    /// Largest absolute row sum, an upper bound on the spectral radius.
    pub fn max_row_sum(&self) -> f64 {
        self.indptr.windows(2).map(|w| self.values[w[0]..w[1]].iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Write one `row col re im` line per stored entry.
    pub fn write_coo<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (r, c, v) in self.triplets() {
            writeln!(w, "{r} {c} {:e} {:e}", v.re, v.im)?;
        }
        Ok(())
    }
}

/// Three matrices `A0 + a·A1 + b·A2` stored on one merged sparsity pattern, so
/// the time-dependent generator costs a single pass per product.
#[derive(Clone, Debug)]
pub struct MergedCsr {
    pub n: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    v0: Vec<C64>,
    v1: Vec<C64>,
    v2: Vec<C64>,
}

impl MergedCsr {
    pub fn new(a0: &CsrMatrix, a1: &CsrMatrix, a2: &CsrMatrix) -> Self {
        let n = a0.nrows;
        assert!([a0.ncols, a1.nrows, a1.ncols, a2.nrows, a2.ncols].iter().all(|&d| d == n));
        let mut t: Vec<(usize, usize, [C64; 3])> = Vec::new();
        for (k, m) in [a0, a1, a2].into_iter().enumerate() {
            for (r, c, v) in m.triplets() {
                let mut e = [ZERO; 3];
                e[k] = v;
                t.push((r, c, e));
            }
        }
        t.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::new();
        let (mut v0, mut v1, mut v2) = (Vec::new(), Vec::new(), Vec::new());
        let mut last = None;
        for (r, c, e) in t {
            if last == Some((r, c)) {
                let k = v0.len() - 1;
                v0[k] += e[0];
                v1[k] += e[1];
                v2[k] += e[2];
            } else {
                indices.push(c as u32);
                v0.push(e[0]);
                v1.push(e[1]);
                v2.push(e[2]);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            indptr[r + 1] += indptr[r];
        }
        Self { n, indptr, indices, v0, v1, v2 }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// `y = (A0 + a·A1 + b·A2) x`.
    pub fn apply(&self, a: f64, b: f64, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = ZERO;
            for p in self.indptr[r]..self.indptr[r + 1] {
                let v = self.v0[p] + self.v1[p] * a + self.v2[p] * b;
                s += v * x[self.indices[p] as usize];
            }
            *yr = s;
        }
    }

    /// `A0 + a·A1 + b·A2` as a plain matrix.
    pub fn combine(&self, a: f64, b: f64) -> CsrMatrix {
        let values = (0..self.nnz()).map(|p| self.v0[p] + self.v1[p] * a + self.v2[p] * b).collect();
        CsrMatrix {
            nrows: self.n,
            ncols: self.n,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values,
        }
    }
}

/// `⟨x, y⟩ = Σ conj(x_i) y_i`.
pub fn dot(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).fold(ZERO, |s, (a, b)| s + a.conj() * b)
}

/// `y += s x`.
pub fn axpy(s: C64, x: &[C64], y: &mut [C64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += s * xi);
}

pub fn norm(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_matrix(n: usize, m: usize, seed: &[f64]) -> CsrMatrix {
        let mut t = Vec::new();
        let mut k = 0;
        for r in 0..n {
            for col in 0..m {
                let v = seed[k % seed.len()];
                k += 1;
                if v.abs() > 0.3 {
                    t.push((r, col, c(v, seed[(k * 7) % seed.len()])));
                }
            }
        }
        CsrMatrix::from_triplets(n, m, t)
    }

    #[test]
    fn duplicates_sum() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(0, 1, c(1.0, 0.0)), (0, 1, c(2.0, 1.0)), (1, 0, c(0.0, 0.0))]);
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 1), c(3.0, 1.0));
    }

    #[test]
    fn kron_matches_dense() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, c(1.0, 0.0)), (0, 1, c(0.0, 2.0))]);
        let b = CsrMatrix::from_triplets(2, 2, vec![(1, 0, c(3.0, 0.0)), (1, 1, c(1.0, -1.0))]);
        let k = a.kron(&b);
        assert_eq!(k.get(1, 0), c(3.0, 0.0));
        assert_eq!(k.get(1, 2), c(0.0, 6.0));
        assert_eq!(k.get(1, 3), c(2.0, 2.0));
        assert_eq!(k.get(1, 1), c(1.0, -1.0));
        assert_eq!(k.nnz(), 4);
    }

    #[test]
    fn merged_apply_matches_sum() {
        let seed: Vec<f64> = (0..97).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect();
        let a0 = random_matrix(6, 6, &seed);
        let a1 = random_matrix(6, 6, &seed[5..]);
        let a2 = random_matrix(6, 6, &seed[11..]);
        let merged = MergedCsr::new(&a0, &a1, &a2);
        let x: Vec<C64> = (0..6).map(|i| c(i as f64, 1.0 - i as f64)).collect();
        let mut y = vec![ZERO; 6];
        merged.apply(0.7, -1.3, &x, &mut y);
        let full = a0.add_scaled(&a1, c(0.7, 0.0)).add_scaled(&a2, c(-1.3, 0.0));
        let z = full.mul_vec(&x);
        for i in 0..6 {
            assert!((y[i] - z[i]).norm() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn adjoint_identity(seed in proptest::collection::vec(-1.0f64..1.0, 40)) {
            let a = random_matrix(5, 4, &seed);
            let x: Vec<C64> = seed[..4].iter().map(|&v| c(v, 0.5 * v)).collect();
            let y: Vec<C64> = seed[4..9].iter().map(|&v| c(-v, v)).collect();
            let lhs = dot(&y, &a.mul_vec(&x));
            let rhs = dot(&a.adjoint().mul_vec(&y), &x);
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }

        #[test]
        fn matmul_associates_with_matvec(seed in proptest::collection::vec(-1.0f64..1.0, 50)) {
            let a = random_matrix(4, 5, &seed);
            let b = random_matrix(5, 3, &seed[13..]);
            let x: Vec<C64> = seed[..3].iter().map(|&v| c(v, 1.0)).collect();
            let lhs = a.matmul(&b).mul_vec(&x);
            let rhs = a.mul_vec(&b.mul_vec(&x));
            for i in 0..4 {
                prop_assert!((lhs[i] - rhs[i]).norm() < 1e-12);
            }
        }
    }
}
