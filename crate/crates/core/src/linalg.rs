//! Dense complex matrices sized for a few dozen levels.
//!
//! Hermitian eigenproblems use cyclic Jacobi rotations. The solver first
//! splits the matrix into connected blocks so that excitation-conserving
//! Hamiltonians decompose into their small sectors.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex;
#[allow(unused_imports)]
use num_traits::{Float, Zero};

pub type C64 = Complex<f64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const IM: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn cr(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// e^{i theta}
#[inline]
pub fn cis(theta: f64) -> C64 {
    C64::new(theta.cos(), theta.sin())
}

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols, "CMat::from_vec: length mismatch");
        CMat { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMat { rows, cols, data }
    }

    pub fn from_real(rows: usize, cols: usize, vals: &[f64]) -> Self {
        Self::from_vec(rows, cols, vals.iter().map(|&x| cr(x)).collect())
    }

    pub fn diag(d: &[C64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n, n);
        for (i, &x) in d.iter().enumerate() {
            m.data[i * n + i] = x;
        }
        m
    }

    pub fn real_diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n, n);
        for (i, &x) in d.iter().enumerate() {
            m.data[i * n + i] = cr(x);
        }
        m
    }

    /// |u><v|
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        Self::from_fn(u.len(), v.len(), |i, j| u[i] * v[j].conj())
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

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[C64]) {
        for (i, &x) in v.iter().enumerate() {
            self.data[i * self.cols + j] = x;
        }
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        CMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, s: C64) -> Self {
        CMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| z * s).collect() }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        CMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| z * s).collect() }
    }

    /// self += s * other
    pub fn axpy(&mut self, s: C64, other: &CMat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += s * b;
        }
    }

    pub fn matmul(&self, other: &CMat) -> CMat {
        assert_eq!(self.cols, other.rows, "matmul: inner dimension mismatch");
        let mut out = CMat::zeros(self.rows, other.cols);
        let m = other.cols;
        for i in 0..self.rows {
            let orow = &mut out.data[i * m..(i + 1) * m];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a.is_zero() {
                    continue;
                }
                let brow = &other.data[k * m..(k + 1) * m];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len(), "matvec: dimension mismatch");
        (0..self.rows).map(|i| self.row(i).iter().zip(v).fold(ZERO, |acc, (&a, &b)| acc + a * b)).collect()
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).fold(ZERO, |a, b| a + b)
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn kron(&self, other: &CMat) -> CMat {
        let (r, c) = (self.rows * other.rows, self.cols * other.cols);
        CMat::from_fn(r, c, |i, j| self[(i / other.rows, j / other.cols)] * other[(i % other.rows, j % other.cols)])
    }

    pub fn commutator(&self, other: &CMat) -> CMat {
        &self.matmul(other) - &other.matmul(self)
    }

    /// ||A - A^dag||_F
    pub fn hermitian_defect(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                s += (self[(i, j)] - self[(j, i)].conj()).norm_sqr();
            }
        }
        s.sqrt()
    }

    pub fn hermitize(&self) -> CMat {
        (self + &self.adjoint()).scale_real(0.5)
    }

    pub fn select(&self, rows: &[usize], cols: &[usize]) -> CMat {
        CMat::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }

    /// Inner product <u|v>.
    pub fn dot(u: &[C64], v: &[C64]) -> C64 {
        u.iter().zip(v).fold(ZERO, |acc, (a, b)| acc + a.conj() * b)
    }
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &CMat {
    type Output = CMat;
    fn add(self, rhs: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMat { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &CMat {
    type Output = CMat;
    fn sub(self, rhs: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMat { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect() }
    }
}

impl AddAssign<&CMat> for CMat {
    fn add_assign(&mut self, rhs: &CMat) {
        self.axpy(ONE, rhs);
    }
}

impl SubAssign<&CMat> for CMat {
    fn sub_assign(&mut self, rhs: &CMat) {
        self.axpy(-ONE, rhs);
    }
}

impl Mul for &CMat {
    type Output = CMat;
    fn mul(self, rhs: &CMat) -> CMat {
        self.matmul(rhs)
    }
}

impl Neg for &CMat {
    type Output = CMat;
    fn neg(self) -> CMat {
        self.scale_real(-1.0)
    }
}

/// Connected components of the nonzero pattern of a square matrix.
/// Components are returned with sorted indices, ordered by smallest index.
pub fn blocks(a: &CMat) -> Vec<Vec<usize>> {
    let n = a.rows;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if !a[(i, j)].is_zero() || !a[(j, i)].is_zero() {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    let (lo, hi) = if ri < rj { (ri, rj) } else { (rj, ri) };
                    parent[hi] = lo;
                }
            }
        }
    }
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = out.len();
            out.push(Vec::new());
        }
        out[slot[r]].push(i);
    }
    out
}

/// In-place cyclic Jacobi. On return `a` is (numerically) diagonal and
/// `v` holds the accumulated rotations.
fn jacobi(a: &mut CMat, v: &mut CMat) {
    let n = a.rows;
    if n < 2 {
        return;
    }
    let scale = a.norm_fro();
    if scale == 0.0 {
        return;
    }
    let tiny = 1e-300_f64.max(scale * 1e-30);
    for _ in 0..80 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-17 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r <= tiny {
                    continue;
                }
                let ph = apq / r;
                let tau = (a[(q, q)].re - a[(p, p)].re) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * cs;
                // J = diag(1, e^{-i phi}) * [[c, s], [-s, c]]
                let jpp = cr(cs);
                let jpq = cr(sn);
                let jqp = ph.conj() * (-sn);
                let jqq = ph.conj() * cs;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = akp * jpp + akq * jqp;
                    a[(k, q)] = akp * jpq + akq * jqq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = jpp.conj() * apk + jqp.conj() * aqk;
                    a[(q, k)] = jpq.conj() * apk + jqq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)].im = 0.0;
                a[(q, q)].im = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = vkp * jpp + vkq * jqp;
                    v[(k, q)] = vkp * jpq + vkq * jqq;
                }
            }
        }
    }
}

/// Eigen-decomposition of one connected block.
#[derive(Clone, Debug)]
pub struct EigBlock {
    pub idx: Vec<usize>,
    /// ascending
    pub values: Vec<f64>,
    /// columns are eigenvectors, `idx.len()` square
    pub vectors: CMat,
}

/// Block-structured Hermitian eigen-decomposition.
#[derive(Clone, Debug)]
pub struct BlockEig {
    pub n: usize,
    pub blocks: Vec<EigBlock>,
}

pub fn block_eigh(h: &CMat) -> BlockEig {
    assert!(h.is_square(), "eigh: matrix not square");
    let n = h.rows;
    let comps = blocks(h);
    let mut out = Vec::with_capacity(comps.len());
    for idx in comps {
        let mut a = h.select(&idx, &idx);
        let mut v = CMat::identity(idx.len());
        jacobi(&mut a, &mut v);
        let mut order: Vec<usize> = (0..idx.len()).collect();
        order.sort_by(|&x, &y| a[(x, x)].re.total_cmp(&a[(y, y)].re));
        let values = order.iter().map(|&k| a[(k, k)].re).collect();
        let vectors = CMat::from_fn(idx.len(), idx.len(), |i, j| v[(i, order[j])]);
        out.push(EigBlock { idx, values, vectors });
    }
    BlockEig { n, blocks: out }
}

/// Full Hermitian eigen-decomposition, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermEig {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

pub fn eigh(h: &CMat) -> HermEig {
    let be = block_eigh(h);
    let n = be.n;
    let mut pairs: Vec<(f64, Vec<C64>)> = Vec::with_capacity(n);
    for b in &be.blocks {
        for (j, &lam) in b.values.iter().enumerate() {
            let mut col = vec![ZERO; n];
            for (r, &gi) in b.idx.iter().enumerate() {
                col[gi] = b.vectors[(r, j)];
            }
            pairs.push((lam, col));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut vectors = CMat::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (j, (lam, col)) in pairs.into_iter().enumerate() {
        values.push(lam);
        vectors.set_column(j, &col);
    }
    HermEig { values, vectors }
}

/// Operator stored as dense diagonal blocks over disjoint index sets.
#[derive(Clone, Debug)]
pub struct BlockOp {
    pub n: usize,
    pub blocks: Vec<(Vec<usize>, CMat)>,
}

impl BlockEig {
    /// f(H) for a scalar function applied to the spectrum.
    pub fn map(&self, f: impl Fn(f64) -> C64) -> BlockOp {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let m = b.idx.len();
                let fv: Vec<C64> = b.values.iter().map(|&l| f(l)).collect();
                let mut u = CMat::zeros(m, m);
                for i in 0..m {
                    for j in 0..m {
                        let mut s = ZERO;
                        for k in 0..m {
                            s += b.vectors[(i, k)] * fv[k] * b.vectors[(j, k)].conj();
                        }
                        u[(i, j)] = s;
                    }
                }
                (b.idx.clone(), u)
            })
            .collect();
        BlockOp { n: self.n, blocks }
    }

    /// exp(-i * theta * H)
    pub fn expm_i(&self, theta: f64) -> BlockOp {
        self.map(|l| cis(-theta * l))
    }
}

impl BlockOp {
    pub fn identity(n: usize) -> Self {
        BlockOp { n, blocks: vec![((0..n).collect(), CMat::identity(n))] }
    }

    pub fn to_dense(&self) -> CMat {
        let mut m = CMat::zeros(self.n, self.n);
        for (idx, b) in &self.blocks {
            for (i, &gi) in idx.iter().enumerate() {
                for (j, &gj) in idx.iter().enumerate() {
                    m[(gi, gj)] = b[(i, j)];
                }
            }
        }
        m
    }

    pub fn apply(&self, v: &[C64], out: &mut [C64]) {
        for (idx, b) in &self.blocks {
            for (i, &gi) in idx.iter().enumerate() {
                let mut s = ZERO;
                for (j, &gj) in idx.iter().enumerate() {
                    s += b[(i, j)] * v[gj];
                }
                out[gi] = s;
            }
        }
    }

    pub fn apply_vec(&self, v: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.n];
        self.apply(v, &mut out);
        out
    }

    /// U rho U^dag
    pub fn conjugate(&self, rho: &CMat) -> CMat {
        let n = self.n;
        // first T = U rho (row blocks), then T U^dag (column blocks)
        let mut t = CMat::zeros(n, n);
        for (idx, b) in &self.blocks {
            for (i, &gi) in idx.iter().enumerate() {
                for (k, &gk) in idx.iter().enumerate() {
                    let u = b[(i, k)];
                    if u.is_zero() {
                        continue;
                    }
                    for col in 0..n {
                        t[(gi, col)] += u * rho[(gk, col)];
                    }
                }
            }
        }
        let mut out = CMat::zeros(n, n);
        for (idx, b) in &self.blocks {
            for (j, &gj) in idx.iter().enumerate() {
                for (k, &gk) in idx.iter().enumerate() {
                    let u = b[(j, k)].conj();
                    if u.is_zero() {
                        continue;
                    }
                    for row in 0..n {
                        out[(row, gj)] += t[(row, gk)] * u;
                    }
                }
            }
        }
        out
    }
}

/// LU with partial pivoting; solves A X = B. Returns None when singular.
pub fn solve(a: &CMat, b: &CMat) -> Option<CMat> {
    assert!(a.is_square() && a.rows == b.rows, "solve: shape mismatch");
    let n = a.rows;
    let m = b.cols;
    let mut lu = a.clone();
    let mut x = b.clone();
    let scale = a.max_abs();
    if scale == 0.0 {
        return None;
    }
    for k in 0..n {
        let mut piv = k;
        let mut best = lu[(k, k)].norm();
        for i in (k + 1)..n {
            let v = lu[(i, k)].norm();
            if v > best {
                best = v;
                piv = i;
            }
        }
        if best <= scale * 1e-14 {
            return None;
        }
        if piv != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(piv, j)];
                lu[(piv, j)] = tmp;
            }
            for j in 0..m {
                let tmp = x[(k, j)];
                x[(k, j)] = x[(piv, j)];
                x[(piv, j)] = tmp;
            }
        }
        let inv = ONE / lu[(k, k)];
        for i in (k + 1)..n {
            let f = lu[(i, k)] * inv;
            if f.is_zero() {
                continue;
            }
            lu[(i, k)] = f;
            for j in (k + 1)..n {
                let t = lu[(k, j)];
                lu[(i, j)] -= f * t;
            }
            for j in 0..m {
                let t = x[(k, j)];
                x[(i, j)] -= f * t;
            }
        }
    }
    for k in (0..n).rev() {
        let inv = ONE / lu[(k, k)];
        for j in 0..m {
            let mut s = x[(k, j)];
            for i in (k + 1)..n {
                s -= lu[(k, i)] * x[(i, j)];
            }
            x[(k, j)] = s * inv;
        }
    }
    Some(x)
}

pub fn inverse(a: &CMat) -> Option<CMat> {
    solve(a, &CMat::identity(a.rows))
}

/// Least squares min ||A x - b|| via the normal equations.
pub fn lstsq(a: &CMat, b: &CMat) -> Option<CMat> {
    let ah = a.adjoint();
    solve(&ah.matmul(a), &ah.matmul(b))
}

/// Closest unitary (polar factor) of a square matrix, via eigh of A^dag A.
pub fn polar_unitary(a: &CMat) -> Option<CMat> {
    let e = eigh(&a.adjoint().matmul(a));
    if e.values.iter().any(|&l| l <= 1e-14) {
        return None;
    }
    let n = a.rows;
    let mut inv_sqrt = CMat::zeros(n, n);
    for k in 0..n {
        let col = e.vectors.column(k);
        let w = 1.0 / e.values[k].sqrt();
        for i in 0..n {
            for j in 0..n {
                inv_sqrt[(i, j)] += col[i] * col[j].conj() * w;
            }
        }
    }
    Some(a.matmul(&inv_sqrt))
}

/// exp(A) for a general square matrix by scaling and squaring a Taylor series.
pub fn expm(a: &CMat) -> CMat {
    assert!(a.is_square(), "expm: matrix not square");
    let norm = a.norm_fro();
    let mut s = 0;
    while norm / (1u64 << s) as f64 > 0.25 {
        s += 1;
    }
    let x = a.scale_real(1.0 / (1u64 << s) as f64);
    let n = a.rows;
    let mut term = CMat::identity(n);
    let mut sum = CMat::identity(n);
    for k in 1..=16 {
        term = term.matmul(&x).scale_real(1.0 / k as f64);
        sum += &term;
    }
    for _ in 0..s {
        sum = sum.matmul(&sum);
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn herm(n: usize, seed: u64) -> CMat {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        let a = CMat::from_fn(n, n, |_, _| C64::new(next(), next()));
        a.hermitize()
    }

    #[test]
    fn eigh_reconstructs() {
        for n in [1, 2, 3, 7, 12] {
            let h = herm(n, n as u64 + 3);
            let e = eigh(&h);
            let v = &e.vectors;
            let recon = v.matmul(&CMat::real_diag(&e.values)).matmul(&v.adjoint());
            assert!((&recon - &h).norm_fro() < 1e-12 * (1.0 + h.norm_fro()));
            let orth = &v.adjoint().matmul(v) - &CMat::identity(n);
            assert!(orth.norm_fro() < 1e-12);
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn blocks_split_direct_sum() {
        let mut h = CMat::zeros(4, 4);
        h[(0, 2)] = cr(1.0);
        h[(2, 0)] = cr(1.0);
        h[(1, 1)] = cr(3.0);
        h[(3, 3)] = cr(-1.0);
        let b = blocks(&h);
        assert_eq!(b, vec![vec![0, 2], vec![1], vec![3]]);
        let e = eigh(&h);
        assert!((e.values[0] + 1.0).abs() < 1e-15);
        assert!((e.values[3] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn expm_matches_taylor() {
        let h = herm(5, 11).scale_real(0.3);
        let u = block_eigh(&h).expm_i(1.0).to_dense();
        let mut term = CMat::identity(5);
        let mut sum = CMat::identity(5);
        for k in 1..40 {
            term = term.matmul(&h).scale(-IM / (k as f64));
            sum += &term;
        }
        assert!((&u - &sum).norm_fro() < 1e-13);
    }

    #[test]
    fn general_expm_matches_hermitian() {
        let h = herm(4, 21).scale_real(3.0);
        let u = block_eigh(&h).expm_i(1.0).to_dense();
        let v = expm(&h.scale(-IM));
        assert!((&u - &v).norm_fro() < 1e-12);
    }

    #[test]
    fn block_conjugate_matches_dense() {
        let mut h = herm(6, 5);
        h[(0, 5)] = ZERO;
        h[(5, 0)] = ZERO;
        for j in 1..6 {
            h[(0, j)] = ZERO;
            h[(j, 0)] = ZERO;
        }
        let u = block_eigh(&h).expm_i(0.7);
        assert!(u.blocks.len() >= 2);
        let rho = herm(6, 9);
        let d = u.to_dense();
        let want = d.matmul(&rho).matmul(&d.adjoint());
        assert!((&u.conjugate(&rho) - &want).norm_fro() < 1e-13);
    }

    #[test]
    fn solve_and_inverse() {
        let a = &herm(6, 2) + &CMat::identity(6).scale_real(2.0);
        let ai = inverse(&a).unwrap();
        assert!((&a.matmul(&ai) - &CMat::identity(6)).norm_fro() < 1e-12);
        assert!(solve(&CMat::zeros(2, 2), &CMat::identity(2)).is_none());
    }

    #[test]
    fn polar_of_unitary_is_itself() {
        let u = block_eigh(&herm(4, 1)).expm_i(2.0).to_dense();
        let p = polar_unitary(&u.scale_real(0.5)).unwrap();
        assert!((&p - &u).norm_fro() < 1e-12);
    }
}
