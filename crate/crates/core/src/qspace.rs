//! Truncated bosonic modes and the composite space |Q1, C, Q2>.
//!
//! Basis states are enumerated row-major in mode order, so with dims
//! `[d1, dc, d2]` the label `(n1, nc, n2)` sits at `n1*dc*d2 + nc*d2 + n2`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cr, CMat, C64, ZERO};

pub const Q1: usize = 0;
pub const COUPLER: usize = 1;
pub const Q2: usize = 2;

/// Dense operator on the composite space.
pub type OperatorMatrix = CMat;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeLayout {
    dims: Vec<usize>,
}

impl Default for ModeLayout {
    fn default() -> Self {
        ModeLayout { dims: vec![3, 3, 3] }
    }
}

impl ModeLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidDimension("layout has no modes".into()));
        }
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidDimension(format!("mode dimension {d} < 2")));
        }
        Ok(ModeLayout { dims })
    }

    /// Three modes with `levels` each.
    pub fn uniform(levels: usize) -> Result<Self> {
        Self::new(vec![levels; 3])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_modes(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn index(&self, labels: &[usize]) -> Result<usize> {
        if labels.len() != self.dims.len() {
            return Err(Error::Index(format!("expected {} labels, got {}", self.dims.len(), labels.len())));
        }
        let mut idx = 0;
        for (k, (&n, &d)) in labels.iter().zip(&self.dims).enumerate() {
            if n >= d {
                return Err(Error::Index(format!("label {n} on mode {k} exceeds truncation {d}")));
            }
            idx = idx * d + n;
        }
        Ok(idx)
    }

    pub fn labels(&self, index: usize) -> Result<Vec<usize>> {
        if index >= self.total_dim() {
            return Err(Error::Index(format!("index {index} >= dimension {}", self.total_dim())));
        }
        let mut out = vec![0; self.dims.len()];
        let mut r = index;
        for k in (0..self.dims.len()).rev() {
            out[k] = r % self.dims[k];
            r /= self.dims[k];
        }
        Ok(out)
    }

    pub fn excitations(&self, index: usize) -> usize {
        self.labels(index).map(|l| l.iter().sum()).unwrap_or(0)
    }

    pub fn basis_vector(&self, labels: &[usize]) -> Result<Vec<C64>> {
        let mut v = vec![ZERO; self.total_dim()];
        v[self.index(labels)?] = cr(1.0);
        Ok(v)
    }
}

pub fn basis_index(labels: &[usize], layout: &ModeLayout) -> Result<usize> {
    layout.index(labels)
}

pub fn basis_labels(index: usize, layout: &ModeLayout) -> Result<Vec<usize>> {
    layout.labels(index)
}

/// (lowering, raising, number) for a single mode truncated at `dim` levels.
pub fn mode_operators(dim: usize) -> Result<(CMat, CMat, CMat)> {
    if dim < 2 {
        return Err(Error::InvalidDimension(format!("mode dimension {dim} < 2")));
    }
    let mut a = CMat::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = cr((n as f64).sqrt());
    }
    let ad = a.adjoint();
    let num = ad.matmul(&a);
    Ok((a, ad, num))
}

/// I x ... x op x ... x I with `op` on `mode`.
pub fn embed(op: &CMat, mode: usize, layout: &ModeLayout) -> Result<CMat> {
    let dims = layout.dims();
    if mode >= dims.len() {
        return Err(Error::Shape(format!("mode {mode} not in layout of {} modes", dims.len())));
    }
    if !op.is_square() || op.rows() != dims[mode] {
        return Err(Error::Shape(format!(
            "operator is {}x{}, mode {mode} has dimension {}",
            op.rows(),
            op.cols(),
            dims[mode]
        )));
    }
    let left: usize = dims[..mode].iter().product();
    let right: usize = dims[mode + 1..].iter().product();
    Ok(CMat::identity(left).kron(op).kron(&CMat::identity(right)))
}

/// Embedded ladder and number operators for every mode of a layout.
#[derive(Clone, Debug)]
pub struct ModeOps {
    pub layout: ModeLayout,
    pub a: Vec<CMat>,
    pub n: Vec<CMat>,
}

impl ModeOps {
    pub fn new(layout: &ModeLayout) -> Self {
        let mut a = Vec::new();
        let mut n = Vec::new();
        for (k, &d) in layout.dims().iter().enumerate() {
            let (lo, _, num) = mode_operators(d).expect("layout dims are >= 2");
            a.push(embed(&lo, k, layout).expect("shape checked"));
            n.push(embed(&num, k, layout).expect("shape checked"));
        }
        ModeOps { layout: layout.clone(), a, n }
    }

    pub fn adag(&self, k: usize) -> CMat {
        self.a[k].adjoint()
    }

    /// a_i^dag a_j + a_j^dag a_i
    pub fn exchange(&self, i: usize, j: usize) -> CMat {
        let x = self.adag(i).matmul(&self.a[j]);
        &x + &x.adjoint()
    }

    /// (1/2) a^dag a^dag a a, diagonal with n(n-1)/2
    pub fn kerr(&self, k: usize) -> CMat {
        let d: Vec<f64> = (0..self.layout.total_dim())
            .map(|i| {
                let n = self.layout.labels(i).unwrap()[k] as f64;
                0.5 * n * (n - 1.0)
            })
            .collect();
        CMat::real_diag(&d)
    }

    pub fn total_number(&self) -> CMat {
        let mut t = CMat::zeros(self.layout.total_dim(), self.layout.total_dim());
        for n in &self.n {
            t += n;
        }
        t
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SystemState {
    Pure(Vec<C64>),
    Density(CMat),
}

impl SystemState {
    pub fn dim(&self) -> usize {
        match self {
            SystemState::Pure(v) => v.len(),
            SystemState::Density(r) => r.rows(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SystemState::Pure(v) => {
                let n = crate::linalg::vec_norm(v);
                if (n - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidState(format!("norm {n} differs from 1")));
                }
            }
            SystemState::Density(r) => {
                if !r.is_square() {
                    return Err(Error::InvalidState("density matrix not square".into()));
                }
                let h = r.hermitian_defect();
                if h > 1e-9 {
                    return Err(Error::InvalidState(format!("density not Hermitian ({h:e})")));
                }
                let t = r.trace();
                if (t.re - 1.0).abs() > 1e-9 || t.im.abs() > 1e-9 {
                    return Err(Error::InvalidState(format!("trace {t} differs from 1")));
                }
                let e = crate::linalg::eigh(&r.hermitize());
                if e.values[0] < -1e-9 {
                    return Err(Error::InvalidState(format!("negative eigenvalue {}", e.values[0])));
                }
            }
        }
        Ok(())
    }

    pub fn to_density(&self) -> CMat {
        match self {
            SystemState::Pure(v) => CMat::outer(v, v),
            SystemState::Density(r) => r.clone(),
        }
    }

    /// Diagonal populations in the bare basis.
    pub fn populations(&self) -> Vec<f64> {
        match self {
            SystemState::Pure(v) => v.iter().map(|z| z.norm_sqr()).collect(),
            SystemState::Density(r) => r.diagonal().iter().map(|z| z.re).collect(),
        }
    }

    pub fn expectation(&self, op: &CMat) -> C64 {
        match self {
            SystemState::Pure(v) => CMat::dot(v, &op.matvec(v)),
            SystemState::Density(r) => r.matmul(op).trace(),
        }
    }
}

/// Reduced density matrix on `keep` (sorted mode indices).
pub fn partial_trace(rho: &CMat, layout: &ModeLayout, keep: &[usize]) -> Result<(CMat, Vec<usize>)> {
    let dims = layout.dims();
    if rho.rows() != layout.total_dim() || !rho.is_square() {
        return Err(Error::Shape("density does not match layout".into()));
    }
    if keep.windows(2).any(|w| w[0] >= w[1]) || keep.iter().any(|&k| k >= dims.len()) {
        return Err(Error::Shape("keep list must be sorted, unique and in range".into()));
    }
    let kdims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    let kd: usize = kdims.iter().product();
    let mut out = CMat::zeros(kd, kd);
    let n = layout.total_dim();
    let reduced_index = |labels: &[usize]| keep.iter().fold(0, |acc, &k| acc * dims[k] + labels[k]);
    let traced_equal = |a: &[usize], b: &[usize]| (0..dims.len()).all(|k| keep.contains(&k) || a[k] == b[k]);
    let all: Vec<Vec<usize>> = (0..n).map(|i| layout.labels(i).unwrap()).collect();
    for i in 0..n {
        for j in 0..n {
            if traced_equal(&all[i], &all[j]) {
                out[(reduced_index(&all[i]), reduced_index(&all[j]))] += rho[(i, j)];
            }
        }
    }
    Ok((out, kdims))
}
