//! Tomography, readout correction and single-qubit randomized benchmarking.
//!
//! Two-qubit operators use the computational order |q1 q2> with index
//! `2*q1 + q2`. Process matrices are written in the operator basis
//! {I, X, -iY, Z} x {I, X, -iY, Z}, element `4*a + b` carrying factor `a`
//! on Q1 and `b` on Q2.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::device::DeviceParams;
use crate::error::{Error, Result};
use crate::linalg::{cis, cr, eigh, expm, lstsq, solve, CMat, C64, IM, ONE, ZERO};

fn m2(a: C64, b: C64, c: C64, d: C64) -> CMat {
    CMat::from_vec(2, 2, vec![a, b, c, d])
}

pub fn pauli_x() -> CMat {
    m2(ZERO, ONE, ONE, ZERO)
}

pub fn pauli_y() -> CMat {
    m2(ZERO, -IM, IM, ZERO)
}

pub fn pauli_z() -> CMat {
    m2(ONE, ZERO, ZERO, -ONE)
}

/// Single-qubit operator basis {I, X, -iY, Z}.
pub fn chi_basis_1q() -> [CMat; 4] {
    [CMat::identity(2), pauli_x(), pauli_y().scale(-IM), pauli_z()]
}

/// The 16 two-qubit basis operators in chi order.
pub fn chi_basis() -> Vec<CMat> {
    let b = chi_basis_1q();
    let mut out = Vec::with_capacity(16);
    for a in &b {
        for c in &b {
            out.push(a.kron(c));
        }
    }
    out
}

/// exp(-i theta/2 (cos(phi) X + sin(phi) Y))
pub fn rotation(theta: f64, phi: f64) -> CMat {
    let c = cr((0.5 * theta).cos());
    let s = -IM * (0.5 * theta).sin();
    m2(c, s * cis(-phi), s * cis(phi), c)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProcessMatrix {
    pub chi: CMat,
}

impl ProcessMatrix {
    /// chi_mn = u_m conj(u_n) with U = sum_m u_m E_m.
    pub fn from_unitary(u: &CMat) -> Result<Self> {
        if u.rows() != 4 || !u.is_square() {
            return Err(Error::Shape("process matrices act on two qubits".into()));
        }
        let basis = chi_basis();
        let coef: Vec<C64> = basis.iter().map(|e| e.adjoint().matmul(u).trace() * 0.25).collect();
        Ok(ProcessMatrix { chi: CMat::outer(&coef, &coef) })
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        let basis = chi_basis();
        let mut out = CMat::zeros(4, 4);
        for m in 0..16 {
            for n in 0..16 {
                let c = self.chi[(m, n)];
                if c.norm_sqr() > 0.0 {
                    out.axpy(c, &basis[m].matmul(rho).matmul(&basis[n].adjoint()));
                }
            }
        }
        out
    }

    /// || sum_mn chi_mn E_n^dag E_m - I ||_F
    pub fn trace_residual(&self) -> f64 {
        let basis = chi_basis();
        let mut s = CMat::zeros(4, 4);
        for m in 0..16 {
            for n in 0..16 {
                s.axpy(self.chi[(m, n)], &basis[n].adjoint().matmul(&basis[m]));
            }
        }
        (&s - &CMat::identity(4)).norm_fro()
    }
}

pub fn process_fidelity(exp: &ProcessMatrix, ideal: &ProcessMatrix) -> Result<f64> {
    if exp.chi.rows() != ideal.chi.rows() || exp.chi.cols() != ideal.chi.cols() {
        return Err(Error::Tomography("process matrices of different size".into()));
    }
    Ok(exp.chi.matmul(&ideal.chi).trace().re)
}

/// Input states {|g>, |e>, (|g>+|e>)/sqrt2, (|g>-i|e>)/sqrt2} on each qubit.
pub fn standard_inputs() -> Vec<CMat> {
    let h = FRAC_1_SQRT_2;
    let kets: [[C64; 2]; 4] = [[ONE, ZERO], [ZERO, ONE], [cr(h), cr(h)], [cr(h), C64::new(0.0, -h)]];
    let mut out = Vec::with_capacity(16);
    for a in &kets {
        for b in &kets {
            let v = [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]];
            out.push(CMat::outer(&v, &v));
        }
    }
    out
}

/// Solve rho_out_k = sum_mn chi_mn E_m rho_in_k E_n^dag for chi.
pub fn process_tomography(inputs: &[CMat], outputs: &[CMat]) -> Result<ProcessMatrix> {
    if inputs.len() != outputs.len() || inputs.is_empty() {
        return Err(Error::Tomography("need matching input and output lists".into()));
    }
    let basis = chi_basis();
    let rows = 16 * inputs.len();
    let mut a = CMat::zeros(rows, 256);
    let mut b = CMat::zeros(rows, 1);
    for (k, (rin, rout)) in inputs.iter().zip(outputs).enumerate() {
        if rin.rows() != 4 || rout.rows() != 4 {
            return Err(Error::Shape("tomography states must be 4x4".into()));
        }
        let left: Vec<CMat> = basis.iter().map(|e| e.matmul(rin)).collect();
        for m in 0..16 {
            for n in 0..16 {
                let t = left[m].matmul(&basis[n].adjoint());
                for p in 0..16 {
                    a[(16 * k + p, 16 * m + n)] = t.as_slice()[p];
                }
            }
        }
        for p in 0..16 {
            b[(16 * k + p, 0)] = rout.as_slice()[p];
        }
    }
    let x = if rows == 256 { solve(&a, &b) } else { lstsq(&a, &b) }
        .ok_or_else(|| Error::Tomography("singular tomography system".into()))?;
    let chi = CMat::from_fn(16, 16, |m, n| x[(16 * m + n, 0)]);
    Ok(ProcessMatrix { chi })
}

/// Process tomography of a linear map on 4x4 matrices.
pub fn process_from_map(f: impl Fn(&CMat) -> CMat) -> Result<ProcessMatrix> {
    let ins = standard_inputs();
    let outs: Vec<CMat> = ins.iter().map(&f).collect();
    process_tomography(&ins, &outs)
}

/// Per-qubit assignment fidelities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    pub fg: [f64; 2],
    pub fe: [f64; 2],
}

impl ReadoutModel {
    pub fn ideal() -> Self {
        ReadoutModel { fg: [1.0; 2], fe: [1.0; 2] }
    }

    pub fn from_device(p: &DeviceParams) -> Self {
        ReadoutModel { fg: [p.readout.q1.fg, p.readout.q2.fg], fe: [p.readout.q1.fe, p.readout.q2.fe] }
    }

    pub fn validate(&self) -> Result<()> {
        for q in 0..2 {
            for f in [self.fg[q], self.fe[q]] {
                if !(f > 0.5 && f <= 1.0) {
                    return Err(Error::Config(format!("assignment fidelity {f} outside (0.5, 1]")));
                }
            }
        }
        Ok(())
    }

    /// [[Fg, 1 - Fe], [1 - Fg, Fe]] for one qubit.
    pub fn matrix(&self, q: usize) -> [[f64; 2]; 2] {
        [[self.fg[q], 1.0 - self.fe[q]], [1.0 - self.fg[q], self.fe[q]]]
    }

    /// Two-qubit assignment matrix, outcome index 2*q1 + q2.
    pub fn joint(&self) -> [[f64; 4]; 4] {
        let (a, b) = (self.matrix(0), self.matrix(1));
        let mut m = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                m[i][j] = a[i >> 1][j >> 1] * b[i & 1][j & 1];
            }
        }
        m
    }

    /// Measured outcome probabilities for true ones.
    pub fn forward(&self, p: &[f64; 4]) -> [f64; 4] {
        let m = self.joint();
        core::array::from_fn(|i| (0..4).map(|j| m[i][j] * p[j]).sum())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corrected {
    pub probs: Vec<f64>,
    /// Total probability removed by clipping negative values.
    pub clipped: f64,
}

fn inv2(m: [[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.abs() < 1e-12 {
        return Err(Error::Config("singular assignment matrix".into()));
    }
    Ok([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

fn clip(mut v: Vec<f64>, exact: bool) -> Corrected {
    if exact {
        return Corrected { probs: v, clipped: 0.0 };
    }
    let mut clipped = 0.0;
    for x in v.iter_mut() {
        if *x < 0.0 {
            clipped += -*x;
            *x = 0.0;
        } else if *x > 1.0 {
            clipped += *x - 1.0;
            *x = 1.0;
        }
    }
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        for x in v.iter_mut() {
            *x /= s;
        }
    }
    Corrected { probs: v, clipped }
}

/// Undo assignment errors: single-qubit (2 outcomes, `qubit` selects the
/// model) or joint (4 outcomes). Results are clipped to [0, 1] and
/// renormalized only when the inversion leaves that range.
pub fn bayes_correct(raw: &[f64], model: &ReadoutModel, qubit: usize) -> Result<Corrected> {
    if raw.iter().any(|&x| !(-1e-12..=1.0 + 1e-12).contains(&x)) {
        return Err(Error::Config("raw probabilities must lie in [0, 1]".into()));
    }
    let out: Vec<f64> = match raw.len() {
        2 => {
            let m = inv2(model.matrix(qubit.min(1)))?;
            (0..2).map(|i| m[i][0] * raw[0] + m[i][1] * raw[1]).collect()
        }
        4 => {
            let (a, b) = (inv2(model.matrix(0))?, inv2(model.matrix(1))?);
            (0..4).map(|i| (0..4).map(|j| a[i >> 1][j >> 1] * b[i & 1][j & 1] * raw[j]).sum()).collect()
        }
        n => return Err(Error::Shape(format!("expected 2 or 4 outcomes, got {n}"))),
    };
    let inside = out.iter().all(|&x| (0.0..=1.0).contains(&x));
    Ok(clip(out, inside))
}

/// Prerotations {I, X/2, Y/2, X} on one qubit.
pub fn prerotations_1q() -> [CMat; 4] {
    [CMat::identity(2), rotation(0.5 * PI, 0.0), rotation(0.5 * PI, 0.5 * PI), rotation(PI, 0.0)]
}

/// The 16 two-qubit prerotations, index 4*r1 + r2.
pub fn prerotations() -> Vec<CMat> {
    let r = prerotations_1q();
    let mut out = Vec::with_capacity(16);
    for a in &r {
        for b in &r {
            out.push(a.kron(b));
        }
    }
    out
}

/// Computational-basis populations after each prerotation.
pub fn tomography_data(rho: &CMat) -> Vec<[f64; 4]> {
    prerotations()
        .iter()
        .map(|r| {
            let s = r.matmul(rho).matmul(&r.adjoint());
            core::array::from_fn(|k| s[(k, k)].re)
        })
        .collect()
}

fn hermitian_paulis() -> Vec<CMat> {
    let p = [CMat::identity(2), pauli_x(), pauli_y(), pauli_z()];
    let mut out = Vec::with_capacity(16);
    for a in &p {
        for b in &p {
            out.push(a.kron(b));
        }
    }
    out
}

/// Linear-inversion state estimate from 16 x 4 populations, followed by
/// clipping negative eigenvalues and renormalizing.
pub fn state_tomography(data: &[[f64; 4]], readout: Option<&ReadoutModel>) -> Result<CMat> {
    if data.len() != 16 {
        return Err(Error::Tomography(format!("expected 16 prerotations, got {}", data.len())));
    }
    let mut pops: Vec<[f64; 4]> = data.to_vec();
    if let Some(m) = readout {
        for p in pops.iter_mut() {
            let c = bayes_correct(p, m, 0)?;
            *p = [c.probs[0], c.probs[1], c.probs[2], c.probs[3]];
        }
    }
    let rots = prerotations();
    let paulis = hermitian_paulis();
    let mut a = CMat::zeros(64, 16);
    let mut b = CMat::zeros(64, 1);
    for (r, rot) in rots.iter().enumerate() {
        for s in 0..4 {
            let row = 4 * r + s;
            // <s| R P R^dag |s> / 4
            for (k, p) in paulis.iter().enumerate() {
                let t = rot.matmul(p).matmul(&rot.adjoint());
                a[(row, k)] = cr(0.25 * t[(s, s)].re);
            }
            b[(row, 0)] = cr(pops[r][s]);
        }
    }
    let x = lstsq(&a, &b).ok_or_else(|| Error::Tomography("rank-deficient design".into()))?;
    let mut rho = CMat::zeros(4, 4);
    for (k, p) in paulis.iter().enumerate() {
        rho.axpy(cr(0.25 * x[(k, 0)].re), p);
    }
    Ok(physical(&rho.hermitize()))
}

/// Nearest positive semidefinite unit-trace matrix by eigenvalue clipping.
pub fn physical(rho: &CMat) -> CMat {
    let e = eigh(rho);
    let vals: Vec<f64> = e.values.iter().map(|&l| l.max(0.0)).collect();
    let s: f64 = vals.iter().sum();
    let n = rho.rows();
    let mut out = CMat::zeros(n, n);
    for (k, &l) in vals.iter().enumerate() {
        if l > 0.0 {
            let c = e.vectors.column(k);
            out.axpy(cr(l / s), &CMat::outer(&c, &c));
        }
    }
    out
}

/// <psi| rho |psi> style fidelity of a density matrix to a pure state.
pub fn state_fidelity(rho: &CMat, psi: &[C64]) -> f64 {
    CMat::dot(psi, &rho.matvec(psi)).re
}

/// The single-qubit Clifford group modulo global phase, with each
/// element's shortest word in the generators X/2 (0) and Y/2 (1).
#[derive(Clone, Debug)]
pub struct CliffordGroup {
    pub elements: Vec<CMat>,
    pub words: Vec<Vec<u8>>,
    /// `mul[a][b]` is the index of element a * element b.
    pub mul: Vec<Vec<usize>>,
    pub inv: Vec<usize>,
}

fn phase_key(m: &CMat) -> CMat {
    let s = m.as_slice();
    let pivot = s.iter().find(|z| z.norm() > 1e-6).copied().unwrap_or(ONE);
    m.scale(pivot.conj() / pivot.norm())
}

impl CliffordGroup {
    pub fn generate() -> Self {
        let gens = [rotation(0.5 * PI, 0.0), rotation(0.5 * PI, 0.5 * PI)];
        let mut elements = vec![CMat::identity(2)];
        let mut keys = vec![phase_key(&elements[0])];
        let mut words: Vec<Vec<u8>> = vec![Vec::new()];
        let mut head = 0;
        while head < elements.len() {
            for (g, gm) in gens.iter().enumerate() {
                let m = gm.matmul(&elements[head]);
                let k = phase_key(&m);
                if !keys.iter().any(|x| (x - &k).max_abs() < 1e-9) {
                    let mut w = words[head].clone();
                    w.push(g as u8);
                    elements.push(m);
                    keys.push(k);
                    words.push(w);
                }
            }
            head += 1;
        }
        let find = |m: &CMat| -> usize {
            let k = phase_key(m);
            keys.iter().position(|x| (x - &k).max_abs() < 1e-9).expect("group is closed")
        };
        let n = elements.len();
        let mul: Vec<Vec<usize>> =
            (0..n).map(|a| (0..n).map(|b| find(&elements[a].matmul(&elements[b]))).collect()).collect();
        let inv = (0..n).map(|a| (0..n).find(|&b| mul[a][b] == 0).expect("inverse exists")).collect();
        CliffordGroup { elements, words, mul, inv }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RbMode {
    Individual,
    Simultaneous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbConfig {
    pub lengths: Vec<usize>,
    pub sequences: usize,
    pub seed: u64,
    /// Duration of one Clifford, ns.
    pub clifford_time: f64,
    /// Residual ZZ during simultaneous sequences, MHz.
    pub zz: f64,
    pub decoherence: bool,
}

impl Default for RbConfig {
    fn default() -> Self {
        RbConfig {
            lengths: vec![1, 10, 25, 50, 100, 150, 200, 300, 400],
            sequences: 20,
            seed: 7,
            clifford_time: 80.0,
            zz: 0.0,
            decoherence: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbFit {
    pub a: f64,
    pub p: f64,
    pub b: f64,
    /// Per-Clifford fidelity 1 - (1 - p)/2.
    pub fidelity: f64,
    /// Mean survival per length.
    pub survival: Vec<f64>,
}

/// Lindblad superoperator (row-major vec) for H (GHz) and jump operators.
fn lindblad(h: &CMat, jumps: &[CMat]) -> CMat {
    let d = h.rows();
    let mut l = CMat::zeros(d * d, d * d);
    let mut decay = CMat::zeros(d, d);
    for j in jumps {
        decay += &j.adjoint().matmul(j);
    }
    for i in 0..d {
        for k in 0..d {
            let mut e = CMat::zeros(d, d);
            e[(i, k)] = ONE;
            let mut out = h.commutator(&e).scale(-IM * (2.0 * PI));
            for j in jumps {
                out += &j.matmul(&e).matmul(&j.adjoint());
            }
            out -= &(&decay.matmul(&e) + &e.matmul(&decay)).scale_real(0.5);
            for (p, &v) in out.as_slice().iter().enumerate() {
                l[(p, i * d + k)] = v;
            }
        }
    }
    l
}

fn qubit_jumps(params: &DeviceParams, q: usize) -> Vec<CMat> {
    let m = if q == 0 { &params.q1 } else { &params.q2 };
    let g1 = 1.0 / (m.t1 * 1e3);
    let gphi = (1.0 / (m.t2 * 1e3) - 0.5 * g1).max(0.0);
    let lower = m2(ZERO, ONE, ZERO, ZERO);
    let num = m2(ZERO, ZERO, ZERO, ONE);
    vec![lower.scale_real(g1.sqrt()), num.scale_real((2.0 * gphi).sqrt())]
}

/// Idle channel applied after each Clifford, as a superoperator.
fn idle_channel(params: &DeviceParams, mode: RbMode, qubit: usize, cfg: &RbConfig) -> CMat {
    match mode {
        RbMode::Individual => {
            let jumps = if cfg.decoherence { qubit_jumps(params, qubit) } else { Vec::new() };
            expm(&lindblad(&CMat::zeros(2, 2), &jumps).scale_real(cfg.clifford_time))
        }
        RbMode::Simultaneous => {
            let mut h = CMat::zeros(4, 4);
            h[(3, 3)] = cr(cfg.zz * 1e-3);
            let mut jumps = Vec::new();
            if cfg.decoherence {
                let id = CMat::identity(2);
                jumps.extend(qubit_jumps(params, 0).iter().map(|j| j.kron(&id)));
                jumps.extend(qubit_jumps(params, 1).iter().map(|j| id.kron(j)));
            }
            expm(&lindblad(&h, &jumps).scale_real(cfg.clifford_time))
        }
    }
}

fn apply_super(s: &CMat, rho: &CMat) -> CMat {
    let d = rho.rows();
    CMat::from_vec(d, d, s.matvec(rho.as_slice()))
}

/// splitmix64 of (seed, a, b) for independent per-sequence streams.
pub fn sequence_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9e3779b97f4a7c15) ^ b.wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Precomputed pieces of an RB experiment.
pub struct RbSetup {
    pub group: CliffordGroup,
    pub mode: RbMode,
    channels: Vec<CMat>,
}

impl RbSetup {
    pub fn new(params: &DeviceParams, mode: RbMode, cfg: &RbConfig) -> Result<Self> {
        if cfg.lengths.is_empty() || cfg.sequences == 0 {
            return Err(Error::Benchmarking("need lengths and at least one sequence".into()));
        }
        if !(cfg.clifford_time >= 0.0) {
            return Err(Error::Config("Clifford duration must be nonnegative".into()));
        }
        let channels = match mode {
            RbMode::Individual => vec![idle_channel(params, mode, 0, cfg), idle_channel(params, mode, 1, cfg)],
            RbMode::Simultaneous => vec![idle_channel(params, mode, 0, cfg)],
        };
        Ok(RbSetup { group: CliffordGroup::generate(), mode, channels })
    }

    /// Ground-state survival of each qubit for one random sequence.
    pub fn survival(&self, length: usize, seed: u64) -> [f64; 2] {
        let g = &self.group;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self.mode {
            RbMode::Individual => core::array::from_fn(|q| {
                let mut rho = CMat::zeros(2, 2);
                rho[(0, 0)] = ONE;
                let mut acc = 0;
                for _ in 0..length {
                    let c = rng.random_range(0..g.len());
                    acc = g.mul[c][acc];
                    let u = &g.elements[c];
                    rho = apply_super(&self.channels[q], &u.matmul(&rho).matmul(&u.adjoint()));
                }
                let r = &g.elements[g.inv[acc]];
                let rho = r.matmul(&rho).matmul(&r.adjoint());
                rho[(0, 0)].re
            }),
            RbMode::Simultaneous => {
                let mut rho = CMat::zeros(4, 4);
                rho[(0, 0)] = ONE;
                let mut acc = [0usize; 2];
                for _ in 0..length {
                    let c = [rng.random_range(0..g.len()), rng.random_range(0..g.len())];
                    acc = [g.mul[c[0]][acc[0]], g.mul[c[1]][acc[1]]];
                    let u = g.elements[c[0]].kron(&g.elements[c[1]]);
                    rho = apply_super(&self.channels[0], &u.matmul(&rho).matmul(&u.adjoint()));
                }
                let r = g.elements[g.inv[acc[0]]].kron(&g.elements[g.inv[acc[1]]]);
                let rho = r.matmul(&rho).matmul(&r.adjoint());
                [rho[(0, 0)].re + rho[(1, 1)].re, rho[(0, 0)].re + rho[(2, 2)].re]
            }
        }
    }
}

/// Fit y = A p^m + B: B and A by linear least squares at each p, p by
/// grid search refined with golden-section search.
pub fn fit_decay(lengths: &[usize], y: &[f64]) -> Result<(f64, f64, f64)> {
    if lengths.len() < 3 || lengths.len() != y.len() {
        return Err(Error::Benchmarking("need at least three lengths".into()));
    }
    if y.iter().all(|&v| (v - y[0]).abs() < 1e-12) {
        return Ok((0.0, 1.0, y[0]));
    }
    let resid = |p: f64| -> (f64, f64, f64) {
        let x: Vec<f64> = lengths.iter().map(|&m| p.powi(m as i32)).collect();
        let n = x.len() as f64;
        let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let det = n * sxx - sx * sx;
        if det.abs() < 1e-300 {
            return (f64::INFINITY, 0.0, 0.0);
        }
        let a = (n * sxy - sx * sy) / det;
        let b = (sy - a * sx) / n;
        let r = x.iter().zip(y).map(|(xi, yi)| (a * xi + b - yi).powi(2)).sum();
        (r, a, b)
    };
    let mut best = (f64::INFINITY, 0.5);
    for k in 1..2000 {
        let p = k as f64 / 2000.0;
        let r = resid(p).0;
        if r < best.0 {
            best = (r, p);
        }
    }
    let (mut lo, mut hi) = ((best.1 - 5e-4).max(1e-6), (best.1 + 5e-4).min(1.0 - 1e-12));
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let x1 = hi - gr * (hi - lo);
        let x2 = lo + gr * (hi - lo);
        if resid(x1).0 < resid(x2).0 {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    let p = 0.5 * (lo + hi);
    let (r, a, b) = resid(p);
    if !r.is_finite() {
        return Err(Error::Benchmarking("decay fit failed".into()));
    }
    Ok((a, p, b))
}

/// Serial randomized benchmarking; survival of sequence `k` at length
/// index `i` uses seed `sequence_seed(cfg.seed, i, k)`.
pub fn randomized_benchmarking(params: &DeviceParams, mode: RbMode, cfg: &RbConfig) -> Result<[RbFit; 2]> {
    let setup = RbSetup::new(params, mode, cfg)?;
    let mut surv = [vec![0.0; cfg.lengths.len()], vec![0.0; cfg.lengths.len()]];
    for (i, &m) in cfg.lengths.iter().enumerate() {
        for k in 0..cfg.sequences {
            let s = setup.survival(m, sequence_seed(cfg.seed, i as u64, k as u64));
            surv[0][i] += s[0];
            surv[1][i] += s[1];
        }
    }
    rb_fits(&cfg.lengths, cfg.sequences, surv)
}

/// Turn summed survivals into per-qubit fits.
pub fn rb_fits(lengths: &[usize], sequences: usize, mut surv: [Vec<f64>; 2]) -> Result<[RbFit; 2]> {
    let mut out = Vec::with_capacity(2);
    for s in surv.iter_mut() {
        for v in s.iter_mut() {
            *v /= sequences as f64;
        }
        let (a, p, b) = fit_decay(lengths, s)?;
        out.push(RbFit { a, p, b, fidelity: 1.0 - 0.5 * (1.0 - p), survival: s.clone() });
    }
    let b = out.pop().unwrap();
    let a = out.pop().unwrap();
    Ok([a, b])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cz() -> CMat {
        CMat::real_diag(&[1.0, 1.0, 1.0, -1.0])
    }

    #[test]
    fn identity_and_cz_chi() {
        let id = ProcessMatrix::from_unitary(&CMat::identity(4)).unwrap();
        assert!((id.chi[(0, 0)] - ONE).norm() < 1e-15);
        assert!((id.chi.norm_fro() - 1.0).abs() < 1e-15);
        let c = ProcessMatrix::from_unitary(&cz()).unwrap();
        assert!((process_fidelity(&id, &c).unwrap() - 0.25).abs() < 1e-15);
        assert!(c.trace_residual() < 1e-12);
    }

    #[test]
    fn qpt_of_unitary_matches_direct() {
        let u = cz();
        let q = process_from_map(|r| u.matmul(r).matmul(&u.adjoint())).unwrap();
        let d = ProcessMatrix::from_unitary(&u).unwrap();
        assert!((&q.chi - &d.chi).norm_fro() < 1e-10);
    }

    #[test]
    fn bayes_example() {
        let m = ReadoutModel { fg: [0.95, 0.95], fe: [0.9, 0.9] };
        let c = bayes_correct(&[0.5, 0.5], &m, 0).unwrap();
        assert!((c.probs[0] - 0.4 / 0.85).abs() < 1e-12);
        assert!((c.probs[1] - 0.45 / 0.85).abs() < 1e-12);
        assert_eq!(c.clipped, 0.0);
        let id = bayes_correct(&[0.3, 0.7], &ReadoutModel::ideal(), 1).unwrap();
        assert_eq!(id.probs, vec![0.3, 0.7]);
    }

    #[test]
    fn bell_state_tomography() {
        let h = FRAC_1_SQRT_2;
        let psi = [cr(h), ZERO, ZERO, cr(h)];
        let rho = CMat::outer(&psi, &psi);
        let est = state_tomography(&tomography_data(&rho), None).unwrap();
        assert!(state_fidelity(&est, &psi) > 0.9999);
        let m = ReadoutModel { fg: [0.95, 0.97], fe: [0.9, 0.92] };
        let noisy: Vec<[f64; 4]> = tomography_data(&rho).iter().map(|p| m.forward(p)).collect();
        let est2 = state_tomography(&noisy, Some(&m)).unwrap();
        assert!((&est2 - &est).norm_fro() < 1e-6);
    }

    #[test]
    fn clifford_group_has_24() {
        let g = CliffordGroup::generate();
        assert_eq!(g.len(), 24);
        for a in 0..24 {
            assert_eq!(g.mul[a][g.inv[a]], 0);
        }
    }

    #[test]
    fn rb_without_noise() {
        let p = DeviceParams::paper_device();
        let cfg = RbConfig { lengths: vec![1, 5, 20], sequences: 3, decoherence: false, ..Default::default() };
        for mode in [RbMode::Individual, RbMode::Simultaneous] {
            let f = randomized_benchmarking(&p, mode, &cfg).unwrap();
            for q in &f {
                assert!((q.p - 1.0).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn decay_fit_recovers() {
        let ls = [1usize, 5, 10, 50, 100, 200];
        let y: Vec<f64> = ls.iter().map(|&m| 0.47 * 0.991f64.powi(m as i32) + 0.5).collect();
        let (a, p, b) = fit_decay(&ls, &y).unwrap();
        assert!((p - 0.991).abs() < 1e-8 && (a - 0.47).abs() < 1e-6 && (b - 0.5).abs() < 1e-6);
    }
}
