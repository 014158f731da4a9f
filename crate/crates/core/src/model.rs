//! Multilevel Hamiltonian and closed-form coupling quantities.
//!
//! Stored frequencies are ordinary frequencies; the Hamiltonian is in GHz
//! and every closed-form coupling, shift and ZZ value is returned in MHz.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::device::DeviceParams;
use crate::error::{Error, Result};
use crate::linalg::{cr, eigh, CMat, C64};
use crate::qspace::{ModeLayout, ModeOps, COUPLER, Q1, Q2};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyConfig {
    /// GHz in layout order Q1, C, Q2
    pub omega: [f64; 3],
}

impl FrequencyConfig {
    pub fn new(w1: f64, wc: f64, w2: f64) -> Self {
        FrequencyConfig { omega: [w1, wc, w2] }
    }

    /// Every mode at its maximum frequency.
    pub fn sweet_spots(params: &DeviceParams) -> Self {
        FrequencyConfig { omega: params.omega_max() }
    }

    pub fn w1(&self) -> f64 {
        self.omega[Q1]
    }

    pub fn wc(&self) -> f64 {
        self.omega[COUPLER]
    }

    pub fn w2(&self) -> f64 {
        self.omega[Q2]
    }

    pub fn with_coupler(mut self, wc: f64) -> Self {
        self.omega[COUPLER] = wc;
        self
    }

    pub fn validate(&self, params: &DeviceParams) -> Result<()> {
        for (k, (&w, wm)) in self.omega.iter().zip(params.omega_max()).enumerate() {
            if !w.is_finite() || w > wm + 1e-9 {
                return Err(Error::Config(format!("mode {k} frequency {w} GHz above maximum {wm}")));
            }
        }
        Ok(())
    }
}

/// Pairwise detunings in GHz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetuningSet {
    pub delta_1c: f64,
    pub delta_2c: f64,
    pub delta_12: f64,
}

impl From<&FrequencyConfig> for DetuningSet {
    fn from(f: &FrequencyConfig) -> Self {
        DetuningSet { delta_1c: f.w1() - f.wc(), delta_2c: f.w2() - f.wc(), delta_12: f.w1() - f.w2() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTwoQubit {
    /// GHz
    pub dressed_freqs: (f64, f64),
    /// MHz
    pub g_eff: f64,
}

/// Operators whose weighted sum gives the Hamiltonian.
#[derive(Clone, Debug)]
pub struct HamiltonianTerms {
    pub ops: ModeOps,
    /// sum_k (eta_k / 2) a^dag a^dag a a, GHz
    pub anharmonic: CMat,
    pub x1c: CMat,
    pub x2c: CMat,
    pub x12: CMat,
}

/// Coefficients multiplying [n1, nc, n2, x1c, x2c, x12], all GHz.
pub type Coefficients = [f64; 6];

impl HamiltonianTerms {
    pub fn new(params: &DeviceParams, layout: &ModeLayout) -> Result<Self> {
        if layout.n_modes() != 3 {
            return Err(Error::InvalidDimension(format!("expected 3 modes, got {}", layout.n_modes())));
        }
        let ops = ModeOps::new(layout);
        let eta = params.eta_ghz();
        let mut anharmonic = CMat::zeros(layout.total_dim(), layout.total_dim());
        for (k, &e) in eta.iter().enumerate() {
            anharmonic.axpy(cr(e), &ops.kerr(k));
        }
        let x1c = ops.exchange(Q1, COUPLER);
        let x2c = ops.exchange(Q2, COUPLER);
        let x12 = ops.exchange(Q1, Q2);
        Ok(HamiltonianTerms { ops, anharmonic, x1c, x2c, x12 })
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.ops.layout
    }

    pub fn dim(&self) -> usize {
        self.ops.layout.total_dim()
    }

    pub fn coefficients(params: &DeviceParams, omega: &[f64; 3]) -> Coefficients {
        let (g1c, g2c) = params.g_ic(omega[COUPLER]);
        [omega[0], omega[1], omega[2], g1c * 1e-3, g2c * 1e-3, params.coupling.g12 * 1e-3]
    }

    pub fn operators(&self) -> [&CMat; 6] {
        [&self.ops.n[0], &self.ops.n[1], &self.ops.n[2], &self.x1c, &self.x2c, &self.x12]
    }

    pub fn assemble(&self, c: &Coefficients) -> CMat {
        let mut h = self.anharmonic.clone();
        for (op, &x) in self.operators().iter().zip(c) {
            if x != 0.0 {
                h.axpy(cr(x), op);
            }
        }
        h
    }

    pub fn hamiltonian(&self, params: &DeviceParams, freqs: &FrequencyConfig) -> CMat {
        self.assemble(&Self::coefficients(params, &freqs.omega))
    }
}

/// H/h in GHz on the truncated three-mode space.
pub fn build_hamiltonian(params: &DeviceParams, freqs: &FrequencyConfig, layout: &ModeLayout) -> Result<CMat> {
    Ok(HamiltonianTerms::new(params, layout)?.hamiltonian(params, freqs))
}

fn nonzero(x: f64, what: &str) -> Result<f64> {
    if x.abs() < 1e-12 || !x.is_finite() {
        Err(Error::SingularDetuning(what.into()))
    } else {
        Ok(x)
    }
}

/// Exchange coupling between the qubits (MHz), direct plus coupler-mediated.
pub fn effective_coupling(params: &DeviceParams, freqs: &FrequencyConfig) -> Result<f64> {
    let d = DetuningSet::from(freqs);
    let d1 = nonzero(d.delta_1c, "omega_1 = omega_c")? * 1e3;
    let d2 = nonzero(d.delta_2c, "omega_2 = omega_c")? * 1e3;
    let (g1c, g2c) = params.g_ic(freqs.wc());
    Ok(params.coupling.g12 + 0.5 * g1c * g2c * (1.0 / d1 + 1.0 / d2))
}

/// Coupler-dressed qubit frequencies (GHz).
pub fn dressed_frequencies(params: &DeviceParams, freqs: &FrequencyConfig) -> Result<(f64, f64)> {
    let d = DetuningSet::from(freqs);
    let d1 = nonzero(d.delta_1c, "omega_1 = omega_c")?;
    let d2 = nonzero(d.delta_2c, "omega_2 = omega_c")?;
    let (g1c, g2c) = params.g_ic(freqs.wc());
    let (g1, g2) = (g1c * 1e-3, g2c * 1e-3);
    Ok((freqs.w1() + g1 * g1 / d1, freqs.w2() + g2 * g2 / d2))
}

pub fn effective_two_qubit(params: &DeviceParams, freqs: &FrequencyConfig) -> Result<EffectiveTwoQubit> {
    Ok(EffectiveTwoQubit {
        dressed_freqs: dressed_frequencies(params, freqs)?,
        g_eff: effective_coupling(params, freqs)?,
    })
}

/// Perturbative ZZ orders in MHz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZzOrders {
    pub xi2: f64,
    pub xi3: f64,
    pub xi4: f64,
    pub total: f64,
}

/// Which third-order expression to use.
///
/// `WithLoop` adds the `2 g12 g1c g2c / (D1c D2c)` contribution from the
/// closed Q1-C-Q2 path; without it the third order does not match the
/// exact spectrum when the coupling strengths are scaled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThirdOrder {
    Truncated,
    #[default]
    WithLoop,
}

pub fn zz_perturbative(params: &DeviceParams, freqs: &FrequencyConfig) -> Result<ZzOrders> {
    zz_perturbative_with(params, freqs, ThirdOrder::default())
}

pub fn zz_perturbative_with(params: &DeviceParams, freqs: &FrequencyConfig, third: ThirdOrder) -> Result<ZzOrders> {
    let (g1c, g2c) = params.g_ic(freqs.wc());
    let g12 = params.coupling.g12;
    let (e1, ec, e2) = (params.q1.eta, params.coupler.eta, params.q2.eta);
    let d = DetuningSet::from(freqs);
    let (d1c, d2c, d12) = (d.delta_1c * 1e3, d.delta_2c * 1e3, d.delta_12 * 1e3);
    let d21 = -d12;
    let den = |x: f64, name: &str| -> Result<f64> {
        if x.abs() < 1e-9 || !x.is_finite() {
            Err(Error::Resonance(String::from(name)))
        } else {
            Ok(x)
        }
    };
    let g = g1c * g2c;
    let xi2 = if g12 == 0.0 {
        0.0
    } else {
        2.0 * g12 * g12 * (e1 + e2) / (den(d12 + e1, "D12 + eta1")? * den(d12 - e2, "D12 - eta2")?)
    };
    let (xi3, xi4) = if g == 0.0 {
        (0.0, 0.0)
    } else {
        let a1 = 1.0 / den(d1c, "D1c")?;
        let a2 = 1.0 / den(d2c, "D2c")?;
        let b12 = 2.0 / den(d12 - e2, "D12 - eta2")? - 1.0 / den(d12, "D12")?;
        let b21 = 2.0 / den(d21 - e1, "D21 - eta1")? - 1.0 / d21;
        let mut xi3 = 2.0 * g12 * g * (a2 * b21 + a1 * b12);
        if third == ThirdOrder::WithLoop {
            xi3 += 2.0 * g12 * g * a1 * a2;
        }
        let s = a1 + a2;
        let xi4 = 2.0 * g * g / den(d1c + d2c - ec, "D1c + D2c - eta_c")? * s * s
            + g * g * a1 * a1 * (b12 - a2)
            + g * g * a2 * a2 * (b21 - a1);
        (xi3, xi4)
    };
    Ok(ZzOrders { xi2, xi3, xi4, total: xi2 + xi3 + xi4 })
}

/// Eigenvector of `h` with the largest weight on bare index `bare`.
/// Ties go to the lowest eigen index. Returns (energy, vector, overlap).
pub fn dressed_state(h: &CMat, bare: usize) -> (f64, Vec<C64>, f64) {
    let e = eigh(h);
    pick(&e, bare)
}

fn pick(e: &crate::linalg::HermEig, bare: usize) -> (f64, Vec<C64>, f64) {
    let n = e.values.len();
    let mut best = 0;
    let mut ov = -1.0;
    for k in 0..n {
        let o = e.vectors[(bare, k)].norm_sqr();
        if o > ov + 1e-15 {
            ov = o;
            best = k;
        }
    }
    let mut v = e.vectors.column(best);
    let ph = v[bare];
    if ph.norm() > 0.0 {
        let f = ph.conj() / ph.norm();
        for x in v.iter_mut() {
            *x *= f;
        }
    }
    (e.values[best], v, ov)
}

/// Complete dressed basis: column j is the eigenvector assigned to bare
/// index j by greedy maximum overlap (largest first, lowest index on ties),
/// with its bare component made real and positive.
#[derive(Clone, Debug)]
pub struct DressedBasis {
    pub energies: Vec<f64>,
    pub vectors: CMat,
    pub overlaps: Vec<f64>,
}

impl DressedBasis {
    pub fn new(h: &CMat) -> Self {
        let e = eigh(h);
        let n = e.values.len();
        let mut cand: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
        for i in 0..n {
            for k in 0..n {
                let o = e.vectors[(i, k)].norm_sqr();
                if o > 1e-12 {
                    cand.push((o, i, k));
                }
            }
        }
        cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut bare_used = vec![false; n];
        let mut eig_used = vec![false; n];
        let mut assign = vec![usize::MAX; n];
        let mut overlaps = vec![0.0; n];
        for (o, i, k) in cand {
            if !bare_used[i] && !eig_used[k] {
                bare_used[i] = true;
                eig_used[k] = true;
                assign[i] = k;
                overlaps[i] = o;
            }
        }
        // degenerate leftovers (only possible with exact zero overlaps)
        let mut free = (0..n).filter(|&k| !eig_used[k]);
        for i in 0..n {
            if assign[i] == usize::MAX {
                assign[i] = free.next().expect("counts match");
            }
        }
        let mut vectors = CMat::zeros(n, n);
        let mut energies = Vec::with_capacity(n);
        for i in 0..n {
            let k = assign[i];
            let mut v = e.vectors.column(k);
            let ph = v[i];
            if ph.norm() > 0.0 {
                let f = ph.conj() / ph.norm();
                for x in v.iter_mut() {
                    *x *= f;
                }
            }
            vectors.set_column(i, &v);
            energies.push(e.values[k]);
        }
        DressedBasis { energies, vectors, overlaps }
    }

    pub fn vector(&self, bare: usize) -> Vec<C64> {
        self.vectors.column(bare)
    }
}

/// Exact ZZ (MHz) from dressed |000>, |100>, |001>, |101>.
pub fn zz_exact(params: &DeviceParams, freqs: &FrequencyConfig, layout: &ModeLayout) -> Result<f64> {
    let dims = layout.dims();
    if dims.len() != 3 || dims.iter().any(|&d| d < 2) {
        return Err(Error::InvalidDimension("zz_exact needs three modes".into()));
    }
    let h = build_hamiltonian(params, freqs, layout)?;
    let e = eigh(&h);
    let energy = |labels: [usize; 3]| -> Result<f64> {
        let idx = layout.index(&labels)?;
        let (en, _, ov) = pick(&e, idx);
        if ov < 0.5 {
            return Err(Error::StateIdentification {
                label: format!("|{}{}{}>", labels[0], labels[1], labels[2]),
                overlap: ov,
            });
        }
        Ok(en)
    };
    let e00 = energy([0, 0, 0])?;
    let e10 = energy([1, 0, 0])?;
    let e01 = energy([0, 0, 1])?;
    let e11 = energy([1, 0, 1])?;
    Ok((e11 - e10 - e01 + e00) * 1e3)
}

/// Qubit-coupler dispersive shift chi_ic in MHz; `qubit` is 0 (Q1) or 1 (Q2).
pub fn dispersive_shift(params: &DeviceParams, freqs: &FrequencyConfig, qubit: usize) -> Result<f64> {
    let (g1c, g2c) = params.g_ic(freqs.wc());
    let d = DetuningSet::from(freqs);
    let (g, delta, eta_i) = match qubit {
        0 => (g1c, d.delta_1c * 1e3, params.q1.eta),
        1 => (g2c, d.delta_2c * 1e3, params.q2.eta),
        _ => return Err(Error::Index(format!("qubit {qubit} must be 0 or 1"))),
    };
    let eta_c = params.coupler.eta;
    let den = 2.0 * (delta - eta_c) * (delta + eta_i);
    if den.abs() < 1e-9 {
        return Err(Error::Resonance("Delta_ic - eta_c or Delta_ic + eta_i".into()));
    }
    Ok(g * g * (eta_i + eta_c) / den)
}

/// Exchange coupling (MHz) between the coupler-dressed qubits obtained
/// from the exact single-excitation spectrum via the des Cloizeaux
/// effective Hamiltonian on span{|100>, |001>}.
pub fn exact_swap_coupling(params: &DeviceParams, freqs: &FrequencyConfig) -> Result<f64> {
    let (g1c, g2c) = params.g_ic(freqs.wc());
    let g12 = params.coupling.g12;
    let h = CMat::from_real(
        3,
        3,
        &[freqs.w1(), g1c * 1e-3, g12 * 1e-3, g1c * 1e-3, freqs.wc(), g2c * 1e-3, g12 * 1e-3, g2c * 1e-3, freqs.w2()],
    );
    let e = eigh(&h);
    // the two eigenvectors with the least coupler weight
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| e.vectors[(1, a)].norm_sqr().total_cmp(&e.vectors[(1, b)].norm_sqr()));
    let ks = [order[0], order[1]];
    if e.vectors[(1, ks[1])].norm_sqr() > 0.5 {
        return Err(Error::StateIdentification { label: "qubit manifold".into(), overlap: 0.5 });
    }
    // B[i][k] = <q_i|psi_k>, q = (|100>, |001>) -> rows 0 and 2
    let b = CMat::from_fn(2, 2, |i, k| e.vectors[(if i == 0 { 0 } else { 2 }, ks[k])]);
    let lam = CMat::real_diag(&[e.values[ks[0]], e.values[ks[1]]]);
    let bbh = b.matmul(&b.adjoint());
    let s = eigh(&bbh);
    let mut isq = CMat::zeros(2, 2);
    for k in 0..2 {
        let col = s.vectors.column(k);
        let w = 1.0 / s.values[k].sqrt();
        for i in 0..2 {
            for j in 0..2 {
                isq[(i, j)] += col[i] * col[j].conj() * w;
            }
        }
    }
    let heff = isq.matmul(&b).matmul(&lam).matmul(&b.adjoint()).matmul(&isq);
    Ok(heff[(0, 1)].re * 1e3)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OffCriterion {
    /// Root of the closed-form exchange coupling.
    SwapCoupling,
    /// Root of the exact single-excitation exchange coupling.
    SwapExact,
    /// Root of the exact ZZ shift.
    ZzExact,
}

/// Coupler frequency where the chosen interaction vanishes, by bisection
/// down to 0.01 kHz. The default bracket is [max(w1, w2) + 0.3, wc_max].
pub fn find_coupler_off(
    params: &DeviceParams,
    w1: f64,
    w2: f64,
    criterion: OffCriterion,
    bracket: Option<(f64, f64)>,
    layout: &ModeLayout,
) -> Result<f64> {
    let (lo, hi) = bracket.unwrap_or((w1.max(w2) + 0.3, params.coupler.omega_max));
    let f = |wc: f64| -> Result<f64> {
        let fc = FrequencyConfig::new(w1, wc, w2);
        match criterion {
            OffCriterion::SwapCoupling => effective_coupling(params, &fc),
            OffCriterion::SwapExact => exact_swap_coupling(params, &fc),
            OffCriterion::ZzExact => zz_exact(params, &fc, layout),
        }
    };
    let (mut a, mut b) = (lo, hi);
    let (mut fa, fb) = (f(a)?, f(b)?);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoOffPoint { lo, hi });
    }
    while b - a > 1e-8 {
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Idle operating point: qubits at their sweet spots, coupler at the
/// exact ZZ null.
pub fn idle_frequencies(params: &DeviceParams, layout: &ModeLayout) -> Result<FrequencyConfig> {
    let (w1, w2) = (params.q1.omega_max, params.q2.omega_max);
    let wc = find_coupler_off(params, w1, w2, OffCriterion::ZzExact, None, layout)?;
    Ok(FrequencyConfig::new(w1, wc, w2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> DeviceParams {
        DeviceParams::paper_device()
    }

    #[test]
    fn coupling_examples() {
        let g = effective_coupling(&p(), &FrequencyConfig::new(4.926, 5.905, 4.926)).unwrap();
        // 6.74 - 76.9^2 / 979
        assert!((g - (6.74 - 76.9 * 76.9 / 979.0)).abs() < 1e-12);
        assert!((g - 0.70).abs() < 0.01);
        let mut q = p();
        q.coupling.g1c = 0.0;
        assert_eq!(effective_coupling(&q, &FrequencyConfig::new(4.9, 5.9, 4.9)).unwrap(), 6.74);
        assert!(effective_coupling(&p(), &FrequencyConfig::new(5.0, 5.0, 4.9)).is_err());
    }

    #[test]
    fn dressed_q1() {
        let (w1, _) = dressed_frequencies(&p(), &FrequencyConfig::new(4.961, 5.977, 4.926)).unwrap();
        assert!((w1 - (4.961 - 0.0769f64.powi(2) / 1.016)).abs() < 1e-12);
        assert!((w1 - 4.9552).abs() < 1e-4);
    }

    #[test]
    fn chi_example() {
        let chi = dispersive_shift(&p(), &FrequencyConfig::new(4.961, 5.977, 4.926), 0).unwrap();
        let want = 76.9f64.powi(2) * (-460.0) / (2.0 * (-1016.0 + 254.0) * (-1016.0 - 206.0));
        assert!((chi - want).abs() < 1e-12);
        assert!((chi + 1.46).abs() < 0.01);
    }

    #[test]
    fn zz_exact_zero_without_couplings() {
        let mut q = p();
        q.coupling.g1c = 0.0;
        q.coupling.g2c = 0.0;
        q.coupling.g12 = 0.0;
        let z = zz_exact(&q, &FrequencyConfig::new(4.961, 5.9, 4.926), &ModeLayout::default()).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn off_point_swap_closed_form() {
        let w = find_coupler_off(&p(), 4.926, 4.926, OffCriterion::SwapCoupling, None, &ModeLayout::default()).unwrap();
        let closed = 4.926 + 76.9 * 76.9 / 6.74 * 1e-3;
        assert!((w - closed).abs() < 1e-6);
    }

    #[test]
    fn dressed_basis_is_unitary_and_labeled() {
        let l = ModeLayout::default();
        let h = build_hamiltonian(&p(), &FrequencyConfig::new(4.961, 5.9, 4.926), &l).unwrap();
        let d = DressedBasis::new(&h);
        let u = &d.vectors.adjoint().matmul(&d.vectors) - &CMat::identity(27);
        assert!(u.norm_fro() < 1e-12);
        for i in 0..27 {
            assert!(d.overlaps[i] > 0.5, "label {i} overlap {}", d.overlaps[i]);
        }
    }
}
