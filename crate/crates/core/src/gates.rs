//! Two-qubit gate schedules and their analysis.
//!
//! The computational states are the eigenstates of the idle Hamiltonian
//! assigned to |q1 0 q2>, each viewed in a frame rotating at its dressed
//! single-qubit energies. In that frame an idle schedule leaves only the
//! residual ZZ phase on |11>.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::device::DeviceParams;
use crate::dynamics::{
    evolve, evolve_batch, frame_phases, ramsey_phase, wrap_phase, CollapseSet, ComputationalBasis, EvolveConfig,
};
use crate::error::{Error, Result};
use crate::linalg::{cis, cr, CMat, C64, IM, ZERO};
use crate::model::{
    build_hamiltonian, exact_swap_coupling, find_coupler_off, idle_frequencies, FrequencyConfig, OffCriterion,
};
use crate::opt::{nelder_mead, ObjectiveSpec};
use crate::pulse::{cosine_step, ddr_root, sampled, Channel, PulseSchedule};
use crate::qspace::{ModeLayout, SystemState};
use crate::tomo::{process_fidelity, process_from_map, ProcessMatrix};

/// Everything a gate simulation needs besides the schedule.
#[derive(Clone, Debug)]
pub struct GateContext {
    pub params: DeviceParams,
    pub layout: ModeLayout,
    pub idle: FrequencyConfig,
    pub basis: ComputationalBasis,
    pub dt: f64,
    pub config: EvolveConfig,
}

impl GateContext {
    /// Idle point at the qubit sweet spots with the coupler at the ZZ null.
    pub fn new(params: &DeviceParams, layout: &ModeLayout, dt: f64) -> Result<Self> {
        let idle = idle_frequencies(params, layout)?;
        Self::with_idle(params, layout, idle, dt)
    }

    pub fn with_idle(params: &DeviceParams, layout: &ModeLayout, idle: FrequencyConfig, dt: f64) -> Result<Self> {
        let basis = ComputationalBasis::dressed(params, layout, &idle)?;
        Ok(GateContext {
            params: *params,
            layout: layout.clone(),
            idle,
            basis,
            dt,
            config: EvolveConfig::default(),
        })
    }

    pub fn schedule(&self) -> PulseSchedule {
        PulseSchedule::new(self.idle, self.dt)
    }

    /// Computational block of the propagator, column s = image of |s>.
    pub fn unitary(&self, schedule: &PulseSchedule) -> Result<LogicalUnitary> {
        let init: Vec<SystemState> = self.basis.vectors.iter().map(|v| SystemState::Pure(v.clone())).collect();
        let recs = evolve_batch(schedule, &init, &self.params, &self.layout, None, &[], &self.config)?;
        let t = schedule.duration();
        let mut u = CMat::zeros(4, 4);
        for (s, r) in recs.iter().enumerate() {
            let SystemState::Pure(psi) = &r.final_state else { unreachable!("pure evolution") };
            let a = self.basis.amplitudes(psi, t);
            for (k, z) in a.iter().enumerate() {
                u[(k, s)] = *z;
            }
        }
        let kept: f64 = u.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>() / 4.0;
        Ok(LogicalUnitary { u, leakage: (1.0 - kept).max(0.0) })
    }

    /// Computational block of the channel: images of |i><j|.
    pub fn channel(&self, schedule: &PulseSchedule, collapse: Option<&CollapseSet>) -> Result<LogicalChannel> {
        let v = &self.basis.vectors;
        let mut init = Vec::with_capacity(16);
        for i in 0..4 {
            for j in 0..4 {
                init.push(SystemState::Density(CMat::outer(&v[i], &v[j])));
            }
        }
        let recs = evolve_batch(schedule, &init, &self.params, &self.layout, collapse, &[], &self.config)?;
        let t = schedule.duration();
        let outputs = recs.iter().map(|r| self.basis.project(&r.final_state, t)).collect();
        Ok(LogicalChannel { outputs })
    }

    /// Analyze a schedule against a target with free virtual Z.
    pub fn analyze(&self, name: &str, schedule: PulseSchedule, target: &CMat) -> Result<GateResult> {
        let lu = self.unitary(&schedule)?;
        let ph = phases(&lu.u);
        let is_diagonal = (0..4).all(|i| (0..4).all(|j| i == j || target[(i, j)].norm() == 0.0));
        let (f, z, pre) = if is_diagonal {
            let (f, z) = fidelity_free_z(&lu.u, target);
            (f, z, [0.0; 2])
        } else {
            let (f, z) = fidelity_free_z_both(&lu.u, target);
            (f, [z[0], z[1]], [z[2], z[3]])
        };
        Ok(GateResult {
            name: String::from(name),
            duration: schedule.duration(),
            schedule,
            single_qubit_phases: (ph.phi01, ph.phi10),
            conditional_phase: ph.conditional,
            leakage: lu.leakage,
            unitary_fidelity: Some(f),
            z_correction: (z[0], z[1]),
            z_pre: (pre[0], pre[1]),
            unitary: lu.u.as_slice().iter().map(|z| [z.re, z.im]).collect(),
        })
    }

    /// Process fidelity Tr(chi_exp chi_ideal) after the virtual Z of `gate`.
    pub fn qpt_fidelity(&self, gate: &GateResult, target: &CMat, collapse: Option<&CollapseSet>) -> Result<f64> {
        let ch = self.channel(&gate.schedule, collapse)?;
        let z = virtual_z(gate.z_correction.0, gate.z_correction.1);
        let pre = virtual_z(gate.z_pre.0, gate.z_pre.1);
        let chi = ch.process_matrix(Some(&pre), Some(&z))?;
        process_fidelity(&chi, &ProcessMatrix::from_unitary(target)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogicalUnitary {
    pub u: CMat,
    /// Mean population lost from the computational states.
    pub leakage: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogicalChannel {
    /// `outputs[4*i + j]` is the image of |i><j|.
    pub outputs: Vec<CMat>,
}

impl LogicalChannel {
    pub fn apply(&self, rho: &CMat) -> CMat {
        let mut out = CMat::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                out.axpy(rho[(i, j)], &self.outputs[4 * i + j]);
            }
        }
        out
    }

    /// Process matrix of `post . channel . pre` for optional unitaries.
    pub fn process_matrix(&self, pre: Option<&CMat>, post: Option<&CMat>) -> Result<ProcessMatrix> {
        process_from_map(|r| {
            let o = match pre {
                Some(z) => self.apply(&z.matmul(r).matmul(&z.adjoint())),
                None => self.apply(r),
            };
            match post {
                Some(z) => z.matmul(&o).matmul(&z.adjoint()),
                None => o,
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub name: String,
    pub schedule: PulseSchedule,
    /// (phi01, phi10), rad
    pub single_qubit_phases: (f64, f64),
    /// phi11 - phi01 - phi10 wrapped to (-pi, pi]
    pub conditional_phase: f64,
    pub leakage: f64,
    pub unitary_fidelity: Option<f64>,
    /// Virtual Z angles (a, b) of diag(1, e^-ia, e^-ib, e^-i(a+b)).
    pub z_correction: (f64, f64),
    /// Virtual Z applied before the gate, zero for diagonal targets.
    #[serde(default)]
    pub z_pre: (f64, f64),
    /// Row-major computational block, [re, im] pairs.
    pub unitary: Vec<[f64; 2]>,
    /// ns
    pub duration: f64,
}

impl GateResult {
    pub fn unitary_matrix(&self) -> CMat {
        CMat::from_vec(4, 4, self.unitary.iter().map(|p| C64::new(p[0], p[1])).collect())
    }

    /// Computational block with the virtual Z applied.
    pub fn corrected(&self) -> CMat {
        virtual_z(self.z_correction.0, self.z_correction.1)
            .matmul(&self.unitary_matrix())
            .matmul(&virtual_z(self.z_pre.0, self.z_pre.1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phases {
    pub phi01: f64,
    pub phi10: f64,
    pub phi11: f64,
    pub conditional: f64,
}

/// Diagonal phases relative to |00>.
pub fn phases(u: &CMat) -> Phases {
    let rel = |k: usize| (u[(k, k)] / u[(0, 0)]).arg();
    let (phi01, phi10, phi11) = (rel(1), rel(2), rel(3));
    Phases { phi01, phi10, phi11, conditional: wrap_phase(phi11 - phi01 - phi10) }
}

/// diag(1, e^-i phi01, e^-i phi10, e^-i(phi01 + phi10)), applied after the gate.
pub fn virtual_z(phi01: f64, phi10: f64) -> CMat {
    CMat::diag(&[cr(1.0), cis(-phi01), cis(-phi10), cis(-phi01 - phi10)])
}

pub fn cz_target() -> CMat {
    CMat::real_diag(&[1.0, 1.0, 1.0, -1.0])
}

pub fn iswap_target(kind: IswapKind) -> CMat {
    let (c, s) = match kind {
        IswapKind::Full => (ZERO, IM),
        IswapKind::Half => (cr(core::f64::consts::FRAC_1_SQRT_2), IM * core::f64::consts::FRAC_1_SQRT_2),
    };
    let one = cr(1.0);
    CMat::from_vec(4, 4, vec![one, ZERO, ZERO, ZERO, ZERO, c, s, ZERO, ZERO, s, c, ZERO, ZERO, ZERO, ZERO, one])
}

/// |Tr(T^dag Z U)|^2 / 16.
pub fn gate_fidelity(u: &CMat, target: &CMat) -> f64 {
    target.adjoint().matmul(u).trace().norm_sqr() / 16.0
}

/// Gate fidelity maximized over the virtual Z angles.
pub fn fidelity_free_z(u: &CMat, target: &CMat) -> (f64, [f64; 2]) {
    let f = |x: &[f64]| -gate_fidelity(&virtual_z(x[0], x[1]).matmul(u), target);
    let ph = phases(u);
    let mut starts = vec![[ph.phi01, ph.phi10]];
    for i in 0..12 {
        for j in 0..12 {
            starts.push([2.0 * PI * i as f64 / 12.0, 2.0 * PI * j as f64 / 12.0]);
        }
    }
    let best0 = starts.iter().map(|s| (f(s), *s)).min_by(|a, b| a.0.total_cmp(&b.0)).unwrap();
    let spec = ObjectiveSpec::new(&["a", "b"], vec![-8.0 * PI; 2], vec![8.0 * PI; 2], vec![0.05; 2], 600);
    let r = nelder_mead(f, &best0.1, &spec).expect("spec is valid");
    let (fv, x) = if r.f < best0.0 { (r.f, [r.x[0], r.x[1]]) } else { (best0.0, best0.1) };
    (-fv, [wrap_phase(x[0]), wrap_phase(x[1])])
}

/// Gate fidelity maximized over virtual Z before and after the gate:
/// returns (F, [post a, post b, pre a, pre b]).
pub fn fidelity_free_z_both(u: &CMat, target: &CMat) -> (f64, [f64; 4]) {
    let f = |x: &[f64]| {
        let v = virtual_z(x[0], x[1]).matmul(u).matmul(&virtual_z(x[2], x[3]));
        -gate_fidelity(&v, target)
    };
    let mut best = (f64::INFINITY, [0.0; 4]);
    let grid = 8;
    for i in 0..grid * grid * grid * grid {
        let x = [i % grid, (i / grid) % grid, (i / grid / grid) % grid, i / grid / grid / grid]
            .map(|k| 2.0 * PI * k as f64 / grid as f64);
        let v = f(&x);
        if v < best.0 {
            best = (v, x);
        }
    }
    let spec = ObjectiveSpec::new(&["a", "b", "c", "d"], vec![-8.0 * PI; 4], vec![8.0 * PI; 4], vec![0.1; 4], 2000);
    let r = nelder_mead(f, &best.1, &spec).expect("spec is valid");
    let (fv, x) = if r.f < best.0 { (r.f, [r.x[0], r.x[1], r.x[2], r.x[3]]) } else { best };
    (-fv, x.map(wrap_phase))
}

/// Ramsey calibration of a schedule: (phi01, phi10, phi11, conditional).
pub fn calibrate_phases(ctx: &GateContext, schedule: &PulseSchedule) -> Result<Phases> {
    let r = |target, control| {
        ramsey_phase(schedule, target, control, &ctx.basis, &ctx.params, None, &ctx.config)
            .map_err(|e| Error::Calibration(format!("{e}")))
    };
    let phi01 = r(1, 0)?.phase;
    let phi10 = r(0, 0)?.phase;
    let c1 = r(1, 1)?.phase;
    Ok(Phases { phi01, phi10, phi11: wrap_phase(phi10 + c1), conditional: wrap_phase(c1 - phi01) })
}

/// DDR CZ schedule parameters. Frequencies GHz, times ns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdrParams {
    /// Coupler level at the bottom of the dip.
    pub dip: f64,
    pub hold: f64,
    /// Duration of each Q2 ramp.
    pub ramp: f64,
    /// Duration of each coupler dip edge.
    pub edge: f64,
    /// Offset of the Q2 operating point from w1 + eta1.
    pub detune: f64,
    /// Corrections added to the coupler track at equally spaced ramp
    /// fractions (the correction is zero at the idle end).
    pub knots: Vec<f64>,
}

/// Defaults are the decoherence-free optimum at dt = 0.1 ns.
impl Default for DdrParams {
    fn default() -> Self {
        DdrParams {
            dip: 5.197_300_2,
            hold: 29.510_561,
            ramp: 20.381_106,
            edge: 25.339_967,
            detune: 0.006_880_458,
            knots: vec![0.009_098_564, 0.048_639_221, 0.035_368_793, -0.003_059_120, 0.000_314_461],
        }
    }
}

impl DdrParams {
    pub fn duration(&self) -> f64 {
        2.0 * self.ramp + 2.0 * self.edge + self.hold
    }
}

fn knot_correction(knots: &[f64], s: f64) -> f64 {
    if knots.is_empty() {
        return 0.0;
    }
    let x = s.clamp(0.0, 1.0) * knots.len() as f64;
    let k = (x.floor() as usize).min(knots.len() - 1);
    let f = x - k as f64;
    let left = if k == 0 { 0.0 } else { knots[k - 1] };
    left + (knots[k] - left) * f
}

/// Coupler trajectory of the DDR ramps as a function of ramp fraction `s`:
/// the DDR root for (w1 + eta1, w2(s)) blended from the idle coupler.
struct DdrTrack<'a> {
    ctx: &'a GateContext,
    w1e: f64,
    w2i: f64,
    w2op: f64,
    offset: f64,
    knots: &'a [f64],
}

impl<'a> DdrTrack<'a> {
    fn new(ctx: &'a GateContext, p: &'a DdrParams) -> Result<Self> {
        let eta1 = ctx.params.eta_ghz()[0];
        let w1e = ctx.idle.w1() + eta1;
        let w2i = ctx.idle.w2();
        let tr0 = ddr_root(&ctx.params, w1e, w2i).ok_or(Error::DdrInfeasible { sample: 0 })?;
        Ok(DdrTrack { ctx, w1e, w2i, w2op: w1e + p.detune, offset: ctx.idle.wc() - tr0, knots: &p.knots })
    }

    fn w2(&self, s: f64) -> f64 {
        self.w2i + (self.w2op - self.w2i) * s
    }

    fn coupler(&self, s: f64) -> Option<f64> {
        let r = ddr_root(&self.ctx.params, self.w1e, self.w2(s))?;
        Some(r + self.offset * (1.0 - s) + knot_correction(self.knots, s))
    }
}

fn ddr_build(ctx: &GateContext, p: &DdrParams, with_dip: bool) -> Result<PulseSchedule> {
    if !(p.ramp > 0.0 && p.edge >= 0.0 && p.hold >= 0.0) {
        return Err(Error::InvalidPulse("DDR timings must be nonnegative with a positive ramp".into()));
    }
    let tr = DdrTrack::new(ctx, p)?;
    let c_op = tr.coupler(1.0).ok_or(Error::DdrInfeasible { sample: 0 })?;
    let (edge, hold) = if with_dip { (p.edge, p.hold) } else { (0.0, 0.0) };
    let total = 2.0 * p.ramp + 2.0 * edge + hold;
    let s_of = |t: f64| cosine_step(t.min(total - t) / p.ramp);
    let d_of = |t: f64| {
        let len = 2.0 * edge + hold;
        let u = t - p.ramp;
        if !with_dip || u <= 0.0 || u >= len {
            0.0
        } else if edge == 0.0 {
            1.0
        } else {
            cosine_step(u.min(len - u) / edge)
        }
    };
    let dt = ctx.dt;
    let n = crate::pulse::sampled_len(total, dt);
    let mut cs = Vec::with_capacity(n);
    for k in 0..n {
        let t = (k as f64 * dt).min(total);
        let c = tr.coupler(s_of(t)).ok_or(Error::DdrInfeasible { sample: k })?;
        cs.push(c + (p.dip - c_op) * d_of(t));
    }
    let last = cs.len() - 1;
    cs[last] = ctx.idle.wc();
    let wc_max = ctx.params.coupler.omega_max;
    if let Some(k) = cs.iter().position(|&c| !(c > 0.0 && c <= wc_max + 1e-12)) {
        return Err(Error::DdrInfeasible { sample: k });
    }
    let w2 = sampled(Channel::FreqQ2, total, dt, |t| tr.w2(s_of(t)))?;
    let mut w2v = w2.real_values();
    let l = w2v.len() - 1;
    w2v[l] = ctx.idle.w2();
    ctx.schedule()
        .with(crate::pulse::ChannelWaveform::real(Channel::FreqQ2, dt, w2v)?)?
        .with(crate::pulse::ChannelWaveform::real(Channel::FreqC, dt, cs)?)
}

/// Full DDR CZ: Q2 ramp with the coupler on its DDR track, coupler dip
/// and hold, then the mirror image.
pub fn ddr_schedule(ctx: &GateContext, p: &DdrParams) -> Result<PulseSchedule> {
    ddr_build(ctx, p, true)
}

/// The two DDR ramps back to back, without the dip.
pub fn ddr_ramps_only(ctx: &GateContext, p: &DdrParams) -> Result<PulseSchedule> {
    ddr_build(ctx, p, false)
}

/// DDR CZ with the hold from `p`.
pub fn cz_ddr(ctx: &GateContext, p: &DdrParams) -> Result<GateResult> {
    ctx.analyze("cz_ddr", ddr_schedule(ctx, p)?, &cz_target())
}

/// Bisect `f` (continuous, wrapped phase error) for a zero on `[lo, hi]`
/// after a coarse scan; the bracket must not straddle a wrap.
fn phase_root(mut f: impl FnMut(f64) -> Result<f64>, lo: f64, hi: f64, steps: usize) -> Result<f64> {
    let mut prev = (lo, f(lo)?);
    for k in 1..=steps {
        let x = lo + (hi - lo) * k as f64 / steps as f64;
        let fx = f(x)?;
        if prev.1.signum() != fx.signum() && (fx - prev.1).abs() < PI {
            let (mut a, mut b, fa) = (prev.0, x, prev.1);
            for _ in 0..40 {
                let m = 0.5 * (a + b);
                let fm = f(m)?;
                if fm.signum() == fa.signum() {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Ok(0.5 * (a + b));
        }
        prev = (x, fx);
    }
    Err(Error::Calibration(format!("no phase crossing in [{lo}, {hi}]")))
}

/// DDR CZ with the hold bisected so that the conditional phase is pi.
pub fn cz_ddr_calibrated(ctx: &GateContext, p: &DdrParams, max_hold: f64) -> Result<(DdrParams, GateResult)> {
    let mut q = p.clone();
    let hold = phase_root(
        |h| {
            let mut r = p.clone();
            r.hold = h;
            let u = ctx.unitary(&ddr_schedule(ctx, &r)?)?;
            Ok(wrap_phase(phases(&u.u).conditional - PI))
        },
        0.0,
        max_hold,
        ((max_hold / 2.0).ceil() as usize).max(4),
    )?;
    q.hold = hold;
    let g = cz_ddr(ctx, &q)?;
    Ok((q, g))
}

/// Rectangular CZ: Q2 and the coupler step (one-sample edges) to the
/// |11>-|20> operating point and back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectParams {
    /// Coupler level during the hold, GHz.
    pub coupler: f64,
    /// ns
    pub hold: f64,
    /// Offset of Q2 from w1 + eta1, GHz.
    pub detune: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingSign {
    Positive,
    Negative,
}

pub fn rect_schedule(ctx: &GateContext, p: &RectParams) -> Result<PulseSchedule> {
    if !(p.hold > 0.0) {
        return Err(Error::InvalidPulse("hold must be positive".into()));
    }
    let dt = ctx.dt;
    let total = p.hold + 2.0 * dt;
    let trap = move |t: f64, idle: f64, level: f64| {
        let x = if t <= dt {
            t / dt
        } else if t >= total - dt {
            (total - t) / dt
        } else {
            1.0
        };
        idle + (level - idle) * x.clamp(0.0, 1.0)
    };
    let w2op = ctx.idle.w1() + ctx.params.eta_ghz()[0] + p.detune;
    let (w2i, wci) = (ctx.idle.w2(), ctx.idle.wc());
    ctx.schedule().with(sampled(Channel::FreqQ2, total, dt, |t| trap(t, w2i, w2op))?)?.with(sampled(
        Channel::FreqC,
        total,
        dt,
        |t| trap(t, wci, p.coupler),
    )?)
}

/// Coupler frequency where the exact exchange coupling of qubits at
/// (w1, w2) equals `target` MHz.
pub fn coupler_for_coupling(params: &DeviceParams, w1: f64, w2: f64, target: f64, layout: &ModeLayout) -> Result<f64> {
    let off = find_coupler_off(params, w1, w2, OffCriterion::SwapExact, None, layout)?;
    let g = |wc: f64| exact_swap_coupling(params, &FrequencyConfig::new(w1, wc, w2)).map(|x| x - target);
    let (mut lo, mut hi) = if target < 0.0 { (w1.max(w2) + 0.15, off) } else { (off, params.coupler.omega_max) };
    let (glo, ghi) = (g(lo)?, g(hi)?);
    if glo.signum() == ghi.signum() {
        return Err(Error::Infeasible(format!("coupling {target} MHz not reachable in [{lo}, {hi}] GHz")));
    }
    for _ in 0..60 {
        let m = 0.5 * (lo + hi);
        if g(m)?.signum() == glo.signum() {
            lo = m;
        } else {
            hi = m;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Starting point for `cz_rectangular`: the coupler level whose exchange
/// coupling completes one |11>-|20> cycle (rate 2 sqrt2 g) within `hold`.
pub fn rect_start(ctx: &GateContext, sign: CouplingSign, hold: f64) -> Result<RectParams> {
    let g = 1e3 / (2.0 * core::f64::consts::SQRT_2 * hold);
    let g = match sign {
        CouplingSign::Positive => g,
        CouplingSign::Negative => -g,
    };
    let w1 = ctx.idle.w1();
    let coupler = match coupler_for_coupling(&ctx.params, w1, w1 + ctx.params.eta_ghz()[0], g, &ctx.layout) {
        Err(Error::Infeasible(_)) if g > 0.0 => ctx.params.coupler.omega_max,
        other => other?,
    };
    Ok(RectParams { coupler, hold, detune: 0.0 })
}

/// Rectangular CZ tuned for the conditional phase and a full
/// |11>-|20> cycle. Positive coupling keeps `hold` fixed and tunes the
/// coupler level and detuning; negative coupling also tunes the hold.
pub fn cz_rectangular(
    ctx: &GateContext,
    sign: CouplingSign,
    start: &RectParams,
    budget: usize,
) -> Result<(RectParams, GateResult)> {
    let eval = |q: &RectParams| -> f64 {
        match rect_schedule(ctx, q).and_then(|s| ctx.unitary(&s)) {
            Ok(u) => 1.0 - fidelity_free_z(&u.u, &cz_target()).0,
            Err(_) => f64::INFINITY,
        }
    };
    let off = find_coupler_off(
        &ctx.params,
        ctx.idle.w1(),
        ctx.idle.w1() + ctx.params.eta_ghz()[0],
        OffCriterion::SwapExact,
        None,
        &ctx.layout,
    )?;
    let wmax = ctx.params.coupler.omega_max;
    let best = match sign {
        CouplingSign::Positive => {
            let spec = ObjectiveSpec::new(
                &["coupler", "detune"],
                vec![off, -0.01],
                vec![wmax, 0.01],
                vec![0.02, 0.001],
                budget,
            );
            let r = nelder_mead(
                |x| eval(&RectParams { coupler: x[0], hold: start.hold, detune: x[1] }),
                &[start.coupler, start.detune],
                &spec,
            )?;
            RectParams { coupler: r.x[0], hold: start.hold, detune: r.x[1] }
        }
        CouplingSign::Negative => {
            let lo = ctx.idle.w1() + 0.15;
            let spec = ObjectiveSpec::new(
                &["coupler", "detune", "hold"],
                vec![lo, -0.01, 20.0],
                vec![off, 0.01, 300.0],
                vec![0.02, 0.001, 5.0],
                budget,
            );
            let r = nelder_mead(
                |x| eval(&RectParams { coupler: x[0], hold: x[2], detune: x[1] }),
                &[start.coupler, start.detune, start.hold],
                &spec,
            )?;
            RectParams { coupler: r.x[0], hold: r.x[2], detune: r.x[1] }
        }
    };
    let g = ctx.analyze("cz_rect", rect_schedule(ctx, &best)?, &cz_target())?;
    Ok((best, g))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IswapKind {
    Full,
    Half,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IswapParams {
    /// Exchange coupling during the hold, MHz.
    pub coupling: f64,
    /// Cosine ramp of Q1 and the coupler, ns.
    pub ramp: f64,
}

impl Default for IswapParams {
    fn default() -> Self {
        IswapParams { coupling: -2.0, ramp: 10.0 }
    }
}

fn iswap_sched(ctx: &GateContext, wc: f64, ramp: f64, hold: f64) -> Result<PulseSchedule> {
    let total = 2.0 * ramp + hold;
    let env = move |t: f64| cosine_step(t.min(total - t) / ramp);
    let (w1i, w2, wci) = (ctx.idle.w1(), ctx.idle.w2(), ctx.idle.wc());
    ctx.schedule().with(sampled(Channel::FreqQ1, total, ctx.dt, |t| w1i + (w2 - w1i) * env(t))?)?.with(sampled(
        Channel::FreqC,
        total,
        ctx.dt,
        |t| wci + (wc - wci) * env(t),
    )?)
}

/// iSWAP family: Q1 brought onto Q2, coupler set to the target exchange
/// coupling, hold tuned for full (or half) transfer of |10> to |01>.
/// Targets are [[1,0,0,0],[0,0,i,0],[0,i,0,0],[0,0,0,1]] and its square
/// root with cos/i sin entries 1/sqrt2.
pub fn iswap(ctx: &GateContext, kind: IswapKind, p: &IswapParams) -> Result<GateResult> {
    let w2 = ctx.idle.w2();
    let wc = coupler_for_coupling(&ctx.params, w2, w2, p.coupling, &ctx.layout)?;
    let quarter = 1.0 / (4.0 * p.coupling.abs() * 1e-3);
    let transfer = |hold: f64| -> Result<f64> {
        let u = ctx.unitary(&iswap_sched(ctx, wc, p.ramp, hold)?)?;
        Ok(u.u[(1, 2)].norm_sqr())
    };
    let hold = match kind {
        IswapKind::Full => {
            let (mut a, mut b) = ((quarter - 2.0 * p.ramp).max(1.0), quarter * 1.3);
            let gr = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..40 {
                let x1 = b - gr * (b - a);
                let x2 = a + gr * (b - a);
                if transfer(x1)? > transfer(x2)? {
                    b = x2;
                } else {
                    a = x1;
                }
            }
            0.5 * (a + b)
        }
        IswapKind::Half => {
            let (mut a, mut b) = (0.0, quarter);
            if transfer(a)? > 0.5 {
                return Err(Error::Infeasible("ramps alone exceed half transfer".into()));
            }
            for _ in 0..40 {
                let m = 0.5 * (a + b);
                if transfer(m)? < 0.5 {
                    a = m;
                } else {
                    b = m;
                }
            }
            0.5 * (a + b)
        }
    };
    let name = match kind {
        IswapKind::Full => "iswap",
        IswapKind::Half => "sqrt_iswap",
    };
    ctx.analyze(name, iswap_sched(ctx, wc, p.ramp, hold)?, &iswap_target(kind))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricSplit {
    pub conditional: f64,
    /// -2 pi times the integral of <H>_11 - <H>_10 - <H>_01 + <H>_00 over
    /// the evolved computational states.
    pub dynamical: f64,
    pub geometric: f64,
    pub fraction: f64,
}

/// Split the conditional phase into the part from the energy expectation
/// along the actual evolution and the remainder.
pub fn geometric_fraction(ctx: &GateContext, schedule: &PulseSchedule) -> Result<GeometricSplit> {
    let cfg = EvolveConfig { record_states: true, ..ctx.config.clone() };
    let init: Vec<SystemState> = ctx.basis.vectors.iter().map(|v| SystemState::Pure(v.clone())).collect();
    let recs = evolve_batch(schedule, &init, &ctx.params, &ctx.layout, None, &[], &cfg)?;
    let times = &recs[0].times;
    let mut combo = vec![0.0; times.len()];
    for (k, &t) in times.iter().enumerate() {
        let h = build_hamiltonian(&ctx.params, &FrequencyConfig { omega: schedule.frequencies_at(t) }, &ctx.layout)?;
        let back: Vec<C64> = frame_phases(&ctx.layout, &ctx.idle.omega, t).iter().map(|z| z.conj()).collect();
        for (s, sign) in [(0usize, 1.0), (1, -1.0), (2, -1.0), (3, 1.0)] {
            let SystemState::Pure(psi) = &recs[s].states[k] else { unreachable!("pure evolution") };
            let lab: Vec<C64> = psi.iter().zip(&back).map(|(a, b)| a * b).collect();
            combo[k] += sign * CMat::dot(&lab, &h.matvec(&lab)).re;
        }
    }
    let mut integral = 0.0;
    for k in 1..times.len() {
        integral += 0.5 * (combo[k] + combo[k - 1]) * (times[k] - times[k - 1]);
    }
    let dynamical = -2.0 * PI * integral;
    let u = ctx.unitary(schedule)?;
    if u.leakage > 0.1 {
        return Err(Error::Nonadiabatic(format!("leakage {:.3} leaves the computational states", u.leakage)));
    }
    let conditional = phases(&u.u).conditional;
    let geometric = wrap_phase(conditional - dynamical);
    let total = dynamical + geometric;
    let fraction = if total.abs() > 1e-12 { geometric / total } else { 0.0 };
    Ok(GeometricSplit { conditional, dynamical, geometric, fraction })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakagePoint {
    pub coupler: f64,
    /// Final |101> population.
    pub population: f64,
    /// Relaxation-only expectation exp(-T/T1_q1 - T/T1_q2).
    pub reference: f64,
    /// 1 - population / reference
    pub deviation: f64,
}

/// |101> retention after parking the resonant qubits with the coupler at
/// each grid frequency for `hold` ns (10 ns cosine ramps).
pub fn leakage_point(ctx: &GateContext, wc: f64, hold: f64, collapse: Option<&CollapseSet>) -> Result<LeakagePoint> {
    let s = iswap_sched(ctx, wc, 10.0, hold)?;
    let psi = SystemState::Pure(ctx.basis.vectors[3].clone());
    let rec = evolve(&s, &psi, &ctx.params, &ctx.layout, collapse, &[], &ctx.config)?;
    let t = s.duration();
    let population = ctx.basis.project(&rec.final_state, t)[(3, 3)].re;
    let reference = match collapse {
        Some(_) => (-t / (ctx.params.q1.t1 * 1e3) - t / (ctx.params.q2.t1 * 1e3)).exp(),
        None => 1.0,
    };
    Ok(LeakagePoint { coupler: wc, population, reference, deviation: 1.0 - population / reference })
}

pub fn leakage_scan(
    ctx: &GateContext,
    grid: &[f64],
    hold: f64,
    collapse: Option<&CollapseSet>,
) -> Result<Vec<LeakagePoint>> {
    grid.iter().map(|&wc| leakage_point(ctx, wc, hold, collapse)).collect()
}

/// Highest coupler frequency whose deviation exceeds `limit`.
pub fn leakage_threshold(points: &[LeakagePoint], limit: f64) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.deviation > limit)
        .map(|p| p.coupler)
        .fold(None, |a: Option<f64>, c| Some(a.map_or(c, |x| x.max(c))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> GateContext {
        GateContext::new(&DeviceParams::paper_device(), &ModeLayout::default(), 0.25).unwrap()
    }

    #[test]
    fn idle_gate_is_identity() {
        let c = ctx();
        let s = PulseSchedule::idle_for(c.idle, 30.0, c.dt);
        let u = c.unitary(&s).unwrap();
        let ph = phases(&u.u);
        assert!(ph.conditional.abs() < 1e-3);
        assert!(u.leakage < 1e-9);
        let cal = calibrate_phases(&c, &s).unwrap();
        assert!(cal.conditional.abs() < 1e-3);
    }

    #[test]
    fn virtual_z_algebra() {
        assert_eq!(virtual_z(0.0, 0.0), CMat::identity(4));
        let (a, b, c) = (0.3, -1.1, 2.0);
        let u = CMat::diag(&[cr(1.0), cis(a), cis(b), cis(a + b + c)]);
        let v = virtual_z(a, b).matmul(&u);
        assert!((v[(3, 3)] - cis(c)).norm() < 1e-12);
        assert!((v[(1, 1)] - cr(1.0)).norm() < 1e-12);
        let (f, _) = fidelity_free_z(&u, &cz_target());
        let at_zero = (cis(c) * -1.0 + cr(3.0)).norm_sqr() / 16.0;
        assert!(f >= at_zero - 1e-12 && f < 1.0);
        let cz = CMat::diag(&[cr(1.0), cis(a), cis(b), cis(a + b + PI)]);
        let (f, z) = fidelity_free_z(&cz, &cz_target());
        assert!((f - 1.0).abs() < 1e-9);
        assert!(wrap_phase(z[0] - a).abs() < 1e-4 && wrap_phase(z[1] - b).abs() < 1e-4);
    }

    #[test]
    fn knots_vanish_at_idle() {
        assert_eq!(knot_correction(&[0.1, 0.2], 0.0), 0.0);
        assert!((knot_correction(&[0.1, 0.2], 0.25) - 0.05).abs() < 1e-15);
        assert!((knot_correction(&[0.1, 0.2], 1.0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn ddr_schedule_ends_at_idle() {
        let c = ctx();
        let s = ddr_schedule(&c, &DdrParams::default()).unwrap();
        let end = s.duration();
        for t in [0.0, end] {
            let w = s.frequencies_at(t);
            for k in 0..3 {
                assert!((w[k] - c.idle.omega[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn static_zz_is_all_dynamical() {
        let p = DeviceParams::paper_device();
        let l = ModeLayout::default();
        let idle = FrequencyConfig::sweet_spots(&p).with_coupler(5.5);
        let c = GateContext::with_idle(&p, &l, idle, 0.25).unwrap();
        let s = PulseSchedule::idle_for(idle, 100.0, c.dt);
        let g = geometric_fraction(&c, &s).unwrap();
        assert!(g.conditional.abs() > 0.05, "{g:?}");
        assert!(g.fraction.abs() < 1e-3, "{g:?}");
    }
}
