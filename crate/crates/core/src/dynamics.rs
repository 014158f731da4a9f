//! Time evolution under a pulse schedule.
//!
//! The integrator is a fixed-step fourth-order Runge-Kutta scheme in the
//! interaction picture. On every sample interval the excitation-conserving
//! Hamiltonian at the interval midpoint is exponentiated exactly; the
//! remainder (control changes across the interval, drives) and the
//! dissipator are handled by the Runge-Kutta stages.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::device::DeviceParams;
use crate::error::{Error, Result};
use crate::linalg::{block_eigh, cis, cr, eigh, BlockOp, CMat, C64, IM, ZERO};
use crate::model::{build_hamiltonian, Coefficients, DressedBasis, FrequencyConfig, HamiltonianTerms};
use crate::pulse::{rectangular, Channel, PulseSchedule, Samples};
use crate::qspace::{embed, mode_operators, ModeLayout, SystemState, COUPLER, Q1, Q2};

const TWO_PI: f64 = 2.0 * PI;

/// Operator kept as its nonzero entries.
#[derive(Clone, Debug, Default)]
pub struct SparseOp {
    pub entries: Vec<(usize, usize, C64)>,
}

impl SparseOp {
    pub fn from_dense(m: &CMat) -> Self {
        let mut entries = Vec::new();
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let v = m[(i, j)];
                if v.norm_sqr() > 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        SparseOp { entries }
    }

    fn scaled(&self, s: f64) -> Self {
        SparseOp { entries: self.entries.iter().map(|&(i, j, v)| (i, j, v * s)).collect() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapseKind {
    Relaxation,
    Dephasing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseChannel {
    pub mode: usize,
    pub kind: CollapseKind,
    /// 1/ns
    pub rate: f64,
}

/// Lindblad operators sqrt(1/T1) a and sqrt(2/T_phi) a^dag a per mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseSet {
    pub channels: Vec<CollapseChannel>,
}

impl CollapseSet {
    pub fn from_device(params: &DeviceParams) -> Result<Self> {
        let mut channels = Vec::new();
        for mode in 0..3 {
            let m = params.mode(mode);
            if !(m.t1 > 0.0) || !(m.t2 > 0.0) {
                return Err(Error::Config(format!("mode {mode}: T1 and T2 must be positive")));
            }
            let g1 = 1.0 / (m.t1 * 1e3);
            let gphi = 1.0 / (m.t2 * 1e3) - 0.5 * g1;
            if gphi < -1e-15 {
                return Err(Error::Config(format!("mode {mode}: T2 = {} us exceeds 2 T1", m.t2)));
            }
            channels.push(CollapseChannel { mode, kind: CollapseKind::Relaxation, rate: g1 });
            if gphi > 0.0 {
                channels.push(CollapseChannel { mode, kind: CollapseKind::Dephasing, rate: 2.0 * gphi });
            }
        }
        Ok(CollapseSet { channels })
    }

    /// Only the listed modes.
    pub fn restrict(mut self, modes: &[usize]) -> Self {
        self.channels.retain(|c| modes.contains(&c.mode));
        self
    }

    pub fn validate(&self, layout: &ModeLayout) -> Result<()> {
        for c in &self.channels {
            if c.mode >= layout.n_modes() {
                return Err(Error::Shape(format!("collapse on mode {} outside layout", c.mode)));
            }
            if !(c.rate >= 0.0) || !c.rate.is_finite() {
                return Err(Error::Config(format!("collapse rate {} must be finite and nonnegative", c.rate)));
            }
        }
        Ok(())
    }

    /// Lindblad operators, already multiplied by sqrt(rate).
    pub fn operators(&self, layout: &ModeLayout) -> Result<Vec<SparseOp>> {
        self.validate(layout)?;
        let mut out = Vec::new();
        for c in &self.channels {
            let (a, _, n) = mode_operators(layout.dims()[c.mode])?;
            let op = match c.kind {
                CollapseKind::Relaxation => a,
                CollapseKind::Dephasing => n,
            };
            out.push(SparseOp::from_dense(&embed(&op, c.mode, layout)?).scaled(c.rate.sqrt()));
        }
        Ok(out)
    }
}

/// Reference frame of the integration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Common frame rotating at `reference` GHz with drives in the
    /// rotating-wave approximation. `None` picks the mean idle qubit
    /// frequency.
    Rotating { reference: Option<f64> },
    /// No frame and no rotating-wave approximation.
    Lab,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    /// Runge-Kutta steps per sample interval.
    pub substeps: usize,
    pub frame: Frame,
    /// Record every n-th sample time.
    pub record_stride: usize,
    /// Keep full states at recorded times.
    pub record_states: bool,
    /// Maximum tolerated drift of norm or trace.
    pub max_drift: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            substeps: 2,
            frame: Frame::Rotating { reference: None },
            record_stride: 1,
            record_states: false,
            max_drift: 1e-4,
        }
    }
}

/// Time-indexed output of one evolution. States are in the frame of each
/// mode's idle frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub labels: Vec<Vec<usize>>,
    /// `populations[l][k]` for label `l` at `times[k]`.
    pub populations: Vec<Vec<f64>>,
    pub states: Vec<SystemState>,
    pub final_state: SystemState,
    pub schedule_hash: u64,
    pub params_hash: u64,
}

impl TrajectoryRecord {
    pub fn series(&self, labels: &[usize]) -> Option<&[f64]> {
        self.labels.iter().position(|l| l == labels).map(|k| self.populations[k].as_slice())
    }
}

/// FNV-1a over a stream of f64 bit patterns.
pub fn hash_f64s(values: impl IntoIterator<Item = f64>) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

pub fn schedule_hash(s: &PulseSchedule) -> u64 {
    let mut vals = vec![s.dt, s.carriers[0], s.carriers[1]];
    vals.extend(s.idle.omega);
    for w in s.waveforms() {
        vals.push(w.channel as u8 as f64);
        match &w.samples {
            Samples::Real(v) => vals.extend(v.iter().copied()),
            Samples::Complex(v) => vals.extend(v.iter().flat_map(|z| [z.0, z.1])),
        }
    }
    hash_f64s(vals)
}

pub fn params_hash(p: &DeviceParams) -> u64 {
    let mut vals = Vec::new();
    for m in [&p.q1, &p.coupler, &p.q2] {
        vals.extend([m.omega_max, m.eta, m.t1, m.t2]);
    }
    vals.extend([p.coupling.g1c, p.coupling.g2c, p.coupling.g12, p.coupling.scale_with_coupler as u8 as f64]);
    vals.extend(p.crosstalk.inv.iter().flatten().copied());
    vals.extend([p.readout.q1.fg, p.readout.q1.fe, p.readout.q2.fg, p.readout.q2.fe]);
    hash_f64s(vals)
}

/// Diagonal exp(i 2 pi sum_k w_k n_k t) in the bare basis.
pub fn frame_phases(layout: &ModeLayout, omega: &[f64], t: f64) -> Vec<C64> {
    (0..layout.total_dim())
        .map(|i| {
            let l = layout.labels(i).unwrap();
            let e: f64 = l.iter().zip(omega).map(|(&n, &w)| n as f64 * w).sum();
            cis(TWO_PI * e * t)
        })
        .collect()
}

fn apply_diag(state: &SystemState, d: &[C64]) -> SystemState {
    match state {
        SystemState::Pure(v) => SystemState::Pure(v.iter().zip(d).map(|(a, b)| a * b).collect()),
        SystemState::Density(r) => {
            let n = r.rows();
            SystemState::Density(CMat::from_fn(n, n, |i, j| d[i] * r[(i, j)] * d[j].conj()))
        }
    }
}

/// Static model pieces shared by every state of a batch.
struct Generator<'a> {
    params: &'a DeviceParams,
    schedule: &'a PulseSchedule,
    terms: HamiltonianTerms,
    sparse: Vec<SparseOp>,
    drive_x: [SparseOp; 2],
    drive_y: [SparseOp; 2],
    jumps: Vec<SparseOp>,
    /// diagonal of sum_j L_j^dag L_j
    decay: Vec<f64>,
    reference: f64,
    lab: bool,
}

impl<'a> Generator<'a> {
    fn new(
        params: &'a DeviceParams,
        schedule: &'a PulseSchedule,
        layout: &ModeLayout,
        collapse: Option<&CollapseSet>,
        frame: Frame,
    ) -> Result<Self> {
        let terms = HamiltonianTerms::new(params, layout)?;
        let sparse = terms.operators().iter().map(|m| SparseOp::from_dense(m)).collect();
        let quad = |mode: usize| -> (SparseOp, SparseOp) {
            let a = &terms.ops.a[mode];
            let ad = a.adjoint();
            let x = (a + &ad).scale_real(0.5);
            let y = (&ad - a).scale(IM * 0.5);
            (SparseOp::from_dense(&x), SparseOp::from_dense(&y))
        };
        let (x1, y1) = quad(Q1);
        let (x2, y2) = quad(Q2);
        let jumps = match collapse {
            Some(c) => c.operators(layout)?,
            None => Vec::new(),
        };
        let n = layout.total_dim();
        let mut decay = vec![0.0; n];
        for l in &jumps {
            // L^dag L is diagonal for a and n: column sums of |L_ij|^2
            for &(_, j, v) in &l.entries {
                decay[j] += v.norm_sqr();
            }
        }
        let reference = match frame {
            Frame::Lab => 0.0,
            Frame::Rotating { reference: Some(r) } => r,
            Frame::Rotating { reference: None } => 0.5 * (schedule.idle.w1() + schedule.idle.w2()),
        };
        Ok(Generator {
            params,
            schedule,
            terms,
            sparse,
            drive_x: [x1, x2],
            drive_y: [y1, y2],
            jumps,
            decay,
            reference,
            lab: matches!(frame, Frame::Lab),
        })
    }

    fn static_coefficients(&self, t: f64) -> Coefficients {
        let w = self.schedule.frequencies_at(t);
        let mut c = HamiltonianTerms::coefficients(self.params, &w);
        for x in c.iter_mut().take(3) {
            *x -= self.reference;
        }
        c
    }

    fn drive_coefficients(&self, t: f64) -> [(f64, f64); 2] {
        let d = self.schedule.drives_at(t);
        let mut out = [(0.0, 0.0); 2];
        for q in 0..2 {
            if d[q] == ZERO {
                continue;
            }
            let wd = self.schedule.carriers[q];
            if self.lab {
                out[q] = (2.0 * (d[q] * cis(-TWO_PI * wd * t)).re, 0.0);
            } else {
                let z = d[q] * cis(-TWO_PI * (wd - self.reference) * t);
                out[q] = (z.re, z.im);
            }
        }
        out
    }

    /// Perturbation V(t) = H(t) - H0 as weighted sparse operators.
    fn perturbation(&self, t: f64, c0: &Coefficients) -> Vec<(f64, &SparseOp)> {
        let c = self.static_coefficients(t);
        let mut v = Vec::new();
        for k in 0..6 {
            let d = c[k] - c0[k];
            if d != 0.0 {
                v.push((d, &self.sparse[k]));
            }
        }
        if self.schedule.has_drive() {
            for (q, (cx, cy)) in self.drive_coefficients(t).into_iter().enumerate() {
                if cx != 0.0 {
                    v.push((cx, &self.drive_x[q]));
                }
                if cy != 0.0 {
                    v.push((cy, &self.drive_y[q]));
                }
            }
        }
        v
    }
}

#[derive(Clone)]
enum Work {
    Pure(Vec<C64>),
    Density(CMat),
}

impl Work {
    fn axpy(&mut self, a: f64, x: &Work) {
        match (self, x) {
            (Work::Pure(y), Work::Pure(x)) => {
                for (yi, xi) in y.iter_mut().zip(x) {
                    *yi += xi * a;
                }
            }
            (Work::Density(y), Work::Density(x)) => y.axpy(cr(a), x),
            _ => unreachable!("mixed representations"),
        }
    }

    fn plus(&self, a: f64, x: &Work) -> Work {
        let mut out = self.clone();
        out.axpy(a, x);
        out
    }

    fn propagate(&self, u: &BlockOp) -> Work {
        match self {
            Work::Pure(v) => Work::Pure(u.apply_vec(v)),
            Work::Density(r) => Work::Density(u.conjugate(r)),
        }
    }

    /// Norm of a pure state, trace of a density operator.
    fn invariant(&self) -> C64 {
        match self {
            Work::Pure(v) => cr(crate::linalg::vec_norm(v)),
            Work::Density(r) => r.trace(),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Work::Pure(v) => v.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
            Work::Density(r) => r.as_slice().iter().all(|z| z.re.is_finite() && z.im.is_finite()),
        }
    }

    fn populations(&self) -> Vec<f64> {
        match self {
            Work::Pure(v) => v.iter().map(|z| z.norm_sqr()).collect(),
            Work::Density(r) => r.diagonal().iter().map(|z| z.re).collect(),
        }
    }

    fn to_state(&self) -> SystemState {
        match self {
            Work::Pure(v) => SystemState::Pure(v.clone()),
            Work::Density(r) => SystemState::Density(r.clone()),
        }
    }
}

/// -i 2 pi V psi, or -i 2 pi [V, rho] + D(rho).
fn rhs(g: &Generator, v: &[(f64, &SparseOp)], x: &Work) -> Work {
    match x {
        Work::Pure(psi) => {
            let mut out = vec![ZERO; psi.len()];
            for &(c, op) in v {
                let s = -IM * (TWO_PI * c);
                for &(i, j, m) in &op.entries {
                    out[i] += s * m * psi[j];
                }
            }
            Work::Pure(out)
        }
        Work::Density(rho) => {
            let n = rho.rows();
            let mut out = CMat::zeros(n, n);
            for &(c, op) in v {
                let s = -IM * (TWO_PI * c);
                for &(i, j, m) in &op.entries {
                    let sm = s * m;
                    // V rho
                    for col in 0..n {
                        out[(i, col)] += sm * rho[(j, col)];
                    }
                    // - rho V
                    for row in 0..n {
                        out[(row, j)] -= sm * rho[(row, i)];
                    }
                }
            }
            if !g.jumps.is_empty() {
                for l in &g.jumps {
                    for &(i1, j1, m1) in &l.entries {
                        for &(i2, j2, m2) in &l.entries {
                            out[(i1, i2)] += m1 * rho[(j1, j2)] * m2.conj();
                        }
                    }
                }
                for i in 0..n {
                    for j in 0..n {
                        out[(i, j)] -= rho[(i, j)] * (0.5 * (g.decay[i] + g.decay[j]));
                    }
                }
            }
            Work::Density(out)
        }
    }
}

fn check_schedule(schedule: &PulseSchedule, layout: &ModeLayout) -> Result<()> {
    if layout.n_modes() != 3 {
        return Err(Error::InvalidDimension(format!("expected 3 modes, got {}", layout.n_modes())));
    }
    if schedule.n_samples() == 0 {
        return Err(Error::InvalidPulse("schedule has no samples".into()));
    }
    Ok(())
}

/// Evolve several initial states under one schedule, sharing the
/// propagators. Pure states stay pure unless `collapse` is given.
pub fn evolve_batch(
    schedule: &PulseSchedule,
    initial: &[SystemState],
    params: &DeviceParams,
    layout: &ModeLayout,
    collapse: Option<&CollapseSet>,
    record: &[Vec<usize>],
    config: &EvolveConfig,
) -> Result<Vec<TrajectoryRecord>> {
    check_schedule(schedule, layout)?;
    if config.substeps == 0 || config.record_stride == 0 {
        return Err(Error::Config("substeps and record_stride must be positive".into()));
    }
    let dim = layout.total_dim();
    let rec_idx: Vec<usize> = record.iter().map(|l| layout.index(l)).collect::<Result<_>>()?;
    let gen = Generator::new(params, schedule, layout, collapse, config.frame)?;
    let dissipative = !gen.jumps.is_empty();
    let mut work: Vec<Work> = Vec::with_capacity(initial.len());
    for s in initial {
        if s.dim() != dim {
            return Err(Error::Shape(format!("initial state dimension {} vs layout {dim}", s.dim())));
        }
        work.push(match s {
            SystemState::Pure(v) if !dissipative => Work::Pure(v.clone()),
            other => Work::Density(other.to_density()),
        });
    }
    let invariants: Vec<C64> = work.iter().map(Work::invariant).collect();

    let n = schedule.n_samples();
    let dt = schedule.dt;
    let h = dt / config.substeps as f64;
    let idle_shift: Vec<f64> = schedule.idle.omega.iter().map(|w| w - gen.reference).collect();

    let mut times = Vec::new();
    let mut pops: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); rec_idx.len()]; work.len()];
    let mut states: Vec<Vec<SystemState>> = vec![Vec::new(); work.len()];
    let mut snapshot = |k: usize, work: &[Work], times: &mut Vec<f64>| {
        let t = k as f64 * dt;
        times.push(t);
        let ph = if config.record_states { frame_phases(layout, &idle_shift, t) } else { Vec::new() };
        for (s, w) in work.iter().enumerate() {
            let p = w.populations();
            for (l, &i) in rec_idx.iter().enumerate() {
                pops[s][l].push(p[i]);
            }
            if config.record_states {
                states[s].push(apply_diag(&w.to_state(), &ph));
            }
        }
    };
    snapshot(0, &work, &mut times);

    let mut cached: Option<(Coefficients, BlockOp)> = None;
    for k in 0..n {
        let t0 = k as f64 * dt;
        let c0 = gen.static_coefficients(t0 + 0.5 * dt);
        let half = match &cached {
            Some((c, u)) if *c == c0 => u.clone(),
            _ => {
                let h0 = gen.terms.assemble(&c0);
                let u = block_eigh(&h0).expm_i(PI * h);
                cached = Some((c0, u.clone()));
                u
            }
        };
        for sub in 0..config.substeps {
            let t = t0 + sub as f64 * h;
            let v0 = gen.perturbation(t, &c0);
            let vm = gen.perturbation(t + 0.5 * h, &c0);
            let v1 = gen.perturbation(t + h, &c0);
            for x in work.iter_mut() {
                let xi = x.propagate(&half);
                let k1 = rhs(&gen, &v0, x).propagate(&half);
                let k2 = rhs(&gen, &vm, &xi.plus(0.5 * h, &k1));
                let k3 = rhs(&gen, &vm, &xi.plus(0.5 * h, &k2));
                let k4 = rhs(&gen, &v1, &xi.plus(h, &k3).propagate(&half));
                let mut acc = xi;
                acc.axpy(h / 6.0, &k1);
                acc.axpy(h / 3.0, &k2);
                acc.axpy(h / 3.0, &k3);
                let mut next = acc.propagate(&half);
                next.axpy(h / 6.0, &k4);
                *x = next;
            }
        }
        for x in &work {
            if !x.is_finite() {
                return Err(Error::Integrator { drift: f64::INFINITY });
            }
        }
        if (k + 1) % config.record_stride == 0 || k + 1 == n {
            snapshot(k + 1, &work, &mut times);
        }
    }

    let total = n as f64 * dt;
    let ph = frame_phases(layout, &idle_shift, total);
    let sh = schedule_hash(schedule);
    let phash = params_hash(params);
    let mut out = Vec::with_capacity(work.len());
    for (s, w) in work.into_iter().enumerate() {
        let drift = (w.invariant() - invariants[s]).norm();
        if drift > config.max_drift {
            return Err(Error::Integrator { drift });
        }
        out.push(TrajectoryRecord {
            times: times.clone(),
            labels: record.to_vec(),
            populations: core::mem::take(&mut pops[s]),
            states: core::mem::take(&mut states[s]),
            final_state: apply_diag(&w.to_state(), &ph),
            schedule_hash: sh,
            params_hash: phash,
        });
    }
    Ok(out)
}

/// Evolve one initial state (given in the idle frame at t = 0).
pub fn evolve(
    schedule: &PulseSchedule,
    initial: &SystemState,
    params: &DeviceParams,
    layout: &ModeLayout,
    collapse: Option<&CollapseSet>,
    record: &[Vec<usize>],
    config: &EvolveConfig,
) -> Result<TrajectoryRecord> {
    let mut v = evolve_batch(schedule, core::slice::from_ref(initial), params, layout, collapse, record, config)?;
    Ok(v.remove(0))
}

/// Two-qubit computational states |q1 q2> (index 2*q1 + q2) embedded in
/// the full space, each carrying a frame frequency n1*w1 + n2*w2.
#[derive(Clone, Debug)]
pub struct ComputationalBasis {
    pub vectors: [Vec<C64>; 4],
    /// Frame frequencies of the qubits, GHz.
    pub freqs: [f64; 2],
    /// Idle point the evolution frame refers to.
    pub idle: FrequencyConfig,
    pub layout: ModeLayout,
}

impl ComputationalBasis {
    /// Bare product states in the idle frame.
    pub fn bare(layout: &ModeLayout, idle: &FrequencyConfig) -> Result<Self> {
        let v = |a, b| layout.basis_vector(&[a, 0, b]);
        Ok(ComputationalBasis {
            vectors: [v(0, 0)?, v(0, 1)?, v(1, 0)?, v(1, 1)?],
            freqs: [idle.w1(), idle.w2()],
            idle: *idle,
            layout: layout.clone(),
        })
    }

    /// Eigenstates of the idle Hamiltonian, framed at the dressed
    /// single-qubit frequencies.
    pub fn dressed(params: &DeviceParams, layout: &ModeLayout, idle: &FrequencyConfig) -> Result<Self> {
        let h = build_hamiltonian(params, idle, layout)?;
        let db = DressedBasis::new(&h);
        let idx = |a, b| layout.index(&[a, 0, b]);
        let ids = [idx(0, 0)?, idx(0, 1)?, idx(1, 0)?, idx(1, 1)?];
        for &i in &ids {
            if db.overlaps[i] < 0.5 {
                return Err(Error::StateIdentification {
                    label: format!("{:?}", layout.labels(i)?),
                    overlap: db.overlaps[i],
                });
            }
        }
        let e = |i: usize| db.energies[i];
        Ok(ComputationalBasis {
            vectors: ids.map(|i| db.vector(i)),
            freqs: [e(ids[2]) - e(ids[0]), e(ids[1]) - e(ids[0])],
            idle: *idle,
            layout: layout.clone(),
        })
    }

    fn frame_energy(&self, s: usize) -> f64 {
        (s >> 1) as f64 * self.freqs[0] + (s & 1) as f64 * self.freqs[1]
    }

    /// Full-space state with the given computational amplitudes at t = 0.
    pub fn prepare(&self, amps: &[C64; 4]) -> Vec<C64> {
        let n = self.layout.total_dim();
        let mut out = vec![ZERO; n];
        for (a, v) in amps.iter().zip(&self.vectors) {
            for i in 0..n {
                out[i] += a * v[i];
            }
        }
        out
    }

    /// Overlaps <s| psi> at time t, for psi in the idle frame.
    pub fn amplitudes(&self, psi: &[C64], t: f64) -> [C64; 4] {
        let lab = self.idle_to_lab(psi, t);
        core::array::from_fn(|s| CMat::dot(&self.vectors[s], &lab) * cis(TWO_PI * self.frame_energy(s) * t))
    }

    /// 4x4 block of a state (idle frame) at time t.
    pub fn project(&self, state: &SystemState, t: f64) -> CMat {
        match state {
            SystemState::Pure(v) => {
                let a = self.amplitudes(v, t);
                CMat::outer(&a, &a)
            }
            SystemState::Density(r) => {
                let n = r.rows();
                let back: Vec<C64> = frame_phases(&self.layout, &self.idle.omega, t).iter().map(|z| z.conj()).collect();
                let lab = CMat::from_fn(n, n, |i, j| back[i] * r[(i, j)] * back[j].conj());
                let ph: Vec<C64> = (0..4).map(|s| cis(TWO_PI * self.frame_energy(s) * t)).collect();
                CMat::from_fn(4, 4, |a, b| {
                    let rv = lab.matvec(&self.vectors[b]);
                    CMat::dot(&self.vectors[a], &rv) * ph[a] * ph[b].conj()
                })
            }
        }
    }

    fn idle_to_lab(&self, psi: &[C64], t: f64) -> Vec<C64> {
        let ph = frame_phases(&self.layout, &self.idle.omega, t);
        psi.iter().zip(ph).map(|(a, p)| a * p.conj()).collect()
    }
}

/// Ideal rotation by pi/2 about cos(phi) x + sin(phi) y.
fn half_pi(phi: f64) -> CMat {
    let c = cr(core::f64::consts::FRAC_1_SQRT_2);
    let s = -IM * core::f64::consts::FRAC_1_SQRT_2;
    CMat::from_vec(2, 2, vec![c, s * cis(-phi), s * cis(phi), c])
}

fn on_qubit(u: &CMat, target: usize) -> CMat {
    if target == 0 {
        u.kron(&CMat::identity(2))
    } else {
        CMat::identity(2).kron(u)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RamseyFit {
    /// Phase acquired by the target's |1> relative to |0>, rad in (-pi, pi].
    pub phase: f64,
    pub contrast: f64,
}

/// Fit p(theta) = c0 + c1 cos(theta) + c2 sin(theta) by least squares.
pub fn fit_fringe(thetas: &[f64], p: &[f64]) -> Result<(f64, f64, f64)> {
    let a = CMat::from_fn(thetas.len(), 3, |i, j| match j {
        0 => cr(1.0),
        1 => cr(thetas[i].cos()),
        _ => cr(thetas[i].sin()),
    });
    let b = CMat::from_fn(p.len(), 1, |i, _| cr(p[i]));
    let x = crate::linalg::lstsq(&a, &b).ok_or_else(|| Error::Calibration("singular fringe fit".into()))?;
    Ok((x[(0, 0)].re, x[(1, 0)].re, x[(2, 0)].re))
}

pub fn wrap_phase(x: f64) -> f64 {
    let mut y = x % TWO_PI;
    if y <= -PI {
        y += TWO_PI;
    } else if y > PI {
        y -= TWO_PI;
    }
    y
}

/// Ramsey sequence on `target` (0 = Q1, 1 = Q2) with the other qubit in
/// `control` (0 or 1): ideal pi/2, the schedule, ideal pi/2 about an axis
/// at angle theta, excited-state population fitted over theta.
#[allow(clippy::too_many_arguments)]
pub fn ramsey_phase(
    schedule: &PulseSchedule,
    target: usize,
    control: usize,
    basis: &ComputationalBasis,
    params: &DeviceParams,
    collapse: Option<&CollapseSet>,
    config: &EvolveConfig,
) -> Result<RamseyFit> {
    if target > 1 || control > 1 {
        return Err(Error::Index("target and control must be 0 or 1".into()));
    }
    let s0 = if target == 0 { control } else { 2 * control };
    let s1 = s0 + if target == 0 { 2 } else { 1 };
    let mut amps = [ZERO; 4];
    // first pulse about x takes |0> to (|0> - i|1>)/sqrt2
    amps[s0] = cr(core::f64::consts::FRAC_1_SQRT_2);
    amps[s1] = -IM * core::f64::consts::FRAC_1_SQRT_2;
    let psi = basis.prepare(&amps);
    let rec = evolve(schedule, &SystemState::Pure(psi), params, &basis.layout, collapse, &[], config)?;
    let t = schedule.duration();
    let rho = basis.project(&rec.final_state, t);
    let n = 16;
    let thetas: Vec<f64> = (0..n).map(|k| TWO_PI * k as f64 / n as f64).collect();
    let excited: Vec<usize> = (0..4).filter(|s| if target == 0 { s >> 1 == 1 } else { s & 1 == 1 }).collect();
    let p: Vec<f64> = thetas
        .iter()
        .map(|&th| {
            let u = on_qubit(&half_pi(th), target);
            let r = u.matmul(&rho).matmul(&u.adjoint());
            excited.iter().map(|&s| r[(s, s)].re).sum()
        })
        .collect();
    let (_, c1, c2) = fit_fringe(&thetas, &p)?;
    let contrast = 2.0 * (c1 * c1 + c2 * c2).sqrt();
    if contrast < 0.1 {
        return Err(Error::LowContrast(contrast));
    }
    // the first pulse contributes -pi/2 to the fringe offset
    Ok(RamseyFit { phase: wrap_phase((-c1).atan2(c2) + 0.5 * PI), contrast })
}

/// Coupler-dressed qubit states for the labels (1,0,0) and (0,0,1): the
/// Loewdin-orthonormalized pair of single-excitation eigenvectors
/// closest to them.
pub fn dressed_qubit_pair(h: &CMat, layout: &ModeLayout) -> Result<[Vec<C64>; 2]> {
    let e = eigh(h);
    let ia = layout.index(&[1, 0, 0])?;
    let ib = layout.index(&[0, 0, 1])?;
    let mut order: Vec<usize> = (0..e.values.len()).collect();
    let w = |k: usize| e.vectors[(ia, k)].norm_sqr() + e.vectors[(ib, k)].norm_sqr();
    order.sort_by(|&x, &y| w(y).total_cmp(&w(x)));
    let ks = [order[0], order[1]];
    if w(ks[1]) < 0.5 {
        return Err(Error::StateIdentification { label: "qubit pair".into(), overlap: w(ks[1]) });
    }
    // B[k][a] = <v_k|a>; the closest orthonormal pair is V polar(B)
    let b = CMat::from_fn(2, 2, |k, a| e.vectors[([ia, ib][a], ks[k])].conj());
    let u = crate::linalg::polar_unitary(&b)
        .ok_or_else(|| Error::StateIdentification { label: "qubit pair".into(), overlap: 0.0 })?;
    let n = e.values.len();
    let mk = |a: usize| -> Vec<C64> {
        (0..n).map(|i| e.vectors[(i, ks[0])] * u[(0, a)] + e.vectors[(i, ks[1])] * u[(1, a)]).collect()
    };
    Ok([mk(0), mk(1)])
}

/// Chevron map: qubits resonant at `qubit_freq`, coupler held at each
/// frequency of `coupler_freqs`, starting from the dressed |001>. Row `i`
/// holds the bare |001> population at times `k * dt`, k = 0..=n_times-1.
pub fn swap_chevron(
    params: &DeviceParams,
    layout: &ModeLayout,
    qubit_freq: f64,
    coupler_freqs: &[f64],
    dt: f64,
    n_times: usize,
) -> Result<Vec<Vec<f64>>> {
    coupler_freqs.iter().map(|&wc| chevron_column(params, layout, qubit_freq, wc, dt, n_times)).collect()
}

pub fn chevron_column(
    params: &DeviceParams,
    layout: &ModeLayout,
    qubit_freq: f64,
    wc: f64,
    dt: f64,
    n_times: usize,
) -> Result<Vec<f64>> {
    if n_times < 2 {
        return Err(Error::IncompatibleGrid("need at least two time points".into()));
    }
    let point = FrequencyConfig::new(qubit_freq, wc, qubit_freq);
    let h = build_hamiltonian(params, &point, layout)?;
    let [_, d001] = dressed_qubit_pair(&h, layout)?;
    let sched = PulseSchedule::new(point, dt).with(rectangular(Channel::FreqC, wc, (n_times - 1) as f64 * dt, dt)?)?;
    let label = vec![0, 0, 1];
    let rec = evolve(
        &sched,
        &SystemState::Pure(d001),
        params,
        layout,
        None,
        core::slice::from_ref(&label),
        &EvolveConfig::default(),
    )?;
    Ok(rec.populations[0].clone())
}

/// Dominant oscillation of an evenly sampled series: (frequency, amplitude)
/// from the periodogram peak refined by golden-section search.
pub fn dominant_frequency(dt: f64, values: &[f64]) -> Result<(f64, f64)> {
    let n = values.len();
    if n < 4 {
        return Err(Error::IncompatibleGrid("need at least four samples".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let y: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let power = |f: f64| -> f64 {
        let mut s = ZERO;
        for (k, &v) in y.iter().enumerate() {
            s += cis(-TWO_PI * f * k as f64 * dt) * v;
        }
        s.norm_sqr()
    };
    let span = (n - 1) as f64 * dt;
    let f_max = 0.5 / dt;
    let df = 1.0 / (8.0 * span);
    let mut best = (0.0, -1.0);
    let mut f = 0.5 / span;
    while f <= f_max {
        let p = power(f);
        if p > best.1 {
            best = (f, p);
        }
        f += df;
    }
    let (mut a, mut b) = ((best.0 - df).max(0.0), best.0 + df);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let x1 = b - r * (b - a);
        let x2 = a + r * (b - a);
        if power(x1) > power(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let f = 0.5 * (a + b);
    let ts: Vec<f64> = (0..n).map(|k| TWO_PI * f * k as f64 * dt).collect();
    let (_, c1, c2) = fit_fringe(&ts, values)?;
    Ok((f, (c1 * c1 + c2 * c2).sqrt()))
}

/// Mode populations <n_k> of a state.
pub fn mode_occupations(state: &SystemState, layout: &ModeLayout) -> [f64; 3] {
    let p = state.populations();
    let mut out = [0.0; 3];
    for (i, &pi) in p.iter().enumerate() {
        let l = layout.labels(i).unwrap();
        for k in [Q1, COUPLER, Q2] {
            out[k] += l[k] as f64 * pi;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulse::{cosine_flat_top, drag, DragParams};

    fn setup() -> (DeviceParams, ModeLayout, FrequencyConfig) {
        let p = DeviceParams::paper_device();
        let l = ModeLayout::default();
        let idle = FrequencyConfig::new(4.961, 5.9, 4.926);
        (p, l, idle)
    }

    #[test]
    fn idle_schedule_keeps_dressed_state() {
        let (p, l, idle) = setup();
        let basis = ComputationalBasis::dressed(&p, &l, &idle).unwrap();
        let psi = basis.prepare(&[cr(0.5); 4]);
        let s = PulseSchedule::idle_for(idle, 50.0, 0.5);
        let rec = evolve(&s, &SystemState::Pure(psi), &p, &l, None, &[], &EvolveConfig::default()).unwrap();
        let a = basis.amplitudes(
            match &rec.final_state {
                SystemState::Pure(v) => v,
                _ => unreachable!(),
            },
            50.0,
        );
        // ZZ is the only relative phase left in the dressed frame
        let zz = crate::model::zz_exact(&p, &idle, &l).unwrap() * 1e-3;
        let want = cis(-TWO_PI * zz * 50.0);
        assert!((a[3] / a[0] - want).norm() < 1e-9);
        assert!((a[1] / a[0] - cr(1.0)).norm() < 1e-9);
    }

    #[test]
    fn relaxation_of_single_mode() {
        let (mut p, l, idle) = setup();
        p.coupling.g1c = 0.0;
        p.coupling.g2c = 0.0;
        p.coupling.g12 = 0.0;
        let c = CollapseSet::from_device(&p).unwrap().restrict(&[Q1]);
        let c =
            CollapseSet { channels: c.channels.into_iter().filter(|x| x.kind == CollapseKind::Relaxation).collect() };
        let s = PulseSchedule::idle_for(idle, 500.0, 5.0);
        let init = SystemState::Pure(l.basis_vector(&[1, 0, 0]).unwrap());
        let rec = evolve(&s, &init, &p, &l, Some(&c), &[vec![1, 0, 0]], &EvolveConfig::default()).unwrap();
        let last = *rec.populations[0].last().unwrap();
        let want = (-500.0 / 14000.0f64).exp();
        assert!((last - want).abs() < 1e-9);
    }

    #[test]
    fn rotating_and_lab_agree_for_pi_pulse() {
        let (mut p, l, _) = setup();
        p.coupling.g1c = 0.0;
        p.coupling.g2c = 0.0;
        p.coupling.g12 = 0.0;
        let idle = FrequencyConfig::new(4.961, 5.9, 4.926);
        let unit = drag(Channel::XyQ1, &DragParams::new(1.0, 5.0, 0.0), 0.05).unwrap();
        let area = unit.integral().re;
        let w = drag(Channel::XyQ1, &DragParams::new(0.5 / area, 5.0, 0.0), 0.05).unwrap();
        let s = PulseSchedule::new(idle, 0.05).with(w).unwrap();
        let init = SystemState::Pure(l.basis_vector(&[0, 0, 0]).unwrap());
        let rot = evolve(&s, &init, &p, &l, None, &[vec![1, 0, 0]], &EvolveConfig::default()).unwrap();
        let lab_cfg = EvolveConfig { frame: Frame::Lab, substeps: 10, ..Default::default() };
        let lab = evolve(&s, &init, &p, &l, None, &[vec![1, 0, 0]], &lab_cfg).unwrap();
        let pr = *rot.populations[0].last().unwrap();
        let pl = *lab.populations[0].last().unwrap();
        assert!(pr > 0.9);
        assert!((pr - pl).abs() < 1e-4, "{pr} {pl}");
    }

    #[test]
    fn ramsey_free_precession() {
        let (p, l, idle) = setup();
        let basis = ComputationalBasis::bare(&l, &idle).unwrap();
        let ident = PulseSchedule::idle_for(idle, 10.0, 0.5);
        let mut q = p;
        q.coupling.g1c = 0.0;
        q.coupling.g2c = 0.0;
        q.coupling.g12 = 0.0;
        let r = ramsey_phase(&ident, 1, 0, &basis, &q, None, &EvolveConfig::default()).unwrap();
        assert!(r.phase.abs() < 1e-9);
        let delta = 0.002;
        let s = PulseSchedule::new(idle, 0.5)
            .with(rectangular(Channel::FreqQ2, 4.926 - delta, 40.0, 0.5).unwrap())
            .unwrap();
        let r = ramsey_phase(&s, 1, 0, &basis, &q, None, &EvolveConfig::default()).unwrap();
        let want = wrap_phase(TWO_PI * delta * 40.0);
        assert!((r.phase - want).abs() < 1e-6, "{} vs {}", r.phase, want);
    }

    #[test]
    fn chevron_first_row_and_off_point() {
        let (p, l, _) = setup();
        let col = chevron_column(&p, &l, 4.926, 5.5, 1.0, 200).unwrap();
        assert!(col[0] > 0.95 && col[0] < 1.0);
        let (f, amp) = dominant_frequency(1.0, &col).unwrap();
        let g = crate::model::exact_swap_coupling(&p, &FrequencyConfig::new(4.926, 5.5, 4.926)).unwrap();
        assert!((f - 2.0 * g.abs() * 1e-3).abs() < 0.02 * f, "{f} vs {g}");
        assert!(amp > 0.4);
    }

    #[test]
    fn flat_top_convergence() {
        let (p, l, idle) = setup();
        let s = PulseSchedule::new(idle, 1.0)
            .with(cosine_flat_top(Channel::FreqQ2, 4.926, 4.755, 10.0, 5.0, 1.0).unwrap())
            .unwrap();
        let init = SystemState::Pure(l.basis_vector(&[1, 0, 1]).unwrap());
        let run = |sub| {
            let c = EvolveConfig { substeps: sub, ..Default::default() };
            match evolve(&s, &init, &p, &l, None, &[], &c).unwrap().final_state {
                SystemState::Pure(v) => v,
                _ => unreachable!(),
            }
        };
        let r = run(64);
        let err = |v: Vec<C64>| v.iter().zip(&r).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let ratio = err(run(4)) / err(run(8));
        assert!((ratio - 16.0).abs() < 3.0, "{ratio}");
    }
}
