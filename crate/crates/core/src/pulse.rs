//! Sampled control waveforms.
//!
//! Sample `k` of a waveform sits at `t = k * dt`. Between samples the value
//! is interpolated linearly and after the last sample it is held, so a
//! waveform of `n` samples lasts `n * dt`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::device::DeviceParams;
use crate::error::{Error, Result};
use crate::linalg::{cis, cr, C64, ZERO};
use crate::model::{effective_coupling, FrequencyConfig};
use crate::qspace::{COUPLER, Q1, Q2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    FreqQ1,
    FreqC,
    FreqQ2,
    XyQ1,
    XyQ2,
}

impl Channel {
    pub const ALL: [Channel; 5] = [Channel::FreqQ1, Channel::FreqC, Channel::FreqQ2, Channel::XyQ1, Channel::XyQ2];

    /// Mode index in layout order.
    pub fn mode(self) -> usize {
        match self {
            Channel::FreqQ1 | Channel::XyQ1 => Q1,
            Channel::FreqC => COUPLER,
            Channel::FreqQ2 | Channel::XyQ2 => Q2,
        }
    }

    pub fn is_frequency(self) -> bool {
        matches!(self, Channel::FreqQ1 | Channel::FreqC | Channel::FreqQ2)
    }

    pub fn frequency(mode: usize) -> Channel {
        match mode {
            Q1 => Channel::FreqQ1,
            COUPLER => Channel::FreqC,
            _ => Channel::FreqQ2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::FreqQ1 => "freq_q1",
            Channel::FreqC => "freq_c",
            Channel::FreqQ2 => "freq_q2",
            Channel::XyQ1 => "xy_q1",
            Channel::XyQ2 => "xy_q2",
        }
    }
}

/// Frequency channels carry GHz; drive channels carry a complex envelope
/// whose real part rotates about x at that many GHz of Rabi frequency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Samples {
    Real(Vec<f64>),
    Complex(Vec<(f64, f64)>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelWaveform {
    pub channel: Channel,
    pub dt: f64,
    pub samples: Samples,
}

impl ChannelWaveform {
    pub fn real(channel: Channel, dt: f64, values: Vec<f64>) -> Result<Self> {
        check_grid(dt, values.len())?;
        Ok(ChannelWaveform { channel, dt, samples: Samples::Real(values) })
    }

    pub fn complex(channel: Channel, dt: f64, values: Vec<C64>) -> Result<Self> {
        check_grid(dt, values.len())?;
        Ok(ChannelWaveform { channel, dt, samples: Samples::Complex(values.iter().map(|z| (z.re, z.im)).collect()) })
    }

    pub fn len(&self) -> usize {
        match &self.samples {
            Samples::Real(v) => v.len(),
            Samples::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.dt
    }

    pub fn sample(&self, k: usize) -> C64 {
        match &self.samples {
            Samples::Real(v) => cr(v[k]),
            Samples::Complex(v) => C64::new(v[k].0, v[k].1),
        }
    }

    pub fn real_values(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.sample(k).re).collect()
    }

    pub fn values(&self) -> Vec<C64> {
        (0..self.len()).map(|k| self.sample(k)).collect()
    }

    /// Linear interpolation; held outside the sampled range.
    pub fn at(&self, t: f64) -> C64 {
        let n = self.len();
        if n == 0 {
            return ZERO;
        }
        let x = t / self.dt;
        if x <= 0.0 {
            return self.sample(0);
        }
        let k = x.floor() as usize;
        if k + 1 >= n {
            return self.sample(n - 1);
        }
        let f = x - k as f64;
        self.sample(k) * (1.0 - f) + self.sample(k + 1) * f
    }

    /// Sum of samples times dt.
    pub fn integral(&self) -> C64 {
        self.values().iter().fold(ZERO, |a, &b| a + b) * self.dt
    }
}

fn check_grid(dt: f64, n: usize) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidPulse(format!("sample period {dt} must be positive")));
    }
    if n == 0 {
        return Err(Error::InvalidPulse("waveform needs at least one sample".into()));
    }
    Ok(())
}

fn n_samples(duration: f64, dt: f64) -> usize {
    (duration / dt).round() as usize
}

/// Constant `level` for `duration`.
pub fn rectangular(channel: Channel, level: f64, duration: f64, dt: f64) -> Result<ChannelWaveform> {
    if !(duration > 0.0) || duration < dt * 0.5 {
        return Err(Error::InvalidPulse(format!("duration {duration} ns must be at least one sample")));
    }
    ChannelWaveform::real(channel, dt, vec![level; n_samples(duration, dt).max(1)])
}

/// Samples of `f` at `k * dt` for `t` up to `duration`, plus one sample
/// at or after the end holding `f(duration)`. Timings need not be
/// multiples of `dt`.
pub fn sampled(channel: Channel, duration: f64, dt: f64, f: impl Fn(f64) -> f64) -> Result<ChannelWaveform> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::InvalidPulse(format!("duration {duration} ns must be positive")));
    }
    let n = (duration / dt - 1e-9).ceil() as usize + 1;
    ChannelWaveform::real(channel, dt, (0..n).map(|k| f((k as f64 * dt).min(duration))).collect())
}

/// Number of samples `sampled` produces.
pub fn sampled_len(duration: f64, dt: f64) -> usize {
    (duration / dt - 1e-9).ceil() as usize + 1
}

/// (1 - cos(pi x)) / 2 on [0, 1].
pub fn cosine_step(x: f64) -> f64 {
    0.5 * (1.0 - (PI * x.clamp(0.0, 1.0)).cos())
}

/// Rise from `start` to `plateau` along a cosine, hold, and fall back.
/// The result has `2*n_r + n_h + 1` samples and ends exactly at `start`.
pub fn cosine_flat_top(
    channel: Channel,
    start: f64,
    plateau: f64,
    ramp: f64,
    hold: f64,
    dt: f64,
) -> Result<ChannelWaveform> {
    if !(ramp >= 2.0 * dt) {
        return Err(Error::TooFastRamp { ramp, dt });
    }
    if !(hold >= 0.0) {
        return Err(Error::InvalidPulse(format!("hold {hold} ns must be nonnegative")));
    }
    let nr = n_samples(ramp, dt);
    let nh = n_samples(hold, dt);
    let mut v = Vec::with_capacity(2 * nr + nh + 1);
    for k in 0..=nr {
        v.push(start + (plateau - start) * cosine_step(k as f64 / nr as f64));
    }
    v.extend(core::iter::repeat_n(plateau, nh));
    for j in 1..=nr {
        v.push(start + (plateau - start) * (1.0 - cosine_step(j as f64 / nr as f64)));
    }
    let last = v.len() - 1;
    v[last] = start;
    ChannelWaveform::real(channel, dt, v)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DragParams {
    /// Peak in-phase Rabi frequency, GHz.
    pub amplitude: f64,
    /// ns
    pub sigma: f64,
    /// ns; quadrature = beta * d(in-phase)/dt
    pub beta: f64,
    /// Sideband detuning from the carrier, MHz.
    pub detuning: f64,
    /// Rotation axis angle in the xy plane, rad.
    pub axis: f64,
    /// Total length in units of sigma.
    pub length_sigmas: f64,
}

impl DragParams {
    pub fn new(amplitude: f64, sigma: f64, beta: f64) -> Self {
        DragParams { amplitude, sigma, beta, detuning: 0.0, axis: 0.0, length_sigmas: 4.0 }
    }
}

/// Baseline-subtracted Gaussian with derivative quadrature.
pub fn drag(channel: Channel, p: &DragParams, dt: f64) -> Result<ChannelWaveform> {
    if channel.is_frequency() {
        return Err(Error::InvalidPulse("DRAG needs a drive channel".into()));
    }
    if !(p.sigma >= 2.0 * dt) {
        return Err(Error::InvalidPulse(format!("sigma {} ns shorter than two samples", p.sigma)));
    }
    let n = n_samples(p.length_sigmas * p.sigma, dt);
    let tc = 0.5 * n as f64 * dt;
    let g = |t: f64| (-(t - tc) * (t - tc) / (2.0 * p.sigma * p.sigma)).exp();
    let g0 = g(0.0);
    let norm = 1.0 / (1.0 - g0);
    let rot = cis(p.axis);
    let vals = (0..=n)
        .map(|k| {
            let t = k as f64 * dt;
            let i = p.amplitude * (g(t) - g0) * norm;
            let q = p.beta * p.amplitude * (-(t - tc) / (p.sigma * p.sigma)) * g(t) * norm;
            C64::new(i, q) * rot * cis(2.0 * PI * p.detuning * 1e-3 * t)
        })
        .collect();
    ChannelWaveform::complex(channel, dt, vals)
}

/// Coupler frequency (GHz) that nulls the closed-form exchange coupling
/// for qubits at `w1`, `w2`: the root above both qubits of
/// g12 x^2 - [g12 (w1 + w2) + G] x + g12 w1 w2 + G (w1 + w2) / 2 = 0.
pub fn ddr_root(params: &DeviceParams, w1: f64, w2: f64) -> Option<f64> {
    let g12 = params.coupling.g12 * 1e-3;
    let mut gg = params.coupling.g1c * params.coupling.g2c * 1e-6;
    let solve = |gg: f64| -> Option<f64> {
        let a = g12;
        let b = -(g12 * (w1 + w2) + gg);
        let c = g12 * w1 * w2 + 0.5 * gg * (w1 + w2);
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 || a == 0.0 {
            return None;
        }
        let x = (-b + disc.sqrt()) / (2.0 * a);
        (x > w1.max(w2)).then_some(x)
    };
    let mut x = solve(gg)?;
    if params.coupling.scale_with_coupler {
        // fixed point on the frequency-dependent coupling
        for _ in 0..50 {
            let (g1, g2) = params.g_ic(x);
            gg = g1 * g2 * 1e-6;
            let nx = solve(gg)?;
            if (nx - x).abs() < 1e-13 {
                x = nx;
                break;
            }
            x = nx;
        }
    }
    Some(x)
}

/// DDR coupler trajectory for a fixed `omega1` and sampled `omega2`.
pub fn ddr_coupler_track(omega1: f64, omega2: &[f64], params: &DeviceParams, dt: f64) -> Result<ChannelWaveform> {
    let mut out = Vec::with_capacity(omega2.len());
    for (k, &w2) in omega2.iter().enumerate() {
        let x = ddr_root(params, omega1, w2).ok_or(Error::DdrInfeasible { sample: k })?;
        out.push(x);
    }
    ChannelWaveform::real(Channel::FreqC, dt, out)
}

/// |effective_coupling| in kHz along a track, for diagnostics.
pub fn track_residual_khz(omega1: f64, omega2: &[f64], track: &[f64], params: &DeviceParams) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (&w2, &wc) in omega2.iter().zip(track) {
        let g = effective_coupling(params, &FrequencyConfig::new(omega1, wc, w2))?;
        worst = worst.max(g.abs() * 1e3);
    }
    Ok(worst)
}

/// Endpoints of a fast-adiabatic trajectory across the |11>-|20> crossing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastAdiabaticEndpoints {
    /// Idle frequency of the tuned qubit, GHz.
    pub idle: f64,
    /// Frequency of the tuned qubit at the crossing, GHz.
    pub crossing: f64,
    /// |11>-|20> coupling, MHz.
    pub coupling: f64,
}

impl FastAdiabaticEndpoints {
    /// Control angle at the idle point, in (0, pi).
    pub fn theta_start(&self) -> f64 {
        (2.0 * self.coupling * 1e-3).atan2(self.idle - self.crossing)
    }

    pub fn frequency(&self, theta: f64) -> f64 {
        self.crossing + 2.0 * self.coupling * 1e-3 * theta.cos() / theta.sin()
    }
}

/// Control angle theta(t) = theta_start + sum_k c_k (1 - cos(2 pi k t / T)).
pub fn fast_adiabatic_theta(coeffs: &[f64], duration: f64, ends: &FastAdiabaticEndpoints, t: f64) -> f64 {
    let ts = ends.theta_start();
    ts + coeffs
        .iter()
        .enumerate()
        .map(|(k, &c)| c * (1.0 - (2.0 * PI * (k + 1) as f64 * t / duration).cos()))
        .sum::<f64>()
}

/// Frequency trajectory of the tuned qubit for a fast-adiabatic pulse.
pub fn fast_adiabatic(
    channel: Channel,
    coeffs: &[f64],
    duration: f64,
    ends: &FastAdiabaticEndpoints,
    dt: f64,
) -> Result<ChannelWaveform> {
    if coeffs.is_empty() {
        return Err(Error::InvalidTrajectory("need at least one Fourier coefficient".into()));
    }
    if !(duration > 0.0) {
        return Err(Error::InvalidPulse(format!("duration {duration} ns must be positive")));
    }
    let n = n_samples(duration, dt);
    let mut v = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = k as f64 * dt;
        let th = fast_adiabatic_theta(coeffs, duration, ends, t);
        if !(th > 0.0 && th < PI) {
            return Err(Error::InvalidTrajectory(format!("theta = {th} leaves (0, pi) at t = {t} ns")));
        }
        v.push(ends.frequency(th));
    }
    v[0] = ends.idle;
    v[n] = ends.idle;
    ChannelWaveform::real(channel, dt, v)
}

/// Waveforms for several channels on one time grid. Channels without a
/// waveform sit at their idle value (frequency) or zero (drive).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub dt: f64,
    pub idle: FrequencyConfig,
    /// Drive carrier per qubit (GHz); defaults to the idle frequency.
    pub carriers: [f64; 2],
    n: usize,
    waveforms: Vec<ChannelWaveform>,
}

impl PulseSchedule {
    pub fn new(idle: FrequencyConfig, dt: f64) -> Self {
        PulseSchedule { dt, idle, carriers: [idle.w1(), idle.w2()], n: 0, waveforms: Vec::new() }
    }

    /// Idle everywhere for `duration`.
    pub fn idle_for(idle: FrequencyConfig, duration: f64, dt: f64) -> Self {
        let mut s = Self::new(idle, dt);
        s.n = n_samples(duration, dt);
        s
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn duration(&self) -> f64 {
        self.n as f64 * self.dt
    }

    pub fn waveforms(&self) -> &[ChannelWaveform] {
        &self.waveforms
    }

    pub fn waveform(&self, ch: Channel) -> Option<&ChannelWaveform> {
        self.waveforms.iter().find(|w| w.channel == ch)
    }

    pub fn idle_value(&self, ch: Channel) -> f64 {
        if ch.is_frequency() {
            self.idle.omega[ch.mode()]
        } else {
            0.0
        }
    }

    /// Add or replace one channel. The first waveform fixes the length;
    /// later ones must match it.
    pub fn with(mut self, w: ChannelWaveform) -> Result<Self> {
        if (w.dt - self.dt).abs() > 1e-12 * self.dt {
            return Err(Error::IncompatibleGrid(format!("dt {} vs schedule dt {}", w.dt, self.dt)));
        }
        if self.waveforms.is_empty() && (self.n == 0 || self.n == w.len()) {
            self.n = w.len();
        } else if w.len() != self.n {
            return Err(Error::IncompatibleGrid(format!(
                "{} has {} samples, schedule has {}",
                w.channel.name(),
                w.len(),
                self.n
            )));
        }
        self.waveforms.retain(|x| x.channel != w.channel);
        self.waveforms.push(w);
        self.waveforms.sort_by_key(|x| x.channel);
        Ok(self)
    }

    /// Samples of one channel, idle-padded when absent.
    pub fn channel_samples(&self, ch: Channel) -> Vec<C64> {
        match self.waveform(ch) {
            Some(w) => w.values(),
            None => vec![cr(self.idle_value(ch)); self.n],
        }
    }

    pub fn padded(&self, ch: Channel) -> ChannelWaveform {
        ChannelWaveform {
            channel: ch,
            dt: self.dt,
            samples: match self.waveform(ch) {
                Some(w) => w.samples.clone(),
                None => {
                    if ch.is_frequency() {
                        Samples::Real(vec![self.idle_value(ch); self.n])
                    } else {
                        Samples::Complex(vec![(0.0, 0.0); self.n])
                    }
                }
            },
        }
    }

    /// Mode frequencies at time t.
    pub fn frequencies_at(&self, t: f64) -> [f64; 3] {
        let mut w = self.idle.omega;
        for wf in &self.waveforms {
            if wf.channel.is_frequency() {
                w[wf.channel.mode()] = wf.at(t).re;
            }
        }
        w
    }

    /// Complex drive envelopes (Q1, Q2) at time t.
    pub fn drives_at(&self, t: f64) -> [C64; 2] {
        let mut d = [ZERO; 2];
        for wf in &self.waveforms {
            match wf.channel {
                Channel::XyQ1 => d[0] = wf.at(t),
                Channel::XyQ2 => d[1] = wf.at(t),
                _ => {}
            }
        }
        d
    }

    pub fn has_drive(&self) -> bool {
        self.waveforms.iter().any(|w| !w.channel.is_frequency())
    }

    /// Channel-wise concatenation, idle-padding whichever side lacks a channel.
    pub fn concat(&self, other: &PulseSchedule) -> Result<PulseSchedule> {
        if (self.dt - other.dt).abs() > 1e-12 * self.dt {
            return Err(Error::IncompatibleGrid(format!("dt {} vs {}", self.dt, other.dt)));
        }
        let mut out = PulseSchedule::new(self.idle, self.dt);
        out.carriers = self.carriers;
        out.n = self.n + other.n;
        let mut chans: Vec<Channel> = self.waveforms.iter().chain(other.waveforms.iter()).map(|w| w.channel).collect();
        chans.sort();
        chans.dedup();
        for ch in chans {
            let a = self.padded(ch);
            let b = other.padded(ch);
            let samples = match (a.samples, b.samples) {
                (Samples::Real(mut x), Samples::Real(y)) => {
                    x.extend(y);
                    Samples::Real(x)
                }
                (x, y) => {
                    let to_c = |s: Samples| -> Vec<(f64, f64)> {
                        match s {
                            Samples::Real(v) => v.into_iter().map(|r| (r, 0.0)).collect(),
                            Samples::Complex(v) => v,
                        }
                    };
                    let mut x = to_c(x);
                    x.extend(to_c(y));
                    Samples::Complex(x)
                }
            };
            out.waveforms.push(ChannelWaveform { channel: ch, dt: self.dt, samples });
        }
        Ok(out)
    }

    pub fn concat_all(parts: &[PulseSchedule]) -> Result<PulseSchedule> {
        let mut it = parts.iter();
        let first = it.next().ok_or_else(|| Error::InvalidPulse("nothing to concatenate".into()))?;
        let mut acc = first.clone();
        for p in it {
            acc = acc.concat(p)?;
        }
        Ok(acc)
    }

    /// Every frequency sample finite, positive and below the mode maximum.
    pub fn validate(&self, params: &DeviceParams) -> Result<()> {
        let wmax = params.omega_max();
        for w in &self.waveforms {
            if w.channel.is_frequency() {
                let m = w.channel.mode();
                for (k, v) in w.real_values().into_iter().enumerate() {
                    if !(v > 0.0 && v <= wmax[m] + 1e-9) {
                        return Err(Error::InvalidPulse(format!(
                            "{} sample {k} = {v} GHz outside (0, {}]",
                            w.channel.name(),
                            wmax[m]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Time reversal of every channel (used for mirrored segments).
    pub fn reversed(&self) -> PulseSchedule {
        let mut out = self.clone();
        for w in out.waveforms.iter_mut() {
            match &mut w.samples {
                Samples::Real(v) => v.reverse(),
                Samples::Complex(v) => v.reverse(),
            }
        }
        out
    }
}
