//! Static device constants, the flux-to-frequency map and flux crosstalk.
//!
//! Units: frequencies in GHz, anharmonicities and couplings in MHz,
//! coherence times in microseconds.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qspace::{COUPLER, Q1, Q2};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeParams {
    /// GHz
    pub omega_max: f64,
    /// MHz, negative for a transmon
    pub eta: f64,
    /// microseconds
    pub t1: f64,
    /// microseconds
    pub t2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Couplings {
    /// MHz
    pub g1c: f64,
    /// MHz
    pub g2c: f64,
    /// MHz
    pub g12: f64,
    /// Scale g_ic by sqrt(omega_c / omega_c_max).
    #[serde(default)]
    pub scale_with_coupler: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutFidelity {
    pub fg: f64,
    pub fe: f64,
}

impl Default for ReadoutFidelity {
    fn default() -> Self {
        ReadoutFidelity { fg: 1.0, fe: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Readout {
    pub q1: ReadoutFidelity,
    pub q2: ReadoutFidelity,
}

/// Flux-line orthogonalization matrix. Rows and columns are in channel
/// order (Q1, Q2, C), which differs from the mode order used elsewhere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Crosstalk {
    pub inv: [[f64; 3]; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceParams {
    pub q1: ModeParams,
    pub coupler: ModeParams,
    pub q2: ModeParams,
    pub coupling: Couplings,
    pub crosstalk: Crosstalk,
    pub readout: Readout,
}

pub const PAPER_DEVICE: &str = "paper_device";

impl DeviceParams {
    /// The measured two-qubit device with a tunable coupler.
    pub fn paper_device() -> Self {
        DeviceParams {
            q1: ModeParams { omega_max: 4.961, eta: -206.0, t1: 14.0, t2: 8.4 },
            coupler: ModeParams { omega_max: 5.977, eta: -254.0, t1: 5.0, t2: 5.0 },
            q2: ModeParams { omega_max: 4.926, eta: -202.0, t1: 13.7, t2: 4.0 },
            coupling: Couplings { g1c: 76.9, g2c: 76.9, g12: 6.74, scale_with_coupler: false },
            crosstalk: Crosstalk {
                inv: [[0.9963, 0.0096, 0.0264], [-0.0798, 0.9997, 0.0094], [-0.0116, 0.0384, 0.9974]],
            },
            readout: Readout { q1: ReadoutFidelity::default(), q2: ReadoutFidelity::default() },
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            PAPER_DEVICE => Some(Self::paper_device()),
            _ => None,
        }
    }

    /// Mode parameters in layout order Q1, C, Q2.
    pub fn mode(&self, k: usize) -> &ModeParams {
        match k {
            Q1 => &self.q1,
            COUPLER => &self.coupler,
            Q2 => &self.q2,
            _ => panic!("mode index {k} out of range"),
        }
    }

    pub fn mode_mut(&mut self, k: usize) -> &mut ModeParams {
        match k {
            Q1 => &mut self.q1,
            COUPLER => &mut self.coupler,
            Q2 => &mut self.q2,
            _ => panic!("mode index {k} out of range"),
        }
    }

    pub fn omega_max(&self) -> [f64; 3] {
        [self.q1.omega_max, self.coupler.omega_max, self.q2.omega_max]
    }

    /// Anharmonicities in GHz, layout order.
    pub fn eta_ghz(&self) -> [f64; 3] {
        [self.q1.eta * 1e-3, self.coupler.eta * 1e-3, self.q2.eta * 1e-3]
    }

    /// Qubit-coupler couplings (MHz) at coupler frequency `wc`.
    pub fn g_ic(&self, wc: f64) -> (f64, f64) {
        let s = if self.coupling.scale_with_coupler { (wc.max(0.0) / self.coupler.omega_max).sqrt() } else { 1.0 };
        (self.coupling.g1c * s, self.coupling.g2c * s)
    }

    pub fn readout_fidelity(&self, qubit: usize) -> ReadoutFidelity {
        if qubit == 0 {
            self.readout.q1
        } else {
            self.readout.q2
        }
    }

    /// All invariant violations, empty when the parameters are usable.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, m) in [("q1", &self.q1), ("coupler", &self.coupler), ("q2", &self.q2)] {
            if !(m.omega_max > 0.0 && m.omega_max.is_finite()) {
                out.push(format!("{name}.omega_max must be positive, got {}", m.omega_max));
            }
            if !(m.eta < 0.0) {
                out.push(format!("{name}.eta must be negative, got {}", m.eta));
            }
            if !(m.t1 > 0.0) || !(m.t2 > 0.0) {
                out.push(format!("{name}: coherence times must be positive"));
            }
            if m.t2 > 2.0 * m.t1 {
                out.push(format!("{name}.t2 = {} exceeds 2*t1 = {}", m.t2, 2.0 * m.t1));
            }
        }
        for (name, g) in [("g1c", self.coupling.g1c), ("g2c", self.coupling.g2c), ("g12", self.coupling.g12)] {
            if !(g > 0.0 && g.is_finite()) {
                out.push(format!("coupling.{name} must be positive, got {g}"));
            }
        }
        if det3(&self.crosstalk.inv).abs() <= 1e-6 {
            out.push("crosstalk.inv is singular".into());
        }
        for (name, r) in [("q1", self.readout.q1), ("q2", self.readout.q2)] {
            for (f, v) in [("fg", r.fg), ("fe", r.fe)] {
                if !(v > 0.5 && v <= 1.0) {
                    out.push(format!("readout.{name}.{f} must lie in (0.5, 1], got {v}"));
                }
            }
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        match self.validate().into_iter().next() {
            None => Ok(()),
            Some(msg) => Err(Error::Config(msg)),
        }
    }
}

/// Symmetric transmon tuning curve, `eta` in MHz.
pub fn freq_from_flux(phi: f64, omega_max: f64, eta: f64) -> Result<f64> {
    if !phi.is_finite() || phi.abs() >= 0.5 {
        return Err(Error::OutOfBranch { phi });
    }
    let e = eta * 1e-3;
    Ok((omega_max - e) * (PI * phi).cos().abs().sqrt() + e)
}

/// Inverse of [`freq_from_flux`] on the branch phi in [0, 0.5).
pub fn flux_from_freq(target: f64, omega_max: f64, eta: f64) -> Result<f64> {
    let e = eta * 1e-3;
    if !(target > e && target <= omega_max) {
        return Err(Error::Unreachable { target, lo: e, hi: omega_max });
    }
    let r = (target - e) / (omega_max - e);
    Ok((r * r).min(1.0).acos() / PI)
}

pub fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn inv3(m: &[[f64; 3]; 3]) -> Result<[[f64; 3]; 3]> {
    let d = det3(m);
    if d.abs() <= 1e-6 {
        return Err(Error::Config(format!("crosstalk matrix singular (det = {d:e})")));
    }
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = ((j + 1) % 3, (j + 2) % 3);
            let (c, e) = ((i + 1) % 3, (i + 2) % 3);
            r[i][j] = (m[a][c] * m[b][e] - m[a][e] * m[b][c]) / d;
        }
    }
    Ok(r)
}

fn mul3(m: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Physical flux commands that realize `desired` (both in channel order).
pub fn apply_crosstalk_correction(desired: &[f64; 3], crosstalk_inv: &[[f64; 3]; 3]) -> Result<[f64; 3]> {
    if det3(crosstalk_inv).abs() <= 1e-6 {
        return Err(Error::Config("crosstalk matrix singular".into()));
    }
    Ok(mul3(crosstalk_inv, desired))
}

/// Flux each line actually sees when `physical` is applied (the measured
/// crosstalk matrix is the inverse of the orthogonalization matrix).
pub fn apply_crosstalk(physical: &[f64; 3], crosstalk_inv: &[[f64; 3]; 3]) -> Result<[f64; 3]> {
    Ok(mul3(&inv3(crosstalk_inv)?, physical))
}

/// Layout order (Q1, C, Q2) to channel order (Q1, Q2, C).
pub fn to_channel_order(v: [f64; 3]) -> [f64; 3] {
    [v[Q1], v[Q2], v[COUPLER]]
}

pub fn from_channel_order(v: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    out[Q1] = v[0];
    out[Q2] = v[1];
    out[COUPLER] = v[2];
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_is_valid() {
        assert!(DeviceParams::paper_device().validate().is_empty());
    }

    #[test]
    fn flux_map_examples() {
        assert!((freq_from_flux(0.0, 5.977, -254.0).unwrap() - 5.977).abs() < 1e-15);
        let w = freq_from_flux(0.25, 5.977, -254.0).unwrap();
        assert!((w - 4.985).abs() < 1e-3, "{w}");
        assert!(freq_from_flux(0.5, 5.977, -254.0).is_err());
        assert!(flux_from_freq(5.977, 5.977, -254.0).unwrap().abs() < 1e-12);
        assert!((flux_from_freq(w, 5.977, -254.0).unwrap() - 0.25).abs() < 1e-12);
        assert!(flux_from_freq(5.978, 5.977, -254.0).is_err());
    }

    #[test]
    fn crosstalk_first_column() {
        let p = DeviceParams::paper_device();
        let v = apply_crosstalk_correction(&[1.0, 0.0, 0.0], &p.crosstalk.inv).unwrap();
        assert_eq!(v, [0.9963, -0.0798, -0.0116]);
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(apply_crosstalk_correction(&[0.1, 0.2, 0.3], &id).unwrap(), [0.1, 0.2, 0.3]);
        assert!(apply_crosstalk_correction(&[1.0, 0.0, 0.0], &[[0.0; 3]; 3]).is_err());
    }

    #[test]
    fn t2_bound_flagged() {
        let mut p = DeviceParams::paper_device();
        p.q2.t2 = 30.0;
        assert!(p.validate().iter().any(|m| m.contains("q2.t2")));
    }
}
