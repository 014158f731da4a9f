//! Derivative-free optimization.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::device::DeviceParams;
use crate::error::{Error, Result};
use crate::gates::{cz_target, ddr_schedule, fidelity_free_z, DdrParams, GateContext, GateResult};
use crate::model::FrequencyConfig;
use crate::pulse::{fast_adiabatic, Channel, FastAdiabaticEndpoints};
use crate::qspace::ModeLayout;

/// Search box, budget and stopping tolerances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Initial simplex edge per coordinate.
    pub step: Vec<f64>,
    /// Maximum number of objective evaluations.
    pub budget: usize,
    /// Stop when every vertex is within `xtol` of the best one ...
    pub xtol: f64,
    /// ... and their values within `ftol`.
    pub ftol: f64,
}

impl ObjectiveSpec {
    pub fn new(names: &[&str], lower: Vec<f64>, upper: Vec<f64>, step: Vec<f64>, budget: usize) -> Self {
        ObjectiveSpec {
            names: names.iter().map(|s| String::from(*s)).collect(),
            lower,
            upper,
            step,
            budget,
            xtol: 1e-8,
            ftol: 1e-12,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 || self.upper.len() != n || self.step.len() != n || (!self.names.is_empty() && self.names.len() != n)
        {
            return Err(Error::Config("objective spec vectors disagree in length".into()));
        }
        for i in 0..n {
            if !(self.lower[i].is_finite() && self.upper[i].is_finite() && self.lower[i] <= self.upper[i]) {
                return Err(Error::Config(format!("bad bounds for parameter {i}")));
            }
        }
        if self.budget < n + 1 {
            return Err(Error::Config(format!("budget {} below dimension + 1", self.budget)));
        }
        Ok(())
    }

    pub fn project(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub evaluations: usize,
    pub x: Vec<f64>,
    /// Best value so far.
    pub f: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

const ALPHA: f64 = 1.0;
const GAMMA: f64 = 2.0;
const RHO: f64 = 0.5;
const SIGMA: f64 = 0.5;

/// Nelder-Mead with reflection 1, expansion 2, contraction 0.5 and shrink
/// 0.5. Trial points are projected onto the bounds; non-finite values
/// count as +inf. Running out of budget returns the best point with
/// `converged = false`.
pub fn nelder_mead(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], spec: &ObjectiveSpec) -> Result<NmResult> {
    spec.validate()?;
    let n = spec.dim();
    if x0.len() != n {
        return Err(Error::Config(format!("start point has {} coordinates, expected {n}", x0.len())));
    }
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut start = x0.to_vec();
    spec.project(&mut start);
    let f0 = eval(&start, &mut evals);
    if !f0.is_finite() {
        return Err(Error::Config("objective not finite at the start point".into()));
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.clone(), f0)];
    for i in 0..n {
        let mut x = start.clone();
        x[i] += spec.step[i];
        spec.project(&mut x);
        if x[i] == start[i] {
            x[i] -= spec.step[i];
            spec.project(&mut x);
        }
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    let mut trace = Vec::new();
    let mut iteration = 0;
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        trace.push(TraceEntry { iteration, evaluations: evals, x: simplex[0].0.clone(), f: simplex[0].1 });
        let best = &simplex[0];
        let xspread = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&best.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let fspread = simplex[1..].iter().map(|(_, v)| (v - best.1).abs()).fold(0.0, f64::max);
        if xspread <= spec.xtol && fspread <= spec.ftol {
            converged = true;
            break;
        }
        if evals + 2 > spec.budget {
            break;
        }
        iteration += 1;
        let mut c = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (ci, xi) in c.iter_mut().zip(x) {
                *ci += xi / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let along = |t: f64, from: &[f64]| -> Vec<f64> {
            let mut x: Vec<f64> = c.iter().zip(from).map(|(ci, fi)| ci + t * (fi - ci)).collect();
            spec.project(&mut x);
            x
        };
        let xr = along(-ALPHA, &worst.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(-GAMMA, &worst.0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let x = along(-RHO, &worst.0);
            let v = eval(&x, &mut evals);
            (x, v)
        } else {
            let x = along(RHO, &worst.0);
            let v = eval(&x, &mut evals);
            (x, v)
        };
        if fc < fr.min(worst.1) {
            simplex[n] = (xc, fc);
            continue;
        }
        let x1 = simplex[0].0.clone();
        for (x, v) in simplex.iter_mut().skip(1) {
            for (xi, bi) in x.iter_mut().zip(&x1) {
                *xi = bi + SIGMA * (*xi - bi);
            }
            spec.project(x);
            *v = eval(x, &mut evals);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(NmResult { x: simplex[0].0.clone(), f: simplex[0].1, evaluations: evals, converged, trace })
}

/// Weight of leakage in the gate objectives.
pub const LEAKAGE_WEIGHT: f64 = 10.0;

fn cz_objective(ctx: &GateContext, schedule: Result<crate::pulse::PulseSchedule>) -> f64 {
    match schedule.and_then(|s| ctx.unitary(&s)) {
        Ok(u) => 1.0 - fidelity_free_z(&u.u, &cz_target()).0 + LEAKAGE_WEIGHT * u.leakage,
        Err(_) => f64::INFINITY,
    }
}

/// 1 - F + 10 leakage of the DDR CZ built from `p`, +inf if infeasible.
pub fn ddr_objective(ctx: &GateContext, p: &DdrParams) -> f64 {
    cz_objective(ctx, ddr_schedule(ctx, p))
}

fn ddr_pack(p: &DdrParams) -> Vec<f64> {
    let mut x = vec![p.dip, p.hold, p.ramp, p.edge, p.detune];
    x.extend_from_slice(&p.knots);
    x
}

fn ddr_unpack(x: &[f64]) -> DdrParams {
    DdrParams { dip: x[0], hold: x[1], ramp: x[2], edge: x[3], detune: x[4], knots: x[5..].to_vec() }
}

/// Search box for the DDR parameters with `knots` correction knots.
pub fn ddr_spec(knots: usize, budget: usize) -> ObjectiveSpec {
    let mut names = vec!["dip", "hold", "ramp", "edge", "detune"];
    let knot_names = ["k1", "k2", "k3", "k4", "k5", "k6", "k7", "k8"];
    names.extend(knot_names.iter().take(knots));
    let mut lower = vec![4.9, 0.0, 4.0, 0.0, -0.03];
    let mut upper = vec![5.8, 100.0, 60.0, 60.0, 0.03];
    let mut step = vec![0.01, 2.0, 2.0, 2.0, 0.002];
    lower.extend(core::iter::repeat_n(-0.05, knots));
    upper.extend(core::iter::repeat_n(0.05, knots));
    step.extend(core::iter::repeat_n(0.005, knots));
    ObjectiveSpec::new(&names, lower, upper, step, budget)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdrOptimization {
    pub params: DdrParams,
    pub gate: GateResult,
    pub initial_objective: f64,
    pub search: NmResult,
}

/// Nelder-Mead over dip level, hold, ramp and edge times, operating-point
/// detuning and the track correction knots.
pub fn optimize_cz_ddr(ctx: &GateContext, start: &DdrParams, budget: usize) -> Result<DdrOptimization> {
    if start.knots.len() > 8 {
        return Err(Error::Config("at most 8 correction knots".into()));
    }
    let initial_objective = ddr_objective(ctx, start);
    if !initial_objective.is_finite() {
        ddr_schedule(ctx, start)?;
    }
    let spec = ddr_spec(start.knots.len(), budget);
    let search = nelder_mead(|x| ddr_objective(ctx, &ddr_unpack(x)), &ddr_pack(start), &spec)?;
    let params = ddr_unpack(&search.x);
    let gate = ctx.analyze("cz_ddr", ddr_schedule(ctx, &params)?, &cz_target())?;
    Ok(DdrOptimization { params, gate, initial_objective, search })
}

/// Comparison device without a coupler: the qubits share a fixed direct
/// coupling and Q2 is swept through the |11>-|20> crossing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastAdiabaticScenario {
    /// Direct coupling, MHz.
    pub g_direct: f64,
    /// ns
    pub duration: f64,
}

impl Default for FastAdiabaticScenario {
    fn default() -> Self {
        // one resonant |11>-|20> cycle per 120 ns
        FastAdiabaticScenario { g_direct: 1e3 / (2.0 * core::f64::consts::SQRT_2 * 120.0), duration: 120.0 }
    }
}

impl FastAdiabaticScenario {
    pub fn device(&self, base: &DeviceParams) -> DeviceParams {
        let mut p = *base;
        p.coupling.g1c = 0.0;
        p.coupling.g2c = 0.0;
        p.coupling.g12 = self.g_direct;
        p
    }

    /// Gate context at the sweet spots; the detached coupler sits at its maximum.
    pub fn context(&self, base: &DeviceParams, layout: &ModeLayout, dt: f64) -> Result<GateContext> {
        let p = self.device(base);
        let idle = FrequencyConfig::sweet_spots(&p);
        GateContext::with_idle(&p, layout, idle, dt)
    }

    pub fn endpoints(&self, ctx: &GateContext) -> FastAdiabaticEndpoints {
        FastAdiabaticEndpoints {
            idle: ctx.idle.w2(),
            crossing: ctx.idle.w1() + ctx.params.eta_ghz()[0],
            coupling: core::f64::consts::SQRT_2 * self.g_direct,
        }
    }

    pub fn schedule(&self, ctx: &GateContext, coeffs: &[f64]) -> Result<crate::pulse::PulseSchedule> {
        let w = fast_adiabatic(Channel::FreqQ2, coeffs, self.duration, &self.endpoints(ctx), ctx.dt)?;
        ctx.schedule().with(w)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastAdiabaticResult {
    pub coefficients: Vec<f64>,
    pub fidelity: f64,
    pub gate: GateResult,
    pub search: NmResult,
}

/// Optimize the first `n_fourier` control-angle coefficients of the
/// comparison scenario. Starts from the single-harmonic pulse that reaches
/// the crossing at mid-gate.
pub fn optimize_fast_adiabatic(
    base: &DeviceParams,
    layout: &ModeLayout,
    scenario: &FastAdiabaticScenario,
    n_fourier: usize,
    budget: usize,
    dt: f64,
) -> Result<FastAdiabaticResult> {
    if n_fourier == 0 {
        return Err(Error::Config("n_fourier must be at least 1".into()));
    }
    let ctx = scenario.context(base, layout, dt)?;
    let ts = scenario.endpoints(&ctx).theta_start();
    let mut x0 = vec![0.0; n_fourier];
    x0[0] = 0.5 * (core::f64::consts::FRAC_PI_2 - ts);
    let reach = core::f64::consts::PI - ts;
    let spec = ObjectiveSpec::new(&[], vec![-reach; n_fourier], vec![reach; n_fourier], vec![0.1; n_fourier], budget);
    let search = nelder_mead(|c| cz_objective(&ctx, scenario.schedule(&ctx, c)), &x0, &spec)?;
    let gate = ctx.analyze("cz_fast_adiabatic", scenario.schedule(&ctx, &search.x)?, &cz_target())?;
    let fidelity = gate.unitary_fidelity.unwrap_or(0.0);
    Ok(FastAdiabaticResult { coefficients: search.x.clone(), fidelity, gate, search })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola() {
        let spec = ObjectiveSpec::new(&["x"], vec![-10.0], vec![10.0], vec![0.5], 200);
        let r = nelder_mead(|x| (x[0] - 1.0).powi(2), &[4.0], &spec).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-6);
        assert!(r.converged);
    }

    #[test]
    fn rosenbrock() {
        let spec = ObjectiveSpec::new(&["x", "y"], vec![-5.0; 2], vec![5.0; 2], vec![0.1; 2], 500);
        let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let r = nelder_mead(f, &[-1.2, 1.0], &spec).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?} {}", r.x, r.evaluations);
        assert!(r.evaluations <= 500);
        assert!(r.trace.windows(2).all(|w| w[1].f <= w[0].f));
    }

    #[test]
    fn respects_bounds() {
        let spec = ObjectiveSpec::new(&["x"], vec![2.0], vec![3.0], vec![0.5], 100);
        let r = nelder_mead(|x| x[0] * x[0], &[2.5], &spec).unwrap();
        assert_eq!(r.x[0], 2.0);
    }
}
