//! Named experiments. Each writes its tables into an artifact directory and
//! returns a JSON summary for the manifest.

use std::fmt;

use ddrsim_core::device::DeviceParams;
use ddrsim_core::dynamics::{chevron_column, dominant_frequency, evolve, CollapseSet};
use ddrsim_core::gates::{
    calibrate_phases, cz_ddr, cz_rectangular, cz_target, geometric_fraction, iswap, iswap_target, leakage_scan,
    leakage_threshold, rect_start, CouplingSign, GateContext, GateResult, IswapKind,
};
use ddrsim_core::linalg::CMat;
use ddrsim_core::model::{
    dispersive_shift, dressed_frequencies, effective_coupling, exact_swap_coupling, find_coupler_off, zz_exact,
    zz_perturbative, FrequencyConfig, OffCriterion,
};
use ddrsim_core::opt::{optimize_cz_ddr, optimize_fast_adiabatic, FastAdiabaticScenario, NmResult};
use ddrsim_core::qspace::{ModeLayout, SystemState};
use ddrsim_core::tomo::{
    process_fidelity, process_tomography, rb_fits, sequence_seed, standard_inputs, ProcessMatrix, RbConfig, RbMode,
    RbSetup,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;
use crate::output::ArtifactDir;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    CouplingScan,
    ZzScan,
    Chevron,
    DispersiveSpectrum,
    LeakageScan,
    Iswap,
    CzRect,
    CzDdr,
    Qpt,
    Rb,
    OptimizeDdr,
    OptimizeFa,
}

impl Experiment {
    pub const ALL: [Experiment; 12] = [
        Experiment::CouplingScan,
        Experiment::ZzScan,
        Experiment::Chevron,
        Experiment::DispersiveSpectrum,
        Experiment::LeakageScan,
        Experiment::Iswap,
        Experiment::CzRect,
        Experiment::CzDdr,
        Experiment::Qpt,
        Experiment::Rb,
        Experiment::OptimizeDdr,
        Experiment::OptimizeFa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::CouplingScan => "coupling-scan",
            Experiment::ZzScan => "zz-scan",
            Experiment::Chevron => "chevron",
            Experiment::DispersiveSpectrum => "dispersive-spectrum",
            Experiment::LeakageScan => "leakage-scan",
            Experiment::Iswap => "iswap",
            Experiment::CzRect => "cz-rect",
            Experiment::CzDdr => "cz-ddr",
            Experiment::Qpt => "qpt",
            Experiment::Rb => "rb",
            Experiment::OptimizeDdr => "optimize-ddr",
            Experiment::OptimizeFa => "optimize-fa",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn layout(cfg: &RunConfig) -> Result<ModeLayout, CliError> {
    Ok(ModeLayout::uniform(cfg.sim.levels)?)
}

pub fn gate_context(cfg: &RunConfig) -> Result<GateContext, CliError> {
    let mut ctx = GateContext::new(&cfg.device, &layout(cfg)?, cfg.sim.dt)?;
    ctx.config.substeps = cfg.sim.substeps;
    Ok(ctx)
}

pub fn collapse(cfg: &RunConfig) -> Result<Option<CollapseSet>, CliError> {
    Ok(if cfg.sim.decoherence { Some(CollapseSet::from_device(&cfg.device)?) } else { None })
}

/// `n` evenly spaced points on [lo, hi].
pub fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

pub fn run(exp: Experiment, cfg: &RunConfig, out: &mut ArtifactDir) -> Result<serde_json::Value, CliError> {
    match exp {
        Experiment::CouplingScan => coupling_scan(cfg, out),
        Experiment::ZzScan => zz_scan(cfg, out),
        Experiment::Chevron => chevron(cfg, out),
        Experiment::DispersiveSpectrum => dispersive(cfg, out),
        Experiment::LeakageScan => leakage(cfg, out),
        Experiment::Iswap => iswap_gates(cfg, out),
        Experiment::CzRect => cz_rect(cfg, out),
        Experiment::CzDdr => cz_ddr_gate(cfg, out),
        Experiment::Qpt => qpt(cfg, out),
        Experiment::Rb => rb(cfg, out),
        Experiment::OptimizeDdr => optimize_ddr(cfg, out),
        Experiment::OptimizeFa => optimize_fa(cfg, out),
    }
}

fn nan_on_err(r: ddrsim_core::Result<f64>) -> f64 {
    r.unwrap_or(f64::NAN)
}

fn coupling_scan(cfg: &RunConfig, out: &mut ArtifactDir) -> Result<serde_json::Value, CliError> {
    let p = &cfg.device;
    let w = cfg.scan.qubit;
    let rows: Vec<[f64; 3]> = grid(cfg.scan.coupler_min, cfg.scan.coupler_max, cfg.scan.points)
        .par_iter()
        .map(|&wc| {
            let f = FrequencyConfig::new(w, wc, w);
            [wc, nan_on_err(effective_coupling(p, &f)), nan_on_err(exact_swap_coupling(p, &f))]
        })
        .collect();
    out.write_csv("coupling_scan.csv", &["coupler_ghz", "g_eff_mhz", "g_exact_mhz"], &rows)?;
    let l = layout(cfg)?;
    let sign_changes = rows.windows(2).filter(|r| r[0][1].signum() != r[1][1].signum()).count();
    Ok(json!({
        "off_point_formula_ghz": find_coupler_off(p, w, w, OffCriterion::SwapCoupling, None, &l)?,
        "off_point_exact_ghz": find_coupler_off(p, w, w, OffCriterion::SwapExact, None, &l)?,
        "sign_changes": sign_changes,
    }))
}

fn zz_scan(cfg: &RunConfig, out: &mut ArtifactDir) -> Result<serde_json::Value, CliError> {
    let p = &cfg.device;
    let l = layout(cfg)?;
    let (w1, w2) = (p.q1.omega_max, p.q2.omega_max);
    let rows: Vec<[f64; 6]> = grid(cfg.scan.coupler_min, cfg.scan.coupler_max, cfg.scan.points)
        .par_iter()
        .map(|&wc| {
            let f = FrequencyConfig::new(w1, wc, w2);
            let pert = zz_perturbative(p, &f).ok();
            let g = |x: fn(&ddrsim_core::model::ZzOrders) -> f64| pert.as_ref().map_or(f64::NAN, x);
            [wc, g(|z| z.xi2), g(|z| z.xi3), g(|z| z.xi4), g(|z| z.total), nan_on_err(zz_exact(p, &f, &l))]
        })
        .collect();
    out.write_csv("zz_scan.csv", &["coupler_ghz", "xi2_mhz", "xi3_mhz", "xi4_mhz", "total_mhz", "exact_mhz"], &rows)?;
    Ok(json!({ "zz_null_ghz": find_coupler_off(p, w1, w2, OffCriterion::ZzExact, None, &l)? }))
}

fn dispersive(cfg: &RunConfig, out: &mut ArtifactDir) -> Result<serde_json::Value, CliError> {
    let p = &cfg.device;
    let (w1, w2) = (p.q1.omega_max, p.q2.omega_max);
    let rows: Vec<[f64; 5]> = grid(cfg.scan.coupler_min, cfg.scan.coupler_max, cfg.scan.points)
        .par_iter()
        .map(|&wc| {
            let f = FrequencyConfig::new(w1, wc, w2);
            let (d1, d2) = dressed_frequencies(p, &f).unwrap_or((f64::NAN, f64::NAN));
            [wc, nan_on_err(dispersive_shift(p, &f, 0)), nan_on_err(dispersive_shift(p, &f, 1)), d1, d2]
        })
        .collect();
    out.write_csv(
        "dispersive_spectrum.csv",
        &["coupler_ghz", "chi1_mhz", "chi2_mhz", "q1_dressed_ghz", "q2_dressed_ghz"],
        &rows,
    )?;
    Ok(json!({ "points": rows.len() }))
}

/// Coupler grid, population columns and per-column fits
/// (coupler, freq MHz, amplitude, g exact, 2|g|).
pub type ChevronFits = (Vec<f64>, Vec<Vec<f64>>, Vec<[f64; 5]>);

/// Chevron map plus per-column oscillation fits against 2|g|.
pub fn chevron_fits(cfg: &RunConfig) -> Result<ChevronFits, CliError> {
    let c = &cfg.chevron;
    let p = &cfg.device;
    let l = layout(cfg)?;
    let couplers = grid(c.coupler_min, c.coupler_max, c.points);
    let cols: Vec<Vec<f64>> = couplers
        .par_iter()
        .map(|&wc| chevron_column(p, &l, c.qubit, wc, c.dt, c.times))
        .collect::<ddrsim_core::Result<_>>()?;
    let fits = couplers
        .iter()
        .zip(&cols)
        .map(|(&wc, col)| {
            let (f, a) = dominant_frequency(c.dt, col)?;
            let g = exact_swap_coupling(p, &FrequencyConfig::new(c.qubit, wc, c.qubit))?;
            Ok([wc, f * 1e3, a, g, 2.0 * g.abs()])
        })
        .collect::<ddrsim_core::Result<Vec<_>>>()?;
    Ok((couplers, cols, fits))
}

fn chevron(cfg: &RunConfig, out: &mut ArtifactDir) -> Result<serde_json::Value, CliError> {
    let (couplers, cols, fits) = chevron_fits(cfg)?;
    let mut rows = Vec::with_capacity(couplers.len() * cfg.chevron.times);
    for (wc, col) in couplers.iter().zip(&cols) {
        for (k, v) in col.iter().enumerate() {
            rows.push([*wc, k as f64 * cfg.chevron.dt, *v]);
        }
    }
    out.write_csv("chevron.csv", &["coupler_ghz", "time_ns", "p001"], &rows)?;
    out.write_csv("chevron_fit.csv", &["coupler_ghz", "freq_mhz", "amplitude", "g_exact_mhz", "two_g_mhz"], &fits)?;
    Ok(json!({ "columns": couplers.len(), "times": cfg.chevron.times }))
}

fn leakage(cfg: &RunConfig, out: &mut ArtifactDir) -> Result<serde_json::Value, CliError> {
    let ctx = gate_context(cfg)?;
    let cs = collapse(cfg)?;
    let w2 = ctx.idle.w2();
    let hi = if cfg.leakage.coupler_max > 0.0 {
        cfg.leakage.coupler_max
    } else {
        find_coupler_off(&ctx.params, w2, w2, OffCriterion::SwapExact, None, &ctx.layout)?
    };
    let g = grid(cfg.leakage.coupler_min, hi, cfg.leakage.points);
    let pts: Vec<_> = g
        .par_iter()
        .map(|&wc| leakage_scan(&ctx, &[wc], cfg.leakage.hold, cs.as_ref()).map(|mut v| v.remove(0)))
        .collect::<ddrsim_core::Result<_>>()?;
    let rows: Vec<[f64; 4]> = pts.iter().map(|q| [q.coupler, q.population, q.reference, q.deviation]).collect();
    out.write_csv("leakage_scan.csv", &["coupler_ghz", "population", "reference", "deviation"], &rows)?;
    Ok(json!({ "threshold_ghz": leakage_threshold(&pts, cfg.leakage.limit), "off_point_ghz": hi }))
}

#[derive(Clone, Debug, Serialize)]
pub struct GateReport {
    pub gate: GateResult,
    /// Process fidelity with decoherence when enabled, else the unitary one.
    pub fidelity: f64,
    pub decoherence: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibrated: Option<ddrsim_core::gates::Phases>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geometric: Option<ddrsim_core::gates::GeometricSplit>,
}

fn report(ctx: &GateContext, cfg: &RunConfig, gate: GateResult, target: &CMat) -> Result<GateReport, CliError> {
    let cs = collapse(cfg)?;
    let fidelity = match &cs {
        Some(c) => ctx.qpt_fidelity(&gate, target, Some(c))?,
        None => gate.unitary_fidelity.unwrap_or(f64::NAN),
    };
    Ok(GateReport { gate, fidelity, decoherence: cs.is_some(), calibrated: None, geometric: None })
}

fn schedule_rows(g: &GateResult) -> Vec<[f64; 4]> {
    let s = &g.schedule;
    (0..s.n_samples())
        .map(|k| {
            let t = k as f64 * s.dt;
            let w = s.frequencies_at(t);
            [t, w[0], w[1], w[2]]
        })
        .collect()
}

const SCHEDULE_HEADER: [&str; 4] = ["time_ns", "q1_ghz", "coupler_ghz", "q2_ghz"];

fn iswap_gates(cfg: &RunConfig, out: &mut ArtifactDir) -> Result<serde_json::Value, CliError> {
    let ctx = gate_context(cfg)?;
    let mut summary = serde_json::Map::new();
    for (kind, name) in [(IswapKind::Full, "iswap"), (IswapKind::Half, "sqrt_iswap")] {
        let g = iswap(&ctx, kind, &cfg.iswap)?;
        let transfer = g.unitary_matrix()[(1, 2)].norm_sqr();
        let r = report(&ctx, cfg, g, &iswap_target(kind))?;
        out.write_csv(&format!("{name}_schedule.csv"), &SCHEDULE_HEADER, &schedule_rows(&r.gate))?;
        summary.insert(
            name.into(),
            json!({ "fidelity": r.fidelity, "transfer": transfer, "duration_ns": r.gate.duration }),
        );
        out.write_json(&format!("{name}.json"), &r)?;
    }
    Ok(summary.into())
}

fn cz_rect(cfg: &RunConfig, out: &mut ArtifactDir) -> Result<serde_json::Value, CliError> {
    let ctx = gate_context(cfg)?;
    let mut summary = serde_json::Map::new();
    for (sign, hold, name) in [
        (CouplingSign::Positive, cfg.rect.positive_hold, "positive"),
        (CouplingSign::Negative, cfg.rect.negative_hold, "negative"),
    ] {
        let start = rect_start(&ctx, sign, hold)?;
        let (params, g) = cz_rectangular(&ctx, sign, &start, cfg.rect.budget)?;
        let cal = calibrate_phases(&ctx, &g.schedule)?;
        let labels = vec![vec![1, 0, 1], vec![2, 0, 0]];
        let rec = evolve(
            &g.schedule,
            &SystemState::Pure(ctx.basis.vectors[3].clone()),
            &ctx.params,
            &ctx.layout,
            None,
            &labels,
            &ctx.config,
        )?;
        let rows: Vec<[f64; 3]> =
            rec.times.iter().enumerate().map(|(k, &t)| [t, rec.populations[0][k], rec.populations[1][k]]).collect();
        out.write_csv(&format!("cz_rect_{name}_populations.csv"), &["time_ns", "p101", "p200"], &rows)?;
        let mut r = report(&ctx, cfg, g, &cz_target())?;
        r.calibrated = Some(cal);
        summary.insert(
            name.into(),
            json!({
                "coupler_ghz": params.coupler,
                "hold_ns": params.hold,
                "detune_ghz": params.detune,
                "unitary_fidelity": r.gate.unitary_fidelity,
                "fidelity": r.fidelity,
                "conditional_phase": cal.conditional,
            }),
        );
        out.write_json(&format!("cz_rect_{name}.json"), &r)?;
    }
    Ok(summary.into())
}

fn cz_ddr_gate(cfg: &RunConfig, out: &mut ArtifactDir) -> Result<serde_json::Value, CliError> {
    let ctx = gate_context(cfg)?;
    let g = cz_ddr(&ctx, &cfg.ddr)?;
    let cal = calibrate_phases(&ctx, &g.schedule)?;
    let geo = geometric_fraction(&ctx, &g.schedule)?;
    out.write_csv("cz_ddr_schedule.csv", &SCHEDULE_HEADER, &schedule_rows(&g))?;
    let mut r = report(&ctx, cfg, g, &cz_target())?;
    r.calibrated = Some(cal);
    r.geometric = Some(geo);
    out.write_json("cz_ddr.json", &r)?;
    Ok(json!({
        "fidelity": r.fidelity,
        "unitary_fidelity": r.gate.unitary_fidelity,
        "leakage": r.gate.leakage,
        "duration_ns": r.gate.duration,
        "conditional_phase": cal.conditional,
        "geometric_fraction": geo.fraction,
    }))
}

/// Process tomography of the DDR CZ from the 16 standard input states.
pub fn ddr_process(cfg: &RunConfig) -> Result<(ProcessMatrix, f64), CliError> {
    let ctx = gate_context(cfg)?;
    let g = cz_ddr(&ctx, &cfg.ddr)?;
    let cs = collapse(cfg)?;
    let ch = ctx.channel(&g.schedule, cs.as_ref())?;
    let post = ddrsim_core::gates::virtual_z(g.z_correction.0, g.z_correction.1);
    let inputs = standard_inputs();
    let outputs: Vec<CMat> = inputs.iter().map(|r| post.matmul(&ch.apply(r)).matmul(&post.adjoint())).collect();
    let chi = process_tomography(&inputs, &outputs)?;
    let f = process_fidelity(&chi, &ProcessMatrix::from_unitary(&cz_target())?)?;
    Ok((chi, f))
}

fn chi_rows(chi: &CMat) -> Vec<[f64; 4]> {
    let mut rows = Vec::with_capacity(256);
    for i in 0..16 {
        for j in 0..16 {
            let z = chi[(i, j)];
            rows.push([i as f64, j as f64, z.re, z.im]);
        }
    }
    rows
}

fn qpt(cfg: &RunConfig, out: &mut ArtifactDir) -> Result<serde_json::Value, CliError> {
    let (chi, f) = ddr_process(cfg)?;
    let ideal = ProcessMatrix::from_unitary(&cz_target())?;
    out.write_csv("chi.csv", &["row", "col", "re", "im"], &chi_rows(&chi.chi))?;
    out.write_csv("chi_ideal.csv", &["row", "col", "re", "im"], &chi_rows(&ideal.chi))?;
    Ok(json!({ "process_fidelity": f, "trace_residual": chi.trace_residual() }))
}

pub fn rb_config(cfg: &RunConfig, zz: f64) -> RbConfig {
    RbConfig {
        lengths: cfg.rb.lengths.clone(),
        sequences: cfg.rb.sequences,
        seed: cfg.seed,
        clifford_time: cfg.rb.clifford_time,
        zz,
        decoherence: cfg.sim.decoherence,
    }
}

/// Randomized benchmarking with sequences spread over the thread pool;
/// every sequence has its own seed so the result is independent of it.
pub fn rb_parallel(
    params: &DeviceParams,
    mode: RbMode,
    rc: &RbConfig,
) -> Result<[ddrsim_core::tomo::RbFit; 2], CliError> {
    let setup = RbSetup::new(params, mode, rc)?;
    let jobs: Vec<(usize, usize)> =
        (0..rc.lengths.len()).flat_map(|i| (0..rc.sequences).map(move |k| (i, k))).collect();
    let res: Vec<[f64; 2]> = jobs
        .par_iter()
        .map(|&(i, k)| setup.survival(rc.lengths[i], sequence_seed(rc.seed, i as u64, k as u64)))
        .collect();
    let mut surv = [vec![0.0; rc.lengths.len()], vec![0.0; rc.lengths.len()]];
    for (&(i, _), s) in jobs.iter().zip(&res) {
        surv[0][i] += s[0];
        surv[1][i] += s[1];
    }
    Ok(rb_fits(&rc.lengths, rc.sequences, surv)?)
}

fn rb(cfg: &RunConfig, out: &mut ArtifactDir) -> Result<serde_json::Value, CliError> {
    let rc = rb_config(cfg, cfg.rb.zz);
    let ind = rb_parallel(&cfg.device, RbMode::Individual, &rc)?;
    let sim = rb_parallel(&cfg.device, RbMode::Simultaneous, &rc)?;
    let rows: Vec<[f64; 5]> = rc
        .lengths
        .iter()
        .enumerate()
        .map(|(i, &m)| [m as f64, ind[0].survival[i], ind[1].survival[i], sim[0].survival[i], sim[1].survival[i]])
        .collect();
    out.write_csv(
        "rb.csv",
        &["length", "q1_individual", "q2_individual", "q1_simultaneous", "q2_simultaneous"],
        &rows,
    )?;
    let fits = json!({ "individual": ind, "simultaneous": sim, "zz_mhz": rc.zz });
    out.write_json("rb_fits.json", &fits)?;
    Ok(json!({
        "individual": [ind[0].fidelity, ind[1].fidelity],
        "simultaneous": [sim[0].fidelity, sim[1].fidelity],
    }))
}

fn trace_rows(r: &NmResult) -> Vec<Vec<f64>> {
    r.trace
        .iter()
        .map(|t| {
            let mut row = vec![t.iteration as f64, t.evaluations as f64, t.f];
            row.extend(&t.x);
            row
        })
        .collect()
}

fn write_trace(out: &mut ArtifactDir, name: &str, params: &[String], r: &NmResult) -> Result<(), CliError> {
    let mut header = vec!["iteration", "evaluations", "objective"];
    header.extend(params.iter().map(String::as_str));
    out.write_csv(name, &header, &trace_rows(r))
}

fn optimize_ddr(cfg: &RunConfig, out: &mut ArtifactDir) -> Result<serde_json::Value, CliError> {
    let ctx = gate_context(cfg)?;
    let r = optimize_cz_ddr(&ctx, &cfg.ddr, cfg.optimize.budget)?;
    let names = ddrsim_core::opt::ddr_spec(cfg.ddr.knots.len(), 1).names;
    write_trace(out, "optimize_ddr_trace.csv", &names, &r.search)?;
    out.write_json("optimize_ddr.json", &r)?;
    Ok(json!({
        "initial_objective": r.initial_objective,
        "objective": r.search.f,
        "unitary_fidelity": r.gate.unitary_fidelity,
        "leakage": r.gate.leakage,
        "converged": r.search.converged,
        "evaluations": r.search.evaluations,
    }))
}

fn optimize_fa(cfg: &RunConfig, out: &mut ArtifactDir) -> Result<serde_json::Value, CliError> {
    let fa = &cfg.fast_adiabatic;
    let sc = FastAdiabaticScenario { g_direct: fa.g_direct, duration: fa.duration };
    let r = optimize_fast_adiabatic(&cfg.device, &layout(cfg)?, &sc, fa.n_fourier, fa.budget, cfg.sim.dt)?;
    let names: Vec<String> = (1..=fa.n_fourier).map(|k| format!("c{k}")).collect();
    write_trace(out, "optimize_fa_trace.csv", &names, &r.search)?;
    out.write_json("optimize_fa.json", &r)?;
    Ok(json!({
        "fidelity": r.fidelity,
        "coefficients": r.coefficients,
        "converged": r.search.converged,
        "evaluations": r.search.evaluations,
    }))
}
