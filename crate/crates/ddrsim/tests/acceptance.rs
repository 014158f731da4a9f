//! Acceptance checks, one PASS/FAIL line per criterion. Failing criteria
//! are reported, not asserted; the process exits 0 unless a check could
//! not be evaluated at all.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use ddrsim::config::RunConfig;
use ddrsim::experiments::{chevron_fits, collapse, layout, rb_config, rb_parallel};
use ddrsim_core::device::DeviceParams;
use ddrsim_core::dynamics::{chevron_column, evolve, wrap_phase, CollapseSet, EvolveConfig};
use ddrsim_core::gates::{
    calibrate_phases, cz_rectangular, cz_target, ddr_ramps_only, geometric_fraction, iswap, iswap_target, phases,
    rect_start, CouplingSign, DdrParams, GateContext, GateResult, IswapKind, IswapParams,
};
use ddrsim_core::linalg::{expm, CMat, C64, IM};
use ddrsim_core::model::{
    effective_coupling, find_coupler_off, zz_exact, zz_perturbative, FrequencyConfig, OffCriterion,
};
use ddrsim_core::opt::{optimize_cz_ddr, optimize_fast_adiabatic, FastAdiabaticScenario};
use ddrsim_core::pulse::{cosine_flat_top, cosine_step, ddr_coupler_track, track_residual_khz, Channel, PulseSchedule};
use ddrsim_core::qspace::{ModeLayout, SystemState};
use ddrsim_core::tomo::{
    bayes_correct, process_fidelity, process_tomography, standard_inputs, ProcessMatrix, RbMode, ReadoutModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(bool, String), Box<dyn std::error::Error>>;
type Criterion = (&'static str, fn(&mut Shared) -> Check);

// criterion 1
const OFF_TOL_GHZ: f64 = 1e-6;
const SCAN_RUNTIME: Duration = Duration::from_secs(1);
// criterion 2
const ZZ_NULL_WINDOW: (f64, f64) = (5.805, 6.005);
const ZZ_REL_TOL: f64 = 0.20;
const ZZ_MIN_DETUNING_GHZ: f64 = 0.5;
/// Denominator floor for the relative ZZ error near the null, MHz.
const ZZ_FLOOR_MHZ: f64 = 0.05;
const ZZ_RUNTIME: Duration = Duration::from_secs(30);
// criterion 3
const CHEVRON_REL_TOL: f64 = 0.15;
const CHEVRON_OFF_AMPLITUDE: f64 = 1e-3;
const CHEVRON_RUNTIME: Duration = Duration::from_secs(300);
// criterion 4
const TRACK_KHZ: f64 = 1.0;
const RAMP_PHASE_RAD: f64 = 0.01;
// criterion 5
const DDR_UNITARY_MIN: f64 = 0.999;
const DDR_DURATION: (f64, f64) = (110.0, 130.0);
const DDR_QPT: (f64, f64) = (0.981, 0.005);
const RECT_NEG: (f64, f64) = (0.9875, 0.005);
const RECT_NEG_DURATION: (f64, f64) = (80.0, 100.0);
const RECT_POS_PHASE_DEG: f64 = 2.0;
const GATE_RUNTIME: Duration = Duration::from_secs(30);
const OPT_RUNTIME: Duration = Duration::from_secs(1800);
// criterion 6
const GEO_FRACTION: (f64, f64) = (0.983, 0.01);
const GEO_DYNAMICAL_DEG: (f64, f64) = (3.0, 3.0);
// criterion 7
const FA_FIDELITY: (f64, f64) = (0.9960, 0.0015);
// criterion 8
const ISWAP_TRANSFER_MIN: f64 = 0.999;
const ISWAP_QPT_BAND: (f64, f64) = (0.94, 0.985);
// criterion 9
const QPT_TOL: f64 = 1e-8;
const BAYES_TOL: f64 = 1e-12;
// criterion 10
const RB_ISOLATION: f64 = 0.001;
const RB_DEGRADATION: f64 = 0.003;
const RB_ZZ_MHZ: f64 = -0.45;
// criterion 11
const CONVERGENCE: (f64, f64) = (16.0, 4.0);
const INVARIANT_TOL: f64 = 1e-8;
const T1_REL_TOL: f64 = 0.01;

struct Shared {
    cfg: RunConfig,
    ctx: GateContext,
    collapse: Option<CollapseSet>,
    ddr: Option<(DdrParams, GateResult, Duration)>,
}

fn within(x: f64, (center, tol): (f64, f64)) -> bool {
    (x - center).abs() <= tol
}

fn c1_coupling(_: &mut Shared) -> Check {
    let p = DeviceParams::paper_device();
    let q = 4.926;
    let start = Instant::now();
    let n = 2001;
    let g: Vec<f64> = (0..n)
        .map(|k| effective_coupling(&p, &FrequencyConfig::new(q, 5.2 + 0.777 * k as f64 / (n - 1) as f64, q)))
        .collect::<Result<_, _>>()?;
    let off = find_coupler_off(&p, q, q, OffCriterion::SwapCoupling, None, &ModeLayout::default())?;
    let elapsed = start.elapsed();
    let finite = g.iter().all(|x| x.is_finite());
    let max_step = g.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let changes = g.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
    // symmetric closed form: w + g1c g2c / g12
    let closed = q + 76.9 * 76.9 / 6.74 * 1e-3;
    let ok = finite
        && max_step < 0.1
        && changes == 1
        && (off - closed).abs() < OFF_TOL_GHZ
        && (closed - 5.8034).abs() < 5e-5
        && elapsed < SCAN_RUNTIME;
    Ok((
        ok,
        format!(
            "sign changes {changes}, max step {max_step:.4} MHz, off {off:.7} vs closed form {closed:.7} GHz ({:.3} kHz), {elapsed:.2?}",
            (off - closed).abs() * 1e6
        ),
    ))
}

fn c2_zz(s: &mut Shared) -> Check {
    let p = &s.cfg.device;
    let l = ModeLayout::default();
    let (w1, w2) = (p.q1.omega_max, p.q2.omega_max);
    let start = Instant::now();
    let null = find_coupler_off(p, w1, w2, OffCriterion::ZzExact, None, &l)?;
    let mut worst: (f64, f64) = (0.0, 0.0);
    for k in 0..100 {
        let wc = 5.2 + 0.777 * k as f64 / 99.0;
        let f = FrequencyConfig::new(w1, wc, w2);
        let exact = zz_exact(p, &f, &l)?;
        let pert = zz_perturbative(p, &f)?.total;
        if (w1 - wc).abs().min((w2 - wc).abs()) >= ZZ_MIN_DETUNING_GHZ {
            let rel = (pert - exact).abs() / exact.abs().max(ZZ_FLOOR_MHZ);
            if rel > worst.0 {
                worst = (rel, wc);
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = null >= ZZ_NULL_WINDOW.0 && null <= ZZ_NULL_WINDOW.1 && worst.0 <= ZZ_REL_TOL && elapsed < ZZ_RUNTIME;
    Ok((
        ok,
        format!(
            "null {null:.5} GHz, worst perturbative error {:.1}% at {:.4} GHz, {elapsed:.2?}",
            worst.0 * 100.0,
            worst.1
        ),
    ))
}

fn c3_chevron(s: &mut Shared) -> Check {
    let cfg = &s.cfg;
    let c = &cfg.chevron;
    let p = &cfg.device;
    let start = Instant::now();
    let (_, _, fits) = chevron_fits(cfg)?;
    let elapsed = start.elapsed();
    let span = (c.times - 1) as f64 * c.dt;
    let (mut used, mut worst) = (0, (0.0, 0.0));
    for f in &fits {
        let two_g = 2.0 * effective_coupling(p, &FrequencyConfig::new(c.qubit, f[0], c.qubit))?.abs();
        // a frequency is only resolvable with one full period in the window
        if two_g * span * 1e-3 < 1.0 {
            continue;
        }
        used += 1;
        let rel = (f[1] - two_g).abs() / two_g;
        if rel > worst.0 {
            worst = (rel, f[0]);
        }
    }
    let l = layout(cfg)?;
    let off = find_coupler_off(p, c.qubit, c.qubit, OffCriterion::SwapExact, None, &l)?;
    let col = chevron_column(p, &l, c.qubit, off, c.dt, c.times)?;
    let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let amp = 0.5 * (hi - lo);
    let ok = used > 0 && worst.0 <= CHEVRON_REL_TOL && amp < CHEVRON_OFF_AMPLITUDE && elapsed < CHEVRON_RUNTIME;
    Ok((
        ok,
        format!(
            "{used}/{} resolvable columns, worst {:.1}% at {:.4} GHz; amplitude at off point {off:.5} GHz {amp:.2e}; map {elapsed:.2?}",
            fits.len(),
            worst.0 * 100.0,
            worst.1
        ),
    ))
}

fn c4_null(s: &mut Shared) -> Check {
    let ctx = &s.ctx;
    let p = DdrParams { knots: Vec::new(), ..s.cfg.ddr.clone() };
    let w1e = ctx.idle.w1() + ctx.params.eta_ghz()[0];
    let w2i = ctx.idle.w2();
    let n = (p.ramp / ctx.dt).round() as usize;
    let omega2: Vec<f64> = (0..=n).map(|k| w2i + (w1e + p.detune - w2i) * cosine_step(k as f64 / n as f64)).collect();
    let track = ddr_coupler_track(w1e, &omega2, &ctx.params, ctx.dt)?;
    let residual = track_residual_khz(w1e, &omega2, &track.real_values(), &ctx.params)?;
    let u = ctx.unitary(&ddr_ramps_only(ctx, &p)?)?;
    let cond = phases(&u.u).conditional;
    let ok = residual < TRACK_KHZ && cond.abs() < RAMP_PHASE_RAD;
    Ok((ok, format!("track residual {residual:.2e} kHz, ramps-only conditional phase {cond:.4} rad")))
}

fn c5_cz(s: &mut Shared) -> Check {
    let ctx = &s.ctx;
    // unoptimized start: round timings, no track corrections
    let start = DdrParams { dip: 5.2, hold: 30.0, ramp: 20.0, edge: 25.0, detune: 0.0, knots: vec![0.0; 5] };
    let t = Instant::now();
    let opt = optimize_cz_ddr(ctx, &start, s.cfg.optimize.budget)?;
    let opt_time = t.elapsed();
    let improved = opt.search.f < opt.initial_objective;
    let f_unitary = opt.gate.unitary_fidelity.unwrap_or(0.0);
    let dur = opt.gate.duration;

    let t = Instant::now();
    ctx.analyze("cz_ddr", opt.gate.schedule.clone(), &cz_target())?;
    let mut gate_time = t.elapsed();
    let t = Instant::now();
    let cs = s.collapse.as_ref().ok_or("decoherence disabled")?;
    let f_qpt = ctx.qpt_fidelity(&opt.gate, &cz_target(), Some(cs))?;
    gate_time = gate_time.max(t.elapsed());

    let neg_start = rect_start(ctx, CouplingSign::Negative, s.cfg.rect.negative_hold)?;
    let (neg, neg_gate) = cz_rectangular(ctx, CouplingSign::Negative, &neg_start, s.cfg.rect.budget)?;
    let f_neg = neg_gate.unitary_fidelity.unwrap_or(0.0);
    let pos_start = rect_start(ctx, CouplingSign::Positive, s.cfg.rect.positive_hold)?;
    let (_, pos_gate) = cz_rectangular(ctx, CouplingSign::Positive, &pos_start, s.cfg.rect.budget)?;
    let cal = calibrate_phases(ctx, &pos_gate.schedule)?;
    let pos_err = wrap_phase(cal.conditional - PI).abs().to_degrees();

    let a = f_unitary >= DDR_UNITARY_MIN && dur >= DDR_DURATION.0 && dur <= DDR_DURATION.1 && improved;
    let b = within(f_qpt, DDR_QPT);
    let c = within(f_neg, RECT_NEG) && neg.hold >= RECT_NEG_DURATION.0 && neg.hold <= RECT_NEG_DURATION.1;
    let d = pos_err <= RECT_POS_PHASE_DEG;
    let runtime = gate_time < GATE_RUNTIME && opt_time < OPT_RUNTIME;
    let mark = |x: bool| if x { "ok" } else { "out" };
    s.ddr = Some((opt.params.clone(), opt.gate.clone(), gate_time));
    Ok((
        a && b && c && d && runtime,
        format!(
            "(a) DDR unitary {:.5}% at {dur:.1} ns, objective {:.2e} -> {:.2e} [{}]; (b) DDR QPT {:.2}% (average gate {:.2}%) [{}]; \
             (c) negative rect {:.2}% hold {:.1} ns [{}]; (d) positive rect phase error {pos_err:.2} deg [{}]; \
             gate sim {gate_time:.2?}, optimization {opt_time:.2?} [{}]",
            f_unitary * 100.0,
            opt.initial_objective,
            opt.search.f,
            mark(a),
            f_qpt * 100.0,
            (4.0 * f_qpt + 1.0) / 5.0 * 100.0,
            mark(b),
            f_neg * 100.0,
            neg.hold,
            mark(c),
            mark(d),
            mark(runtime)
        ),
    ))
}

fn c6_geometric(s: &mut Shared) -> Check {
    let (_, gate, _) = s.ddr.as_ref().ok_or("criterion 5 did not produce a gate")?;
    let g = geometric_fraction(&s.ctx, &gate.schedule)?;
    let dyn_deg = g.dynamical.to_degrees();
    let ok = within(g.fraction, GEO_FRACTION) && within(dyn_deg.abs(), GEO_DYNAMICAL_DEG);
    Ok((
        ok,
        format!(
            "fraction {:.4}, dynamical {dyn_deg:.2} deg, geometric {:.2} deg, conditional {:.2} deg",
            g.fraction,
            g.geometric.to_degrees(),
            g.conditional.to_degrees()
        ),
    ))
}

fn c7_fast_adiabatic(s: &mut Shared) -> Check {
    let fa = &s.cfg.fast_adiabatic;
    let scenario = FastAdiabaticScenario::default();
    let r = optimize_fast_adiabatic(&s.cfg.device, &layout(&s.cfg)?, &scenario, 3, fa.budget, s.cfg.sim.dt)?;
    let ddr = s.ddr.as_ref().and_then(|d| d.1.unitary_fidelity).ok_or("criterion 5 did not produce a gate")?;
    let ok = within(r.fidelity, FA_FIDELITY) && r.fidelity < ddr;
    Ok((
        ok,
        format!(
            "fast adiabatic {:.3}% at g = {:.3} MHz (DDR {:.5}%)",
            r.fidelity * 100.0,
            scenario.g_direct,
            ddr * 100.0
        ),
    ))
}

fn c8_iswap(s: &mut Shared) -> Check {
    let ctx = &s.ctx;
    let cs = s.collapse.as_ref().ok_or("decoherence disabled")?;
    let p = IswapParams::default();
    let full = iswap(ctx, IswapKind::Full, &p)?;
    let transfer = full.unitary_matrix()[(1, 2)].norm_sqr();
    let f_full = ctx.qpt_fidelity(&full, &iswap_target(IswapKind::Full), Some(cs))?;
    let half = iswap(ctx, IswapKind::Half, &p)?;
    let f_half = ctx.qpt_fidelity(&half, &iswap_target(IswapKind::Half), Some(cs))?;
    let band = |f: f64| f >= ISWAP_QPT_BAND.0 && f <= ISWAP_QPT_BAND.1;
    let ok = transfer >= ISWAP_TRANSFER_MIN && band(f_full) && band(f_half);
    Ok((ok, format!("transfer {transfer:.5}, QPT iSWAP {:.2}%, sqrt-iSWAP {:.2}%", f_full * 100.0, f_half * 100.0)))
}

fn random_unitary(rng: &mut ChaCha8Rng) -> CMat {
    let h = CMat::from_fn(4, 4, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    expm(&h.hermitize().scale(-IM * 3.0))
}

fn c9_tomography(s: &mut Shared) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(s.cfg.seed);
    let inputs = standard_inputs();
    let mut qpt_err: f64 = 0.0;
    for _ in 0..20 {
        let (u, v) = (random_unitary(&mut rng), random_unitary(&mut rng));
        let outputs: Vec<CMat> = inputs.iter().map(|r| v.matmul(r).matmul(&v.adjoint())).collect();
        let chi = process_tomography(&inputs, &outputs)?;
        let f = process_fidelity(&chi, &ProcessMatrix::from_unitary(&u)?)?;
        let want = u.adjoint().matmul(&v).trace().norm_sqr() / 16.0;
        qpt_err = qpt_err.max((f - want).abs());
    }
    let model = ReadoutModel { fg: [0.95, 0.97], fe: [0.90, 0.92] };
    let mut bayes_err: f64 = 0.0;
    for _ in 0..20 {
        let mut p: [f64; 4] = core::array::from_fn(|_| rng.random_range(0.0..1.0));
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        let back = bayes_correct(&model.forward(&p), &model, 0)?;
        for (a, b) in back.probs.iter().zip(&p) {
            bayes_err = bayes_err.max((a - b).abs());
        }
    }
    let id = ProcessMatrix::from_unitary(&CMat::identity(4))?;
    let f_id_cz = process_fidelity(&id, &ProcessMatrix::from_unitary(&cz_target())?)?;
    let ok = qpt_err < QPT_TOL && bayes_err < BAYES_TOL && (f_id_cz - 0.25).abs() < 1e-15;
    Ok((ok, format!("QPT error {qpt_err:.1e}, Bayes roundtrip {bayes_err:.1e}, F(I, CZ) = {f_id_cz}")))
}

fn c10_rb(s: &mut Shared) -> Check {
    let p = &s.cfg.device;
    let mut lines = Vec::new();
    let mut ok = true;
    for (zz, isolated) in [(0.0, true), (RB_ZZ_MHZ, false)] {
        let rc = rb_config(&s.cfg, zz);
        let ind = rb_parallel(p, RbMode::Individual, &rc)?;
        let sim = rb_parallel(p, RbMode::Simultaneous, &rc)?;
        let d = [ind[0].fidelity - sim[0].fidelity, ind[1].fidelity - sim[1].fidelity];
        ok &= if isolated { d.iter().all(|x| x.abs() <= RB_ISOLATION) } else { d.iter().all(|x| *x >= RB_DEGRADATION) };
        lines.push(format!("zz {zz} MHz: degradation {:.3}% / {:.3}%", d[0] * 100.0, d[1] * 100.0));
    }
    Ok((ok, lines.join(", ")))
}

fn final_pure(r: &ddrsim_core::dynamics::TrajectoryRecord) -> Vec<C64> {
    match &r.final_state {
        SystemState::Pure(v) => v.clone(),
        _ => unreachable!("pure evolution"),
    }
}

fn c11_integrator(s: &mut Shared) -> Check {
    let ctx = &s.ctx;
    let (p, l) = (&ctx.params, &ctx.layout);
    let sched = PulseSchedule::new(ctx.idle, 1.0).with(cosine_flat_top(
        Channel::FreqQ2,
        ctx.idle.w2(),
        4.755,
        10.0,
        5.0,
        1.0,
    )?)?;
    let init = SystemState::Pure(l.basis_vector(&[1, 0, 1])?);
    let run = |sub: usize| -> Result<Vec<C64>, ddrsim_core::Error> {
        let c = EvolveConfig { substeps: sub, ..Default::default() };
        Ok(final_pure(&evolve(&sched, &init, p, l, None, &[], &c)?))
    };
    let reference = run(32)?;
    let err = |v: Vec<C64>| v.iter().zip(&reference).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let ratio = err(run(4)?) / err(run(8)?);

    let (_, gate, _) = s.ddr.as_ref().ok_or("criterion 5 did not produce a gate")?;
    let psi = ctx.basis.vectors[3].clone();
    let pure = evolve(&gate.schedule, &SystemState::Pure(psi.clone()), p, l, None, &[], &ctx.config)?;
    let norm_err = (pure.final_state.populations().iter().sum::<f64>() - 1.0).abs();
    let cs = s.collapse.as_ref().ok_or("decoherence disabled")?;
    let mixed = evolve(&gate.schedule, &SystemState::Pure(psi), p, l, Some(cs), &[], &ctx.config)?;
    let trace_err = (mixed.final_state.populations().iter().sum::<f64>() - 1.0).abs();

    // uncoupled modes: the Q1 excitation decays as exp(-t / T1)
    let mut free = *p;
    free.coupling.g1c = 0.0;
    free.coupling.g2c = 0.0;
    free.coupling.g12 = 0.0;
    let t1 = free.q1.t1 * 1e3;
    let idle = FrequencyConfig::sweet_spots(&free).with_coupler(ctx.idle.wc());
    let decay = PulseSchedule::idle_for(idle, t1, 1.0);
    let cfg = EvolveConfig { record_stride: 1000, ..Default::default() };
    let labels = vec![vec![1, 0, 0]];
    let rec = evolve(
        &decay,
        &SystemState::Pure(l.basis_vector(&[1, 0, 0])?),
        &free,
        l,
        Some(&CollapseSet::from_device(&free)?),
        &labels,
        &cfg,
    )?;
    let t1_err = rec
        .times
        .iter()
        .zip(&rec.populations[0])
        .map(|(t, pop)| {
            let want = (-t / t1).exp();
            (pop - want).abs() / want
        })
        .fold(0.0, f64::max);
    let ok = within(ratio, CONVERGENCE) && norm_err < INVARIANT_TOL && trace_err < INVARIANT_TOL && t1_err < T1_REL_TOL;
    Ok((
        ok,
        format!(
            "error ratio {ratio:.2}, norm drift {norm_err:.1e}, trace drift {trace_err:.1e}, T1 decay error {:.3}%",
            t1_err * 100.0
        ),
    ))
}

fn main() {
    let cfg = RunConfig::default();
    let ctx = ddrsim::experiments::gate_context(&cfg).expect("gate context");
    let cs = collapse(&cfg).expect("collapse operators");
    let mut shared = Shared { cfg, ctx, collapse: cs, ddr: None };
    let criteria: [Criterion; 11] = [
        ("coupling tunability", c1_coupling),
        ("ZZ cancellation", c2_zz),
        ("chevron oracle", c3_chevron),
        ("DDR null", c4_null),
        ("CZ gate numbers", c5_cz),
        ("geometric fraction", c6_geometric),
        ("fast-adiabatic baseline", c7_fast_adiabatic),
        ("iSWAP family", c8_iswap),
        ("tomography self-consistency", c9_tomography),
        ("RB isolation", c10_rb),
        ("integrator quality", c11_integrator),
    ];
    let (mut passed, mut errors) = (0, 0);
    for (k, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        match check(&mut shared) {
            Ok((ok, detail)) => {
                passed += ok as usize;
                let tag = if ok { "PASS" } else { "FAIL" };
                println!("{tag} {:>2} {name}: {detail} ({:.1?})", k + 1, t.elapsed());
            }
            Err(e) => {
                errors += 1;
                println!("FAIL {:>2} {name}: error: {e}", k + 1);
            }
        }
    }
    println!("acceptance: {passed}/{} criteria pass", criteria.len());
    if errors > 0 {
        std::process::exit(1);
    }
}
