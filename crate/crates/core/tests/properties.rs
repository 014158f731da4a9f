use ddrsim_core::device::{freq_from_flux, DeviceParams};
use ddrsim_core::dynamics::{evolve, CollapseSet, EvolveConfig};
use ddrsim_core::gates::{ddr_schedule, DdrParams, GateContext};
use ddrsim_core::linalg::{eigh, expm, CMat, C64, IM};
use ddrsim_core::model::{build_hamiltonian, FrequencyConfig};
use ddrsim_core::opt::{nelder_mead, ObjectiveSpec};
use ddrsim_core::pulse::{cosine_flat_top, ddr_coupler_track, track_residual_khz, Channel, DragParams, PulseSchedule};
use ddrsim_core::qspace::{embed, mode_operators, ModeLayout, SystemState};
use ddrsim_core::tomo::{process_fidelity, process_from_map, state_tomography, tomography_data, ProcessMatrix};
use proptest::prelude::*;

fn random_unitary(entries: &[(f64, f64)], n: usize) -> CMat {
    let mut h = CMat::from_fn(n, n, |i, j| {
        let (a, b) = entries[i * n + j];
        C64::new(a, b)
    });
    h = h.hermitize();
    expm(&h.scale(-IM * 3.0))
}

fn unitary_strategy() -> impl Strategy<Value = CMat> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 16).prop_map(|e| random_unitary(&e, 4))
}

fn min_eigenvalue(m: &CMat) -> f64 {
    eigh(&m.hermitize()).values.iter().copied().fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn embedded_operators_commute(d0 in 2usize..5, d1 in 2usize..5, d2 in 2usize..5, i in 0usize..3, j in 0usize..3) {
        prop_assume!(i != j);
        let layout = ModeLayout::new(vec![d0, d1, d2]).unwrap();
        let (ai, adi, _) = mode_operators(layout.dims()[i]).unwrap();
        let (aj, _, nj) = mode_operators(layout.dims()[j]).unwrap();
        let a = embed(&ai, i, &layout).unwrap();
        let b = embed(&aj, j, &layout).unwrap();
        let n = embed(&nj, j, &layout).unwrap();
        prop_assert!(a.commutator(&b).max_abs() < 1e-12);
        prop_assert!(a.commutator(&n).max_abs() < 1e-12);
        prop_assert_eq!(a.adjoint(), embed(&adi, i, &layout).unwrap());
        let levels = layout.dims()[j] as f64;
        let want = layout.total_dim() as f64 / levels * levels * (levels - 1.0) / 2.0;
        prop_assert!((n.trace().re - want).abs() < 1e-9);
    }

    #[test]
    fn tuning_curve_monotone(omega_max in 4.0..7.0f64, eta in -350.0..-100.0f64) {
        let mut prev = f64::INFINITY;
        for k in 0..=90 {
            let f = freq_from_flux(0.005 * k as f64, omega_max, eta).unwrap();
            prop_assert!(f < prev);
            prev = f;
        }
    }

    #[test]
    fn hamiltonian_hermitian(w1 in 4.5..5.0f64, wc in 5.0..5.977f64, w2 in 4.5..5.0f64) {
        let p = DeviceParams::paper_device();
        let h = build_hamiltonian(&p, &FrequencyConfig::new(w1, wc, w2), &ModeLayout::default()).unwrap();
        prop_assert!(h.hermitian_defect() < 1e-12 * h.norm_fro());
    }

    #[test]
    fn ddr_track_nulls_coupling(steps in prop::collection::vec(0.0..1.0f64, 2..12)) {
        let p = DeviceParams::paper_device();
        let mut acc = 0.0;
        let total: f64 = steps.iter().sum::<f64>().max(1e-9);
        let omega2: Vec<f64> = steps
            .iter()
            .map(|s| {
                acc += s / total;
                4.926 + (4.755 - 4.926) * acc.min(1.0)
            })
            .collect();
        let track = ddr_coupler_track(4.755, &omega2, &p, 1.0).unwrap();
        let r = track_residual_khz(4.755, &omega2, &track.real_values(), &p).unwrap();
        prop_assert!(r < 1.0, "{r} kHz");
    }

    #[test]
    fn flat_top_endpoints_exact(start in 4.0..6.0f64, plateau in 4.0..6.0f64, ramp in 0.5..20.0f64, hold in 0.0..50.0f64) {
        let w = cosine_flat_top(Channel::FreqQ2, start, plateau, ramp, hold, 0.1).unwrap();
        let v = w.real_values();
        prop_assert_eq!(v[0], start);
        prop_assert_eq!(*v.last().unwrap(), start);
        let (lo, hi) = (start.min(plateau), start.max(plateau));
        prop_assert!(v.iter().all(|x| *x >= lo - 1e-12 && *x <= hi + 1e-12));
    }

    #[test]
    fn qpt_of_unitary_channel(u in unitary_strategy(), v in unitary_strategy()) {
        let chi = process_from_map(|r| v.matmul(r).matmul(&v.adjoint())).unwrap();
        let f = process_fidelity(&chi, &ProcessMatrix::from_unitary(&u).unwrap()).unwrap();
        let want = u.adjoint().matmul(&v).trace().norm_sqr() / 16.0;
        prop_assert!((f - want).abs() < 1e-8);
        prop_assert!(chi.chi.hermitian_defect() < 1e-10);
        prop_assert!(min_eigenvalue(&chi.chi) > -1e-6);
    }

    #[test]
    fn state_tomography_affine(u in unitary_strategy(), v in unitary_strategy(), a in 0.0..1.0f64) {
        let e0 = CMat::outer(&u.column(0), &u.column(0));
        let e1 = CMat::outer(&v.column(2), &v.column(2));
        let d0 = tomography_data(&e0);
        let d1 = tomography_data(&e1);
        let mixed: Vec<[f64; 4]> = d0
            .iter()
            .zip(&d1)
            .map(|(x, y)| core::array::from_fn(|k| a * x[k] + (1.0 - a) * y[k]))
            .collect();
        let rho = state_tomography(&mixed, None).unwrap();
        let mut want = e0.scale_real(a);
        want.axpy(C64::new(1.0 - a, 0.0), &e1);
        let mut diff = rho;
        diff.axpy(C64::new(-1.0, 0.0), &want);
        prop_assert!(diff.max_abs() < 1e-9);
    }

    #[test]
    fn nelder_mead_contract(lo in -5.0..0.0f64, width in 0.5..5.0f64, cx in -6.0..6.0f64, cy in -6.0..6.0f64, x0 in 0.0..1.0f64) {
        let hi = lo + width;
        let spec = ObjectiveSpec::new(&["x", "y"], vec![lo; 2], vec![hi; 2], vec![0.3; 2], 200);
        let f = |x: &[f64]| (x[0] - cx).powi(2) + 3.0 * (x[1] - cy).powi(2) + x[0] * x[1] * 0.1;
        let start = [lo + x0 * width, hi - x0 * width];
        let r = nelder_mead(f, &start, &spec).unwrap();
        let again = nelder_mead(f, &start, &spec).unwrap();
        prop_assert!(r.x.iter().all(|v| *v >= lo && *v <= hi));
        prop_assert!(r.trace.windows(2).all(|w| w[1].f <= w[0].f));
        prop_assert_eq!(r, again);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn lindblad_keeps_trace_and_positivity(amp in 0.02..0.08f64, sigma in 3.0..8.0f64, beta in -0.5..0.5f64) {
        let p = DeviceParams::paper_device();
        let l = ModeLayout::uniform(3).unwrap();
        let idle = FrequencyConfig::new(4.961, 5.9027, 4.926);
        let w = ddrsim_core::pulse::drag(Channel::XyQ1, &DragParams::new(amp, sigma, beta), 0.1).unwrap();
        let s = PulseSchedule::new(idle, 0.1).with(w).unwrap();
        let cs = CollapseSet::from_device(&p).unwrap();
        let init = SystemState::Pure(l.basis_vector(&[0, 0, 1]).unwrap());
        let r = evolve(&s, &init, &p, &l, Some(&cs), &[], &EvolveConfig::default()).unwrap();
        let SystemState::Density(rho) = r.final_state else { panic!("density expected") };
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-8);
        prop_assert!(min_eigenvalue(&rho) > -1e-8);
    }

    #[test]
    fn gate_schedules_start_and_end_idle(dip in 5.15..5.3f64, hold in 5.0..40.0f64, ramp in 10.0..30.0f64, edge in 5.0..30.0f64) {
        let ctx = GateContext::new(&DeviceParams::paper_device(), &ModeLayout::default(), 0.1).unwrap();
        let s = ddr_schedule(&ctx, &DdrParams { dip, hold, ramp, edge, ..DdrParams::default() }).unwrap();
        for t in [0.0, s.duration()] {
            let w = s.frequencies_at(t);
            for (a, b) in w.iter().zip(&ctx.idle.omega) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn energy_conserved_for_static_hamiltonian() {
    let p = DeviceParams::paper_device();
    let l = ModeLayout::default();
    let idle = FrequencyConfig::new(4.961, 5.6, 4.926);
    let h = build_hamiltonian(&p, &idle, &l).unwrap();
    let mut psi = vec![C64::new(0.0, 0.0); l.total_dim()];
    for (labels, amp) in [([1, 0, 0], 0.6), ([0, 0, 1], 0.64), ([1, 0, 1], 0.48)] {
        psi[l.index(&labels).unwrap()] = C64::new(amp, 0.0);
    }
    let e0 = SystemState::Pure(psi.clone()).expectation(&h).re;
    let s = PulseSchedule::idle_for(idle, 1000.0, 0.1);
    let r = evolve(&s, &SystemState::Pure(psi), &p, &l, None, &[], &EvolveConfig::default()).unwrap();
    let e1 = r.final_state.expectation(&h).re;
    assert!(((e1 - e0) / e0).abs() < 1e-9, "{e0} {e1}");
    let norm: f64 = r.final_state.populations().iter().sum();
    assert!((norm - 1.0).abs() < 1e-8);
}
