//! Property tests over randomized physical parameters.

use std::f64::consts::{FRAC_PI_2, PI};

use kelvin::analytic::{averaged_rates, chain_dsp_energies, rate_table, NoiseSpec, RateMode};
use kelvin::cm::evolution_blocks;
use kelvin::fock::{exact_cycle_map, noisy_cycle_map, noisy_cycle_map_unitary_first, parity_coherence, DensityBlock};
use kelvin::linalg::eigh;
use kelvin::model::{
    apply_symmetry, block_hamiltonian, canonicalize_theta, diagonalization_residual, dispersion,
    energy_density_limit, ground_state_energy, BathSpec, CouplingScheme, ModelParams, Symmetry,
};
use kelvin::optimize::{objective_theta_specific, Mode, ParamVector};
use kelvin::protocol::{
    make_schedule, run_trajectory, steady_report, Engine, InitialState, Protocol, ScheduleDescriptor,
};
use proptest::prelude::*;

fn scheme(nn: f64, lam: &[f64], mu: &[f64], g: f64) -> CouplingScheme {
    let m = kelvin::model::range_of(nn).unwrap().len();
    CouplingScheme::from_lists(nn, &lam[..m], &mu[..m], g).unwrap()
}

fn couplings() -> impl Strategy<Value = (f64, Vec<f64>, Vec<f64>)> {
    (
        prop::sample::select(vec![0.0, 0.5, 1.0, 1.5]),
        prop::collection::vec(-1.0..1.0f64, 4),
        prop::collection::vec(-1.0..1.0f64, 4),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dispersion_symmetries(half in 1usize..40, theta in -1.0..2.5f64, k in 0i64..80) {
        let p = ModelParams::new(2 * half, theta).unwrap();
        let n = p.n as i64;
        prop_assert!((dispersion(&p, k) - dispersion(&p, -k)).abs() < 1e-14);
        prop_assert!((dispersion(&p, k) - dispersion(&p, k + n)).abs() < 1e-12);
        if n % 4 == 0 {
            prop_assert!((dispersion(&p, n / 4) - 1.0).abs() < 1e-12);
        }
        let s = (2.0 * theta).sin().abs();
        let eps: Vec<f64> = (0..n).map(|k| dispersion(&p, k)).collect();
        let (lo, hi) = eps.iter().fold((f64::INFINITY, 0.0f64), |a, &e| (a.0.min(e), a.1.max(e)));
        prop_assert!((hi - (1.0 + s).sqrt()).abs() < 1e-12);
        prop_assert!((lo - (1.0 - s).sqrt()).abs() < 1e-7);
        prop_assert!(diagonalization_residual(&p, k) < 1e-12);
    }

    #[test]
    fn ground_state_density(theta in 0.0..FRAC_PI_2, half in 50usize..400) {
        let p = ModelParams::new(2 * half, theta).unwrap();
        let n = p.n as f64;
        prop_assert!((ground_state_energy(&p) / n + energy_density_limit(theta)).abs() <= 10.0 / n);
    }

    #[test]
    fn symmetries_are_involutions((nn, lam, mu) in couplings(), theta in -1.0..4.0f64) {
        let s = scheme(nn, &lam, &mu, 0.3);
        for sym in [Symmetry::Negate, Symmetry::ShiftPi, Symmetry::Mirror] {
            let (t1, s1, r1) = apply_symmetry(sym, theta, &s);
            let (t2, s2, r2) = apply_symmetry(sym, t1, &s1);
            let dt = (t2 - theta).rem_euclid(2.0 * PI);
            prop_assert!(dt.min(2.0 * PI - dt) < 1e-12);
            prop_assert_eq!(&s2, &s);
            for k in 0..=10 {
                prop_assert_eq!(r2.apply(20, r1.apply(20, k)), k);
            }
        }
    }

    #[test]
    fn channels_are_physical(
        theta in 0.01..FRAC_PI_2, (nn, lam, mu) in couplings(), g in 0.01..0.8f64,
        delta in 0.1..2.0f64, t in 0.1..5.0f64, kappa in 0.0..0.5f64, k in 0usize..=6,
    ) {
        let p = ModelParams::new(12, theta).unwrap();
        let b = block_hamiltonian(&p, &scheme(nn, &lam, &mu, g), &BathSpec::new(delta, 1.0).unwrap(), k);
        let s = noisy_cycle_map(&b, t, kappa).unwrap();
        prop_assert!(s.trace_error() < 1e-10);
        prop_assert!(s.choi_min_eigenvalue() > -1e-9);
        let u = noisy_cycle_map_unitary_first(&b, t, kappa).unwrap();
        prop_assert!(s.distance(&u) < 1e-10);

        // parity superselection on an in-sector input
        let dim = if k == 0 || k == 6 { 2 } else { 4 };
        let out = s.apply(&DensityBlock::maximally_mixed(k, dim).matrix);
        prop_assert!(parity_coherence(&out) < 1e-12);

        // concatenation is the matrix product
        let a = exact_cycle_map(&b, t, 0.0).unwrap();
        let two = a.after(&a);
        let rho = DensityBlock::most_excited(k, dim).matrix;
        prop_assert!((two.apply(&rho) - a.apply(&a.apply(&rho))).camax() < 1e-10);

        // correlation-matrix evolution stays unitary and bounded
        let eb = evolution_blocks(&b, t);
        prop_assert!(eb.unitarity_residual() < 1e-12);
    }

    #[test]
    fn rates_are_nonnegative(eps in 0.05..1.5f64, delta in 0.05..2.0f64, t in 0.5..40.0f64, a2 in 0.0..1.0f64, b2 in 0.0..1.0f64) {
        for mode in [RateMode::ExactIntegral, RateMode::Lorentzian] {
            let (gc, gh) = averaged_rates(eps, delta, t, 0.01, a2, b2, mode);
            prop_assert!(gc >= 0.0 && gh >= 0.0);
            // continuity across the resonance
            let (gc2, _) = averaged_rates(eps, eps + 1e-9, t, 0.01, a2, b2, mode);
            let (gc3, _) = averaged_rates(eps, eps, t, 0.01, a2, b2, mode);
            prop_assert!((gc2 - gc3).abs() <= 1e-6 * gc3.max(1e-300));
        }
    }

    #[test]
    fn rate_table_alpha_is_sum(theta in 0.05..1.5f64, (nn, lam, mu) in couplings(), delta in 0.1..2.0f64, t in 1.0..30.0f64) {
        let p = ModelParams::new(20, theta).unwrap();
        let table = rate_table(&p, &scheme(nn, &lam, &mu, 0.01), &[delta], t, RateMode::Lorentzian).unwrap();
        for r in &table.entries {
            prop_assert!(r.gamma_c >= 0.0 && r.gamma_h >= 0.0);
            prop_assert_eq!(r.alpha, r.gamma_c + r.gamma_h);
        }
    }

    #[test]
    fn dsp_energy_bound(theta in 0.01..(PI - 0.01), l in -1.0..1.0f64, m in -1.0..1.0f64) {
        prop_assume!(l.abs() + m.abs() > 1e-3);
        let p = ModelParams::new(30, theta).unwrap();
        let total: f64 = chain_dsp_energies(&p, &CouplingScheme::local(l, m, 1.0)).unwrap().iter().sum();
        prop_assert!(total >= -(p.n as f64) * theta.sin() / 2.0 - 1e-9);
    }

    #[test]
    fn objective_invariances(
        theta in 0.05..1.5f64, (nn, lam, mu) in couplings(), c in 0.2..5.0f64,
        delta in 0.2..2.0f64, t in 0.5..10.0f64, d2 in 0.2..2.0f64, t2 in 0.5..10.0f64,
    ) {
        let p = ModelParams::new(20, theta).unwrap();
        let s = scheme(nn, &lam, &mu, 0.1);
        let pv = ParamVector { scheme: s.clone(), delta, t };
        let mut scaled = pv.clone();
        for v in scaled.scheme.lambda.values_mut().chain(scaled.scheme.mu.values_mut()) {
            *v *= c;
        }
        scaled.scheme.g /= c;
        let f = |pv: &ParamVector, mode| objective_theta_specific(pv, &p, &NoiseSpec::None, mode);
        let (a, b) = (f(&pv, Mode::Cooling), f(&scaled, Mode::Cooling));
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        let moved = ParamVector { scheme: s, delta: d2, t: t2 };
        prop_assert!((f(&pv, Mode::Dsp) - f(&moved, Mode::Dsp)).abs() <= 1e-14);
        let n = pv.normalized();
        prop_assert!(n.within_bounds() || !pv.within_bounds());
        prop_assert!((n.scheme.max_abs_coupling() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn engines_agree_and_metrics_are_bounded(
        theta in 0.05..1.5f64, g in 0.02..0.4f64, kappa in prop::sample::select(vec![0.0, 1e-3, 1e-2]),
        delta in 0.3..1.8f64, t in 0.5..5.0f64, seed in 0u64..1000,
    ) {
        let p = ModelParams::new(12, theta).unwrap();
        let s = CouplingScheme::local(1.0, 0.6, g);
        let sch = make_schedule(&ScheduleDescriptor::Randomized { delta, l: 3, t_mean: t }, &p, seed).unwrap();
        let noise = if kappa == 0.0 { NoiseSpec::None } else { NoiseSpec::Depolarizing { kappa } };
        let mk = |e| Protocol { params: &p, scheme: &s, schedule: &sch, noise, engine: e, dsp: false };
        let a = run_trajectory(&mk(Engine::Fock), &InitialState::MostExcited, 30, 5).unwrap();
        let b = run_trajectory(&mk(Engine::Cm), &InitialState::MostExcited, 30, 5).unwrap();
        for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
            for (u, v) in x.mode_energies.iter().zip(&y.mode_energies) {
                prop_assert!((u - v).abs() <= 1e-9);
            }
            prop_assert!(x.relative >= 0.0);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&x.fidelity));
        }
        prop_assert!(a.snapshots.windows(2).all(|w| w[0].cycle < w[1].cycle));
        let again = run_trajectory(&mk(Engine::Cm), &InitialState::MostExcited, 30, 5).unwrap();
        prop_assert_eq!(&again, &b);
    }

    #[test]
    fn steady_state_survives_canonicalization(raw in -1.5..4.7f64, l in -1.0..1.0f64, m in -1.0..1.0f64) {
        prop_assume!(l.abs().max(m.abs()) > 0.1);
        let s = CouplingScheme::local(l, m, 0.2);
        let can = canonicalize_theta(raw, &s).unwrap();
        prop_assume!(can.theta > 0.01 && can.theta < FRAC_PI_2 - 0.01);
        let n = 12;
        let steady = |theta: f64, sc: &CouplingScheme| {
            let p = ModelParams::new(n, theta).unwrap();
            let sch = make_schedule(&ScheduleDescriptor::Single { delta: 0.9, t: 2.0 }, &p, 0).unwrap();
            steady_report(&Protocol { params: &p, scheme: sc, schedule: &sch, noise: NoiseSpec::None, engine: Engine::Cm, dsp: false })
                .unwrap()
        };
        let a = steady(raw, &s);
        let b = steady(can.theta, &can.scheme);
        for (k, mb) in b.modes.iter().enumerate() {
            let ma = &a.modes[can.relabel.apply(n, k)];
            prop_assert!((ma.energy - mb.energy).abs() < 1e-10, "k={} {} vs {}", k, ma.energy, mb.energy);
        }
    }

    #[test]
    fn correlation_matrices_stay_bounded(theta in 0.05..1.5f64, g in 0.01..0.8f64, t in 0.1..6.0f64, k in 0usize..=6) {
        let p = ModelParams::new(12, theta).unwrap();
        let s = CouplingScheme::local(1.0, 0.4, g);
        let sch = make_schedule(&ScheduleDescriptor::Single { delta: 1.0, t }, &p, 0).unwrap();
        let pr = Protocol { params: &p, scheme: &s, schedule: &sch, noise: NoiseSpec::Depolarizing { kappa: 0.01 }, engine: Engine::Cm, dsp: false };
        if let kelvin::protocol::ModeMap::Cm(m) = pr.mode_map(k).unwrap() {
            let mut gm = kelvin::cm::CorrelationMatrix::most_excited().matrix;
            for _ in 0..20 {
                gm = m.apply(&gm);
                let (w, _) = eigh(&gm);
                prop_assert!(w.iter().all(|x| x.abs() <= 0.5 + 1e-10));
            }
        }
    }
}
