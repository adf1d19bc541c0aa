use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use open_stirap::bloch::{random_mixed_density, random_pure_density};
use open_stirap::experiments::Axis;
use open_stirap::liouvillian::{compile_parts, LossCase, StirapGenerator};
use open_stirap::propagator::{evolve_bloch, observables, random_pure_state, IntegratorConfig};
use open_stirap::spectral::{eigendecompose, steady_state};
use open_stirap::stirap::{hamiltonian, ConstantCouplings};
use open_stirap::GellMannBasis;

fn loss(k: u8) -> LossCase {
    match k % 4 {
        0 => LossCase::Closed,
        1 => LossCase::Dephasing,
        2 => LossCase::Emission,
        _ => LossCase::coherent_emission(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bloch_round_trip(seed in any::<u64>(), d in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = GellMannBasis::new(d).unwrap();
        let rho = random_mixed_density(d, &mut rng);
        let r = basis.to_bloch(&rho).unwrap();
        let back = basis.from_bloch(&r).unwrap();
        prop_assert!((back.matrix() - rho.matrix()).norm() < 1e-12);
        prop_assert!((r.purity() - rho.purity()).abs() < 1e-12);
        prop_assert!(r.purity() <= 1.0 + 1e-12);
    }

    #[test]
    fn pure_states_sit_on_the_sphere(seed in any::<u64>(), d in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = GellMannBasis::new(d).unwrap();
        let r = basis.to_bloch(&random_pure_density(d, &mut rng)).unwrap();
        prop_assert!((r.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn observables_are_consistent(seed in any::<u64>()) {
        let o = observables(&random_pure_state(seed));
        prop_assert!((o.p1 + o.p2 + o.p3 - 1.0).abs() < 1e-12);
        prop_assert!((o.z - (o.p1 - o.p3)).abs() < 1e-15);
        prop_assert!((o.purity - 1.0).abs() < 1e-12);
        prop_assert!(o.p1 >= -1e-12 && o.p2 >= -1e-12 && o.p3 >= -1e-12);
    }

    #[test]
    fn spectra_are_conjugate_closed_and_stable(
        k in any::<u8>(),
        gamma in 0.0f64..5.0,
        g1 in 0.0f64..2.0,
        g2 in 0.0f64..2.0,
        delta in -1.0f64..1.0,
    ) {
        let basis = GellMannBasis::new(3).unwrap();
        let gen = compile_parts(&hamiltonian(g1, g2, delta), &loss(k).channels(gamma).unwrap(), &basis);
        let spec = eigendecompose(&gen.m).unwrap();
        prop_assert_eq!(spec.len(), 8);
        for mu in &spec.eigenvalues {
            prop_assert!(mu.re <= 1e-10, "growing mode {}", mu);
            let partner = spec.eigenvalues.iter().map(|nu| (nu - mu.conj()).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(partner < 1e-8, "no conjugate partner for {}", mu);
        }
        // residuals are only meaningful away from exceptional points
        if spec.max_condition() < 1e4 {
            for r in spec.residuals(&gen.m) {
                prop_assert!(r < 1e-9);
            }
        }
    }

    #[test]
    fn unique_steady_states_are_fixed_points(
        k in 1u8..4,
        gamma in 0.05f64..5.0,
        g1 in 0.1f64..2.0,
        g2 in 0.1f64..2.0,
    ) {
        let basis = GellMannBasis::new(3).unwrap();
        let gen = compile_parts(&hamiltonian(g1, g2, 0.0), &loss(k).channels(gamma).unwrap(), &basis);
        let ss = steady_state(&gen);
        if ss.is_unique() {
            let residual = &gen.m * ss.vector() + &gen.b;
            prop_assert!(residual.amax() < 1e-9);
        }
    }

    #[test]
    fn grids_are_sorted(lo in 0.01f64..1.0, span in 0.1f64..10.0, n in 2usize..60) {
        for kind in ["lin", "log"] {
            let g = Axis::parse(&format!("{kind}:{lo}:{}:{n}", lo + span)).unwrap().values();
            prop_assert_eq!(g.len(), n);
            prop_assert!(g.windows(2).all(|w| w[1] > w[0]));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn trajectories_stay_physical(
        k in any::<u8>(),
        gamma in 0.0f64..3.0,
        g1 in 0.0f64..2.0,
        g2 in 0.0f64..2.0,
        seed in any::<u64>(),
    ) {
        let gen = StirapGenerator::new(ConstantCouplings { g1, g2, delta: 0.0 }, &loss(k), gamma).unwrap();
        let traj = evolve_bloch(&gen, &random_pure_state(seed), (0.0, 10.0), &IntegratorConfig::default().with_samples(101)).unwrap();
        let check = traj.check();
        prop_assert!(check.max_purity <= 1.0 + 1e-9);
        prop_assert!(check.min_eigenvalue >= -1e-6);
        for o in &traj.observables {
            prop_assert!((o.p1 + o.p2 + o.p3 - 1.0).abs() < 1e-9);
        }
    }
}
