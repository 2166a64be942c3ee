use proptest::prelude::*;
use remmpc_core::analysis::{self, random_lse_problem, random_matrix, rng_from_seed};
use remmpc_core::pls::{self, WlsOptions};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn penalty_error_decays_like_inverse_mu(seed in any::<u64>()) {
        let p = random_lse_problem(&mut rng_from_seed(seed)).unwrap();
        let rep = analysis::certify_lse_mu_limit(&p, &[1e2, 1e4, 1e6]);
        prop_assert!(rep.is_ok(), "{:?}", rep);
    }

    #[test]
    fn wls_solution_is_a_minimum(seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let lse = random_lse_problem(&mut rng).unwrap();
        let p = lse.base;
        let eta = pls::solve_wls(&p, &WlsOptions::default()).unwrap();
        let best = p.objective(&eta);
        let normal = pls::solve_wls_normal(&p).unwrap();
        prop_assert!((&eta - &normal).amax() < 1e-8 * eta.amax().max(1.0));
        for _ in 0..10 {
            let delta = random_matrix(&mut rng, eta.len(), 1).column(0).into_owned() * 1e-6;
            prop_assert!(p.objective(&(&eta + &delta)) >= best - 1e-14 * best.max(1.0));
        }
    }

    #[test]
    fn exact_lse_is_feasible(seed in any::<u64>()) {
        let p = random_lse_problem(&mut rng_from_seed(seed)).unwrap();
        let eta = pls::solve_lse_exact(&p, &WlsOptions::default()).unwrap();
        prop_assert!((&p.f * &eta - &p.phi).amax() < 1e-9);
    }
}
