use proptest::prelude::*;
use remmpc_core::analysis::{
    self, random_certifiable_case, random_matrix, random_pd, rng_from_seed,
};
use remmpc_core::horizon::build_stacked;
use remmpc_core::matops::{self, Vector};
use remmpc_core::model::LtiSystem;
use remmpc_core::riccati;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn penalized_gain_converges_at_rate_one(seed in any::<u64>()) {
        let case = random_certifiable_case(&mut rng_from_seed(seed)).unwrap();
        let sp = build_stacked(&case.system, &case.cost, case.cost.p_terminal(), case.horizon, 1.0, None).unwrap();
        let rep = analysis::certify_mu_limit(&sp, &[1e3, 1e4, 1e5, 1e6, 1e7]);
        prop_assert!(rep.is_ok(), "{:?}", rep);
    }

    #[test]
    fn steady_state_is_unique_and_pd(seed in any::<u64>()) {
        let case = random_certifiable_case(&mut rng_from_seed(seed)).unwrap();
        let rep = analysis::certify_pd_fixed_point(&case.system, &case.cost, case.horizon, 4, seed);
        prop_assert!(rep.is_ok(), "{:?}", rep);
    }

    #[test]
    fn steady_state_closed_loop_is_stable(seed in any::<u64>()) {
        let case = random_certifiable_case(&mut rng_from_seed(seed)).unwrap();
        let rep = analysis::certify_stability(&case.system, &case.cost, case.horizon);
        prop_assert!(rep.is_ok(), "{:?}", rep);
    }

    #[test]
    fn closed_loop_forms_agree(seed in any::<u64>(), n in 1usize..=4, m in 1usize..=2) {
        let mut rng = rng_from_seed(seed);
        let sys = LtiSystem::new(random_matrix(&mut rng, n, n), random_matrix(&mut rng, n, m)).unwrap();
        let p = random_pd(&mut rng, n);
        let r = random_pd(&mut rng, m);
        let a = riccati::predicted_closed_loop(&sys, &r, &p).unwrap();
        let b = riccati::predicted_closed_loop_inverse_form(&sys, &r, &p).unwrap();
        prop_assert!((a - b).amax() < 1e-10);
    }

    #[test]
    fn updated_weight_is_the_optimal_value(seed in any::<u64>(), log_mu in 0.0f64..8.0) {
        let mut rng = rng_from_seed(seed);
        let case = random_certifiable_case(&mut rng).unwrap();
        let sp = build_stacked(&case.system, &case.cost, case.cost.p_terminal(), case.horizon, 10f64.powf(log_mu), None).unwrap();
        let gains = riccati::gain_penalized(&sp).unwrap();
        let p_new = riccati::update_design_matrix_penalized(&sp, &gains).unwrap().p;
        let x0: Vector = random_matrix(&mut rng, case.system.n(), 1).column(0).into_owned();
        let ubar = &gains.k * &x0;
        let residual = &sp.script_b * &ubar - &sp.script_a * &x0;
        let objective = matops::weighted_sq_norm(&residual, &sp.script_h());
        let value = matops::weighted_sq_norm(&x0, &p_new);
        prop_assert!((objective - value).abs() < 1e-8 * objective.max(1.0), "{} vs {}", objective, value);
    }

    #[test]
    fn second_state_block_is_square_of_first(seed in any::<u64>()) {
        let case = random_certifiable_case(&mut rng_from_seed(seed)).unwrap();
        let opts = riccati::SteadyStateOptions { tol: 1e-13, ..Default::default() };
        let p = riccati::solve_steady_state(&case.system, &case.cost, 2, &opts).unwrap().p;
        let sp = build_stacked(&case.system, &case.cost, &p, 2, 1.0, None).unwrap();
        let g = riccati::gain_exact(&sp).unwrap();
        let n = case.system.n();
        let k1 = g.state_block(0, n);
        let k2 = g.state_block(1, n);
        prop_assert!((&k1 * &k1 - k2).amax() < 1e-9 * k1.amax().max(1.0));
    }
}
