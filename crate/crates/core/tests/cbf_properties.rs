mod common;

use nalgebra::DVector;
use proptest::prelude::*;
use ssrcbf::cbf::{assemble_constraint, exact_m, partial_bound_m, q_of_u, upper_bound_m, CbfGains, Provenance};
use ssrcbf::eigenspace::eigen_decompose;
use ssrcbf::plant::{project_data, stack};
use ssrcbf::qp::solve_least_deviation;
use ssrcbf::ssr::{preprocess, propagate, ssr_combine, threshold_vote};

use common::{combine_params, scenario, uniform};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tighter_bounds_cost_less(params in combine_params(), mask in any::<u32>(), u_seed in any::<u64>()) {
        let Some(sc) = scenario(&params) else { return Ok(()) };
        let (win, _) = sc.record_window(sc.window);
        let stacked = stack(&sc.sys, &win).unwrap();
        let eig = eigen_decompose(sc.sys.a()).unwrap();
        let data = project_data(&stacked, &eig).unwrap();
        let votes = threshold_vote(&preprocess(&data), sc.q, sc.s).unwrap();
        let set = ssr_combine(&votes, sc.s).unwrap();
        let gains = CbfGains::new(&sc.sys, &sc.safety, sc.gamma, win.len()).unwrap();
        let lambda: Vec<usize> = (0..votes.r()).filter(|j| mask >> j & 1 == 1).collect();

        let q = q_of_u(&win.input_vec(), &sc.sys, &gains, &sc.safety);
        let rhs = |m: DVector<f64>, prov| assemble_constraint(&m, &q, &sc.sys, &sc.safety, prov).unwrap();
        let exact = rhs(exact_m(&set, &gains).unwrap(), Provenance::Exact);
        let partial = rhs(partial_bound_m(&votes, &lambda, sc.s, &gains).unwrap(), Provenance::Partial(lambda.clone()));
        let upper = rhs(upper_bound_m(&votes, &gains).unwrap(), Provenance::Upper);
        for k in 0..exact.rhs.len() {
            let slack = 1e-8 * (1.0 + exact.rhs[k].abs());
            prop_assert!(partial.rhs[k] >= exact.rhs[k] - slack);
            prop_assert!(upper.rhs[k] >= partial.rhs[k] - slack);
        }

        let u_nom = 20.0 * uniform(u_seed, sc.sys.m(), 1).column(0).into_owned();
        let cost = |c: &ssrcbf::cbf::CbfConstraint| {
            let res = solve_least_deviation(&u_nom, &c.g, &c.rhs);
            res.is_optimal().then(|| (res.u_star - &u_nom).norm())
        };
        // Every feasible set contains the next tighter one, so infeasibility
        // can only appear further along the chain.
        let chain = [cost(&exact), cost(&partial), cost(&upper)];
        for w in chain.windows(2) {
            match (w[0], w[1]) {
                (Some(a), Some(b)) => prop_assert!(b >= a - 1e-6 * (1.0 + a)),
                (None, Some(_)) => prop_assert!(false, "looser constraint infeasible"),
                _ => {}
            }
        }
    }

    #[test]
    fn window_start_gains_match_propagated_states(params in combine_params()) {
        let Some(sc) = scenario(&params) else { return Ok(()) };
        let (win, _) = sc.record_window(sc.window);
        let stacked = stack(&sc.sys, &win).unwrap();
        let eig = eigen_decompose(sc.sys.a()).unwrap();
        let data = project_data(&stacked, &eig).unwrap();
        let set = ssr_combine(&threshold_vote(&preprocess(&data), sc.q, sc.s).unwrap(), sc.s).unwrap();
        let gains = CbfGains::new(&sc.sys, &sc.safety, sc.gamma, win.len()).unwrap();
        let inputs = win.input_vec();

        let via_gains = exact_m(&set, &gains).unwrap() + q_of_u(&inputs, &sc.sys, &gains, &sc.safety);
        let now = propagate(&set, &sc.sys, &inputs);
        let shifted = -sc.safety.g() * gains.gamma;
        for k in 0..gains.l() {
            let direct = now
                .iter()
                .map(|x| (&gains.k0 * x)[k] + shifted[k])
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((via_gains[k] - direct).abs() <= 1e-8 * (1.0 + direct.abs()),
                "row {k}: {} vs {direct}", via_gains[k]);
        }
    }
}
