mod common;

use nalgebra::DVector;
use proptest::prelude::*;
use ssrcbf::eigenspace::eigen_decompose;
use ssrcbf::plant::{project_data, stack, IoWindow};
use ssrcbf::ssr::{
    brute_force_ssr, consistent_sensors, preprocess, propagate, ssr_combine, threshold_vote, PlausibleSet,
};
use ssrcbf::tol::{EPS_LIN, EPS_VOTE};

use common::{clean_window, combine_params, scenario, uniform};

fn close(set: &PlausibleSet, x: &DVector<f64>) -> bool {
    set.contains(x, 1e-6 * (1.0 + x.norm()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn returned_states_are_sound_and_include_truth(params in combine_params()) {
        let Some(sc) = scenario(&params) else { return Ok(()) };
        let (win, _) = sc.record_window(sc.window);
        let stacked = stack(&sc.sys, &win).unwrap();
        let eig = eigen_decompose(sc.sys.a()).unwrap();
        let data = project_data(&stacked, &eig).unwrap();
        let brute = brute_force_ssr(&stacked, sc.s).unwrap();
        let combined = ssr_combine(&threshold_vote(&preprocess(&data), sc.q, sc.s).unwrap(), sc.s).unwrap();
        let need = stacked.p() - sc.s;
        for set in [&brute, &combined] {
            prop_assert!(close(set, &sc.x_true));
            for x in set.iter() {
                prop_assert!(consistent_sensors(&stacked, x) >= need);
            }
        }
    }

    #[test]
    fn larger_budget_keeps_every_state(mut params in combine_params()) {
        // With q > s every subset of p - s - 1 sensors still observes the state.
        params.q = params.q.max(params.s + 1);
        if params.q + 1 > params.p {
            return Ok(());
        }
        let Some(sc) = scenario(&params) else { return Ok(()) };
        let (win, _) = sc.record_window(sc.window);
        let stacked = stack(&sc.sys, &win).unwrap();
        let tight = brute_force_ssr(&stacked, sc.s).unwrap();
        let loose = brute_force_ssr(&stacked, sc.s + 1).unwrap();
        for x in tight.iter() {
            prop_assert!(close(&loose, x));
        }
    }

    #[test]
    fn sensor_consistency_splits_per_subspace(params in combine_params(), shift_seed in any::<u64>()) {
        let Some(sc) = scenario(&params) else { return Ok(()) };
        let (win, _) = sc.record_window(sc.window);
        let stacked = stack(&sc.sys, &win).unwrap();
        let eig = eigen_decompose(sc.sys.a()).unwrap();
        let data = project_data(&stacked, &eig).unwrap();
        let honest: Vec<usize> = (0..sc.sys.p()).filter(|i| !sc.attacked.contains(i)).collect();
        for j in 0..eig.r() {
            let basis = &eig.state_bases[j];
            let delta = basis * uniform(shift_seed.wrapping_add(j as u64), basis.ncols(), 1).column(0);
            let delta = &delta / delta.norm();
            for &i in &honest {
                let obs = &stacked.obs[i];
                let y = &stacked.y[i];
                let per_subspace = |x: &DVector<f64>| {
                    (0..eig.r()).all(|k| {
                        let xk = &eig.state_projections[k] * x;
                        data.mismatch(i, k, &xk) <= EPS_VOTE * (1.0 + data.part(i, k).norm())
                    })
                };
                prop_assert!((obs * &sc.x_true - y).norm() <= EPS_LIN * (1.0 + y.norm()));
                prop_assert!(per_subspace(&sc.x_true));
                let shifted = &sc.x_true + &delta;
                let gain = (obs * &delta).norm();
                if gain > 1e-3 {
                    prop_assert!(!per_subspace(&shifted));
                } else if gain < 1e-12 {
                    prop_assert!(per_subspace(&shifted));
                }
            }
        }
    }

    #[test]
    fn receding_window_agrees_with_propagation(params in combine_params(), x_seed in any::<u64>()) {
        let Some(sc) = scenario(&params) else { return Ok(()) };
        let (n, l) = (sc.sys.n(), sc.window);
        let x0 = uniform(x_seed, n, 1).column(0).into_owned();
        let full = clean_window(&sc.sys, &x0, l + n, x_seed);
        let inputs = full.input_vec();
        let outputs: Vec<DVector<f64>> = full.outputs().cloned().collect();
        let shift = n;
        let late = IoWindow::from_sequences(inputs[shift..].to_vec(), outputs[shift..].to_vec()).unwrap();

        let from_start = brute_force_ssr(&stack(&sc.sys, &full).unwrap(), sc.s).unwrap();
        prop_assert_eq!(from_start.len(), 1);
        let carried = propagate(&from_start, &sc.sys, &inputs[..shift]);
        let from_late = brute_force_ssr(&stack(&sc.sys, &late).unwrap(), sc.s).unwrap();
        prop_assert_eq!(from_late.len(), 1);
        let (a, b) = (&carried.states()[0], &from_late.states()[0]);
        prop_assert!((a - b).norm() <= 1e-6 * (1.0 + a.norm()), "{a} vs {b}");
    }
}
