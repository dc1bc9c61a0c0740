mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use ssrcbf::eigenspace::{eigen_decompose, observability_report};
use ssrcbf::plant::LtiSystem;
use ssrcbf::tol::EPS_LIN;

use common::{mixed_spectrum, uniform};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn projections_resolve_identity(seed in any::<u64>(), n in 2usize..=7, xs in prop::collection::vec(-10.0f64..10.0, 7)) {
        let a = mixed_spectrum(seed, n);
        let eig = eigen_decompose(&a).unwrap();
        let x = DVector::from_column_slice(&xs[..n]);
        let sum = eig.split(&x).into_iter().fold(DVector::zeros(n), |acc, v| acc + v);
        prop_assert!((sum - &x).norm() <= EPS_LIN * x.norm().max(1.0));
        prop_assert_eq!(eig.dims().iter().sum::<usize>(), n);
    }

    #[test]
    fn projections_are_orthogonal_idempotents(seed in any::<u64>(), n in 2usize..=7) {
        let a = mixed_spectrum(seed, n);
        let eig = eigen_decompose(&a).unwrap();
        let ps = &eig.state_projections;
        for (j, pj) in ps.iter().enumerate() {
            prop_assert!((pj * pj - pj).norm() <= EPS_LIN);
            for (k, pk) in ps.iter().enumerate() {
                if j != k {
                    prop_assert!((pj * pk).norm() <= EPS_LIN);
                }
            }
        }
    }

    #[test]
    fn state_bases_are_invariant(seed in any::<u64>(), n in 2usize..=7) {
        let a = mixed_spectrum(seed, n);
        let eig = eigen_decompose(&a).unwrap();
        for (basis, proj) in eig.state_bases.iter().zip(&eig.state_projections) {
            let image = &a * basis;
            let leak = &image - proj * &image;
            prop_assert!(leak.norm() <= EPS_LIN * (1.0 + a.norm()) * basis.norm());
        }
    }

    #[test]
    fn projections_commute_with_a(seed in any::<u64>(), n in 2usize..=7) {
        let a = mixed_spectrum(seed, n);
        let eig = eigen_decompose(&a).unwrap();
        for p in &eig.state_projections {
            prop_assert!((&a * p - p * &a).norm() <= EPS_LIN * (1.0 + a.norm()));
        }
    }

    #[test]
    fn eigenvalue_index_bounds_sparse_index(seed in any::<u64>(), n in 2usize..=5, p in 2usize..=7, blind in 0usize..3) {
        let a = mixed_spectrum(seed, n);
        let mut c = uniform(seed ^ 0x5eed, p, n);
        // Zero a few entries so some sensors miss some modes.
        for i in 0..blind.min(p) {
            c.row_mut(i).iter_mut().skip(1).for_each(|v| *v = 0.0);
        }
        let sys = LtiSystem::new(a, DMatrix::identity(n, n), c).unwrap();
        let eig = eigen_decompose(sys.a()).unwrap();
        let report = observability_report(&sys, &eig);
        if !report.truncated && report.eigen_index >= 0 {
            prop_assert!(report.sparse_index >= report.eigen_index,
                "sparse {} < eigen {}", report.sparse_index, report.eigen_index);
        }
    }
}
