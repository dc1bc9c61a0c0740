#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssrcbf::plant::{IoWindow, LtiSystem};
use ssrcbf::scenario::{Scenario, ScenarioParams};

/// Scenario sizes with `s <= q < 2s`, small enough for subset enumeration.
pub fn combine_params() -> impl Strategy<Value = ScenarioParams> {
    (2usize..=5, 5usize..=9, any::<u64>(), any::<bool>()).prop_flat_map(|(n, p, seed, worst)| {
        (1usize..=(p - 1).min(4)).prop_flat_map(move |s| {
            (s..=(2 * s - 1).min(p - 1)).prop_map(move |q| ScenarioParams::new(n, p, q, s, seed).worst_case(worst))
        })
    })
}

/// Generates the scenario, or `None` when the draw admits no valid system.
pub fn scenario(params: &ScenarioParams) -> Option<Scenario> {
    Scenario::random(params).ok()
}

/// `R blockdiag(..) R^-1` mixing real eigenvalues and rotation-scaling pairs.
pub fn mixed_spectrum(seed: u64, n: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = DMatrix::zeros(n, n);
    let mut k = 0;
    let mut next = 0.3;
    while k < n {
        let rho = next + rng.random_range(0.05..0.2);
        next = rho + 0.05;
        if k + 1 < n && rng.random_bool(0.5) {
            let theta: f64 = rng.random_range(0.3..2.5);
            let (s, c) = theta.sin_cos();
            d[(k, k)] = rho * c;
            d[(k, k + 1)] = -rho * s;
            d[(k + 1, k)] = rho * s;
            d[(k + 1, k + 1)] = rho * c;
            k += 2;
        } else {
            d[(k, k)] = rho;
            k += 1;
        }
    }
    loop {
        let r = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..=1.0));
        let sv = r.singular_values();
        if sv.min() > 1e-2 * sv.max() {
            let inv = r.clone().try_inverse().expect("well conditioned");
            return &r * d * inv;
        }
    }
}

/// Uniform `(-1, 1)` matrix from a seed.
pub fn uniform(seed: u64, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0))
}

/// Attack-free record of `t` steps from `x0` with seeded inputs.
pub fn clean_window(sys: &LtiSystem, x0: &DVector<f64>, t: usize, seed: u64) -> IoWindow {
    let inputs: Vec<DVector<f64>> = (0..t)
        .map(|k| uniform(seed.wrapping_add(k as u64), sys.m(), 1).column(0).into_owned())
        .collect();
    let mut x = x0.clone();
    let mut outputs = vec![sys.c() * &x];
    for u in &inputs {
        x = sys.a() * &x + sys.b() * u;
        outputs.push(sys.c() * &x);
    }
    IoWindow::from_sequences(inputs, outputs).expect("consistent lengths")
}
