//! Control barrier function conditions `H B u >= M + Q(U)` for a polytopic
//! safe set, with the worst case `M` taken exactly over a plausible set or
//! bounded from the per-subspace vote sets.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::mat_pow;
use crate::plant::{LtiSystem, SafetySet};
use crate::qp::{solve_least_deviation, QpStatus};
use crate::ssr::{for_each_combination, Candidate, PlausibleSet, SensorSet, SubspaceVoteSet};

/// `K0 = H((1 - γ)I - A)` and `K = K0 A^t` for a window of length `t`.
#[derive(Clone, Debug)]
pub struct CbfGains {
    pub gamma: f64,
    pub k0: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub t: usize,
}

impl CbfGains {
    pub fn new(sys: &LtiSystem, safety: &SafetySet, gamma: f64, t: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!("gamma = {gamma} outside (0, 1]")));
        }
        if safety.h().ncols() != sys.n() {
            return Err(Error::Dimension("H and A disagree on n".into()));
        }
        let n = sys.n();
        let k0 = safety.h() * (DMatrix::identity(n, n) * (1.0 - gamma) - sys.a());
        let k = &k0 * mat_pow(sys.a(), t);
        Ok(CbfGains { gamma, k0, k, t })
    }

    /// Gains for another window length, reusing `K0`.
    pub fn with_window(&self, sys: &LtiSystem, t: usize) -> Self {
        CbfGains {
            gamma: self.gamma,
            k0: self.k0.clone(),
            k: &self.k0 * mat_pow(sys.a(), t),
            t,
        }
    }

    pub fn l(&self) -> usize {
        self.k.nrows()
    }
}

fn rowwise_max<'a>(l: usize, vals: impl Iterator<Item = DVector<f64>> + 'a) -> Option<DVector<f64>> {
    let mut out: Option<DVector<f64>> = None;
    for v in vals {
        match &mut out {
            None => out = Some(v),
            Some(acc) => {
                for k in 0..l {
                    acc[k] = acc[k].max(v[k]);
                }
            }
        }
    }
    out
}

/// `[M(Y)]_k = max_{x ∈ X} [K x]_k` over window-start plausible states.
pub fn exact_m(set: &PlausibleSet, gains: &CbfGains) -> Result<DVector<f64>> {
    rowwise_max(gains.l(), set.iter().map(|x| &gains.k * x)).ok_or(Error::EmptySet)
}

/// `Q(U) = K0 (A^{t-1} B u(0) + .. + B u(t-1)) - γ g`.
pub fn q_of_u(inputs: &[DVector<f64>], sys: &LtiSystem, gains: &CbfGains, safety: &SafetySet) -> DVector<f64> {
    let mut response = DVector::zeros(sys.n());
    for u in inputs {
        response = sys.a() * response + sys.b() * u;
    }
    &gains.k0 * response - safety.g() * gains.gamma
}

/// `M_j`: row-wise maxima of `K x_j` over the candidates of each subspace.
pub fn subspace_maxima(votes: &SubspaceVoteSet, gains: &CbfGains) -> Result<Vec<DVector<f64>>> {
    votes
        .subspaces
        .iter()
        .enumerate()
        .map(|(j, cands)| {
            rowwise_max(gains.l(), cands.iter().map(|c| &gains.k * &c.state)).ok_or(Error::EmptySubspace(j))
        })
        .collect()
}

/// `M̄ = Σ_j M_j`, an upper bound on `M(Y)` that needs no combination scan.
pub fn upper_bound_m(votes: &SubspaceVoteSet, gains: &CbfGains) -> Result<DVector<f64>> {
    let maxima = subspace_maxima(votes, gains)?;
    let mut total = DVector::zeros(gains.l());
    for m in &maxima {
        total += m;
    }
    Ok(total)
}

/// `M̄_Λ`: exact combination filtering over the subspaces in `lambda`, the
/// per-subspace maxima elsewhere.
pub fn partial_bound_m(votes: &SubspaceVoteSet, lambda: &[usize], s: usize, gains: &CbfGains) -> Result<DVector<f64>> {
    let r = votes.r();
    let mut in_lambda = vec![false; r];
    for &j in lambda {
        if j >= r {
            return Err(Error::InvalidParameter(format!("subspace {j} not in 0..{r}")));
        }
        in_lambda[j] = true;
    }
    let maxima = subspace_maxima(votes, gains)?;
    let groups: Vec<&[Candidate]> = (0..r)
        .filter(|&j| in_lambda[j])
        .map(|j| votes.subspaces[j].as_slice())
        .collect();
    let l = gains.l();
    let mut best: Option<DVector<f64>> = None;
    for_each_combination(&groups, |pick| {
        let union = pick
            .iter()
            .zip(&groups)
            .fold(SensorSet::empty(), |acc, (&k, g)| acc.union(g[k].disagreeing));
        if union.len() > s {
            return;
        }
        let mut x = DVector::zeros(gains.k.ncols());
        for (&k, g) in pick.iter().zip(&groups) {
            x += &g[k].state;
        }
        let kx = &gains.k * x;
        match &mut best {
            None => best = Some(kx),
            Some(acc) => {
                for row in 0..l {
                    acc[row] = acc[row].max(kx[row]);
                }
            }
        }
    });
    let m_lambda = best.ok_or(Error::NoPlausibleState)?;
    let mut total = DVector::zeros(l);
    for (j, m) in maxima.iter().enumerate() {
        if !in_lambda[j] {
            total += m;
        }
    }
    Ok(total + m_lambda)
}

/// The `ceil(r/2)` subspaces with the most candidates (lower index first on
/// ties), returned in ascending order.
pub fn default_lambda(votes: &SubspaceVoteSet) -> Vec<usize> {
    let r = votes.r();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| votes.subspaces[b].len().cmp(&votes.subspaces[a].len()).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = order.into_iter().take(r.div_ceil(2)).collect();
    chosen.sort_unstable();
    chosen
}

/// Which worst-case value produced a constraint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Provenance {
    Exact,
    Upper,
    Partial(Vec<usize>),
}

/// Linear condition `G u >= rhs` with `G = H B`.
#[derive(Clone, Debug)]
pub struct CbfConstraint {
    pub g: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub provenance: Provenance,
}

pub fn assemble_constraint(
    m_value: &DVector<f64>,
    q_value: &DVector<f64>,
    sys: &LtiSystem,
    safety: &SafetySet,
    provenance: Provenance,
) -> Result<CbfConstraint> {
    let l = safety.l();
    if m_value.len() != l || q_value.len() != l || safety.h().ncols() != sys.n() {
        return Err(Error::Dimension(format!(
            "constraint rows: M has {}, Q has {}, H has {l}",
            m_value.len(),
            q_value.len()
        )));
    }
    Ok(CbfConstraint {
        g: safety.h() * sys.b(),
        rhs: m_value + q_value,
        provenance,
    })
}

/// Barrier values at a state.
#[derive(Clone, Debug)]
pub struct SafetyEval {
    /// `h(x) = H x + g`.
    pub h: DVector<f64>,
    pub min: f64,
    pub inside: bool,
    /// Euclidean distance from `x` to the safe set.
    pub distance: f64,
}

pub fn h_eval(safety: &SafetySet, x: &DVector<f64>) -> SafetyEval {
    let h = safety.h() * x + safety.g();
    let min = h.min();
    let inside = min >= 0.0;
    let distance = if inside {
        0.0
    } else {
        let neg_g = -safety.g();
        let proj = solve_least_deviation(x, safety.h(), &neg_g);
        match proj.status {
            QpStatus::Optimal => (&proj.u_star - x).norm(),
            _ => f64::INFINITY,
        }
    };
    SafetyEval {
        h,
        min,
        inside,
        distance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn setup() -> (LtiSystem, SafetySet) {
        let a = dmatrix![0.9, 0.1; 0.0, 1.1];
        let sys = LtiSystem::new(a, DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
        (sys, SafetySet::centered_box(2, 10.0).unwrap())
    }

    fn cand(x: DVector<f64>, dis: &[usize]) -> Candidate {
        Candidate {
            state: x,
            supporters: vec![],
            disagreeing: dis.iter().copied().collect(),
        }
    }

    #[test]
    fn gamma_must_be_in_unit_interval() {
        let (sys, safety) = setup();
        assert!(CbfGains::new(&sys, &safety, 0.0, 2).is_err());
        assert!(CbfGains::new(&sys, &safety, 1.5, 2).is_err());
        assert!(CbfGains::new(&sys, &safety, 1.0, 2).is_ok());
    }

    #[test]
    fn exact_m_singleton_and_symmetric_pair() {
        let (sys, safety) = setup();
        let gains = CbfGains::new(&sys, &safety, 0.5, 2).unwrap();
        let x = dvector![1.0, -2.0];
        let m = exact_m(&PlausibleSet::singleton(x.clone()), &gains).unwrap();
        assert!((m - &gains.k * &x).norm() < 1e-15);
        let pair: PlausibleSet = vec![x.clone(), -x.clone()].into_iter().collect();
        let m = exact_m(&pair, &gains).unwrap();
        assert!((m - (&gains.k * &x).abs()).norm() < 1e-15);
        assert!(matches!(exact_m(&PlausibleSet::new(), &gains), Err(Error::EmptySet)));
    }

    #[test]
    fn q_of_u_cases() {
        let (sys, safety) = setup();
        let gains = CbfGains::new(&sys, &safety, 0.5, 1).unwrap();
        let q = q_of_u(&[DVector::zeros(2)], &sys, &gains, &safety);
        assert!((q + safety.g() * 0.5).norm() < 1e-15);
        let u0 = dvector![0.3, -0.7];
        let q = q_of_u(std::slice::from_ref(&u0), &sys, &gains, &safety);
        let expected = &gains.k0 * sys.b() * &u0 - safety.g() * 0.5;
        assert!((q - expected).norm() < 1e-15);
    }

    #[test]
    fn bounds_on_single_candidate_per_subspace_are_exact() {
        let (sys, safety) = setup();
        let gains = CbfGains::new(&sys, &safety, 0.5, 2).unwrap();
        let votes = SubspaceVoteSet {
            subspaces: vec![vec![cand(dvector![1.0, 0.0], &[])], vec![cand(dvector![0.0, 2.0], &[])]],
            s: 1,
        };
        let exact = exact_m(&PlausibleSet::singleton(dvector![1.0, 2.0]), &gains).unwrap();
        let upper = upper_bound_m(&votes, &gains).unwrap();
        assert!((&upper - &exact).norm() < 1e-14);
        assert_eq!(partial_bound_m(&votes, &[], 1, &gains).unwrap(), upper);
    }

    #[test]
    fn diagonal_combinations_make_upper_bound_strict() {
        let (sys, safety) = setup();
        let gains = CbfGains::new(&sys, &safety, 0.5, 2).unwrap();
        // only (1, -1) and (-1, 1) fit a budget of one sensor
        let votes = SubspaceVoteSet {
            subspaces: vec![
                vec![cand(dvector![1.0, 0.0], &[0]), cand(dvector![-1.0, 0.0], &[1])],
                vec![cand(dvector![0.0, -1.0], &[0]), cand(dvector![0.0, 1.0], &[1])],
            ],
            s: 1,
        };
        let exact_set = crate::ssr::ssr_combine(&votes, 1).unwrap();
        assert_eq!(exact_set.len(), 2);
        let exact = exact_m(&exact_set, &gains).unwrap();
        let upper = upper_bound_m(&votes, &gains).unwrap();
        let full = partial_bound_m(&votes, &[0, 1], 1, &gains).unwrap();
        assert!((&full - &exact).norm() < 1e-14);
        assert!(upper.iter().zip(exact.iter()).all(|(u, e)| *u >= *e - 1e-12));
        assert!(upper.iter().zip(exact.iter()).any(|(u, e)| *u > *e + 1e-6));
    }

    #[test]
    fn default_lambda_prefers_ambiguous_subspaces() {
        let c = |v: f64| cand(dvector![v], &[]);
        let votes = SubspaceVoteSet {
            subspaces: vec![
                vec![c(1.0)],
                vec![c(1.0), c(2.0)],
                vec![c(1.0)],
                vec![c(1.0), c(2.0), c(3.0)],
            ],
            s: 1,
        };
        assert_eq!(default_lambda(&votes), vec![1, 3]);
        let votes = SubspaceVoteSet {
            subspaces: vec![vec![c(1.0)], vec![c(1.0)], vec![c(1.0)]],
            s: 1,
        };
        assert_eq!(default_lambda(&votes), vec![0, 1]);
    }

    #[test]
    fn constraint_assembly() {
        let (sys, safety) = setup();
        let zero = DVector::zeros(4);
        let c = assemble_constraint(&zero, &zero, &sys, &safety, Provenance::Exact).unwrap();
        assert_eq!(c.rhs, zero);
        assert_eq!(c.g, safety.h() * sys.b());
        assert!(assemble_constraint(&DVector::zeros(3), &zero, &sys, &safety, Provenance::Upper).is_err());
    }

    #[test]
    fn h_eval_inside_and_box_distance() {
        let safety = SafetySet::centered_box(3, 10.0).unwrap();
        let e = h_eval(&safety, &DVector::zeros(3));
        assert!(e.inside);
        assert_eq!(e.h, DVector::from_element(6, 10.0));
        let e = h_eval(&safety, &dvector![11.0, 0.0, 0.0]);
        assert!(!e.inside);
        assert!((e.distance - 1.0).abs() < 1e-10);
        assert!((e.min + 1.0).abs() < 1e-15);
    }
}
