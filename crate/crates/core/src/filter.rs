//! Receding-horizon safety filter and closed-loop simulation.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;

use crate::cbf::{
    assemble_constraint, default_lambda, exact_m, h_eval, partial_bound_m, q_of_u, upper_bound_m, CbfGains, Provenance,
};
use crate::eigenspace::{eigen_decompose, EigenStructure};
use crate::error::{Error, Result};
use crate::plant::{observability_matrices, stack, IoWindow, LtiSystem, SafetySet, SubspaceProjector};
use crate::qp::{solve_least_deviation, QpStatus};
use crate::scenario::{make_attack, Scenario};
use crate::ssr::{brute_force_ssr, preprocess, ssr_combine, threshold_vote};

/// How the filter obtains the worst case of the CBF condition.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Apply the nominal input unfiltered.
    Nominal,
    /// Subset enumeration, then the exact maximum.
    BruteForce,
    /// Eigenspace reconstruction, then the exact maximum.
    DecompSsr,
    /// Sum of per-subspace maxima.
    UpperBound,
    /// Combination filtering over the given subspaces; `None` picks the half
    /// with the most candidates.
    Partial(Option<Vec<usize>>),
}

impl Method {
    pub const FILTERS: [Method; 4] = [
        Method::BruteForce,
        Method::DecompSsr,
        Method::UpperBound,
        Method::Partial(None),
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Nominal => "nominal",
            Method::BruteForce => "brute",
            Method::DecompSsr => "decomp-ssr",
            Method::UpperBound => "upper-bound",
            Method::Partial(_) => "partial",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Partial(Some(l)) => {
                let list: Vec<String> = l.iter().map(|j| j.to_string()).collect();
                write!(f, "partial:{}", list.join(","))
            }
            m => f.write_str(m.name()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts `nominal`, `brute`, `decomp-ssr`, `upper-bound`, `partial`, or
    /// `partial:0,2` for an explicit subspace list.
    fn from_str(s: &str) -> Result<Method> {
        Ok(match s {
            "nominal" => Method::Nominal,
            "brute" => Method::BruteForce,
            "decomp-ssr" => Method::DecompSsr,
            "upper-bound" => Method::UpperBound,
            "partial" => Method::Partial(None),
            other => {
                let list = other
                    .strip_prefix("partial:")
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown method `{other}`")))?;
                let lambda = if list.is_empty() {
                    Vec::new()
                } else {
                    list.split(',')
                        .map(|j| {
                            j.trim()
                                .parse::<usize>()
                                .map_err(|_| Error::InvalidParameter(format!("bad subspace index `{j}`")))
                        })
                        .collect::<Result<Vec<_>>>()?
                };
                Method::Partial(Some(lambda))
            }
        })
    }
}

/// One filter evaluation.
#[derive(Clone, Debug)]
pub struct FilterOutput {
    pub u: DVector<f64>,
    /// Number of plausible states (exact methods) or candidate combinations
    /// (bound methods); `None` when unfiltered.
    pub set_size: Option<u128>,
    /// Wall time of reconstruction and worst-case evaluation, excluding the QP.
    pub seconds: f64,
}

/// Stateful filter: caches eigenstructure, per-window projectors and gains.
pub struct SafetyFilter {
    sys: LtiSystem,
    safety: SafetySet,
    eig: EigenStructure,
    s: usize,
    q: usize,
    gamma: f64,
    projectors: HashMap<usize, Arc<SubspaceProjector>>,
    gains: HashMap<usize, CbfGains>,
}

impl SafetyFilter {
    pub fn new(sys: &LtiSystem, safety: &SafetySet, s: usize, q: usize, gamma: f64) -> Result<Self> {
        let eig = eigen_decompose(sys.a())?;
        CbfGains::new(sys, safety, gamma, 0)?;
        Ok(SafetyFilter {
            sys: sys.clone(),
            safety: safety.clone(),
            eig,
            s,
            q,
            gamma,
            projectors: HashMap::new(),
            gains: HashMap::new(),
        })
    }

    pub fn for_scenario(sc: &Scenario) -> Result<Self> {
        Self::new(&sc.sys, &sc.safety, sc.s, sc.q, sc.gamma)
    }

    /// Smallest window length the reconstruction accepts.
    pub fn min_window(&self) -> usize {
        self.sys.n().saturating_sub(1)
    }

    fn projector(&mut self, t: usize) -> Result<Arc<SubspaceProjector>> {
        if let Some(p) = self.projectors.get(&t) {
            return Ok(p.clone());
        }
        let proj = Arc::new(SubspaceProjector::new(
            &observability_matrices(&self.sys, t),
            &self.eig,
        )?);
        self.projectors.insert(t, proj.clone());
        Ok(proj)
    }

    fn gains(&mut self, t: usize) -> Result<CbfGains> {
        if let Some(g) = self.gains.get(&t) {
            return Ok(g.clone());
        }
        let g = CbfGains::new(&self.sys, &self.safety, self.gamma, t)?;
        self.gains.insert(t, g.clone());
        Ok(g)
    }

    /// Filters `u_nom` given the current window.
    pub fn evaluate(&mut self, method: &Method, win: &IoWindow, u_nom: &DVector<f64>) -> Result<FilterOutput> {
        if *method == Method::Nominal {
            return Ok(FilterOutput {
                u: u_nom.clone(),
                set_size: None,
                seconds: 0.0,
            });
        }
        let t = win.len();
        let gains = self.gains(t)?;
        let projector = match method {
            Method::BruteForce => None,
            _ => Some(self.projector(t)?),
        };
        let started = Instant::now();
        let stacked = stack(&self.sys, win)?;
        let (m_value, set_size, provenance) = match method {
            Method::BruteForce => {
                let set = brute_force_ssr(&stacked, self.s)?;
                (exact_m(&set, &gains)?, set.len() as u128, Provenance::Exact)
            }
            _ => {
                let data = projector
                    .expect("decomposition methods build a projector")
                    .project(&stacked)?;
                let idx = preprocess(&data);
                let votes = threshold_vote(&idx, self.q, self.s)?;
                match method {
                    Method::DecompSsr => {
                        let set = ssr_combine(&votes, self.s)?;
                        (exact_m(&set, &gains)?, set.len() as u128, Provenance::Exact)
                    }
                    Method::UpperBound => (
                        upper_bound_m(&votes, &gains)?,
                        votes.combination_count(),
                        Provenance::Upper,
                    ),
                    Method::Partial(lambda) => {
                        let lambda = lambda.clone().unwrap_or_else(|| default_lambda(&votes));
                        let m = partial_bound_m(&votes, &lambda, self.s, &gains)?;
                        (m, votes.combination_count(), Provenance::Partial(lambda))
                    }
                    Method::Nominal | Method::BruteForce => unreachable!(),
                }
            }
        };
        let seconds = started.elapsed().as_secs_f64();
        let q_value = q_of_u(&win.input_vec(), &self.sys, &gains, &self.safety);
        let constraint = assemble_constraint(&m_value, &q_value, &self.sys, &self.safety, provenance)?;
        let qp = solve_least_deviation(u_nom, &constraint.g, &constraint.rhs);
        match qp.status {
            QpStatus::Optimal => Ok(FilterOutput {
                u: qp.u_star,
                set_size: Some(set_size),
                seconds,
            }),
            QpStatus::Infeasible | QpStatus::IterationLimit => Err(Error::Infeasible),
        }
    }
}

/// Per-step record of a closed-loop run.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub tau: usize,
    /// State at `tau`, before the input is applied.
    pub x: DVector<f64>,
    pub h_min: f64,
    pub u: DVector<f64>,
    pub u_nom: DVector<f64>,
    pub cost: f64,
    pub set_size: Option<u128>,
    pub seconds: f64,
    /// Whether the filter ran at this step; false for warm-up and nominal steps.
    pub filtered: bool,
}

/// Where a run stopped early.
#[derive(Debug)]
pub struct Failure {
    pub tau: usize,
    pub error: Error,
}

#[derive(Debug)]
pub struct Trajectory {
    pub method: Method,
    pub steps: Vec<StepRecord>,
    /// State after the last recorded step.
    pub final_state: DVector<f64>,
    pub failure: Option<Failure>,
}

impl Trajectory {
    /// All states `x(0), .., x(T)`.
    pub fn states(&self) -> Vec<DVector<f64>> {
        let mut xs: Vec<DVector<f64>> = self.steps.iter().map(|s| s.x.clone()).collect();
        xs.push(self.final_state.clone());
        xs
    }
}

/// Closed-loop run of `horizon` steps. The first `n - 1` steps are a warm-up
/// with zero input for every method, nominal included, while the window
/// fills. After that the nominal input `u_nom(τ)` is filtered with a window
/// of `min(τ, window)`.
pub fn simulate(sc: &Scenario, method: &Method, horizon: usize) -> Result<Trajectory> {
    let mut filter = SafetyFilter::for_scenario(sc)?;
    simulate_with(sc, method, horizon, &mut filter, |_, _, _| {})
}

/// [`simulate`] with a shared filter and a hook that sees every step's
/// window and nominal input before the input is chosen.
pub fn simulate_with(
    sc: &Scenario,
    method: &Method,
    horizon: usize,
    filter: &mut SafetyFilter,
    mut hook: impl FnMut(usize, &IoWindow, &DVector<f64>),
) -> Result<Trajectory> {
    if sc.window == 0 {
        return Err(Error::InvalidParameter("window must be positive".into()));
    }
    let sys = &sc.sys;
    let mut attack = make_attack(sc);
    let mut x = sc.x_true.clone();
    let mut win = IoWindow::new(sc.window);
    win.push_first(sys.c() * &x + attack.signal(&x));
    let mut steps = Vec::with_capacity(horizon);
    let mut failure = None;
    for tau in 0..horizon {
        let warm = win.len() < filter.min_window();
        let u_nom = if warm { DVector::zeros(sys.m()) } else { sc.nominal(tau) };
        let filtered = *method != Method::Nominal && !warm;
        hook(tau, &win, &u_nom);
        let out = if filtered {
            match filter.evaluate(method, &win, &u_nom) {
                Ok(o) => o,
                Err(error) => {
                    failure = Some(Failure { tau, error });
                    break;
                }
            }
        } else {
            FilterOutput {
                u: u_nom.clone(),
                set_size: None,
                seconds: 0.0,
            }
        };
        steps.push(StepRecord {
            tau,
            h_min: h_eval(&sc.safety, &x).min,
            x: x.clone(),
            cost: (&out.u - &u_nom).norm(),
            u: out.u.clone(),
            u_nom,
            set_size: out.set_size,
            seconds: out.seconds,
            filtered,
        });
        x = sys.a() * &x + sys.b() * &out.u;
        attack.advance(&out.u);
        win.advance(out.u, sys.c() * &x + attack.signal(&x));
    }
    Ok(Trajectory {
        method: method.clone(),
        steps,
        final_state: x,
        failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{NominalInput, ScenarioParams};

    #[test]
    fn method_names_round_trip() {
        for m in [
            Method::Nominal,
            Method::BruteForce,
            Method::DecompSsr,
            Method::UpperBound,
            Method::Partial(None),
            Method::Partial(Some(vec![0, 2])),
            Method::Partial(Some(vec![])),
        ] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("best".parse::<Method>().is_err());
        assert!("partial:x".parse::<Method>().is_err());
    }

    #[test]
    fn nominal_run_follows_open_loop() {
        let mut sc = Scenario::random(&ScenarioParams::new(3, 6, 3, 2, 2)).unwrap();
        sc.u_nom = NominalInput::Zero;
        let traj = simulate(&sc, &Method::Nominal, 5).unwrap();
        let mut x = sc.x_true.clone();
        for step in &traj.steps {
            assert_eq!(step.x, x);
            assert_eq!(step.cost, 0.0);
            x = sc.sys.a() * x;
        }
        assert_eq!(traj.final_state, x);
    }

    #[test]
    fn exact_filters_agree_on_small_scenario() {
        let sc = Scenario::random(&ScenarioParams::new(3, 6, 3, 2, 17).worst_case(true)).unwrap();
        let a = simulate(&sc, &Method::BruteForce, 12).unwrap();
        let b = simulate(&sc, &Method::DecompSsr, 12).unwrap();
        assert!(a.failure.is_none() && b.failure.is_none());
        for (sa, sb) in a.steps.iter().zip(&b.steps) {
            assert!((&sa.u - &sb.u).norm() < 1e-6);
            assert_eq!(sa.set_size, sb.set_size);
        }
    }

    #[test]
    fn warm_up_lasts_n_minus_one_steps() {
        let sc = Scenario::random(&ScenarioParams::new(3, 6, 3, 2, 5)).unwrap();
        let traj = simulate(&sc, &Method::UpperBound, 6).unwrap();
        let first = traj.steps.iter().position(|s| s.filtered).unwrap();
        assert_eq!(first, 2);
        assert!(traj.steps[..2].iter().all(|s| s.u.norm() == 0.0));
        let nominal = simulate(&sc, &Method::Nominal, 6).unwrap();
        assert_eq!(nominal.steps[2].u, sc.nominal(2));
    }
}
