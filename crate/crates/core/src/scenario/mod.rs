//! Random systems with a prescribed eigenvalue observability index, attack
//! synthesis from fake initial states, and scenario files.

mod file;

pub use file::{IoData, SCENARIO_VERSION};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eigenspace::{eigen_decompose, observability_report, orthonormal, ObservabilityReport};
use crate::error::{Error, Result};
use crate::linalg::singular_values;
use crate::plant::{IoWindow, LtiSystem, SafetySet};

/// Attempts allowed before generation gives up.
pub const MAX_RETRIES: usize = 100;
/// Eigenvalues of generated systems are drawn from this interval.
pub const EIGEN_RANGE: (f64, f64) = (0.5, 1.2);
/// Minimum pairwise gap between generated eigenvalues.
pub const EIGEN_GAP: f64 = 0.02;
/// Largest accepted condition number of the random eigenbasis.
pub const MAX_BASIS_CONDITION: f64 = 1e3;
/// Observing sensors must see each mode with at least this normalized gain.
const MIN_OBSERVATION_GAIN: f64 = 1e-3;

/// Nominal input schedule.
#[derive(Clone, Debug, PartialEq)]
pub enum NominalInput {
    Zero,
    /// Component `k` is `amplitude * [sin τ, cos τ, -sin τ, -cos τ][k mod 4]`.
    Sinusoid {
        amplitude: f64,
    },
    /// Independent uniform draws in `[-scale, scale]`, reproducible from `seed`.
    Random {
        scale: f64,
        seed: u64,
    },
}

impl NominalInput {
    pub fn at(&self, tau: usize, m: usize) -> DVector<f64> {
        match *self {
            NominalInput::Zero => DVector::zeros(m),
            NominalInput::Sinusoid { amplitude } => {
                let (s, c) = (tau as f64).sin_cos();
                let pattern = [s, c, -s, -c];
                DVector::from_fn(m, |k, _| amplitude * pattern[k % 4])
            }
            NominalInput::Random { scale, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(tau as u64);
                DVector::from_fn(m, |_, _| rng.random_range(-scale..=scale))
            }
        }
    }
}

/// Everything needed to replay an attacked run.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub sys: LtiSystem,
    pub safety: SafetySet,
    /// Attack budget.
    pub s: usize,
    /// Eigenvalue observability index the system was built for.
    pub q: usize,
    /// Compromised sensors, ascending.
    pub attacked: Vec<usize>,
    pub fake_states: Vec<DVector<f64>>,
    /// For each entry of `attacked`, the fake state it reports.
    pub fake_assignment: Vec<usize>,
    pub x_true: DVector<f64>,
    pub u_nom: NominalInput,
    pub seed: u64,
    pub horizon: usize,
    pub gamma: f64,
    /// Receding-horizon window length.
    pub window: usize,
}

/// Parameters for [`Scenario::random`].
#[derive(Clone, Debug)]
pub struct ScenarioParams {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub s: usize,
    pub seed: u64,
    /// Make every attacked sensor observe every eigenvalue, so synchronized
    /// fake groups can pass the vote threshold in all subspaces.
    pub worst_case: bool,
    /// Attacked sensors per fake state; defaults to `q + 1 - s`.
    pub group_size: Option<usize>,
}

impl ScenarioParams {
    pub fn new(n: usize, p: usize, q: usize, s: usize, seed: u64) -> Self {
        ScenarioParams {
            n,
            p,
            q,
            s,
            seed,
            worst_case: false,
            group_size: None,
        }
    }

    pub fn worst_case(mut self, on: bool) -> Self {
        self.worst_case = on;
        self
    }

    pub fn group_size(mut self, size: usize) -> Self {
        self.group_size = Some(size);
        self
    }
}

fn uniform_vec(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0))
}

fn sample_eigenvalues(rng: &mut impl Rng, n: usize) -> Result<Vec<f64>> {
    for _ in 0..MAX_RETRIES {
        let mut vals: Vec<f64> = (0..n)
            .map(|_| rng.random_range(EIGEN_RANGE.0..=EIGEN_RANGE.1))
            .collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if vals.windows(2).all(|w| w[1] - w[0] >= EIGEN_GAP) {
            return Ok(vals);
        }
    }
    Err(Error::GenerationRetryExceeded(MAX_RETRIES))
}

/// Unit sensor rows blind to every subspace not listed in `observed[i]`: a
/// random row minus its orthogonal projection onto the stacked blind bases.
fn blind_spot_rows(rng: &mut impl Rng, bases: &[DMatrix<f64>], observed: &[Vec<bool>]) -> DMatrix<f64> {
    let n = bases[0].nrows();
    let p = observed.len();
    let mut c = DMatrix::zeros(p, n);
    for (i, obs) in observed.iter().enumerate() {
        let raw = uniform_vec(rng, n);
        let blind: Vec<&DMatrix<f64>> = bases.iter().zip(obs).filter(|(_, &o)| !o).map(|(b, _)| b).collect();
        let row = if blind.is_empty() {
            raw
        } else if blind.len() == bases.len() {
            DVector::zeros(n)
        } else {
            let q = orthonormal(&crate::linalg::hstack(&blind, n));
            &raw - &q * (q.transpose() * &raw)
        };
        let norm = row.norm();
        let row = if norm > 0.0 { row / norm } else { row };
        c.set_row(i, &row.transpose());
    }
    c
}

/// Chooses `q + 1` observers per subspace, always including `forced`.
#[allow(clippy::needless_range_loop)]
fn choose_observers(rng: &mut impl Rng, r: usize, p: usize, q: usize, forced: &[usize]) -> Vec<Vec<bool>> {
    let mut by_sensor = vec![vec![false; r]; p];
    let free: Vec<usize> = (0..p).filter(|i| !forced.contains(i)).collect();
    for &i in forced {
        by_sensor[i].fill(true);
    }
    for j in 0..r {
        for k in sample(rng, free.len(), q + 1 - forced.len()).iter() {
            by_sensor[free[k]][j] = true;
        }
    }
    by_sensor
}

fn observation_gain_ok(c: &DMatrix<f64>, bases: &[DMatrix<f64>], observed: &[Vec<bool>]) -> bool {
    observed.iter().enumerate().all(|(i, obs)| {
        let row = c.row(i);
        let norm = row.norm();
        bases.iter().zip(obs).filter(|(_, &o)| o).all(|(b, _)| {
            let gain = (row * b).norm();
            norm > 0.0 && gain / norm >= MIN_OBSERVATION_GAIN
        })
    })
}

fn validate_counts(n: usize, p: usize, q: usize, s: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    if q + 1 > p {
        return Err(Error::InvalidParameter(format!("q + 1 = {} exceeds p = {p}", q + 1)));
    }
    if s >= p {
        return Err(Error::Budget { s, p });
    }
    Ok(())
}

/// Random `(A, I, C)` with `n` distinct real eigenvalues, each observable from
/// exactly `q + 1` sensors. Sensors in `forced` observe every eigenvalue.
pub fn random_system_with(
    rng: &mut impl Rng,
    n: usize,
    p: usize,
    q: usize,
    forced: &[usize],
) -> Result<(LtiSystem, ObservabilityReport)> {
    if forced.len() > q + 1 {
        return Err(Error::InvalidParameter(format!(
            "{} forced observers exceed q + 1 = {}",
            forced.len(),
            q + 1
        )));
    }
    for _ in 0..MAX_RETRIES {
        let eigenvalues = sample_eigenvalues(rng, n)?;
        let basis = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..=1.0));
        let sv = singular_values(&basis);
        let (smax, smin) = (sv[0], sv[n - 1]);
        if smin <= 0.0 || smax / smin > MAX_BASIS_CONDITION {
            continue;
        }
        let Some(inverse) = basis.clone().try_inverse() else {
            continue;
        };
        let a = &basis * DMatrix::from_diagonal(&DVector::from_vec(eigenvalues)) * inverse;
        let columns: Vec<DMatrix<f64>> = (0..n).map(|j| basis.columns(j, 1).into_owned()).collect();
        let observed = choose_observers(rng, n, p, q, forced);
        let c = blind_spot_rows(rng, &columns, &observed);
        if !observation_gain_ok(&c, &columns, &observed) {
            continue;
        }
        let sys = LtiSystem::new(a, DMatrix::identity(n, n), c)?;
        let eig = match eigen_decompose(sys.a()) {
            Ok(e) if e.r() == n => e,
            _ => continue,
        };
        let report = observability_report_fast(&sys, &eig);
        if report.eigen_index_per_subspace.iter().all(|&qj| qj == q as i64) {
            return Ok((sys, report));
        }
    }
    Err(Error::GenerationRetryExceeded(MAX_RETRIES))
}

/// Eigen indices only; the sparse search is skipped (reported as -1, truncated).
fn observability_report_fast(sys: &LtiSystem, eig: &crate::eigenspace::EigenStructure) -> ObservabilityReport {
    let observers: Vec<Vec<bool>> = eig
        .eigenvalues
        .iter()
        .map(|&lambda| {
            (0..sys.p())
                .map(|i| crate::eigenspace::eigenvalue_observable(sys.a(), &sys.sensor_row(i), lambda))
                .collect()
        })
        .collect();
    let per: Vec<i64> = observers
        .iter()
        .map(|o| o.iter().filter(|&&b| b).count() as i64 - 1)
        .collect();
    ObservabilityReport {
        sparse_index: -1,
        eigen_index: per.iter().copied().min().unwrap_or(-1),
        eigen_index_per_subspace: per,
        observers,
        truncated: true,
    }
}

/// Random system per the generation recipe; the returned report carries the
/// full sparse-observability search.
pub fn random_system(n: usize, p: usize, q: usize, s: usize, seed: u64) -> Result<(LtiSystem, ObservabilityReport)> {
    validate_counts(n, p, q, s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sys, _) = random_system_with(&mut rng, n, p, q, &[])?;
    let eig = eigen_decompose(sys.a())?;
    let report = observability_report(&sys, &eig);
    Ok((sys, report))
}

fn assign_groups(count: usize, group: usize) -> Vec<usize> {
    (0..count).map(|k| k / group.max(1)).collect()
}

impl Scenario {
    /// Random scenario: system, attacked sensors, fake states split into
    /// groups of `group_size`, random true state and random nominal inputs.
    /// The window is `2n`, which keeps single-sensor observability matrices
    /// of eigenvalues in the generation range well conditioned.
    pub fn random(params: &ScenarioParams) -> Result<Scenario> {
        let ScenarioParams { n, p, q, s, seed, .. } = *params;
        validate_counts(n, p, q, s)?;
        if q < s {
            return Err(Error::IndexBelowBudget { q, s });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut attacked: Vec<usize> = sample(&mut rng, p, s).into_vec();
        attacked.sort_unstable();
        let forced: &[usize] = if params.worst_case { &attacked } else { &[] };
        let (sys, _) = random_system_with(&mut rng, n, p, q, forced)?;

        let x_true = uniform_vec(&mut rng, n);
        let group = params.group_size.unwrap_or(q + 1 - s).max(1);
        let fake_assignment = assign_groups(s, group);
        let fakes = fake_assignment.iter().copied().max().map_or(0, |g| g + 1);
        let mut fake_states = Vec::with_capacity(fakes);
        while fake_states.len() < fakes {
            let f = uniform_vec(&mut rng, n);
            let distinct =
                (&f - &x_true).norm() > 0.1 && fake_states.iter().all(|o: &DVector<f64>| (&f - o).norm() > 0.1);
            if distinct {
                fake_states.push(f);
            }
        }
        Ok(Scenario {
            safety: SafetySet::centered_box(n, 10.0)?,
            sys,
            s,
            q,
            attacked,
            fake_states,
            fake_assignment,
            x_true,
            u_nom: NominalInput::Random {
                scale: 1.0,
                seed: rng.random(),
            },
            seed,
            horizon: n,
            gamma: 0.5,
            window: 2 * n,
        })
    }

    /// The closed-loop setup with the fixed 4x4 unstable plant: 11 sensors,
    /// eigen index 8, five attacked sensors replaying the fake states `-1`
    /// and `2·1`, true state `1`, box `|x_k| <= 10`, sinusoidal nominal input
    /// of amplitude 4. Sensor rows are drawn from `seed`.
    pub fn closed_loop_setup(seed: u64) -> Result<Scenario> {
        let (n, p, q, s) = (4, 11, 8, 5);
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                8.0, 4.0, 0.0, 0.0, 4.0, 6.0, 2.0, 0.0, 0.0, 2.0, 5.0, 3.0, 0.0, 0.0, 3.0, 7.0,
            ],
        ) / 10.0;
        let eig = eigen_decompose(&a)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut attacked: Vec<usize> = sample(&mut rng, p, s).into_vec();
        attacked.sort_unstable();
        let mut built = None;
        for _ in 0..MAX_RETRIES {
            let observed = choose_observers(&mut rng, eig.r(), p, q, &[]);
            let c = blind_spot_rows(&mut rng, &eig.state_bases, &observed);
            if !observation_gain_ok(&c, &eig.state_bases, &observed) {
                continue;
            }
            let sys = LtiSystem::new(a.clone(), DMatrix::identity(n, n), c)?;
            let rep = observability_report_fast(&sys, &eig);
            if rep.eigen_index_per_subspace.iter().all(|&qj| qj == q as i64) {
                built = Some(sys);
                break;
            }
        }
        let sys = built.ok_or(Error::GenerationRetryExceeded(MAX_RETRIES))?;
        Ok(Scenario {
            sys,
            safety: SafetySet::centered_box(n, 10.0)?,
            s,
            q,
            attacked,
            fake_states: vec![DVector::from_element(n, -1.0), DVector::from_element(n, 2.0)],
            fake_assignment: assign_groups(s, q + 1 - s),
            x_true: DVector::from_element(n, 1.0),
            u_nom: NominalInput::Sinusoid { amplitude: 4.0 },
            seed,
            horizon: 80,
            gamma: 0.5,
            window: n,
        })
    }

    /// The checked-in closed-loop fixture.
    pub fn closed_loop_fixture() -> Scenario {
        Scenario::from_json(include_str!("../../fixtures/closed_loop.json")).expect("bundled fixture parses")
    }

    /// Verifies the attack budget and the eigen index against the system.
    pub fn verify(&self) -> Result<ObservabilityReport> {
        if self.attacked.len() > self.s {
            return Err(Error::InvalidParameter(format!(
                "{} attacked sensors exceed budget {}",
                self.attacked.len(),
                self.s
            )));
        }
        if self.fake_assignment.len() != self.attacked.len()
            || self.fake_assignment.iter().any(|&g| g >= self.fake_states.len())
        {
            return Err(Error::InvalidParameter(
                "fake assignment does not match attacked sensors".into(),
            ));
        }
        if self.attacked.iter().any(|&i| i >= self.sys.p()) {
            return Err(Error::InvalidParameter("attacked sensor index out of range".into()));
        }
        let eig = eigen_decompose(self.sys.a())?;
        let report = observability_report_fast(&self.sys, &eig);
        if report.eigen_index != self.q as i64 {
            return Err(Error::InvalidParameter(format!(
                "system has eigen index {}, scenario claims {}",
                report.eigen_index, self.q
            )));
        }
        Ok(report)
    }

    pub fn nominal(&self, tau: usize) -> DVector<f64> {
        self.u_nom.at(tau, self.sys.m())
    }

    /// Fake state reported by sensor `i`, if attacked.
    pub fn fake_for(&self, i: usize) -> Option<usize> {
        self.attacked
            .iter()
            .position(|&a| a == i)
            .map(|k| self.fake_assignment[k])
    }

    /// Open-loop record of `t` steps from `x_true` under the nominal inputs.
    /// Returns the window and the true state at its end.
    pub fn record_window(&self, t: usize) -> (IoWindow, DVector<f64>) {
        let mut attack = make_attack(self);
        let mut x = self.x_true.clone();
        let mut win = IoWindow::new(t);
        win.push_first(self.sys.c() * &x + attack.signal(&x));
        for tau in 0..t {
            let u = self.nominal(tau);
            x = self.sys.a() * &x + self.sys.b() * &u;
            attack.advance(&u);
            win.advance(u, self.sys.c() * &x + attack.signal(&x));
        }
        (win, x)
    }
}

/// Attacked sensors replay the outputs of fake trajectories driven by the
/// same inputs as the plant.
#[derive(Clone, Debug)]
pub struct FakeTrajectoryAttack {
    sys: LtiSystem,
    sources: Vec<(usize, usize)>,
    fakes: Vec<DVector<f64>>,
}

impl FakeTrajectoryAttack {
    /// `e(τ)` for the current true state.
    pub fn signal(&self, x_true: &DVector<f64>) -> DVector<f64> {
        let mut e = DVector::zeros(self.sys.p());
        for &(i, g) in &self.sources {
            let row = self.sys.c().row(i);
            e[i] = (row * &self.fakes[g])[0] - (row * x_true)[0];
        }
        e
    }

    /// Moves the fake states forward with the applied input.
    pub fn advance(&mut self, u: &DVector<f64>) {
        for f in self.fakes.iter_mut() {
            *f = self.sys.a() * &*f + self.sys.b() * u;
        }
    }

    pub fn fake_states(&self) -> &[DVector<f64>] {
        &self.fakes
    }
}

pub fn make_attack(scenario: &Scenario) -> FakeTrajectoryAttack {
    FakeTrajectoryAttack {
        sys: scenario.sys.clone(),
        sources: scenario
            .attacked
            .iter()
            .copied()
            .zip(scenario.fake_assignment.iter().copied())
            .collect(),
        fakes: scenario.fake_states.clone(),
    }
}
