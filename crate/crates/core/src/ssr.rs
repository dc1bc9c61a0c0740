//! Secure state reconstruction.
//!
//! Two routes produce the set of plausible window-start states:
//!
//! * [`brute_force_ssr`] solves the stacked equations jointly for every
//!   subset of `p - s` sensors;
//! * the decomposition route runs [`preprocess`] (one local solve per
//!   observable sensor/subspace pair), [`threshold_vote`] (clusters with at
//!   least `q + 1 - s` votes plus their disagreeing sensors) and then either
//!   [`ssr_majority`] when `q >= 2s` or [`ssr_combine`] in the severe regime.
//!
//! [`propagate`] maps window-start states to the current time.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use crate::eigenspace::Combinations;
use crate::error::{Error, Result};
use crate::linalg::{vstack, vstack_vec};
use crate::plant::{LtiSystem, StackedData, SubspaceData};
use crate::tol::{EPS_JOINT_RES, EPS_RANK, EPS_RES, EPS_VOTE};

/// Sensor index set backed by a 128-bit mask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct SensorSet(u128);

impl SensorSet {
    pub const MAX_SENSORS: usize = 128;

    pub fn empty() -> Self {
        SensorSet(0)
    }

    pub fn insert(&mut self, i: usize) {
        self.0 |= 1u128 << i;
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn union(self, other: SensorSet) -> SensorSet {
        SensorSet(self.0 | other.0)
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..Self::MAX_SENSORS).filter(move |&i| self.contains(i))
    }
}

impl FromIterator<usize> for SensorSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = SensorSet::empty();
        for i in iter {
            s.insert(i);
        }
        s
    }
}

fn same_state(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    (a - b).norm() <= EPS_VOTE * (1.0 + a.norm().max(b.norm()))
}

fn lexicographic(a: &DVector<f64>, b: &DVector<f64>) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

/// Finite set of states, deduplicated at the vote tolerance.
#[derive(Clone, Debug, Default)]
pub struct PlausibleSet {
    states: Vec<DVector<f64>>,
}

impl PlausibleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn singleton(x: DVector<f64>) -> Self {
        PlausibleSet { states: vec![x] }
    }

    /// Adds `x` unless an equal state (at the vote tolerance) is present.
    pub fn insert(&mut self, x: DVector<f64>) -> bool {
        if self.states.iter().any(|s| same_state(s, &x)) {
            return false;
        }
        self.states.push(x);
        true
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn iter(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.states.iter()
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.states.iter().any(|s| (s - x).norm() <= tol)
    }

    /// Set equality up to `tol` in each direction.
    pub fn matches(&self, other: &PlausibleSet, tol: f64) -> bool {
        self.len() == other.len()
            && self.states.iter().all(|s| other.contains(s, tol))
            && other.states.iter().all(|s| self.contains(s, tol))
    }

    fn sorted(mut self) -> Self {
        self.states.sort_by(lexicographic);
        self
    }
}

impl FromIterator<DVector<f64>> for PlausibleSet {
    fn from_iter<I: IntoIterator<Item = DVector<f64>>>(iter: I) -> Self {
        let mut set = PlausibleSet::new();
        for x in iter {
            set.insert(x);
        }
        set.sorted()
    }
}

fn check_budget(p: usize, s: usize) -> Result<()> {
    if s >= p {
        return Err(Error::Budget { s, p });
    }
    if p > SensorSet::MAX_SENSORS {
        return Err(Error::TooManySensors {
            p,
            max: SensorSet::MAX_SENSORS,
        });
    }
    Ok(())
}

/// Plausible window-start states by enumerating every subset of `p - s`
/// sensors assumed intact.
pub fn brute_force_ssr(stacked: &StackedData, s: usize) -> Result<PlausibleSet> {
    let (p, n) = (stacked.p(), stacked.n());
    check_budget(p, s)?;
    let mut set = PlausibleSet::new();
    for subset in Combinations::new(p, p - s) {
        let obs: Vec<&DMatrix<f64>> = subset.iter().map(|&i| &stacked.obs[i]).collect();
        let ys: Vec<&DVector<f64>> = subset.iter().map(|&i| &stacked.y[i]).collect();
        let o = vstack(&obs, n);
        let y = vstack_vec(&ys);
        let svd = o.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let rank = svd.singular_values.iter().filter(|&&v| v > EPS_RANK * smax).count();
        if rank < n {
            continue;
        }
        let x = svd.solve(&y, EPS_RANK * smax).expect("u and v_t were computed");
        let residual = (&o * &x - &y).norm();
        if residual <= EPS_JOINT_RES * (1.0 + y.norm()) {
            set.insert(x);
        }
    }
    if set.is_empty() {
        return Err(Error::NoPlausibleState);
    }
    Ok(set.sorted())
}

/// Number of sensors whose stacked equation `O_i x = Y_i` holds at the
/// residual tolerance.
pub fn consistent_sensors(stacked: &StackedData, x: &DVector<f64>) -> usize {
    stacked
        .obs
        .iter()
        .zip(&stacked.y)
        .filter(|(o, y)| (*o * x - *y).norm() <= EPS_RES * (1.0 + y.norm()))
        .count()
}

/// Local substates `x_{j,i}` solved from single sensors, one list per subspace.
#[derive(Clone, Debug)]
pub struct IndexedSubstates<'a> {
    data: &'a SubspaceData,
    /// `entries[j]` holds `(sensor, x_{j,i})` in ascending sensor order.
    pub entries: Vec<Vec<(usize, DVector<f64>)>>,
    /// Sensors whose data lies outside `range(O_i)`.
    pub disqualified: SensorSet,
}

impl<'a> IndexedSubstates<'a> {
    pub fn r(&self) -> usize {
        self.entries.len()
    }

    pub fn data(&self) -> &'a SubspaceData {
        self.data
    }

    pub fn get(&self, j: usize, i: usize) -> Option<&DVector<f64>> {
        self.entries[j].iter().find(|(s, _)| *s == i).map(|(_, x)| x)
    }
}

/// Solves every observable (subspace, sensor) pair assuming the sensor is
/// intact, dropping pairs whose data cannot come from the subsystem.
pub fn preprocess(sub: &SubspaceData) -> IndexedSubstates<'_> {
    let proj = sub.projector();
    let (p, r) = (sub.p(), sub.r());
    let disqualified: SensorSet = (0..p).filter(|&i| sub.sensors[i].disqualified()).collect();
    let mut entries = vec![Vec::new(); r];
    for (j, list) in entries.iter_mut().enumerate() {
        let basis = proj.state_basis(j);
        for i in 0..p {
            if disqualified.contains(i) {
                continue;
            }
            let (Some((local_obs, local_inv)), Some(yj)) = (proj.local(i, j), &sub.sensors[i].parts[j]) else {
                continue;
            };
            let coords = local_inv * yj;
            let residual = (local_obs * &coords - yj).norm();
            if residual <= EPS_RES * (1.0 + yj.norm()) {
                list.push((i, basis * coords));
            }
        }
    }
    IndexedSubstates {
        data: sub,
        entries,
        disqualified,
    }
}

/// A substate backed by a group of agreeing sensors.
#[derive(Clone, Debug)]
pub struct Candidate {
    /// Centroid of the agreeing local solutions.
    pub state: DVector<f64>,
    /// Sensors whose local solution joined this cluster, ascending.
    pub supporters: Vec<usize>,
    /// `I_j`: sensors inconsistent with `state`.
    pub disagreeing: SensorSet,
}

impl Candidate {
    pub fn votes(&self) -> usize {
        self.supporters.len()
    }
}

/// Per-subspace candidates `S_j`.
#[derive(Clone, Debug)]
pub struct SubspaceVoteSet {
    pub subspaces: Vec<Vec<Candidate>>,
    pub s: usize,
}

impl SubspaceVoteSet {
    pub fn r(&self) -> usize {
        self.subspaces.len()
    }

    pub fn cluster_counts(&self) -> Vec<usize> {
        self.subspaces.iter().map(|c| c.len()).collect()
    }

    /// Size of the Cartesian product scanned by [`ssr_combine`].
    pub fn combination_count(&self) -> u128 {
        self.subspaces.iter().map(|c| c.len() as u128).product()
    }
}

/// Greedy clustering in ascending sensor order; a local solution joins the
/// first cluster whose centroid it matches.
fn cluster(entries: &[(usize, DVector<f64>)]) -> Vec<(DVector<f64>, Vec<usize>)> {
    let mut clusters: Vec<(DVector<f64>, DVector<f64>, Vec<usize>)> = Vec::new();
    for (i, x) in entries {
        match clusters.iter_mut().find(|(c, _, _)| same_state(c, x)) {
            Some((centroid, sum, members)) => {
                *sum += x;
                members.push(*i);
                *centroid = &*sum / members.len() as f64;
            }
            None => clusters.push((x.clone(), x.clone(), vec![*i])),
        }
    }
    clusters.into_iter().map(|(c, _, m)| (c, m)).collect()
}

fn disagreement(data: &SubspaceData, disqualified: SensorSet, j: usize, x: &DVector<f64>) -> SensorSet {
    (0..data.p())
        .filter(|&i| {
            if disqualified.contains(i) {
                return true;
            }
            let scale = data.sensors[i].parts[j].as_ref().map_or(0.0, |y| y.norm());
            data.mismatch(i, j, x) > EPS_VOTE * (1.0 + scale)
        })
        .collect()
}

/// Keeps clusters with at least `q + 1 - s` votes in every subspace.
pub fn threshold_vote(idx: &IndexedSubstates, q: usize, s: usize) -> Result<SubspaceVoteSet> {
    threshold_vote_per_subspace(idx, &vec![q; idx.r()], s)
}

/// Same as [`threshold_vote`] with a per-subspace index `q_j`, giving the
/// stricter threshold `q_j + 1 - s` where a subspace has more observers.
pub fn threshold_vote_per_subspace(idx: &IndexedSubstates, q: &[usize], s: usize) -> Result<SubspaceVoteSet> {
    let data = idx.data();
    check_budget(data.p(), s)?;
    if q.len() != idx.r() {
        return Err(Error::Dimension(format!(
            "{} eigen indices for {} subspaces",
            q.len(),
            idx.r()
        )));
    }
    let mut subspaces = Vec::with_capacity(idx.r());
    for (j, entries) in idx.entries.iter().enumerate() {
        if q[j] < s {
            return Err(Error::IndexBelowBudget { q: q[j], s });
        }
        let needed = q[j] + 1 - s;
        let kept: Vec<Candidate> = cluster(entries)
            .into_iter()
            .filter(|(_, members)| members.len() >= needed)
            .map(|(state, supporters)| Candidate {
                disagreeing: disagreement(data, idx.disqualified, j, &state),
                state,
                supporters,
            })
            .collect();
        if kept.is_empty() {
            return Err(Error::EmptySubspace(j));
        }
        subspaces.push(kept);
    }
    Ok(SubspaceVoteSet { subspaces, s })
}

/// Singleton reconstruction by per-subspace majority.
#[derive(Clone, Debug)]
pub struct MajorityOutcome {
    pub set: PlausibleSet,
    /// Subspaces where several clusters shared the top vote count; the one
    /// with the lowest supporting sensor index won.
    pub ties: Vec<usize>,
}

/// Picks the most-voted substate in each subspace and sums them. Requires the
/// winner in every subspace to hold more than `s` votes.
pub fn ssr_majority(idx: &IndexedSubstates, s: usize) -> Result<MajorityOutcome> {
    check_budget(idx.data().p(), s)?;
    let mut total = DVector::zeros(idx.data().projector().state_basis(0).nrows());
    let mut ties = Vec::new();
    for (j, entries) in idx.entries.iter().enumerate() {
        let clusters = cluster(entries);
        let best = clusters
            .iter()
            .map(|(_, m)| m.len())
            .max()
            .ok_or(Error::EmptySubspace(j))?;
        let mut top = clusters.iter().filter(|(_, m)| m.len() == best);
        // clusters are created in ascending order of their first supporter
        let (state, _) = top.next().expect("max exists");
        if top.next().is_some() {
            ties.push(j);
        }
        if best <= s {
            return Err(Error::AssumptionViolated {
                subspace: j,
                votes: best,
                s,
            });
        }
        total += state;
    }
    Ok(MajorityOutcome {
        set: PlausibleSet::singleton(total),
        ties,
    })
}

/// Visits every combination of `S_1 x .. x S_r` in odometer order.
pub(crate) fn for_each_combination(groups: &[&[Candidate]], mut visit: impl FnMut(&[usize])) {
    if groups.iter().any(|g| g.is_empty()) {
        return;
    }
    let mut pick = vec![0usize; groups.len()];
    loop {
        visit(&pick);
        let mut k = groups.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            pick[k] += 1;
            if pick[k] < groups[k].len() {
                break;
            }
            pick[k] = 0;
        }
    }
}

/// Sums of substates over every combination whose disagreeing sensors fit
/// in the attack budget.
pub fn ssr_combine(votes: &SubspaceVoteSet, s: usize) -> Result<PlausibleSet> {
    let groups: Vec<&[Candidate]> = votes.subspaces.iter().map(|g| g.as_slice()).collect();
    let n = groups
        .first()
        .and_then(|g| g.first())
        .map(|c| c.state.len())
        .ok_or(Error::NoPlausibleState)?;
    let mut set = PlausibleSet::new();
    for_each_combination(&groups, |pick| {
        let union = pick
            .iter()
            .zip(&groups)
            .fold(SensorSet::empty(), |acc, (&k, g)| acc.union(g[k].disagreeing));
        if union.len() <= s {
            let mut x = DVector::zeros(n);
            for (&k, g) in pick.iter().zip(&groups) {
                x += &g[k].state;
            }
            set.insert(x);
        }
    });
    if set.is_empty() {
        return Err(Error::NoPlausibleState);
    }
    Ok(set.sorted())
}

/// Maps window-start states forward over the window inputs:
/// `x -> A^t x + sum_k A^{t-1-k} B u(k)`.
pub fn propagate(set: &PlausibleSet, sys: &LtiSystem, inputs: &[DVector<f64>]) -> PlausibleSet {
    let mut drift = DVector::zeros(sys.n());
    for u in inputs {
        drift = sys.a() * drift + sys.b() * u;
    }
    let power = crate::linalg::mat_pow(sys.a(), inputs.len());
    PlausibleSet {
        states: set.iter().map(|x| &power * x + &drift).collect(),
    }
}
