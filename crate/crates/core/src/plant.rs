//! The attacked plant, its input/output data window, the stacked equations
//! over that window and their split along the generalized eigenspaces.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::eigenspace::{left_inverse_with, EigenStructure};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, range_basis, singular_values};
use crate::tol::{EPS_RANK, EPS_RES, EPS_SPLIT};

/// Discrete-time plant `x+ = A x + B u`, `y = C x + e`.
#[derive(Clone, Debug, PartialEq)]
pub struct LtiSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Dimension(format!("A is {}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::Dimension(format!("B is {}x{}, n = {n}", b.nrows(), b.ncols())));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::Dimension(format!("C is {}x{}, n = {n}", c.nrows(), c.ncols())));
        }
        for (m, name) in [(&a, "A"), (&b, "B"), (&c, "C")] {
            if !all_finite(m) {
                return Err(Error::NonFinite(name));
            }
        }
        Ok(LtiSystem { a, b, c })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// One step of the attacked plant: `(A x + B u, C x + e)`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, e: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (&self.a * x + &self.b * u, &self.c * x + e)
    }

    /// Row `i` of `C` as a `1 x n` matrix.
    pub fn sensor_row(&self, i: usize) -> DMatrix<f64> {
        self.c.rows(i, 1).into_owned()
    }
}

/// Polytope `{x : H x + g >= 0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SafetySet {
    h: DMatrix<f64>,
    g: DVector<f64>,
}

impl SafetySet {
    /// Validates nonemptiness with the origin as witness.
    pub fn new(h: DMatrix<f64>, g: DVector<f64>) -> Result<Self> {
        let witness = DVector::zeros(h.ncols());
        Self::with_witness(h, g, &witness)
    }

    pub fn with_witness(h: DMatrix<f64>, g: DVector<f64>, witness: &DVector<f64>) -> Result<Self> {
        if h.nrows() == 0 || h.nrows() != g.len() {
            return Err(Error::Dimension(format!(
                "H is {}x{}, g has {} entries",
                h.nrows(),
                h.ncols(),
                g.len()
            )));
        }
        if witness.len() != h.ncols() {
            return Err(Error::Dimension("witness length differs from H columns".into()));
        }
        if !all_finite(&h) || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("safety set"));
        }
        if (&h * witness + &g).min() < 0.0 {
            return Err(Error::EmptySafetySet);
        }
        Ok(SafetySet { h, g })
    }

    /// Box `|x_k| <= bound` written as `H = [I; -I]`, `g = bound * 1`.
    pub fn centered_box(n: usize, bound: f64) -> Result<Self> {
        let mut h = DMatrix::zeros(2 * n, n);
        for k in 0..n {
            h[(k, k)] = 1.0;
            h[(n + k, k)] = -1.0;
        }
        Self::new(h, DVector::from_element(2 * n, bound))
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }
    pub fn g(&self) -> &DVector<f64> {
        &self.g
    }
    pub fn l(&self) -> usize {
        self.h.nrows()
    }
}

/// Sliding input/output record: outputs `y(t0..=t)` and inputs `u(t0..t)`.
#[derive(Clone, Debug)]
pub struct IoWindow {
    capacity: usize,
    start: usize,
    inputs: VecDeque<DVector<f64>>,
    outputs: VecDeque<DVector<f64>>,
}

impl IoWindow {
    /// Window holding at most `capacity` inputs (and `capacity + 1` outputs).
    pub fn new(capacity: usize) -> Self {
        IoWindow {
            capacity,
            start: 0,
            inputs: VecDeque::new(),
            outputs: VecDeque::new(),
        }
    }

    /// Builds a window from complete sequences, `outputs.len() == inputs.len() + 1`.
    pub fn from_sequences(inputs: Vec<DVector<f64>>, outputs: Vec<DVector<f64>>) -> Result<Self> {
        if outputs.len() != inputs.len() + 1 {
            return Err(Error::Dimension(format!(
                "{} outputs need {} inputs, got {}",
                outputs.len(),
                outputs.len().saturating_sub(1),
                inputs.len()
            )));
        }
        Ok(IoWindow {
            capacity: inputs.len(),
            start: 0,
            inputs: inputs.into(),
            outputs: outputs.into(),
        })
    }

    /// Records the first measurement.
    pub fn push_first(&mut self, y: DVector<f64>) {
        self.outputs.clear();
        self.inputs.clear();
        self.outputs.push_back(y);
    }

    /// Records the input applied at the previous step and the new measurement.
    pub fn advance(&mut self, u: DVector<f64>, y: DVector<f64>) {
        self.inputs.push_back(u);
        self.outputs.push_back(y);
        while self.inputs.len() > self.capacity {
            self.inputs.pop_front();
            self.outputs.pop_front();
            self.start += 1;
        }
    }

    /// Window length `t` (number of inputs).
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// Absolute time index of the first stored output.
    pub fn start(&self) -> usize {
        self.start
    }

    pub fn inputs(&self) -> impl ExactSizeIterator<Item = &DVector<f64>> {
        self.inputs.iter()
    }

    pub fn outputs(&self) -> impl ExactSizeIterator<Item = &DVector<f64>> {
        self.outputs.iter()
    }

    pub fn input_vec(&self) -> Vec<DVector<f64>> {
        self.inputs.iter().cloned().collect()
    }
}

/// Per-sensor stacked equations `Y_i = O_i x(t0) + E_i` over a window.
#[derive(Clone, Debug)]
pub struct StackedData {
    /// `O_i`, `(t+1) x n`.
    pub obs: Vec<DMatrix<f64>>,
    /// `F_i`, `(t+1) x (t+1)m`, block lower triangular with zero diagonal.
    pub conv: Vec<DMatrix<f64>>,
    /// Raw measurement sequences `Ỹ_i`.
    pub raw: Vec<DVector<f64>>,
    /// Input-corrected outputs `Y_i = Ỹ_i - F_i U`.
    pub y: Vec<DVector<f64>>,
    /// `U = [u(0); ..; u(t-1); 0]`.
    pub u: DVector<f64>,
    pub t: usize,
}

impl StackedData {
    pub fn p(&self) -> usize {
        self.obs.len()
    }
    pub fn n(&self) -> usize {
        self.obs.first().map_or(0, |o| o.ncols())
    }
}

/// Observability matrices `O_i` for a window of `t + 1` samples.
pub fn observability_matrices(sys: &LtiSystem, t: usize) -> Vec<DMatrix<f64>> {
    let (n, p) = (sys.n(), sys.p());
    let mut out = vec![DMatrix::zeros(t + 1, n); p];
    let mut ca = sys.c().clone();
    for k in 0..=t {
        for (i, o) in out.iter_mut().enumerate() {
            o.row_mut(k).copy_from(&ca.row(i));
        }
        ca = &ca * sys.a();
    }
    out
}

/// Assembles the stacked equations over the window.
pub fn stack(sys: &LtiSystem, win: &IoWindow) -> Result<StackedData> {
    let (n, m, p) = (sys.n(), sys.m(), sys.p());
    let t = win.len();
    if t + 1 < n {
        return Err(Error::WindowTooShort {
            outputs: t + 1,
            required: n,
        });
    }
    for u in win.inputs() {
        if u.len() != m {
            return Err(Error::Dimension(format!("input has {} entries, m = {m}", u.len())));
        }
    }
    for y in win.outputs() {
        if y.len() != p {
            return Err(Error::Dimension(format!("output has {} entries, p = {p}", y.len())));
        }
    }

    let obs = observability_matrices(sys, t);

    // markov[k] = C A^k B, p x m
    let mut markov = Vec::with_capacity(t);
    let mut ca = sys.c().clone();
    for _ in 0..t {
        markov.push(&ca * sys.b());
        ca = &ca * sys.a();
    }

    let mut u = DVector::zeros((t + 1) * m);
    for (k, uk) in win.inputs().enumerate() {
        u.rows_mut(k * m, m).copy_from(uk);
    }

    let mut conv = Vec::with_capacity(p);
    let mut raw = Vec::with_capacity(p);
    let mut y = Vec::with_capacity(p);
    for i in 0..p {
        let mut f = DMatrix::zeros(t + 1, (t + 1) * m);
        for row in 1..=t {
            for col in 0..row {
                let mk = &markov[row - 1 - col];
                f.view_mut((row, col * m), (1, m)).copy_from(&mk.row(i));
            }
        }
        let yt = DVector::from_iterator(t + 1, win.outputs().map(|yk| yk[i]));
        let yi = &yt - &f * &u;
        conv.push(f);
        raw.push(yt);
        y.push(yi);
    }
    Ok(StackedData {
        obs,
        conv,
        raw,
        y,
        u,
        t,
    })
}

/// Offline part of the measurement split for one sensor.
#[derive(Clone, Debug)]
struct SensorSplit {
    /// Orthonormal basis of `O_i(V^j)` for each visible subspace.
    images: Vec<Option<DMatrix<f64>>>,
    /// Matching coordinate rows of the stacked left inverse.
    coords: Vec<Option<DMatrix<f64>>>,
    /// Left inverse of `O_i S_j` for subspaces whose eigenvalue the sensor observes.
    local_inverse: Vec<Option<DMatrix<f64>>>,
    /// `O_i S_j` for observable subspaces.
    local_obs: Vec<Option<DMatrix<f64>>>,
}

/// Projections `P̃_i^j` for a fixed system, eigenstructure and window length.
/// Depends only on `(A, C)` and `t`, so it can be built once and reused.
#[derive(Clone, Debug)]
pub struct SubspaceProjector {
    obs: Vec<DMatrix<f64>>,
    state_bases: Vec<DMatrix<f64>>,
    sensors: Vec<SensorSplit>,
    t: usize,
}

impl SubspaceProjector {
    /// Builds the measurement projections from the observability matrices.
    pub fn new(obs: &[DMatrix<f64>], eig: &EigenStructure) -> Result<Self> {
        let r = eig.r();
        let t = obs.first().map_or(0, |o| o.nrows().saturating_sub(1));
        let mut sensors = Vec::with_capacity(obs.len());
        for o in obs {
            if o.ncols() != eig.n() {
                return Err(Error::Dimension("O_i and eigenstructure disagree on n".into()));
            }
            let scale = singular_values(o).first().copied().unwrap_or(0.0);
            let cutoff = EPS_RANK * scale;
            let mut images = vec![None; r];
            let mut local_inverse = vec![None; r];
            let mut local_obs = vec![None; r];
            for (j, basis) in eig.state_bases.iter().enumerate() {
                let img = o * basis;
                let range = range_basis(&img, cutoff);
                if range.ncols() == 0 {
                    continue;
                }
                if range.ncols() == basis.ncols() {
                    local_inverse[j] = Some(left_inverse_with(&img, EPS_SPLIT)?);
                    local_obs[j] = Some(img);
                }
                images[j] = Some(range);
            }
            let visible: Vec<&DMatrix<f64>> = images.iter().flatten().collect();
            let mut coords = vec![None; r];
            if !visible.is_empty() {
                let stacked = crate::linalg::hstack(&visible, o.nrows());
                let inv = left_inverse_with(&stacked, EPS_SPLIT)?;
                let mut offset = 0;
                for (j, img) in images.iter().enumerate() {
                    if let Some(img) = img {
                        coords[j] = Some(inv.rows(offset, img.ncols()).into_owned());
                        offset += img.ncols();
                    }
                }
            }
            sensors.push(SensorSplit {
                images,
                coords,
                local_inverse,
                local_obs,
            });
        }
        Ok(SubspaceProjector {
            obs: obs.to_vec(),
            state_bases: eig.state_bases.clone(),
            sensors,
            t,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn p(&self) -> usize {
        self.sensors.len()
    }

    pub fn r(&self) -> usize {
        self.state_bases.len()
    }

    /// `true` when sensor `i` observes eigenvalue `j` (full-rank image of `V^j`).
    pub fn observable(&self, i: usize, j: usize) -> bool {
        self.sensors[i].local_inverse[j].is_some()
    }

    /// `false` when `O_i(V^j) = {0}`.
    pub fn visible(&self, i: usize, j: usize) -> bool {
        self.sensors[i].images[j].is_some()
    }

    /// Dense `P̃_i^j`; the zero matrix for invisible subspaces.
    pub fn projection(&self, i: usize, j: usize) -> DMatrix<f64> {
        let s = &self.sensors[i];
        match (&s.images[j], &s.coords[j]) {
            (Some(img), Some(c)) => img * c,
            _ => DMatrix::zeros(self.t + 1, self.t + 1),
        }
    }

    /// Splits the stacked outputs along the measurement subspaces.
    pub fn project(self: &Arc<Self>, stacked: &StackedData) -> Result<SubspaceData> {
        if stacked.p() != self.p() || stacked.t != self.t {
            return Err(Error::Dimension(format!(
                "projector built for p = {}, t = {}; data has p = {}, t = {}",
                self.p(),
                self.t,
                stacked.p(),
                stacked.t
            )));
        }
        let r = self.r();
        let mut sensors = Vec::with_capacity(self.p());
        for (s, y) in self.sensors.iter().zip(&stacked.y) {
            let mut parts = Vec::with_capacity(r);
            let mut range_part = DVector::zeros(y.len());
            for j in 0..r {
                match (&s.images[j], &s.coords[j]) {
                    (Some(img), Some(c)) => {
                        let yj = img * (c * y);
                        range_part += &yj;
                        parts.push(Some(yj));
                    }
                    _ => parts.push(None),
                }
            }
            let off_range_residual = (y - &range_part).norm();
            sensors.push(SensorData {
                y_norm: y.norm(),
                parts,
                off_range_residual,
            });
        }
        Ok(SubspaceData {
            projector: Arc::clone(self),
            sensors,
        })
    }

    pub(crate) fn state_basis(&self, j: usize) -> &DMatrix<f64> {
        &self.state_bases[j]
    }

    pub(crate) fn obs(&self, i: usize) -> &DMatrix<f64> {
        &self.obs[i]
    }

    pub(crate) fn local(&self, i: usize, j: usize) -> Option<(&DMatrix<f64>, &DMatrix<f64>)> {
        let s = &self.sensors[i];
        match (&s.local_obs[j], &s.local_inverse[j]) {
            (Some(o), Some(inv)) => Some((o, inv)),
            _ => None,
        }
    }
}

/// Projected measurements of one sensor.
#[derive(Clone, Debug)]
pub struct SensorData {
    /// `Y_i^j`; `None` when `O_i(V^j) = {0}`.
    pub parts: Vec<Option<DVector<f64>>>,
    /// Norm of the component of `Y_i` outside `range(O_i)`.
    pub off_range_residual: f64,
    pub y_norm: f64,
}

impl SensorData {
    /// Data outside `range(O_i)` cannot come from any state: the sensor is
    /// attacked in every explanation of the data.
    pub fn disqualified(&self) -> bool {
        self.off_range_residual > EPS_RES * (1.0 + self.y_norm)
    }
}

/// Measurements split per (sensor, subspace), `Y_i^j = P̃_i^j Y_i`.
#[derive(Clone, Debug)]
pub struct SubspaceData {
    projector: Arc<SubspaceProjector>,
    pub sensors: Vec<SensorData>,
}

impl SubspaceData {
    pub fn projector(&self) -> &SubspaceProjector {
        &self.projector
    }

    pub fn p(&self) -> usize {
        self.sensors.len()
    }

    pub fn r(&self) -> usize {
        self.projector.r()
    }

    /// `O_i^j = P̃_i^j O_i`.
    pub fn sub_obs(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.projector.projection(i, j) * self.projector.obs(i)
    }

    /// `Y_i^j`, zero when the subspace is invisible to the sensor.
    pub fn part(&self, i: usize, j: usize) -> DVector<f64> {
        self.sensors[i].parts[j]
            .clone()
            .unwrap_or_else(|| DVector::zeros(self.projector.t + 1))
    }

    /// `||O_i^j x_j - Y_i^j||` for a substate `x_j ∈ V^j`.
    pub fn mismatch(&self, i: usize, j: usize, x_j: &DVector<f64>) -> f64 {
        let predicted = self.projector.obs(i) * x_j;
        match &self.sensors[i].parts[j] {
            Some(yj) => (predicted - yj).norm(),
            None => predicted.norm(),
        }
    }
}

/// Builds the projector for the stacked data and splits its outputs.
pub fn project_data(stacked: &StackedData, eig: &EigenStructure) -> Result<SubspaceData> {
    Arc::new(SubspaceProjector::new(&stacked.obs, eig)?).project(stacked)
}
