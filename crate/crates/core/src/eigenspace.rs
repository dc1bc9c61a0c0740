//! Generalized eigenspace decomposition of the state matrix, canonical
//! projections onto the resulting direct sum, and observability indices.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{complex_null_vectors, hstack, range_basis, singular_values, spectral_norm};
use crate::plant::LtiSystem;
use crate::tol::{EPS_EIG, EPS_LIN, EPS_RANK};

/// Distinct eigenvalues of `A` with real bases of their generalized
/// eigenspaces and the canonical projections onto them.
///
/// A complex-conjugate pair is stored once (positive imaginary part) and owns
/// a real invariant subspace of dimension `2 * multiplicity`.
#[derive(Clone, Debug)]
pub struct EigenStructure {
    pub eigenvalues: Vec<Complex64>,
    pub multiplicities: Vec<usize>,
    pub state_bases: Vec<DMatrix<f64>>,
    pub state_projections: Vec<DMatrix<f64>>,
}

impl EigenStructure {
    /// Number of distinct eigenvalues after conjugate merging.
    pub fn r(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n(&self) -> usize {
        self.state_projections.first().map_or(0, |p| p.nrows())
    }

    /// Real dimension of each invariant subspace.
    pub fn dims(&self) -> Vec<usize> {
        self.state_bases.iter().map(|b| b.ncols()).collect()
    }

    /// Splits `x` into its components `P_j x`.
    pub fn split(&self, x: &nalgebra::DVector<f64>) -> Vec<nalgebra::DVector<f64>> {
        self.state_projections.iter().map(|p| p * x).collect()
    }
}

struct Cluster {
    value: Complex64,
    size: usize,
}

fn cluster_eigenvalues(values: &[Complex64], eps: f64) -> Vec<Cluster> {
    // single linkage via union-find
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut root = i;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = i;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for a in 0..n {
        for b in (a + 1)..n {
            if (values[a] - values[b]).norm() <= eps {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[rb] = ra;
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<Complex64>)> = Vec::new();
    for (i, &value) in values.iter().enumerate() {
        let root = find(&mut parent, i);
        match groups.iter_mut().find(|(r, _)| *r == root) {
            Some((_, members)) => members.push(value),
            None => groups.push((root, vec![value])),
        }
    }
    groups
        .into_iter()
        .map(|(_, members)| {
            let sum: Complex64 = members.iter().sum();
            Cluster {
                value: sum / members.len() as f64,
                size: members.len(),
            }
        })
        .collect()
}

/// Decomposes `R^n` into the real generalized eigenspaces of `a`.
pub fn eigen_decompose(a: &DMatrix<f64>) -> Result<EigenStructure> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::Dimension(format!(
            "state matrix must be square and nonempty, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !crate::linalg::all_finite(a) {
        return Err(Error::NonFinite("A"));
    }
    let eps = EPS_EIG * spectral_norm(a).max(1.0);
    let raw: Vec<Complex64> = a.complex_eigenvalues().iter().copied().collect();
    let mut clusters = cluster_eigenvalues(&raw, eps);

    // Keep real clusters and the upper member of each conjugate pair.
    clusters.retain(|c| c.value.im >= -eps);
    for c in clusters.iter_mut() {
        if c.value.im.abs() <= eps {
            c.value.im = 0.0;
        }
    }
    clusters.sort_by(|x, y| {
        y.value
            .re
            .partial_cmp(&x.value.re)
            .unwrap()
            .then(y.value.im.partial_cmp(&x.value.im).unwrap())
    });

    let ac = a.map(|v| Complex64::new(v, 0.0));
    let mut eigenvalues = Vec::with_capacity(clusters.len());
    let mut multiplicities = Vec::with_capacity(clusters.len());
    let mut state_bases = Vec::with_capacity(clusters.len());
    for c in &clusters {
        let shifted = &ac - DMatrix::<Complex64>::identity(n, n) * c.value;
        let mut power = DMatrix::<Complex64>::identity(n, n);
        for _ in 0..c.size {
            power = &power * &shifted;
        }
        let null = complex_null_vectors(power, c.size);
        let mut parts = DMatrix::zeros(n, 2 * c.size);
        for col in 0..c.size {
            for row in 0..n {
                parts[(row, col)] = null[(row, col)].re;
                parts[(row, c.size + col)] = null[(row, col)].im;
            }
        }
        let dim = if c.value.im == 0.0 { c.size } else { 2 * c.size };
        let svd = parts.svd(true, false);
        let u = svd.u.expect("u requested");
        state_bases.push(u.columns(0, dim).into_owned());
        eigenvalues.push(c.value);
        multiplicities.push(c.size);
    }

    let total: usize = state_bases.iter().map(|b| b.ncols()).sum();
    if total != n {
        return Err(Error::DefectiveTolerance(0.0));
    }
    let state_projections = match projections_from_bases(&state_bases) {
        Ok(p) => p,
        Err(Error::RankDeficient(rel)) => return Err(Error::DefectiveTolerance(rel)),
        Err(e) => return Err(e),
    };
    Ok(EigenStructure {
        eigenvalues,
        multiplicities,
        state_bases,
        state_projections,
    })
}

/// Computes `[0, .., S_j, .., 0] (S^T S)^{-1} S^T` for the stacked basis
/// `S = [S_1, .., S_r]`.
pub fn projection_from_bases(bases: &[DMatrix<f64>], j: usize) -> Result<DMatrix<f64>> {
    if j >= bases.len() {
        return Err(Error::InvalidParameter(format!(
            "subspace index {j} out of range for {} bases",
            bases.len()
        )));
    }
    Ok(projections_from_bases(bases)?.swap_remove(j))
}

/// All canonical projections at once; see [`projection_from_bases`].
pub fn projections_from_bases(bases: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    let rows = bases.first().map_or(0, |b| b.nrows());
    if bases.iter().any(|b| b.nrows() != rows) {
        return Err(Error::Dimension("basis blocks differ in row count".into()));
    }
    let refs: Vec<&DMatrix<f64>> = bases.iter().collect();
    let stacked = hstack(&refs, rows);
    let pinv = left_inverse(&stacked)?;
    let mut out = Vec::with_capacity(bases.len());
    let mut offset = 0;
    for b in bases {
        let coord_rows = pinv.rows(offset, b.ncols());
        out.push(b * coord_rows);
        offset += b.ncols();
    }
    Ok(out)
}

/// `(S^T S)^{-1} S^T` evaluated through the SVD of `S`.
pub(crate) fn left_inverse(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    left_inverse_with(s, EPS_LIN)
}

pub(crate) fn left_inverse_with(s: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    if s.ncols() == 0 {
        return Ok(DMatrix::zeros(0, s.nrows()));
    }
    if s.ncols() > s.nrows() {
        return Err(Error::RankDeficient(0.0));
    }
    let svd = s.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let rel = if smax > 0.0 { smin / smax } else { 0.0 };
    if rel <= rel_tol {
        return Err(Error::RankDeficient(rel));
    }
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let inv_s = DMatrix::from_diagonal(&svd.singular_values.map(|v| 1.0 / v));
    Ok(v_t.transpose() * inv_s * u.transpose())
}

/// PBH rank test `rank [A - lambda I; c_row] == n`.
pub fn eigenvalue_observable(a: &DMatrix<f64>, c_row: &DMatrix<f64>, lambda: Complex64) -> bool {
    let n = a.nrows();
    let mut stacked = DMatrix::<Complex64>::zeros(n + c_row.nrows(), n);
    for r in 0..n {
        for c in 0..n {
            stacked[(r, c)] = Complex64::new(a[(r, c)], 0.0);
        }
        stacked[(r, r)] -= lambda;
    }
    for r in 0..c_row.nrows() {
        for c in 0..n {
            stacked[(n + r, c)] = Complex64::new(c_row[(r, c)], 0.0);
        }
    }
    let sv = stacked.svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return false;
    }
    sv.iter().filter(|&&v| v > EPS_RANK * smax).count() == n
}

/// Sparse and eigenvalue observability indices of a system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservabilityReport {
    /// Largest `k` such that `(A, C_Γ)` is observable for every `Γ` of size
    /// `p - k`; `-1` when even the full sensor set is not observable.
    pub sparse_index: i64,
    /// `q_j` = number of sensors observing eigenvalue `j`, minus one.
    pub eigen_index_per_subspace: Vec<i64>,
    pub eigen_index: i64,
    /// `observers[j][i]` is true when eigenvalue `j` is observable from sensor `i`.
    pub observers: Vec<Vec<bool>>,
    /// Set when the combination cap cut the sparse search short; the
    /// reported `sparse_index` is then a lower bound.
    pub truncated: bool,
}

impl ObservabilityReport {
    pub fn q(&self) -> i64 {
        self.eigen_index
    }
}

/// Enumeration cap for the sparse observability search.
pub const SPARSE_SEARCH_CAP: u128 = 1_000_000;

pub fn observability_report(sys: &LtiSystem, eig: &EigenStructure) -> ObservabilityReport {
    let a = sys.a();
    let c = sys.c();
    let (n, p) = (sys.n(), sys.p());

    let observers: Vec<Vec<bool>> = eig
        .eigenvalues
        .iter()
        .map(|&lambda| {
            (0..p)
                .map(|i| eigenvalue_observable(a, &c.rows(i, 1).into_owned(), lambda))
                .collect()
        })
        .collect();
    let eigen_index_per_subspace: Vec<i64> = observers
        .iter()
        .map(|obs| obs.iter().filter(|&&o| o).count() as i64 - 1)
        .collect();
    let eigen_index = eigen_index_per_subspace.iter().copied().min().unwrap_or(-1);

    // Geometric eigenvectors per eigenvalue: the PBH condition for a sensor
    // subset reduces to full column rank of C_Γ N_λ.
    let images: Vec<DMatrix<Complex64>> = eig
        .eigenvalues
        .iter()
        .map(|&lambda| {
            let shifted = a.map(|v| Complex64::new(v, 0.0)) - DMatrix::<Complex64>::identity(n, n) * lambda;
            let sv = shifted.clone().svd(false, false).singular_values;
            let smax = sv.max().max(f64::MIN_POSITIVE);
            let rank = sv.iter().filter(|&&v| v > EPS_RANK * smax).count();
            let null = complex_null_vectors(shifted, n - rank);
            c.map(|v| Complex64::new(v, 0.0)) * null
        })
        .collect();

    let subset_observable = |subset: &[usize]| -> bool {
        images.iter().all(|img| {
            let g = img.ncols();
            if g == 0 {
                return true;
            }
            if subset.len() < g {
                return false;
            }
            let mut rows = DMatrix::<Complex64>::zeros(subset.len(), g);
            for (r, &i) in subset.iter().enumerate() {
                rows.row_mut(r).copy_from(&img.row(i));
            }
            let sv = rows.svd(false, false).singular_values;
            let scale = c.norm().max(f64::MIN_POSITIVE);
            sv.iter().filter(|&&v| v > EPS_RANK * scale).count() == g
        })
    };

    let mut sparse_index = -1;
    let mut truncated = false;
    for k in 0..p {
        if binomial(p, k) > SPARSE_SEARCH_CAP {
            truncated = true;
            break;
        }
        let ok = Combinations::new(p, p - k).all(|subset| subset_observable(&subset));
        if !ok {
            break;
        }
        sparse_index = k as i64;
    }

    ObservabilityReport {
        sparse_index,
        eigen_index_per_subspace,
        eigen_index,
        observers,
        truncated,
    }
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Lexicographic `k`-subsets of `0..n`.
pub struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for t in (i + 1)..k {
                    self.idx[t] = self.idx[t - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// Orthonormal basis of the invariant subspace image, used by generators.
pub(crate) fn orthonormal(m: &DMatrix<f64>) -> DMatrix<f64> {
    let smax = singular_values(m).first().copied().unwrap_or(0.0);
    range_basis(m, EPS_RANK * smax)
}
