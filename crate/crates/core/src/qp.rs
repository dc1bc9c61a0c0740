//! Least-deviation filter `min ||u - u_nom||^2 s.t. G u >= b`.
//!
//! Dual active-set method specialised to the identity Hessian: start from the
//! unconstrained minimiser, repeatedly add the lowest-index violated row and
//! drop rows whose multipliers would turn negative. Infeasibility shows up as
//! a violated row that no primal or dual step can repair.

use nalgebra::{DMatrix, DVector};

use crate::tol::EPS_QP;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct QpResult {
    pub u_star: DVector<f64>,
    /// Rows held active at the returned point, ascending.
    pub active_set: Vec<usize>,
    /// Multipliers matching `active_set`; `u_star - u_nom = G_A^T λ`.
    pub multipliers: Vec<f64>,
    pub status: QpStatus,
    pub iterations: usize,
}

impl QpResult {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Feasibility tolerance used for `G u >= b`.
pub fn feasibility_tol(b: &DVector<f64>) -> f64 {
    EPS_QP * (1.0 + b.amax())
}

/// Projects `u_nom` onto `{u : G u >= b}`.
pub fn solve_least_deviation(u_nom: &DVector<f64>, g: &DMatrix<f64>, b: &DVector<f64>) -> QpResult {
    let (l, m) = (g.nrows(), g.ncols());
    assert_eq!(u_nom.len(), m, "u_nom length must equal G columns");
    assert_eq!(b.len(), l, "b length must equal G rows");

    let tol = feasibility_tol(b);
    let cap = 100 * (l + m);
    let mut x = u_nom.clone();
    let mut active: Vec<usize> = Vec::new();
    let mut lam: Vec<f64> = Vec::new();
    let mut iterations = 0;

    let slack = |x: &DVector<f64>, k: usize| g.row(k).dot(&x.transpose()) - b[k];

    let finish = |x: DVector<f64>, active: Vec<usize>, lam: Vec<f64>, status, iterations| {
        let mut pairs: Vec<(usize, f64)> = active.into_iter().zip(lam).collect();
        pairs.sort_by_key(|(k, _)| *k);
        QpResult {
            u_star: x,
            active_set: pairs.iter().map(|(k, _)| *k).collect(),
            multipliers: pairs.iter().map(|(_, v)| *v).collect(),
            status,
            iterations,
        }
    };

    loop {
        let Some(p) = (0..l).find(|&k| !active.contains(&k) && slack(&x, k) < -tol) else {
            return finish(x, active, lam, QpStatus::Optimal, iterations);
        };
        let normal: DVector<f64> = g.row(p).transpose();
        let mut lam_p = 0.0;
        loop {
            iterations += 1;
            if iterations > cap {
                return finish(x, active, lam, QpStatus::IterationLimit, iterations);
            }
            let (z, r) = if active.is_empty() {
                (normal.clone(), DVector::zeros(0))
            } else {
                let mut n_act = DMatrix::zeros(m, active.len());
                for (c, &k) in active.iter().enumerate() {
                    n_act.set_column(c, &g.row(k).transpose());
                }
                let gram = n_act.transpose() * &n_act;
                let r = gram
                    .lu()
                    .solve(&(n_act.transpose() * &normal))
                    .unwrap_or_else(|| DVector::zeros(active.len()));
                (&normal - &n_act * &r, r)
            };

            // dual step length: first active multiplier to reach zero
            let mut t1 = f64::INFINITY;
            let mut drop: Option<usize> = None;
            for (c, &rc) in r.iter().enumerate() {
                if rc > 1e-14 {
                    let ratio = lam[c] / rc;
                    let better = ratio < t1 || (ratio == t1 && drop.is_some_and(|d| active[c] < active[d]));
                    if better {
                        t1 = ratio;
                        drop = Some(c);
                    }
                }
            }
            let zz = z.norm_squared();
            let t2 = if zz <= 1e-14 * normal.norm_squared().max(f64::MIN_POSITIVE) {
                f64::INFINITY
            } else {
                -slack(&x, p) / zz
            };

            if t1.is_infinite() && t2.is_infinite() {
                return finish(x, active, lam, QpStatus::Infeasible, iterations);
            }
            let step = t1.min(t2);
            if t2.is_finite() {
                x += &z * step;
            }
            for (c, rc) in r.iter().enumerate() {
                lam[c] -= step * rc;
            }
            lam_p += step;

            if t2 <= t1 {
                active.push(p);
                lam.push(lam_p);
                break;
            }
            let d = drop.expect("finite t1 has a blocking row");
            active.remove(d);
            lam.remove(d);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn feasible_nominal_is_returned() {
        let res = solve_least_deviation(&dvector![1.0, 1.0], &dmatrix![1.0, 0.0; 0.0, 1.0], &dvector![0.0, 0.0]);
        assert!(res.is_optimal());
        assert_eq!(res.u_star, dvector![1.0, 1.0]);
        assert!(res.active_set.is_empty());
    }

    #[test]
    fn half_line_projection() {
        let res = solve_least_deviation(&dvector![0.0], &dmatrix![1.0], &dvector![2.0]);
        assert!(res.is_optimal());
        assert!((res.u_star[0] - 2.0).abs() < 1e-14);
        assert_eq!(res.active_set, vec![0]);
        assert!((res.multipliers[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let res = solve_least_deviation(&dvector![0.0], &dmatrix![1.0; -1.0], &dvector![1.0, 1.0]);
        assert_eq!(res.status, QpStatus::Infeasible);
    }

    #[test]
    fn zero_row_with_positive_bound_is_infeasible() {
        let res = solve_least_deviation(&dvector![0.0, 0.0], &dmatrix![0.0, 0.0], &dvector![1.0]);
        assert_eq!(res.status, QpStatus::Infeasible);
        let res = solve_least_deviation(&dvector![0.0, 0.0], &dmatrix![0.0, 0.0], &dvector![-1.0]);
        assert!(res.is_optimal());
    }

    #[test]
    fn corner_of_a_wedge() {
        // u1 >= 1, u2 >= 1, u1 + u2 >= 3 from the origin
        let g = dmatrix![1.0, 0.0; 0.0, 1.0; 1.0, 1.0];
        let res = solve_least_deviation(&dvector![0.0, 0.0], &g, &dvector![1.0, 1.0, 3.0]);
        assert!(res.is_optimal());
        assert!((res.u_star - dvector![1.5, 1.5]).norm() < 1e-12);
        assert_eq!(res.active_set, vec![2]);
    }

    #[test]
    fn redundant_parallel_rows() {
        let g = dmatrix![1.0, 0.0; 2.0, 0.0; 1.0, 0.0];
        let res = solve_least_deviation(&dvector![0.0, 5.0], &g, &dvector![1.0, 2.0, 1.0]);
        assert!(res.is_optimal());
        assert!((res.u_star - dvector![1.0, 5.0]).norm() < 1e-12);
    }
}
