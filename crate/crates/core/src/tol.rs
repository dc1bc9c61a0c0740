//! Numerical tolerances shared by all modules.

/// Projection identities and spanning checks.
pub const EPS_LIN: f64 = 1e-8;
/// Relative singular-value cutoff for rank decisions.
pub const EPS_RANK: f64 = 1e-8;
/// Eigenvalue clustering radius, scaled by `max(1, ||A||)`.
pub const EPS_EIG: f64 = 1e-7;
/// Substate equality (vote clustering) and measurement agreement.
pub const EPS_VOTE: f64 = 1e-6;
/// Residual tolerance for local least-squares solves and per-sensor checks.
pub const EPS_RES: f64 = 1e-6;
/// Residual tolerance of the joint solve over a sensor subset. Consistent
/// noise-free data fits to rounding level, while an ill-conditioned subset
/// can absorb one mismatched sensor into a residual near [`EPS_RES`].
pub const EPS_JOINT_RES: f64 = 1e-10;
/// Feasibility and stationarity tolerance of the QP solver.
pub const EPS_QP: f64 = 1e-8;

/// Cutoff for separating measurement subspaces inside one sensor's output
/// space. Output images of close eigenvalues form Vandermonde-like bases, so
/// this is looser than [`EPS_LIN`].
pub const EPS_SPLIT: f64 = 1e-12;
