//! Safe feedback control of discrete-time linear systems under sparse sensor
//! attacks.
//!
//! The crate reconstructs the plausible states of an attacked plant either by
//! brute-force subset enumeration or by splitting the problem along the
//! generalized eigenspaces of `A`, bounds the worst-case control barrier
//! function condition without enumerating every plausible state, and filters a
//! nominal input through a least-deviation quadratic program.

pub mod cbf;
pub mod eigenspace;
pub mod error;
pub mod filter;
mod linalg;
pub mod plant;
pub mod qp;
pub mod scenario;
pub mod ssr;
pub mod tol;

pub use error::{Error, Result};
